//! Seeded randomness.
//!
//! Every random draw in the crate goes through [`ChaCha8Rng`], whose output
//! stream is fixed by its algorithm and independent of platform or pointer
//! width. Distinct purposes (splitting, init, dropout, ...) use distinct
//! ChaCha streams of the same seed so that changing one consumer never shifts
//! another's draws.

use rand::{Rng, SeedableRng};
pub use rand_chacha::ChaCha8Rng;

/// Named ChaCha stream ids.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[repr(u64)]
pub enum Stream {
    Split = 1,
    Init = 2,
    Shuffle = 3,
    Dropout = 4,
    Embedding = 5,
    Corpus = 6,
    Smote = 7,
}

pub fn stream(seed: u64, stream: Stream) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream as u64);
    rng
}

/// Uniform draw in `[lo, hi)`.
pub fn uniform(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    lo + (hi - lo) * rng.random::<f64>()
}

/// Uniform integer in the inclusive range `[lo, hi]`.
pub fn range_inclusive(rng: &mut ChaCha8Rng, lo: usize, hi: usize) -> usize {
    rng.random_range(lo..=hi)
}

/// Exponential draw with the given mean.
pub fn exponential(rng: &mut ChaCha8Rng, mean: f64) -> f64 {
    let u: f64 = rng.random();
    -mean * libm::log(1.0 - u)
}

pub fn bernoulli(rng: &mut ChaCha8Rng, p: f64) -> bool {
    rng.random::<f64>() < p
}
