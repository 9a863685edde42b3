use alloc::vec::Vec;

use rand::seq::SliceRandom;

use crate::data::session::Session;
use crate::error::DataError;
use crate::rng::{self, Stream};

pub const MIN_CORPUS: usize = 10;

/// Index partition of a corpus into train / validation / test.
#[derive(Clone, Debug, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SplitIndices {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

impl SplitIndices {
    /// Random 80/10/10 partition of `0..n`. Validation and test each get
    /// `floor(n / 10)` items; the remainder goes to training.
    pub fn new(n: usize, seed: u64) -> Result<Self, DataError> {
        if n < MIN_CORPUS {
            return Err(DataError::TooSmall { len: n, min: MIN_CORPUS });
        }
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut rng::stream(seed, Stream::Split));
        let held_out = n / 10;
        let mut val = order[..held_out].to_vec();
        let mut test = order[held_out..2 * held_out].to_vec();
        let mut train = order[2 * held_out..].to_vec();
        val.sort_unstable();
        test.sort_unstable();
        train.sort_unstable();
        Ok(Self { train, val, test })
    }

    pub fn select<T: Clone>(items: &[T], idx: &[usize]) -> Vec<T> {
        idx.iter().map(|&i| items[i].clone()).collect()
    }
}

/// Splits sessions 80/10/10; see [`SplitIndices::new`].
pub fn split(corpus: &[Session], seed: u64) -> Result<(Vec<Session>, Vec<Session>, Vec<Session>), DataError> {
    let idx = SplitIndices::new(corpus.len(), seed)?;
    Ok((
        SplitIndices::select(corpus, &idx.train),
        SplitIndices::select(corpus, &idx.val),
        SplitIndices::select(corpus, &idx.test),
    ))
}
