//! Synthetic minority oversampling.

use alloc::vec::Vec;

use crate::error::SmoteError;
use crate::rng::{self, Stream};

#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SmoteConfig {
    pub k_neighbors: usize,
    /// Desired minority / majority count after oversampling.
    pub target_ratio: f64,
    pub seed: u64,
}

impl Default for SmoteConfig {
    fn default() -> Self {
        Self { k_neighbors: 5, target_ratio: 1.0, seed: 0 }
    }
}

/// One interpolated point, `vector = x[base] + lambda * (x[neighbor] - x[base])`.
#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SyntheticPoint {
    pub vector: Vec<f64>,
    pub base: usize,
    pub neighbor: usize,
    pub lambda: f64,
}

/// Number of synthetic points that brings `minority` up to
/// `ratio * majority`.
pub fn synthetic_count(minority: usize, majority: usize, ratio: f64) -> usize {
    let target = libm::round(ratio * majority as f64) as usize;
    target.saturating_sub(minority)
}

fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Indices of the `k` nearest other points of each point, ties broken by
/// index.
pub fn nearest_neighbors(points: &[Vec<f64>], k: usize) -> Vec<Vec<usize>> {
    (0..points.len())
        .map(|i| {
            let mut others: Vec<(f64, usize)> =
                (0..points.len()).filter(|&j| j != i).map(|j| (squared_distance(&points[i], &points[j]), j)).collect();
            others.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            others.into_iter().take(k).map(|(_, j)| j).collect()
        })
        .collect()
}

/// Draws `count` synthetic points from the minority set.
pub fn smote(minority: &[Vec<f64>], count: usize, config: &SmoteConfig) -> Result<Vec<SyntheticPoint>, SmoteError> {
    let k = config.k_neighbors;
    if k == 0 {
        return Err(SmoteError::ZeroNeighbors);
    }
    if minority.len() <= k {
        return Err(SmoteError::TooFewMinority { count: minority.len(), k });
    }
    let dim = minority[0].len();
    if minority.iter().any(|p| p.len() != dim) {
        return Err(SmoteError::Ragged);
    }
    let neighbors = nearest_neighbors(minority, k);
    let mut rng = rng::stream(config.seed, Stream::Smote);
    let mut out = Vec::with_capacity(count);
    for _ in 0..count {
        let base = rng::range_inclusive(&mut rng, 0, minority.len() - 1);
        let neighbor = neighbors[base][rng::range_inclusive(&mut rng, 0, k - 1)];
        let lambda = rng::uniform(&mut rng, 0.0, 1.0);
        let x = &minority[base];
        let vector = x.iter().zip(&minority[neighbor]).map(|(a, b)| a + lambda * (b - a)).collect();
        out.push(SyntheticPoint { vector, base, neighbor, lambda });
    }
    Ok(out)
}
