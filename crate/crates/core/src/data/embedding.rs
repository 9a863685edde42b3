//! Word-vector text format and embedding table initialization.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use crate::data::vocab::{Vocabulary, PAD};
use crate::error::DataError;
use crate::rng::{self, Stream};
use crate::tensor::Tensor;

/// Range of the uniform init for tokens missing from the pretrained file.
pub const INIT_RANGE: f64 = 0.1;

/// Vectors parsed from a `"<count> <dim>"`-headed word-vector file.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct PretrainedVectors {
    pub dim: usize,
    pub vectors: BTreeMap<String, Vec<f64>>,
}

impl PretrainedVectors {
    pub fn parse(text: &str) -> Result<Self, DataError> {
        let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
        let (_, header) = lines.next().ok_or_else(|| DataError::Format("missing \"<count> <dim>\" header".into()))?;
        let mut head = header.split_whitespace();
        let parse_usize = |s: Option<&str>| s.and_then(|v| v.parse::<usize>().ok());
        let (count, dim) = match (parse_usize(head.next()), parse_usize(head.next()), head.next()) {
            (Some(c), Some(d), None) => (c, d),
            _ => return Err(DataError::Format(format!("bad header {header:?}"))),
        };
        let mut vectors = BTreeMap::new();
        for (i, line) in lines {
            let mut parts = line.split_whitespace();
            let token = parts.next().unwrap_or_default();
            let values: Result<Vec<f64>, _> = parts.map(str::parse::<f64>).collect();
            let values = values.map_err(|e| DataError::Parse { line: i + 1, message: format!("{e}") })?;
            if values.len() != dim {
                return Err(DataError::Format(format!(
                    "line {}: token {token:?} has {} values, header says {dim}",
                    i + 1,
                    values.len()
                )));
            }
            vectors.insert(String::from(token), values);
        }
        if vectors.len() != count {
            return Err(DataError::Format(format!("header promises {count} vectors, found {}", vectors.len())));
        }
        Ok(Self { dim, vectors })
    }
}

/// Builds the `|V| x dim` embedding matrix.
///
/// Every row is first drawn uniformly from `[-0.1, 0.1]` in id order, so a
/// row's random init depends only on the seed and its id. Rows whose token
/// appears in `pretrained` are then overwritten with the file values, and
/// the PAD row is zeroed.
pub fn embedding_table(
    vocab: &Vocabulary,
    dim: usize,
    pretrained: Option<&PretrainedVectors>,
    seed: u64,
) -> Result<Tensor, DataError> {
    if let Some(p) = pretrained {
        if p.dim != dim {
            return Err(DataError::Format(format!("embedding file has dim {}, config expects {dim}", p.dim)));
        }
    }
    let mut rng = rng::stream(seed, Stream::Embedding);
    let mut data: Vec<f64> = (0..vocab.len() * dim).map(|_| rng::uniform(&mut rng, -INIT_RANGE, INIT_RANGE)).collect();
    if let Some(p) = pretrained {
        for (id, token) in vocab.tokens().iter().enumerate() {
            if let Some(v) = p.vectors.get(token) {
                data[id * dim..(id + 1) * dim].copy_from_slice(v);
            }
        }
    }
    let pad = PAD as usize;
    data[pad * dim..(pad + 1) * dim].fill(0.0);
    Tensor::matrix(vocab.len(), dim, data).map_err(|e| DataError::Format(format!("{e}")))
}
