use alloc::string::String;
use alloc::vec::Vec;

/// Errors raised by tensor construction and tape operations.
#[derive(Clone, Debug, PartialEq, thiserror::Error)]
pub enum TensorError {
    #[error("dimension mismatch in {op}: {left:?} vs {right:?}")]
    Shape { op: &'static str, left: Vec<usize>, right: Vec<usize> },
    #[error("{op}: empty input")]
    Empty { op: &'static str },
    #[error("backward needs a scalar loss, got shape {0:?}")]
    NonScalarLoss(Vec<usize>),
    #[error("function evaluation produced a non-finite value")]
    NonFinite,
    #[error("{0}")]
    Contract(&'static str),
}

/// Errors raised while loading, validating, or generating session data.
#[derive(Clone, Debug, PartialEq, thiserror::Error)]
pub enum DataError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("session {session_id}: {reason}")]
    Invalid { session_id: String, reason: String },
    #[error("line {line}: session {session_id}: {reason}")]
    InvalidAt { line: usize, session_id: String, reason: String },
    #[error("corpus has {len} sessions, need at least {min}")]
    TooSmall { len: usize, min: usize },
    #[error("corpus spec: {0}")]
    Spec(String),
    #[error("embedding format: {0}")]
    Format(String),
}

/// Errors from metric computation.
#[derive(Clone, Copy, Debug, PartialEq, Eq, thiserror::Error)]
pub enum MetricError {
    #[error("AUC is undefined when only one class is present")]
    SingleClass,
    #[error("no scores to evaluate")]
    Empty,
}

/// Errors from the SMOTE oversampler.
#[derive(Clone, Copy, Debug, PartialEq, Eq, thiserror::Error)]
pub enum SmoteError {
    #[error("SMOTE needs more than k={k} minority points, got {count}")]
    TooFewMinority { count: usize, k: usize },
    #[error("SMOTE needs k >= 1")]
    ZeroNeighbors,
    #[error("minority vectors have inconsistent dimensions")]
    Ragged,
}

/// Errors from training and experiment orchestration.
#[derive(Clone, Debug, PartialEq, thiserror::Error)]
pub enum TrainError {
    #[error("training diverged at epoch {epoch}: non-finite loss")]
    Diverged { epoch: usize },
    #[error("invalid config: {0}")]
    Config(String),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error(transparent)]
    Metric(#[from] MetricError),
    #[error(transparent)]
    Smote(#[from] SmoteError),
}
