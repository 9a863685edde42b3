//! File formats, checkpoints, reports, parallel evaluation and the command
//! line for `tgbully-core`.

use std::path::{Path, PathBuf};

use tgbully_core::{DataError, TensorError, TrainError};

pub mod checkpoint;
pub mod cli;
pub mod explain;
pub mod io;
pub mod parallel;
pub mod report;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{}: {source}", path.display())]
    Data { path: PathBuf, source: DataError },
    #[error("{0}")]
    Config(String),
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error(transparent)]
    Tensor(#[from] TensorError),
}

impl Error {
    pub(crate) fn data(path: &Path, source: DataError) -> Self {
        Error::Data { path: path.to_path_buf(), source }
    }

    /// 2 for usage, configuration and input problems, 3 for failures while
    /// computing.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Io { .. } | Error::Data { .. } | Error::Config(_) | Error::Usage(_) => 2,
            Error::Train(TrainError::Config(_) | TrainError::Data(_)) => 2,
            Error::Train(_) | Error::Tensor(_) => 3,
        }
    }
}
