//! Temporal graph attention model for session-level cyberbullying detection.
//!
//! The crate is `no_std` (it needs `alloc`). It contains the tensor tape,
//! the hierarchical encoders, the temporal graph layer, the classifier
//! head, training, metrics and oversampling. File formats and the command
//! line live in the companion `tgbully` crate.
#![no_std]

extern crate alloc;

pub mod autodiff;
pub mod classifier;
pub mod data;
pub mod encoder;
pub mod error;
pub mod gradcheck;
pub mod graph;
pub mod metrics;
pub mod model;
pub mod optim;
pub mod params;
pub mod rng;
pub mod smote;
pub mod tensor;
pub mod train;

pub use autodiff::{Gradients, Tape, Var};
pub use classifier::{AblationFlags, Prediction};
pub use error::{DataError, MetricError, SmoteError, TensorError, TrainError};
pub use graph::TimeTransform;
pub use metrics::Metrics;
pub use model::{Model, ModelConfig};
pub use tensor::Tensor;
pub use train::{train, TrainConfig, TrainOutcome};
