//! Self-adaptive training: per-sample moving-average targets and confidence
//! weights for learning under label and input corruption, with abstention
//! and adversarial-training variants.
//!
//! The crate is a small CPU-only stack: a dense [`Tensor`], a ReLU [`Mlp`]
//! with hand-written backward passes, SGD with momentum, dataset loaders and
//! corruption schemes, the training loop for every objective, and the
//! measurements used to compare them. See `examples/` for one runnable
//! program per capability.

pub mod adversarial;
pub mod data;
pub mod error;
pub mod grad;
pub mod harness;
pub mod loss;
pub mod metrics;
pub mod mlp;
pub mod ops;
pub mod optim;
pub mod sat;
pub mod selective;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};
pub use mlp::{Mlp, MlpSpec};
pub use sat::{SatConfig, TargetStore};
pub use tensor::Tensor;
pub use train::{train, TrainConfig, TrainMode, TrainOutcome};
