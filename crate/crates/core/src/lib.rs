//! Sequence classification with a bidirectional LSTM encoder and
//! multi-scale windowed attention.
//!
//! The pipeline is `x: [T, d]` → [`recurrent`] (`H: [T, 2h]`) →
//! [`attention`] (one context vector per window scale, concatenated) →
//! [`model`] (softmax head, cross-entropy). Gradients come from the
//! reverse-mode tape in [`autodiff`].

pub mod attention;
pub mod autodiff;
pub mod data;
pub mod error;
pub mod experiment;
pub mod metrics;
pub mod model;
pub mod persist;
pub mod recurrent;
pub mod training;

pub use autodiff::{Graph, Tensor, TensorError, Var};
pub use error::ModelError;
pub use metrics::{confusion, report, ConfusionMatrix, EvalReport};
pub use model::{forward, ModelConfig, ModelParams, Prediction};
pub use training::{train, Checkpoint, RunHistory, TrainConfig, TrainError, Trainer};
