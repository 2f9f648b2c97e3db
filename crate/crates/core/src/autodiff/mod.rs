//! Dense `f64` tensors, a reverse-mode tape, and a finite-difference oracle.

mod gradcheck;
mod graph;
mod tensor;

pub use gradcheck::{check_gradients, finite_diff_grad, relative_error, GradCheckReport};
pub use graph::{window_bounds, Binary, Graph, Unary, Var};
pub use tensor::Tensor;

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TensorError {
    #[error("invalid shape {shape:?}: extents must be positive and rank at least 1")]
    InvalidShape { shape: Vec<usize> },
    #[error("shape {shape:?} does not match {len} values")]
    LengthMismatch { shape: Vec<usize>, len: usize },
    #[error("{op}: non-finite value at flat index {index}")]
    NonFinite { op: &'static str, index: usize },
    #[error("{op}: shape mismatch {left:?} vs {right:?}")]
    ShapeMismatch {
        op: &'static str,
        left: Vec<usize>,
        right: Vec<usize>,
    },
    #[error("{op}: expected rank {expected}, got shape {shape:?}")]
    Rank {
        op: &'static str,
        expected: usize,
        shape: Vec<usize>,
    },
    #[error("{op}: argument {value} at index {index} is outside the domain")]
    Domain {
        op: &'static str,
        index: usize,
        value: f64,
    },
    #[error("{op}: range [{lo}, {hi}] out of bounds for length {len}")]
    Bounds {
        op: &'static str,
        lo: usize,
        hi: usize,
        len: usize,
    },
    #[error("{op}: no inputs")]
    Empty { op: &'static str },
    #[error("expected a single-element tensor, got shape {shape:?}")]
    NotScalar { shape: Vec<usize> },
    #[error("graph has already been differentiated")]
    GraphConsumed,
    #[error("finite-difference step must be positive, got {0}")]
    InvalidStep(f64),
    #[error("objective is non-finite when perturbing tensor {tensor} at index {index}")]
    NonFiniteObjective { tensor: usize, index: usize },
}
