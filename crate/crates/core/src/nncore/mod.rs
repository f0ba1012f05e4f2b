//! Minimal numeric core: tensors, a reverse-mode graph with the primitives
//! a post-norm encoder needs, Adam, and a finite-difference gradient checker.

mod adam;
mod gradcheck;
mod graph;
mod prob;
mod tensor;

pub use adam::{AdamConfig, AdamState};
pub use gradcheck::grad_check;
pub use graph::{AttentionLayout, Gradients, Graph, Var, LAYER_NORM_EPS};
pub use prob::{argmax, softmax_with_temperature, ProbDist};
pub use tensor::{matmul_values, Real, Tensor};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NnError {
    #[error("shape mismatch in {op}: {left:?} vs {right:?}")]
    Shape { op: &'static str, left: Vec<usize>, right: Vec<usize> },
    #[error("non-finite value produced by {op}")]
    NonFinite { op: &'static str },
    #[error("loss must be a scalar, got shape {0:?}")]
    NotScalar(Vec<usize>),
    #[error("index {index} out of range (bound {bound})")]
    IndexOutOfRange { index: usize, bound: usize },
    #[error("domain error: {0}")]
    Domain(String),
    #[error("not a probability distribution: {0}")]
    NotProbDist(String),
}
