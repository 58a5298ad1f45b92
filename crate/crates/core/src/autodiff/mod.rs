//! Reverse-mode automatic differentiation over small dense tensors.
//!
//! Graphs are built per batch by recording operations on a [`Tape`]; each
//! operation is evaluated eagerly. [`Tape::backward`] then sweeps the tape
//! in reverse and returns the adjoint of every leaf.
//!
//! ```
//! use cegan::autodiff::{Tape, Tensor};
//!
//! let mut tape = Tape::new();
//! let x = tape.leaf("x", Tensor::scalar(0.0));
//! let y = tape.sigmoid(x).unwrap();
//! let grads = tape.backward(y).unwrap();
//! assert_eq!(tape.value(y).item(), 0.5);
//! assert_eq!(grads.wrt(x).item(), 0.25);
//! ```

mod gradcheck;
mod tape;
mod tensor;

pub use gradcheck::{central_difference, grad_check};
pub use tape::{Gradients, Node, Op, Tape, Var};
pub use tensor::Tensor;

pub(crate) use tape::sigmoid;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AutodiffError {
    #[error("shape mismatch at node {node} ({op}): {detail}")]
    ShapeMismatch { node: usize, op: &'static str, detail: String },
    #[error("log of non-positive value {value} at node {node}")]
    NonPositiveLog { node: usize, value: f64 },
    #[error("backward requires a scalar root, got shape {0:?}")]
    NonScalarRoot(Vec<usize>),
    #[error("no leaf named `{0}` on this tape")]
    UnknownLeaf(String),
    #[error("tape is empty")]
    EmptyTape,
}
