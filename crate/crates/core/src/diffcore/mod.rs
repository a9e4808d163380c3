//! Reverse-mode differentiation and the Adam optimizer.

mod adam;
mod tape;

pub use adam::{adam_step, AdamState};
pub use tape::{BufferPool, Gradients, RowGroups, Tape, Var};


use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DiffError {
    #[error("shape mismatch at node {node} ({op}): {detail}")]
    ShapeMismatch { node: usize, op: &'static str, detail: String },
    #[error("backward root node {node} is {rows}x{cols}, expected a scalar")]
    NonScalarRoot { node: usize, rows: usize, cols: usize },
    #[error("no node with index {0}")]
    UnknownNode(usize),
    #[error("non-finite gradient {value} at parameter index {index}")]
    NonFiniteGradient { index: usize, value: f64 },
    #[error("length mismatch: expected {expected}, got {got}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("learning rate must be finite and non-negative, got {0}")]
    InvalidLearningRate(f64),
}
