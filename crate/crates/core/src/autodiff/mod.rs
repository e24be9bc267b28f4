//! Minimal reverse-mode differentiation: a tape of dense matrix operations,
//! MLP layers built on it, and an Adam optimizer.

mod adam;
mod mlp;
mod tape;

pub use adam::{clip_grad_norm, Adam, AdamConfig};
pub use mlp::{Activation, BoundMlp, Dense, Mlp, MlpSpec};
pub use tape::{Tape, Var};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AutodiffError {
    #[error("loss must be 1x1, got {rows}x{cols}")]
    NonScalarLoss { rows: usize, cols: usize },
    #[error("node {0} does not require gradients")]
    Detached(usize),
    #[error("input has {actual} columns, network expects {expected}")]
    DimensionMismatch { expected: usize, actual: usize },
    #[error("network dimensions must be at least 1")]
    ZeroDimension,
    #[error("learning rate must be positive, got {0}")]
    InvalidLearningRate(f64),
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
}
