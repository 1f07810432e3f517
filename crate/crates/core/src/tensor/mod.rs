//! Dense linear algebra and a small reverse-mode autodiff tape.

pub mod dense;
pub mod tape;

use thiserror::Error;

pub use dense::{rank_one_inverse_apply, spd_solve, Cholesky, DenseMatrix, DenseVector};
pub use tape::{finite_diff_coords, finite_diff_gradient, NodeId, Tape};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LinalgError {
    #[error("matrix is not positive definite (pivot {pivot:e} at index {index})")]
    NotSpd { index: usize, pivot: f64 },
    #[error("matrix is not symmetric")]
    NotSymmetric,
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("rank-one downdate is singular (leverage {leverage})")]
    LeverageSingular { leverage: f64 },
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AutodiffError {
    #[error("gradient requested for a non-scalar node of shape {rows}x{cols}")]
    NonScalarOutput { rows: usize, cols: usize },
    #[error("node {0} is not on the tape")]
    UnknownNode(usize),
    #[error("loss evaluated to a non-finite value while probing coordinate {coordinate}")]
    NonFiniteLoss { coordinate: usize },
}
