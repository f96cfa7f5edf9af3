//! Zero-mean Gaussian-process regression with marginal-likelihood fitting.
//!
//! Inputs are mapped affinely onto the unit cube using [`Bounds`] before any
//! kernel evaluation, so length-scales are expressed in normalized units.
//! The Gram matrix is noise-free apart from a small diagonal jitter
//! (`1e-8 σ²`, escalated tenfold up to `1e-4 σ²` when the Cholesky
//! factorization fails).

mod kernel;
pub mod optimize;
mod surrogate;

pub use kernel::Kernel;
pub use surrogate::{Bounds, FitOptions, Prediction, Surrogate, SurrogateSnapshot, TrainingSet};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GpError {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("invalid kernel parameters: {0}")]
    InvalidKernel(String),
    #[error("invalid training set: {0}")]
    InvalidTrainingSet(String),
    #[error("training points {first} and {second} coincide")]
    DuplicatePoint { first: usize, second: usize },
    #[error("need at least {need} training points, got {got}")]
    TooFewPoints { need: usize, got: usize },
    #[error("Gram matrix not positive definite even with jitter {jitter:e}")]
    Factorization { jitter: f64 },
    #[error("predictive variance {0:e} is negative beyond round-off")]
    NegativeVariance(f64),
}
