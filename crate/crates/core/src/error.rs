//! Error type shared by all evaluators.

use thiserror::Error;

/// Errors surfaced by kernel evaluation, symbolic operations, and the harness.
#[derive(Debug, Clone, Error)]
pub enum KernelError {
    /// Input outside the mathematical domain of the operation
    /// (bad coordinate range, mismatched word alphabet, invalid dimension).
    #[error("domain error: {0}")]
    Domain(String),

    /// Derivative order beyond the precomputed recurrence tables.
    #[error("derivative order {requested} exceeds supported maximum {max}")]
    UnsupportedOrder { requested: usize, max: usize },

    /// Quadrature or series evaluation produced a non-finite value or failed
    /// to converge within the configured budget.
    #[error("numerical failure: {0}")]
    Numerical(String),
}

pub type Result<T> = std::result::Result<T, KernelError>;
