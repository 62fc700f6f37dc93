use thiserror::Error;

/// Errors raised by input validation and numerical evaluation.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("dimension mismatch in {context}: expected {expected}, got {found}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        found: usize,
    },
    #[error("non-finite value while perturbing coordinate {coordinate}")]
    NonFinite { coordinate: usize },
    #[error("ill-conditioned contact system (condition estimate {condition:.3e})")]
    IllConditionedContact { condition: f64 },
    #[error("mass matrix is not positive definite")]
    SingularMassMatrix,
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("{block} sub-solver failed: {message}")]
    SubSolver { block: &'static str, message: String },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
