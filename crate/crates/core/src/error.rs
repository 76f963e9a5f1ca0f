use thiserror::Error;

/// Failures of the decomposition, fitting and configuration routines.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("matrix is singular")]
    SingularMatrix,
    #[error("matrix is not positive definite")]
    NotPositiveDefinite,
    #[error("triangular factor has a zero diagonal entry")]
    ZeroDiagonal,
    #[error("trajectory must contain at least one sample")]
    EmptyTrajectory,
    #[error("insufficient data: need at least {required} samples, got {actual}")]
    InsufficientData { required: usize, actual: usize },
    #[error("degenerate excitation: {0}")]
    DegenerateExcitation(&'static str),
    #[error("size mismatch: expected {expected}, got {actual}")]
    SizeMismatch { expected: usize, actual: usize },
    #[error("invalid input: {0}")]
    InvalidInput(String),
}

pub type Result<T> = std::result::Result<T, Error>;
