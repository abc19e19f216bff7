use thiserror::Error;

/// Errors produced by the estimation pipeline.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("degenerate matrix: smallest singular value {0:e} is below 1e-12")]
    DegenerateMatrix(f64),

    #[error("dimension mismatch in {context}: expected {expected}, got {actual}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        actual: usize,
    },

    #[error("horizon too short: T = {0}, need at least 2")]
    HorizonTooShort(usize),

    #[error("singular shape system: {0}")]
    SingularShapeSystem(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("degenerate leading eigenvector: homogenization entry {0:e}")]
    DegenerateEigenvector(f64),

    #[error("SDP solver failed: {0}")]
    SolverFailure(String),

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },
}

pub type Result<T> = std::result::Result<T, Error>;
