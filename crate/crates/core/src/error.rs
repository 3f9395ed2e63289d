use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("matrix has a zero diagonal entry in row {row}")]
    ZeroDiagonal { row: usize },

    #[error("matrix is singular or too ill-conditioned for a direct solve")]
    Singular,

    #[error("{method} did not converge within {iterations} iterations")]
    NoConvergence {
        method: &'static str,
        iterations: usize,
    },

    #[error("largest singular value of the iteration matrix is {sigma_max_m}, the rejection bound needs it below 1")]
    NotContractive { sigma_max_m: f64 },

    #[error("invalid corruption policy: {0}")]
    InvalidPolicy(String),

    #[error("network configuration mismatch: {0}")]
    Configuration(String),
}
