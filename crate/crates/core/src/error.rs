use thiserror::Error;

/// Errors raised anywhere in the key-rate pipeline.
#[derive(Debug, Error)]
pub enum Error {
    /// Malformed input: non-Hermitian operator, bad index, out-of-range parameter.
    #[error("validation error: {0}")]
    Validation(String),

    /// Input outside the mathematical domain of an operation (e.g. log of a negative eigenvalue).
    #[error("domain error: {0}")]
    Domain(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    /// Constraints admit no solution. The message names the violated constraint.
    #[error("infeasible: {0}")]
    Infeasible(String),

    #[error("unbounded: {0}")]
    Unbounded(String),

    /// A numerical routine failed to converge or lost precision.
    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    /// Process exit code used by the CLI: 1 for bad input, 2 for numerical trouble.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Infeasible(_) | Error::Unbounded(_) | Error::Numerical(_) => 2,
            _ => 1,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
