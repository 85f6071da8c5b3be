//! Error types shared across the crate.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {context}: expected {expected}, got {got}")]
    DimensionMismatch {
        context: String,
        expected: String,
        got: String,
    },

    #[error("matrix is not symmetric positive definite: {0}")]
    NotSpd(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// A route precondition failed; the route refuses rather than returning
    /// an answer outside its theory.
    #[error("route precondition violated: {0}")]
    RoutePrecondition(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),

    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn dim(context: &str, expected: impl ToString, got: impl ToString) -> Self {
        Error::DimensionMismatch {
            context: context.to_string(),
            expected: expected.to_string(),
            got: got.to_string(),
        }
    }

    /// Process exit code used by the CLI: 2 invalid input, 3 route
    /// precondition violated, 4 numerical failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::RoutePrecondition(_) => 3,
            Error::Numerical(_) | Error::NotSpd(_) => 4,
            _ => 2,
        }
    }
}
