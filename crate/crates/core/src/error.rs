use thiserror::Error;

/// Library-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    /// Bad user input: violated preconditions, out-of-range hyperparameters,
    /// malformed schemas.
    #[error("{0}")]
    InvalidInput(String),

    /// CSV parse or validation failure, located by file line (1-based,
    /// counting the header) and column name.
    #[error("line {line}, column `{column}`: {message}")]
    Csv {
        line: usize,
        column: String,
        message: String,
    },

    /// Feature dimensionality does not match what the model was trained on.
    #[error("dimension mismatch: expected {expected} features, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    /// The requested operation is not defined for this model family.
    #[error("{0}")]
    Unsupported(String),

    /// Numerical failure that survived the configured recovery attempts
    /// (e.g. Cholesky factorization after the jitter ladder).
    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    /// True for errors caused by bad input rather than runtime failure.
    /// The CLI maps validation errors to exit code 1 and the rest to 2.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::InvalidInput(_)
                | Error::Csv { .. }
                | Error::DimensionMismatch { .. }
                | Error::Unsupported(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
