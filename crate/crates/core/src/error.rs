use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("dimension mismatch: expected {expected}, got {got} ({context})")]
    DimensionMismatch {
        expected: usize,
        got: usize,
        context: &'static str,
    },

    #[error("invalid sparsity target: beta = {beta} exceeds length {len}")]
    InvalidTarget { beta: usize, len: usize },

    #[error("invalid config: {0}")]
    InvalidConfig(String),

    #[error("{path}: row {row}, column {column}: {message}")]
    Parse {
        path: PathBuf,
        row: usize,
        column: usize,
        message: String,
    },

    #[error("internal error: {0}")]
    Internal(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for errors caused by the caller's configuration or inputs rather
    /// than by a failure while running.
    pub fn is_config_error(&self) -> bool {
        matches!(
            self,
            Error::InvalidConfig(_)
                | Error::InvalidTarget { .. }
                | Error::InvalidInput(_)
                | Error::DimensionMismatch { .. }
                | Error::Json(_)
        )
    }
}

pub(crate) fn check_len(expected: usize, got: usize, context: &'static str) -> Result<()> {
    if expected != got {
        return Err(Error::DimensionMismatch {
            expected,
            got,
            context,
        });
    }
    Ok(())
}
