use std::path::PathBuf;

use thiserror::Error;

/// Errors raised by the solver toolkit.
#[derive(Debug, Error)]
pub enum SsioError {
    #[error("invalid input: {0}")]
    Input(String),

    /// The information matrix could not be factorized (singular or indefinite).
    #[error("singular information matrix: {0}")]
    Singular(String),

    #[error("infeasible problem: {0}")]
    Infeasible(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("instance too large for exhaustive search: {0}")]
    TooLarge(String),

    #[error("{path}:{line}: {msg}")]
    Parse {
        path: PathBuf,
        line: usize,
        msg: String,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl SsioError {
    pub(crate) fn input(msg: impl Into<String>) -> Self {
        SsioError::Input(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        SsioError::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, SsioError>;
