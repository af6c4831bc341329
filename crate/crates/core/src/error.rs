use std::path::PathBuf;

use thiserror::Error;

/// Errors produced by the ITM library.
#[derive(Debug, Error)]
pub enum ItmError {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("format error: {0}")]
    Format(String),

    #[error("validation error: {0}")]
    Validation(String),

    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("invalid state: {0}")]
    State(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error(
        "non-finite loss at iteration {iteration} (eta = {eta}, eta * lambda_max(C) = {spectral_bound:.4})"
    )]
    Numeric {
        iteration: usize,
        eta: f64,
        spectral_bound: f64,
    },

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl ItmError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        ItmError::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, ItmError>;
