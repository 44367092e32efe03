use std::path::PathBuf;

use thiserror::Error;

/// Errors raised across the feature-extraction and classification pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("parse error at row {row} ({sample_id}): {message}")]
    Parse {
        row: usize,
        sample_id: String,
        message: String,
    },

    #[error("validation error: {0}")]
    Validation(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("numeric error at scale {scale}: {message}")]
    Numeric { scale: usize, message: String },

    #[error("degenerate large-state mass: {0}")]
    DegenerateMass(String),

    #[error("wavelength {index}: {source}")]
    AtWavelength {
        index: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("config error: {0}")]
    Config(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
