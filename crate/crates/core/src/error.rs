use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// Zero-norm, negative or non-finite illuminant vector.
    #[error("invalid illuminant: {0}")]
    InvalidIlluminant(String),

    /// An illuminant with a zero channel cannot be divided out.
    #[error("degenerate illuminant {0:?}: every component must be strictly positive")]
    DegenerateIlluminant([f64; 3]),

    #[error("invalid input: {0}")]
    Input(String),

    #[error("format error at byte {offset}: {message}")]
    Format { offset: u64, message: String },

    #[error("degenerate spectral configuration: {0}")]
    DegenerateConfig(String),

    #[error("manifest error: {0}")]
    Manifest(String),

    #[error("protocol error: {0}")]
    Protocol(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("augmentation error: {0}")]
    Augmentation(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    // The decoder error is part of the message rather than a `source`, so
    // chained reports do not print it twice.
    #[error("image {path}: {cause}")]
    Image { path: PathBuf, cause: image::ImageError },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn format(offset: u64, message: impl Into<String>) -> Self {
        Error::Format { offset, message: message.into() }
    }
}
