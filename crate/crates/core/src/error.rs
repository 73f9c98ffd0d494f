use std::path::PathBuf;

use thiserror::Error;

use crate::material::Violation;

/// Errors produced by the toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("material maps failed validation ({} violations, first: {})", .0.len(), .0.first().map(|v| v.to_string()).unwrap_or_default())]
    Validation(Vec<Violation>),

    #[error("PFM parse error: {0}")]
    Pfm(#[from] PfmError),

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("PNG encoding failed for {path}: {message}")]
    Png { path: PathBuf, message: String },
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Whether this error originates from the file system rather than from
    /// bad input values.
    pub fn is_io(&self) -> bool {
        matches!(self, Error::Io { .. } | Error::Png { .. })
    }
}

/// Distinct failure modes when decoding a portable float map.
#[derive(Debug, Error, PartialEq, Eq)]
pub enum PfmError {
    #[error("malformed header: {0}")]
    MalformedHeader(String),

    #[error("big-endian payloads are not supported")]
    BigEndian,

    #[error("truncated payload: expected {expected} bytes, found {found}")]
    Truncated { expected: usize, found: usize },

    #[error("channel count {found} does not match header (expected {expected})")]
    ChannelCount { expected: usize, found: usize },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
