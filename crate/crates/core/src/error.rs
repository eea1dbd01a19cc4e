use std::path::PathBuf;

use thiserror::Error;

/// Errors produced by model construction, fitting and I/O.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch in {context}: expected {expected}, got {got}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("vertex {vertex} is behind the camera (depth {depth})")]
    BehindCamera { vertex: usize, depth: f64 },

    #[error("unknown feature descriptor '{name}', available: {}", available.join(", "))]
    UnknownDescriptor { name: String, available: Vec<String> },

    #[error("singular system in {0}; increase the prior weights or landmark weight")]
    Singular(&'static str),

    #[error("degenerate landmark configuration: {0}")]
    DegenerateLandmarks(String),

    #[error("non-finite value encountered: {0}")]
    NonFinite(String),

    #[error("{0}")]
    OutOfFrame(String),

    #[error("malformed {format} data: {message}")]
    Format {
        format: &'static str,
        message: String,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("image error: {0}")]
    Image(#[from] image::ImageError),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn format(format: &'static str, message: impl Into<String>) -> Self {
        Error::Format {
            format,
            message: message.into(),
        }
    }
}

pub(crate) fn check_len(context: &'static str, expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::DimensionMismatch {
            context,
            expected,
            got,
        })
    }
}
