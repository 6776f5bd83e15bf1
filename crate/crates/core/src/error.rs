use std::path::PathBuf;

use thiserror::Error;

/// Errors produced by the confidence-map pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid dimensions {height}x{width} (both must be at least 2)")]
    InvalidDimensions { height: usize, width: usize },

    #[error("sample buffer holds {actual} values, expected {expected}")]
    BufferLength { expected: usize, actual: usize },

    #[error("dimension mismatch: expected {expected:?}, got {actual:?}")]
    DimensionMismatch {
        expected: (usize, usize),
        actual: (usize, usize),
    },

    #[error("non-finite sample at index {index}")]
    NonFinite { index: usize },

    #[error("sample {value} at index {index} lies outside [0, 1]")]
    OutOfDomain { index: usize, value: f64 },

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: String, reason: String },

    #[error("stencil width {stencil} exceeds image width {width}")]
    StencilTooWide { stencil: usize, width: usize },

    #[error("region {rect} lies outside a {height}x{width} image")]
    RegionOutOfBounds {
        rect: crate::Rect,
        height: usize,
        width: usize,
    },

    #[error("unsupported image in {path}: {reason}")]
    UnsupportedImage { path: PathBuf, reason: String },

    #[error("cannot decode {path}: {reason}")]
    Decode { path: PathBuf, reason: String },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("line {line}: {reason}")]
    Parse { line: usize, reason: String },

    #[error("unknown configuration key `{0}`")]
    UnknownKey(String),

    #[error("incomplete patch triple: {0}")]
    IncompleteTriple(String),
}

impl Error {
    pub(crate) fn param(name: &str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name: name.to_string(),
            reason: reason.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for failures caused by the filesystem or by undecodable files,
    /// as opposed to invalid arguments or data.
    pub fn is_io(&self) -> bool {
        matches!(self, Error::Io { .. } | Error::Decode { .. })
    }
}

pub type Result<T> = std::result::Result<T, Error>;
