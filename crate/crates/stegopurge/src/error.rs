//! Crate-wide error type.

use std::path::PathBuf;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("{path}: malformed header: {reason}")]
    MalformedHeader { path: String, reason: String },

    #[error("{path}: unsupported maxval {maxval} (only 8-bit maxval 255 is supported)")]
    UnsupportedMaxval { path: String, maxval: u64 },

    #[error("{path}: truncated pixel data: expected {expected} bytes, got {got}")]
    TruncatedData {
        path: String,
        expected: usize,
        got: usize,
    },

    #[error("{0}: unsupported image format (use .pgm or .png)")]
    UnsupportedFormat(PathBuf),

    #[error("invalid image: {0}")]
    InvalidImage(String),

    #[error("payload needs {needed} carrier bits but capacity is {capacity}")]
    CapacityExceeded { needed: usize, capacity: usize },

    #[error("corrupt or absent payload")]
    PayloadCorrupt,

    #[error("nothing to compare")]
    EmptyComparison,

    #[error("dimension mismatch: {0}x{1} vs {2}x{3}")]
    DimensionMismatch(usize, usize, usize, usize),

    #[error("image too small: {width}x{height}, need at least {min}x{min}")]
    ImageTooSmall {
        width: usize,
        height: usize,
        min: usize,
    },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    #[error("checkpoint {path}: bad magic or unsupported version")]
    CheckpointVersion { path: String },

    #[error("checkpoint {path}: tensor {name}: expected shape {expected:?}, found {found:?}")]
    CheckpointShape {
        path: String,
        name: String,
        expected: Vec<usize>,
        found: Vec<usize>,
    },

    #[error("checkpoint {path}: unknown tensor {name}")]
    CheckpointUnknownTensor { path: String, name: String },

    #[error("checkpoint {path}: missing tensor {name}")]
    CheckpointMissingTensor { path: String, name: String },

    #[error("checkpoint {path}: truncated")]
    CheckpointTruncated { path: String },

    #[error("no checkpoint configured for method {0}")]
    MissingCheckpoint(String),

    #[error("non-finite {what} at epoch {epoch}, batch {batch}")]
    NonFinite {
        what: &'static str,
        epoch: usize,
        batch: usize,
    },

    #[error("{path}: malformed WAV: {reason}")]
    MalformedWav { path: String, reason: String },

    #[error("manifest error: {0}")]
    Manifest(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Process exit code for the CLI: 2 for data/format errors, 3 for
    /// numeric failures (NaN/Inf during training).
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::NonFinite { .. } => 3,
            _ => 2,
        }
    }
}
