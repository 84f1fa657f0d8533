use std::path::PathBuf;

use thiserror::Error;

use crate::bag::PatchCoord;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("patch {coord:?} out of bounds for {height}x{width} bag")]
    OutOfBounds {
        coord: PatchCoord,
        height: usize,
        width: usize,
    },

    #[error("format error at byte {offset}: {msg}")]
    Format { offset: usize, msg: String },

    #[error("glyph placement failed: {0}")]
    Placement(String),

    #[error("numeric error: {0}")]
    Numeric(String),

    #[error("invalid config: {0}")]
    Config(String),

    #[error("shape mismatch: expected {expected}, got {actual}")]
    Shape { expected: usize, actual: usize },

    #[error("empty bag: aggregation needs at least one patch score")]
    EmptyBag,

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    /// Short machine-readable tag, used by the CLI error line.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::OutOfBounds { .. } => "bounds",
            Error::Format { .. } => "format",
            Error::Placement(_) => "placement",
            Error::Numeric(_) => "numeric",
            Error::Config(_) => "config",
            Error::Shape { .. } => "shape",
            Error::EmptyBag => "empty_bag",
            Error::Io { .. } => "io",
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
