use std::path::PathBuf;

use thiserror::Error;

pub type ToolResult<T> = Result<T, ToolError>;

/// Failures while reading a model file; each has its own variant so callers
/// can tell a stale file from a damaged one.
#[derive(Debug, Error, PartialEq, Eq)]
pub enum ModelFormatError {
    #[error("not a model file (bad magic)")]
    BadMagic,
    #[error("model format version {found} is not supported (expected {expected})")]
    VersionMismatch { found: u32, expected: u32 },
    #[error("model file truncated: needed {needed} bytes, found {found}")]
    Truncated { needed: u64, found: u64 },
    #[error("model checksum mismatch (stored {stored:#010x}, computed {computed:#010x})")]
    Checksum { stored: u32, computed: u32 },
    #[error("malformed model payload: {0}")]
    Malformed(String),
}

#[derive(Debug, Error)]
pub enum ToolError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Image {
        path: PathBuf,
        #[source]
        source: image::ImageError,
    },
    #[error("{path}: {source}")]
    Model {
        path: PathBuf,
        #[source]
        source: ModelFormatError,
    },
    #[error("{0}")]
    Core(#[from] acf_core::Error),
    #[error("validation failed: {0}")]
    Validation(String),
}

impl ToolError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        ToolError::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code: 2 configuration, 3 input/output, 4 validation.
    pub fn exit_code(&self) -> i32 {
        match self {
            ToolError::Config(_) => 2,
            ToolError::Core(acf_core::Error::InvalidConfig(_) | acf_core::Error::MissingPoolingSeed) => 2,
            ToolError::Io { .. } | ToolError::Image { .. } => 3,
            ToolError::Model { .. } | ToolError::Core(_) | ToolError::Validation(_) => 4,
        }
    }
}
