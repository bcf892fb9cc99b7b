use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid architecture at layer {layer}: {reason}")]
    InvalidArch { layer: usize, reason: String },

    #[error("architecture spec parse error: {0}")]
    ArchParse(String),

    #[error("dimension mismatch in {context}: expected {expected}, got {actual}")]
    Dimension {
        context: String,
        expected: String,
        actual: String,
    },

    #[error("invalid input: {0}")]
    Input(String),

    #[error("unsupported operation: {0}")]
    Unsupported(String),

    #[error("incompatible architectures: {0}")]
    Incompatible(String),

    #[error(transparent)]
    Idx(#[from] IdxError),

    #[error("configuration error at `{field}`: {reason}")]
    Config { field: String, reason: String },

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn dimension(
        context: impl Into<String>,
        expected: impl ToString,
        actual: impl ToString,
    ) -> Self {
        Error::Dimension {
            context: context.into(),
            expected: expected.to_string(),
            actual: actual.to_string(),
        }
    }

    pub(crate) fn config(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Config {
            field: field.into(),
            reason: reason.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

/// Failures while reading IDX files.
#[derive(Debug, Error)]
pub enum IdxError {
    #[error("{path}: bad magic number {found:#010x} (expected {expected:#010x})")]
    BadMagic { path: PathBuf, expected: u32, found: u32 },

    #[error("{path}: truncated file: expected {expected} bytes, found {actual}")]
    Truncated { path: PathBuf, expected: u64, actual: u64 },

    #[error("{path}: {reason}")]
    Header { path: PathBuf, reason: String },

    #[error("sample count mismatch: {images_path} has {images} images but {labels_path} has {labels} labels")]
    CountMismatch {
        images_path: PathBuf,
        labels_path: PathBuf,
        images: usize,
        labels: usize,
    },
}
