use std::path::{Path, PathBuf};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum IoError {
    #[error("{}: file not found", path.display())]
    Missing { path: PathBuf },
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{}:{line}:{column}: malformed JSON: {msg}", path.display())]
    Json {
        path: PathBuf,
        line: usize,
        column: usize,
        msg: String,
    },
    #[error("{}: {location}: {msg}", path.display())]
    Schema {
        path: PathBuf,
        location: String,
        msg: String,
    },
    #[error("{}: duplicate image id {id} at {location}", path.display())]
    DuplicateId {
        path: PathBuf,
        id: u32,
        location: String,
    },
    #[error("{}: unsupported version {found:?}, expected {expected:?}", path.display())]
    UnknownVersion {
        path: PathBuf,
        found: String,
        expected: &'static str,
    },
    #[error("{}: bad format: {msg}", path.display())]
    Format { path: PathBuf, msg: String },
    #[error("{}: truncated: expected {expected} bytes, found {found}", path.display())]
    Truncated {
        path: PathBuf,
        expected: u64,
        found: u64,
    },
    #[error("{}:{line}: {msg}", path.display())]
    Parse {
        path: PathBuf,
        line: usize,
        msg: String,
    },
    #[error(transparent)]
    Core(#[from] cvforge_core::Error),
}

pub type Result<T, E = IoError> = std::result::Result<T, E>;

impl IoError {
    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        if source.kind() == std::io::ErrorKind::NotFound {
            IoError::Missing { path: path.to_path_buf() }
        } else {
            IoError::Io {
                path: path.to_path_buf(),
                source,
            }
        }
    }

    pub(crate) fn json(path: &Path, e: serde_json::Error) -> Self {
        IoError::Json {
            path: path.to_path_buf(),
            line: e.line(),
            column: e.column(),
            msg: e.to_string(),
        }
    }

    pub(crate) fn schema(path: &Path, location: impl Into<String>, msg: impl Into<String>) -> Self {
        IoError::Schema {
            path: path.to_path_buf(),
            location: location.into(),
            msg: msg.into(),
        }
    }

    pub(crate) fn format(path: &Path, msg: impl Into<String>) -> Self {
        IoError::Format {
            path: path.to_path_buf(),
            msg: msg.into(),
        }
    }

    /// Whether the failure happened while writing output rather than reading input.
    pub fn is_write_failure(&self) -> bool {
        matches!(self, IoError::Io { .. })
    }
}
