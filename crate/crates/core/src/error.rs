use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {cause}")]
    Io { path: PathBuf, cause: std::io::Error },

    #[error("manifest line {line}: {message}")]
    ManifestParse { line: usize, message: String },

    #[error("duplicate clip_id {0:?} in manifest")]
    DuplicateClipId(String),

    #[error("manifest line {line}: unknown split {value:?} (expected \"train\" or \"test\")")]
    UnknownSplit { line: usize, value: String },

    #[error("no frames found in {0}")]
    EmptyClip(PathBuf),

    #[error("cannot decode {path}: {message}")]
    Decode { path: PathBuf, message: String },

    #[error("{context}: expected {expected}, found {found}")]
    DimensionMismatch {
        context: String,
        expected: String,
        found: String,
    },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("backend {backend}: {message}")]
    Backend { backend: String, message: String },

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("{path}: {kind}")]
    Format {
        path: PathBuf,
        kind: FormatError,
    },

    #[error("{0}")]
    Invalid(String),
}

/// Ways a binary artifact (feature cache, checkpoint) can be corrupt.
#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum FormatError {
    #[error("bad magic bytes")]
    BadMagic,
    #[error("truncated file: {0}")]
    Truncated(String),
    #[error("header declares {declared} values but payload holds {actual}")]
    Inconsistent { declared: u64, actual: u64 },
    #[error("payload checksum mismatch (stored {stored:016x}, computed {computed:016x})")]
    Checksum { stored: u64, computed: u64 },
    #[error("corrupt header: {0}")]
    Header(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            cause: source,
        }
    }

    pub(crate) fn format(path: impl Into<PathBuf>, kind: FormatError) -> Self {
        Error::Format {
            path: path.into(),
            kind,
        }
    }

    pub(crate) fn dims(
        context: impl Into<String>,
        expected: impl std::fmt::Display,
        found: impl std::fmt::Display,
    ) -> Self {
        Error::DimensionMismatch {
            context: context.into(),
            expected: expected.to_string(),
            found: found.to_string(),
        }
    }

    /// The format error class, when this is a corrupt-file error.
    pub fn format_kind(&self) -> Option<&FormatError> {
        match self {
            Error::Format { kind, .. } => Some(kind),
            _ => None,
        }
    }
}
