use std::path::PathBuf;

/// Crate-wide error type.
///
/// Variants map onto the failure classes surfaced by the CLI: bad arguments,
/// I/O and file-format problems, and numeric failures during inference or
/// training.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("numeric failure: {0}")]
    Numeric(String),
    #[error("unsupported format: {0}")]
    UnsupportedFormat(String),
    #[error("corrupt file {path}: {reason}")]
    CorruptFile { path: PathBuf, reason: String },
    #[error("empty dataset: {0}")]
    EmptyDataset(String),
    #[error("contract violation: {0}")]
    ContractViolation(String),
    #[error("undefined reference signal: {0}")]
    UndefinedReference(String),
    #[error("model file {path}: {reason}")]
    ModelFormat { path: PathBuf, reason: String },
    #[error("i/o error at {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
