use thiserror::Error;

/// Errors produced anywhere in the template pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),

    #[error("parse error at {location}: {message}")]
    Parse { location: String, message: String },

    #[error("dimension mismatch in {context}: expected {expected}, found {found}")]
    DimensionMismatch {
        context: String,
        expected: usize,
        found: usize,
    },

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("not a {expected} file (bad magic)")]
    BadMagic { expected: &'static str },

    #[error("unsupported {format} version {found} (supported: {supported})")]
    VersionMismatch {
        format: &'static str,
        found: u16,
        supported: u16,
    },

    #[error("truncated header: missing {0}")]
    TruncatedHeader(&'static str),

    #[error("corrupted entry: {0}")]
    CorruptedEntry(String),

    #[error("fingerprint mismatch: {0}")]
    FingerprintMismatch(String),

    #[error("template metadata mismatch: {0}")]
    MetadataMismatch(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("training diverged: non-finite loss at epoch {epoch}")]
    NonFiniteLoss { epoch: usize },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn parse(location: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Parse {
            location: location.into(),
            message: message.into(),
        }
    }

    pub(crate) fn invalid(message: impl Into<String>) -> Self {
        Error::InvalidParameter(message.into())
    }

    pub(crate) fn insufficient(message: impl Into<String>) -> Self {
        Error::InsufficientData(message.into())
    }
}
