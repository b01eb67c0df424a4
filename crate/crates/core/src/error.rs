use thiserror::Error;

use crate::store::TensorError;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("channel `{0}` not present in recording")]
    MissingChannel(String),

    #[error("sample rate is {found} Hz, expected {expected} Hz")]
    SampleRate { expected: u32, found: u32 },

    #[error("empty signal")]
    EmptySignal,

    #[error("recording has {samples} samples, shorter than one {window}-sample window")]
    TooShort { samples: usize, window: usize },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error(transparent)]
    Tensor(#[from] TensorError),

    #[error("invalid manifest: {}", .0.join("; "))]
    Manifest(Vec<String>),

    #[error("invalid configuration: {}", .0.join("; "))]
    Config(Vec<String>),

    #[error("training set contains a single class")]
    SingleClass,

    #[error("non-finite value encountered in {0}")]
    NonFinite(String),

    #[error("wav: {0}")]
    Wav(#[from] hound::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),

    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

/// Coarse classification used by the command line for exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorCategory {
    Config,
    Data,
    Numeric,
}

impl Error {
    pub fn category(&self) -> ErrorCategory {
        match self {
            Error::Config(_) | Error::InvalidArgument(_) => ErrorCategory::Config,
            Error::NonFinite(_) => ErrorCategory::Numeric,
            _ => ErrorCategory::Data,
        }
    }
}
