use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Failure modes of the pipeline.
///
/// The variants are grouped so front-ends can map them onto exit codes:
/// configuration problems, data problems, and leakage-audit failures.
#[derive(Debug, Error)]
pub enum Error {
    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("labels contain a single class; both classes are required")]
    SingleClass,

    #[error("frames are already windowed")]
    AlreadyWindowed,

    #[error("frames must be windowed before spectral analysis")]
    NotWindowed,

    #[error("unsupported audio in {path}: {reason}")]
    UnsupportedAudio { path: PathBuf, reason: String },

    #[error("missing file: {0}")]
    MissingFile(PathBuf),

    #[error("malformed manifest row {row}: {reason}")]
    MalformedRow { row: usize, reason: String },

    #[error("cougher {cougher} has conflicting {field} across recordings")]
    CougherConflict {
        cougher: String,
        field: &'static str,
    },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("leakage audit failed: {0}")]
    Leakage(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Wav(#[from] hound::Error),
}

/// Coarse error class used by command-line front-ends.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    Config,
    Data,
    Leakage,
}

impl Error {
    pub fn class(&self) -> ErrorClass {
        match self {
            Error::Config(_) | Error::Json(_) => ErrorClass::Config,
            Error::Leakage(_) => ErrorClass::Leakage,
            _ => ErrorClass::Data,
        }
    }
}
