use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid sensor metadata: {0}")]
    InvalidMeta(String),

    #[error("invalid dimensions: {0}")]
    InvalidDims(String),

    #[error("unsupported color filter array: {0}")]
    WrongCfa(String),

    #[error("packed arrangement mismatch: expected {expected}, got {actual}")]
    WrongArrangement {
        expected: &'static str,
        actual: &'static str,
    },

    #[error("amplification ratio must be a finite value >= 1, got {0}")]
    InvalidRatio(f64),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("non-finite value produced by {0}")]
    NonFinite(&'static str),

    #[error("invalid parameter: {0}")]
    InvalidParam(String),

    #[error("malformed metadata in {path}: {msg}")]
    MalformedMeta { path: PathBuf, msg: String },

    #[error("malformed image file {path}: {msg}")]
    MalformedImage { path: PathBuf, msg: String },

    #[error("malformed weights file: {0}")]
    MalformedWeights(String),

    #[error("weights do not match model spec: {0}")]
    SpecMismatch(String),

    #[error("dataset error: {0}")]
    Dataset(String),

    /// The cause is part of the message and deliberately not exposed as
    /// `source()`, so error-chain printers do not repeat it.
    #[error("I/O error on {path}: {cause}")]
    Io { path: PathBuf, cause: std::io::Error },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            cause: source,
        }
    }
}
