use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid shape: {0}")]
    Shape(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("backward called without a matching forward state: {0}")]
    MissingState(String),
    #[error("not a MIAV file: {0}")]
    NotMiav(PathBuf),
    #[error("not a MIAC checkpoint: {0}")]
    NotCheckpoint(PathBuf),
    #[error("unsupported format version {found} (expected {expected})")]
    Version { found: u32, expected: u32 },
    #[error("truncated file: {0}")]
    Truncated(String),
    #[error("malformed file: {0}")]
    Malformed(String),
    #[error("image decode failed for {path}: {message}")]
    Decode { path: PathBuf, message: String },
    #[error("config error: {0}")]
    Config(String),
    #[error("dataset error: {0}")]
    Dataset(String),
    #[error("label space mismatch: {0}")]
    LabelSpace(String),
    #[error("io error at {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    /// Stable short identifier, used by the CLI for machine-readable error lines.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Shape(_) => "shape",
            Error::InvalidArgument(_) => "invalid_argument",
            Error::MissingState(_) => "missing_state",
            Error::NotMiav(_) => "not_miav",
            Error::NotCheckpoint(_) => "not_checkpoint",
            Error::Version { .. } => "version",
            Error::Truncated(_) => "truncated",
            Error::Malformed(_) => "malformed",
            Error::Decode { .. } => "decode",
            Error::Config(_) => "config",
            Error::Dataset(_) => "dataset",
            Error::LabelSpace(_) => "label_space",
            Error::Io { .. } => "io",
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

macro_rules! ensure {
    ($cond:expr, $variant:ident, $($fmt:tt)+) => {
        if !$cond {
            return Err($crate::error::Error::$variant(format!($($fmt)+)));
        }
    };
}
pub(crate) use ensure;
