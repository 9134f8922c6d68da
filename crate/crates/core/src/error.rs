use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid config: {0}")]
    Config(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("unknown camera {0}")]
    UnknownCamera(usize),

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("ground truth missing for tracklet {0}")]
    MissingGroundTruth(u64),

    #[error("format error: {0}")]
    Format(String),

    #[error("version mismatch: expected {expected}, found {found}")]
    Version { expected: u32, found: u32 },

    #[error("hash mismatch for {what}: expected {expected}, found {found}")]
    HashMismatch {
        what: String,
        expected: String,
        found: String,
    },

    #[error("missing file {0}")]
    MissingFile(PathBuf),

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("plot error: {0}")]
    Plot(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        let path = path.into();
        if source.kind() == std::io::ErrorKind::NotFound {
            Error::MissingFile(path)
        } else {
            Error::Io { path, source }
        }
    }

    /// Short machine-readable tag used by the CLI on the single error line.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Config(_) => "config",
            Error::Dimension(_) => "dimension",
            Error::InvalidInput(_) => "invalid-input",
            Error::UnknownCamera(_) => "unknown-camera",
            Error::NonFinite(_) => "non-finite",
            Error::MissingGroundTruth(_) => "missing-ground-truth",
            Error::Format(_) | Error::Json(_) | Error::Csv(_) => "schema",
            Error::Version { .. } => "version",
            Error::HashMismatch { .. } => "hash-mismatch",
            Error::MissingFile(_) => "missing-file",
            Error::Io { .. } => "io",
            Error::Plot(_) => "plot",
        }
    }

    /// Process exit code for the CLI.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) => 2,
            Error::MissingFile(_) | Error::Io { .. } => 3,
            Error::Format(_)
            | Error::Json(_)
            | Error::Csv(_)
            | Error::Version { .. }
            | Error::HashMismatch { .. } => 4,
            Error::NonFinite(_) => 5,
            _ => 1,
        }
    }
}
