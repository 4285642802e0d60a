use std::path::PathBuf;

use cxr_core::Error as CoreError;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error(transparent)]
    Core(#[from] CoreError),
    #[error("dataset layout: {0}")]
    Layout(String),
    #[error("cannot decode image {path}: {message}")]
    Decode { path: PathBuf, message: String },
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("checkpoint format error at byte {offset}: {message}")]
    Format { offset: usize, message: String },
    #[error("schema: {0}")]
    Schema(String),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("I/O: {0}")]
    Write(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Process exit codes of the command line.
pub mod exit {
    pub const OK: i32 = 0;
    /// Dataset layout, missing inputs or invalid configuration.
    pub const LAYOUT: i32 = 2;
    /// Degenerate or malformed data.
    pub const DATA: i32 = 3;
    pub const DIVERGENCE: i32 = 4;
    /// Report/checkpoint schema mismatch and internal contract failures.
    pub const SCHEMA: i32 = 5;
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Layout(_) | Error::Io { .. } => exit::LAYOUT,
            Error::Core(e) => match e {
                CoreError::Config(_) => exit::LAYOUT,
                CoreError::Divergence(_) => exit::DIVERGENCE,
                CoreError::Data(_) | CoreError::Label(_) | CoreError::DegenerateLabels(_) | CoreError::DegenerateBatch(_) => {
                    exit::DATA
                }
                CoreError::Dimension(_) | CoreError::Contract(_) => exit::SCHEMA,
            },
            Error::Decode { .. } => exit::DATA,
            Error::Format { .. } | Error::Schema(_) | Error::Csv(_) | Error::Json(_) => exit::SCHEMA,
            Error::Write(_) => exit::DATA,
        }
    }
}
