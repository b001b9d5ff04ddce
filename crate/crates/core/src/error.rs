use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// A parameter violates the invariants of its owning type.
    #[error("invalid parameter: {0}")]
    InvalidParam(String),

    /// A value lies outside the domain of an operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// A record in an input file does not match its schema.
    #[error("{path}:{line}: {message}")]
    Schema {
        path: String,
        line: usize,
        message: String,
    },

    /// Input data is well-formed but cannot be used (missing frames, one class, ...).
    #[error("data error: {0}")]
    Data(String),

    #[error("unknown player {0}")]
    UnknownPlayer(u32),

    #[error("model error: {0}")]
    Model(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("internal error: {0}")]
    Internal(String),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code used by the CLI: 1 usage, 2 data, 3 internal.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::InvalidParam(_) | Error::Config(_) => 1,
            Error::Domain(_)
            | Error::Schema { .. }
            | Error::Data(_)
            | Error::UnknownPlayer(_)
            | Error::Model(_)
            | Error::Io { .. }
            | Error::Csv(_)
            | Error::Json(_) => 2,
            Error::Internal(_) => 3,
        }
    }
}
