use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("edge log for snapshot {0} does not exist")]
    MissingSnapshot(u64),

    #[error("malformed data in {context}: {message}")]
    Malformed { context: String, message: String },

    #[error("schema mismatch: expected {expected}, got {got}")]
    SchemaMismatch { expected: String, got: String },

    #[error("walk corpus is empty")]
    EmptyCorpus,

    #[error("labels contain a single class; soft scores are undefined")]
    SingleClass,

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn malformed(context: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Malformed {
            context: context.into(),
            message: message.into(),
        }
    }

    /// Errors caused by bad arguments or configuration rather than bad data.
    pub fn is_config_error(&self) -> bool {
        matches!(self, Error::InvalidArgument(_))
    }
}
