use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    /// A dataset file could not be parsed.
    #[error("load error: {0}")]
    Load(String),

    #[error("configuration error: {0}")]
    Config(String),

    /// A caller broke an operation's precondition.
    #[error("contract violation: {0}")]
    Contract(String),

    /// The model endpoint could not be reached. Always safe to retry.
    #[error("transport error: {0}")]
    Transport(String),

    /// The model endpoint answered with something that does not fit the wire schema.
    #[error("protocol error: {0}")]
    Protocol(String),

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

    pub fn is_retryable(&self) -> bool {
        matches!(self, Error::Transport(_))
    }

    /// Process exit code used by the CLI: 3 for transport failures, 2 for everything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Transport(_) => 3,
            _ => 2,
        }
    }
}
