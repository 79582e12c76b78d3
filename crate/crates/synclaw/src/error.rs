use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// Syntax or validation problem in a config file, anchored at a line
    /// (1-based; 0 when the problem is not tied to one line).
    #[error("line {line}: {message}")]
    Config { line: usize, message: String },

    #[error(transparent)]
    Core(#[from] synclaw_core::Error),

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("invalid manifest: {0}")]
    Manifest(String),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error("cannot build a pool of {workers} workers: {message}")]
    Pool { workers: usize, message: String },
}

impl Error {
    pub(crate) fn config(line: usize, message: impl Into<String>) -> Self {
        Self::Config {
            line,
            message: message.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Self::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
