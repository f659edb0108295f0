use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid sensor intrinsics: {0}")]
    Intrinsics(String),

    #[error("invalid grid: {0}")]
    Grid(String),

    #[error("invalid pose: {0}")]
    Pose(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("invalid scene: {0}")]
    Scene(String),

    #[error("lattice mismatch: {0}")]
    Lattice(String),

    #[error("{path}: {message}")]
    Format { path: PathBuf, message: String },

    #[error("scan {index}: {source}")]
    Scan {
        index: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("{0}")]
    Eval(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn format(path: impl Into<PathBuf>, message: impl Into<String>) -> Self {
        Error::Format {
            path: path.into(),
            message: message.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
