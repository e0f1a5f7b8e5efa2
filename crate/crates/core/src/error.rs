use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid fault: {0}")]
    InvalidFault(String),

    #[error("invalid glitch parameters: {0}")]
    InvalidGlitch(String),

    #[error("point ({x_um}, {y_um}) um lies outside the package")]
    OutsidePackage { x_um: f64, y_um: f64 },

    #[error("config {path}: {message}")]
    Config { path: PathBuf, message: String },

    #[error("{path}: line {line}: {message}")]
    Record {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
