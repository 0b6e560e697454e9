use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("line {line}, column `{column}`: {message}")]
    Cell {
        line: u64,
        column: String,
        message: String,
    },

    #[error("line {line}: {message}")]
    Line { line: u64, message: String },

    #[error("{0}")]
    Input(String),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Core(#[from] dsm_core::Error),

    #[error("every requested method failed")]
    AllFailed,
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            Self::AllFailed => 2,
            _ => 1,
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Self::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T, E = CliError> = std::result::Result<T, E>;
