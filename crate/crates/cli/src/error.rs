use std::path::PathBuf;

use crate::config::ConfigError;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigError),

    #[error("{context}: {source}")]
    Solver {
        context: String,
        #[source]
        source: exkry_core::Error,
    },

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{}: {source}", path.display())]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },

    #[error("{0}")]
    Threads(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            _ => 1,
        }
    }
}

/// Attaches run context to solver errors.
pub trait Context<T> {
    fn context(self, f: impl FnOnce() -> String) -> Result<T, CliError>;
}

impl<T> Context<T> for exkry_core::Result<T> {
    fn context(self, f: impl FnOnce() -> String) -> Result<T, CliError> {
        self.map_err(|source| CliError::Solver { context: f(), source })
    }
}
