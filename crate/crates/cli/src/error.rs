use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Config(String),

    #[error("{context}: {source}")]
    Core {
        context: String,
        #[source]
        source: hcascade_core::Error,
    },

    #[error("I/O error on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub type CliResult<T> = Result<T, CliError>;

impl CliError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.into(),
            source,
        }
    }

    /// 2 for config and validation errors, 3 for detector failures, 4 for I/O.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Io { .. } => 4,
            CliError::Core { source, .. } => {
                if source.is_detector_failure() {
                    3
                } else if matches!(source, hcascade_core::Error::Io { .. }) {
                    4
                } else {
                    2
                }
            }
        }
    }
}

pub trait Context<T> {
    fn context(self, context: impl Into<String>) -> CliResult<T>;
}

impl<T> Context<T> for hcascade_core::Result<T> {
    fn context(self, context: impl Into<String>) -> CliResult<T> {
        self.map_err(|source| CliError::Core {
            context: context.into(),
            source,
        })
    }
}
