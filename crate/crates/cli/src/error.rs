use std::fmt;

/// Failures reported by the driver. Validation problems exit with 1, runtime
/// failures with 2.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Validation(String),

    #[error("{context}: {source}")]
    Runtime {
        context: String,
        #[source]
        source: dualfuse::Error,
    },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Validation(_) => 1,
            CliError::Runtime { .. } => 2,
        }
    }

    pub fn invalid(msg: impl fmt::Display) -> Self {
        CliError::Validation(msg.to_string())
    }
}

pub type CliResult<T> = Result<T, CliError>;

/// Attaches a description of the failing stage to library errors.
pub trait Context<T> {
    fn context(self, what: impl FnOnce() -> String) -> CliResult<T>;
}

impl<T> Context<T> for dualfuse::Result<T> {
    fn context(self, what: impl FnOnce() -> String) -> CliResult<T> {
        self.map_err(|source| CliError::Runtime {
            context: what(),
            source,
        })
    }
}

impl<T> Context<T> for std::io::Result<T> {
    fn context(self, what: impl FnOnce() -> String) -> CliResult<T> {
        self.map_err(|e| CliError::Runtime {
            context: what(),
            source: e.into(),
        })
    }
}
