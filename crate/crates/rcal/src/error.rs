use std::path::PathBuf;

/// Process exit codes.
pub mod exit {
    pub const OK: i32 = 0;
    pub const USAGE: i32 = 2;
    pub const DATA: i32 = 3;
    pub const NUMERICAL: i32 = 4;
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),

    #[error("{path}: line {line}, column `{column}`: {message}")]
    Data { path: PathBuf, line: u64, column: String, message: String },

    #[error("{path}: {message}")]
    Format { path: PathBuf, message: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    /// A requested verification step did not meet its threshold.
    #[error("{0}")]
    Check(String),

    #[error("{context}: {source}")]
    Core {
        context: String,
        #[source]
        source: rcal_core::Error,
    },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => exit::USAGE,
            CliError::Check(_) => exit::NUMERICAL,
            CliError::Core { source, .. } if source.is_numerical() => exit::NUMERICAL,
            CliError::Data { .. } | CliError::Format { .. } | CliError::Io { .. } | CliError::Core { .. } => exit::DATA,
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io { path: path.into(), source }
    }

    pub fn format(path: impl Into<PathBuf>, message: impl Into<String>) -> Self {
        CliError::Format { path: path.into(), message: message.into() }
    }
}

/// Attaches a description of the failing step to core errors.
pub trait Context<T> {
    fn context(self, what: impl Into<String>) -> Result<T, CliError>;
}

impl<T> Context<T> for Result<T, rcal_core::Error> {
    fn context(self, what: impl Into<String>) -> Result<T, CliError> {
        self.map_err(|source| CliError::Core { context: what.into(), source })
    }
}

pub type Result<T, E = CliError> = std::result::Result<T, E>;
