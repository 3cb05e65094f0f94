use std::path::{Path, PathBuf};

/// Failures of the std layer. Each variant maps to a process exit code.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// Bad invocation or configuration (exit code 1).
    #[error("usage: {0}")]
    Usage(String),
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    /// A file that exists but is structurally invalid.
    #[error("{}: {location}: {message}", path.display())]
    Format { path: PathBuf, location: String, message: String },
    #[error(transparent)]
    Core(#[from] deflearn_core::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        Self::Io { path: path.to_path_buf(), source }
    }

    pub fn format(path: &Path, location: impl Into<String>, message: impl ToString) -> Self {
        Self::Format { path: path.to_path_buf(), location: location.into(), message: message.to_string() }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Usage(_) => 1,
            _ => 2,
        }
    }
}
