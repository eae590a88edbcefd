use std::path::{Path, PathBuf};

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error(transparent)]
    Core(#[from] xdomain_core::Error),
    #[error("ingestion error in {path}: {message}")]
    Ingest { path: PathBuf, message: String },
    #[error("config error at `{key}`: {message}")]
    Config { key: String, message: String },
    #[error("checkpoint error in {path}: {message}")]
    Checkpoint { path: PathBuf, message: String },
    #[error("io error on {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("usage: {0}")]
    Usage(String),
}

impl Error {
    pub fn ingest(path: &Path, message: impl Into<String>) -> Self {
        Error::Ingest { path: path.to_path_buf(), message: message.into() }
    }

    pub fn config(key: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config { key: key.into(), message: message.into() }
    }

    pub fn checkpoint(path: &Path, message: impl Into<String>) -> Self {
        Error::Checkpoint { path: path.to_path_buf(), message: message.into() }
    }

    pub fn io(path: &Path, source: std::io::Error) -> Self {
        Error::Io { path: path.to_path_buf(), source }
    }

    pub fn domain(message: impl Into<String>) -> Self {
        Error::Core(xdomain_core::Error::Domain(message.into()))
    }

    /// Process exit status: 2 for invocation mistakes, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Usage(_) | Error::Config { .. } => 2,
            Error::Io { source, .. } if source.kind() == std::io::ErrorKind::NotFound => 2,
            _ => 1,
        }
    }
}
