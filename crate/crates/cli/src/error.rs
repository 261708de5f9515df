use std::io;
use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{}: {source}", path.display())]
    InFile {
        path: PathBuf,
        #[source]
        source: seqformer::Error,
    },
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("{}: invalid JSON: {source}", path.display())]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
    #[error("config and cache disagree: {0}")]
    Mismatch(String),
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Core(#[from] seqformer::Error),
}

pub type CliResult<T> = std::result::Result<T, CliError>;

pub(crate) trait InFile<T> {
    fn in_file(self, path: &std::path::Path) -> CliResult<T>;
}

impl<T> InFile<T> for seqformer::Result<T> {
    fn in_file(self, path: &std::path::Path) -> CliResult<T> {
        self.map_err(|source| CliError::InFile { path: path.to_path_buf(), source })
    }
}

impl<T> InFile<T> for io::Result<T> {
    fn in_file(self, path: &std::path::Path) -> CliResult<T> {
        self.map_err(|source| CliError::Io { path: path.to_path_buf(), source })
    }
}

impl<T> InFile<T> for serde_json::Result<T> {
    fn in_file(self, path: &std::path::Path) -> CliResult<T> {
        self.map_err(|source| CliError::Json { path: path.to_path_buf(), source })
    }
}
