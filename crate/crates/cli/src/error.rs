use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Core(#[from] tsbias::Error),

    #[error("{0}")]
    Usage(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },

    #[error("{}: {msg}", path.display())]
    Format { path: PathBuf, msg: String },
}

impl Error {
    /// 1 for bad parameters or configuration, 2 for filesystem and file-format failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Core(e) if e.is_io_or_format() => 2,
            Error::Io { .. } | Error::Format { .. } => 2,
            _ => 1,
        }
    }

    /// Attaches a path to core I/O and parse errors.
    pub fn at(path: &std::path::Path, e: tsbias::Error) -> Self {
        match e {
            tsbias::Error::Io(source) => Error::Io { path: path.to_path_buf(), source },
            e if e.is_io_or_format() => Error::Format { path: path.to_path_buf(), msg: e.to_string() },
            e => Error::Core(e),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;

pub fn usage(msg: impl Into<String>) -> Error {
    Error::Usage(msg.into())
}
