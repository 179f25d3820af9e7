use thiserror::Error;

/// Errors produced by generators, probes, metrics and codecs.
#[derive(Debug, Error)]
pub enum Error {
    #[error("validation error: {0}")]
    Validation(String),

    #[error("integration produced a non-finite state at step {step}")]
    Integration { step: usize },

    #[error("R² undefined: {0}")]
    UndefinedScore(String),

    #[error("degenerate scale: {0}")]
    DegenerateScale(String),

    #[error("join error: missing forecasts for {missing:?}")]
    Join { missing: Vec<String> },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("cannot serialize record {id}: {msg}")]
    Serialize { id: String, msg: String },

    #[error("format error: {0}")]
    Format(String),

    #[error("linear algebra failure: {0}")]
    LinAlg(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn validation(msg: impl Into<String>) -> Self {
        Error::Validation(msg.into())
    }

    /// True for errors caused by malformed input files or the filesystem,
    /// as opposed to invalid parameters.
    pub fn is_io_or_format(&self) -> bool {
        matches!(
            self,
            Error::Io(_) | Error::Format(_) | Error::Parse { .. } | Error::Serialize { .. }
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<()> {
    if cond {
        Ok(())
    } else {
        Err(Error::Validation(msg()))
    }
}

pub(crate) fn ensure_finite(name: &str, x: f64) -> Result<()> {
    ensure(x.is_finite(), || format!("{name} must be finite, got {x}"))
}
