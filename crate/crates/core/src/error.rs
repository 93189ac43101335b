use thiserror::Error;

/// Failure categories surfaced by the simulator.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter `{key}`: {reason}")]
    Parameter { key: &'static str, reason: String },
    #[error("contract violation: {0}")]
    Contract(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("degenerate input: {0}")]
    Degenerate(String),
    #[error("scheme `{0}` is not implemented")]
    NotImplemented(String),
    #[error("solver aborted at iteration {iteration}: {source}")]
    Solver {
        iteration: usize,
        #[source]
        source: Box<Error>,
    },
    #[error("serialization failure: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Coarse error class, used by the CLI to pick an exit status.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Category {
    Parameter,
    Numerical,
    Io,
}

impl Error {
    pub fn parameter(key: &'static str, reason: impl Into<String>) -> Self {
        Error::Parameter {
            key,
            reason: reason.into(),
        }
    }

    pub fn category(&self) -> Category {
        match self {
            Error::Parameter { .. } | Error::NotImplemented(_) => Category::Parameter,
            Error::Contract(_) | Error::Numerical(_) | Error::Degenerate(_) => Category::Numerical,
            Error::Solver { source, .. } => source.category(),
            Error::Format(_) | Error::Io(_) => Category::Io,
        }
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Format(e.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Format(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
