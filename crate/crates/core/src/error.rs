use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid epidemic parameters: {0}")]
    InvalidParams(String),

    #[error("invalid compartment state: {0}")]
    InvalidState(String),

    #[error("numerical blow-up: {0}")]
    NumericalBlowup(String),

    /// A simulation error raised while computing the given (1-based) day.
    #[error("day {day}: {source}")]
    AtDay {
        day: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("{0} out of range")]
    OutOfRange(String),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("{path}:{line}: {message}")]
    Parse {
        path: String,
        line: usize,
        message: String,
    },

    #[error("empty input: {0}")]
    Empty(String),

    #[error("training diverged at episode {episode}: {message}")]
    Diverged { episode: usize, message: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn at_day(day: usize, err: Error) -> Error {
        Error::AtDay {
            day,
            source: Box::new(err),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Error {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
