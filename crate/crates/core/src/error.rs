use std::io;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// A caller broke a documented precondition (rank mismatch, empty set, ...).
    #[error("contract violation: {0}")]
    Contract(String),

    /// An update produced a non-finite coordinate entry.
    #[error("update overflowed at learning rate {eta}; the learning rate is too large")]
    Overflow { eta: f64 },

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("matrix is incomplete ({missing} off-diagonal entries unmeasured); extract a complete submatrix first")]
    Incomplete { missing: usize },

    #[error("SVD did not converge within {iterations} iterations")]
    SvdNoConvergence { iterations: usize },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] io::Error),
}

impl Error {
    pub(crate) fn contract(msg: impl Into<String>) -> Self {
        Error::Contract(msg.into())
    }

    pub(crate) fn parse(line: usize, msg: impl Into<String>) -> Self {
        Error::Parse {
            line,
            message: msg.into(),
        }
    }

    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }
}
