use thiserror::Error;

use crate::algorithms::IterationRecord;

/// Failure reported by an oracle implementation.
#[derive(Debug, Clone, Error, PartialEq)]
#[error("{message}{}", raw_response.as_ref().map(|r| format!(" (raw response: {r:?})")).unwrap_or_default())]
pub struct OracleError {
    pub message: String,
    /// Verbatim response from an external oracle, when one was received.
    pub raw_response: Option<String>,
}

impl OracleError {
    pub fn new(message: impl Into<String>) -> Self {
        Self { message: message.into(), raw_response: None }
    }

    pub fn with_response(message: impl Into<String>, raw: impl Into<String>) -> Self {
        Self { message: message.into(), raw_response: Some(raw.into()) }
    }
}

/// LIBSVM parse failure located at a 1-based line and column.
#[derive(Debug, Clone, Error, PartialEq, Eq)]
#[error("line {line}, column {column}: {message}")]
pub struct ParseError {
    pub line: usize,
    pub column: usize,
    pub message: String,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("oracle failure: {0}")]
    Oracle(#[from] OracleError),

    /// A run produced a nonfinite iterate. `trace` holds every record
    /// completed before the failure.
    #[error("iterate became nonfinite at iteration {iteration}")]
    Divergence { iteration: usize, trace: Vec<IterationRecord> },

    /// The oracle failed mid-run. `trace` holds every record completed
    /// before the failure.
    #[error("oracle failure at iteration {iteration}: {source}")]
    RunOracle { iteration: usize, source: OracleError, trace: Vec<IterationRecord> },

    #[error("parse error: {0}")]
    Parse(#[from] ParseError),

    #[error("fixture domain: {0}")]
    FixtureDomain(String),

    #[error("index {index} out of range for {len} rows")]
    IndexOutOfRange { index: usize, len: usize },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn param(msg: impl Into<String>) -> Self {
        Error::Parameter(msg.into())
    }

    /// Records completed before a run aborted, if this error came from a run.
    pub fn partial_trace(&self) -> Option<&[IterationRecord]> {
        match self {
            Error::Divergence { trace, .. } | Error::RunOracle { trace, .. } => Some(trace),
            _ => None,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
