//! Crate-wide error type.
//!
//! Variants are grouped by how a caller should react: configuration problems
//! (bad parameters before any work starts), contract violations (inputs that
//! break a documented precondition), and I/O or parse failures on external
//! files. The CLI maps each group to a distinct exit code.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// A parameter value is outside its documented domain.
    #[error("invalid parameter {name}: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    /// Calibration targets cannot be met by any parameter setting.
    #[error("calibration infeasible: {0}")]
    CalibrationInfeasible(String),

    /// An operation was handed inputs violating a precondition.
    #[error("contract violation: {0}")]
    Contract(String),

    /// Input carries no usable signal (zero variance, empty sample, ...).
    #[error("degenerate input: {0}")]
    Degenerate(String),

    /// A write trace failed validation; `event` is the zero-based index of
    /// the first offending event, or `None` for header-level problems.
    #[error("malformed trace{}: {reason}", event.map(|i| format!(" (event {i})")).unwrap_or_default())]
    MalformedTrace { event: Option<usize>, reason: String },

    /// Band-majority inference hit bands without a single strong cell.
    #[error("ambiguous bands (no strong cells): {0:?}")]
    AmbiguousBands(Vec<usize>),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("parse error in {path}: {reason}")]
    Parse { path: String, reason: String },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn invalid(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter { name, reason: reason.into() }
    }

    pub fn io(path: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    pub fn parse(path: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Parse { path: path.into(), reason: reason.into() }
    }
}
