//! Shared error type for all depth-estimation operations.

use thiserror::Error;

/// Errors produced by geometry, solvers, generation, network, and I/O code.
#[derive(Debug, Error)]
pub enum OdmdError {
    /// An input violated a mathematical-domain precondition (e.g. projecting
    /// a point at non-positive depth, percent error of a non-positive truth).
    #[error("domain error: {0}")]
    Domain(String),

    /// The observation geometry carries no usable depth signal. `condition`
    /// is the solver-specific diagnostic that triggered the rejection
    /// (condition number, expansion/parallax denominator, movement range).
    #[error("degenerate geometry: {reason} (diagnostic {condition:e})")]
    DegenerateGeometry { reason: String, condition: f64 },

    /// A generation or training configuration is invalid or infeasible.
    #[error("config error: {0}")]
    Config(String),

    /// Mismatched shapes or incompatible artifacts (checkpoint vs dataset).
    #[error("contract violation: {0}")]
    Contract(String),

    /// Bad caller-provided data (empty mask, no detections at all).
    #[error("input error: {0}")]
    Input(String),

    /// A file failed to parse. `line` is 1-based for line-delimited formats,
    /// 0 when it does not apply.
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    /// Magic or schema version of a serialized artifact does not match.
    #[error("version mismatch: expected {expected}, found {found}")]
    Version { expected: String, found: String },

    /// Training produced a non-finite loss.
    #[error("non-finite loss at iteration {iteration}")]
    NonFinite { iteration: u64 },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl OdmdError {
    pub fn domain(msg: impl Into<String>) -> Self {
        OdmdError::Domain(msg.into())
    }

    pub fn degenerate(reason: impl Into<String>, condition: f64) -> Self {
        OdmdError::DegenerateGeometry {
            reason: reason.into(),
            condition,
        }
    }

    pub fn config(msg: impl Into<String>) -> Self {
        OdmdError::Config(msg.into())
    }

    pub fn contract(msg: impl Into<String>) -> Self {
        OdmdError::Contract(msg.into())
    }

    pub fn input(msg: impl Into<String>) -> Self {
        OdmdError::Input(msg.into())
    }

    pub fn parse(line: usize, message: impl Into<String>) -> Self {
        OdmdError::Parse {
            line,
            message: message.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, OdmdError>;
