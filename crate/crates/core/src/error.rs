//! Crate-wide error type.

use thiserror::Error;

/// Errors produced anywhere in the toolkit.
#[derive(Debug, Error)]
pub enum Error {
    /// Syntax error while parsing an expression; `offset` is the byte
    /// position in the expression source.
    #[error("syntax error at byte {offset}: {message}")]
    Parse { message: String, offset: usize },

    /// Domain error while evaluating an expression (log of a non-positive
    /// value, division by zero, ...); `offset` locates the offending node.
    #[error("evaluation error at byte {offset}: {message}")]
    Eval { message: String, offset: usize },

    /// Malformed or inconsistent system-definition file.
    #[error("system definition error: {0}")]
    System(String),

    /// Vector/matrix dimensions disagree.
    #[error("dimension mismatch in {context}: expected {expected}, got {got}")]
    Dimension {
        context: String,
        expected: usize,
        got: usize,
    },

    /// Step budget exhausted or the step size underflowed. Solutions are
    /// assumed forward complete, so this must surface instead of being
    /// silently truncated.
    #[error(
        "integration failed at t = {t}: {reason} (probable finite-time blowup or step-control failure)"
    )]
    Integration { t: f64, reason: String },

    /// Invalid integrator or algorithm configuration.
    #[error("invalid configuration: {0}")]
    Config(String),

    /// Metric is unusable at a point (non-positive entry, bad matrix).
    #[error("metric error: {0}")]
    Metric(String),

    /// The exact Lie-derivative value and its finite-difference cross-check
    /// disagree beyond the diagnostic tolerance.
    #[error("Lie-derivative cross-check failed: exact {exact}, finite-difference {fd}")]
    CrossCheck { exact: f64, fd: f64 },

    /// A documented precondition of an operation was violated.
    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
