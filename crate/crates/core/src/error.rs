//! Error type shared by all simulator modules.

use thiserror::Error;

/// Failure modes of simulator operations.
#[derive(Debug, Error)]
pub enum SimError {
    /// A mode or matrix dimension is out of range (e.g. Fock dim < 2).
    #[error("invalid dimension: {0}")]
    InvalidDimension(String),
    /// Operator/state space signatures do not match.
    #[error("signature mismatch: {0}")]
    SignatureMismatch(String),
    /// A tagged operator property (hermitian/unitary/diagonal) does not hold.
    #[error("property violation: {0}")]
    PropertyViolation(String),
    /// Truncated-basis budget exceeded (tail mass above tolerance).
    #[error("truncation: {0}")]
    Truncation(String),
    /// Numerical failure (eigendecomposition, lost precision).
    #[error("numerical: {0}")]
    Numerical(String),
    /// An operation produced a (near-)zero vector where a state was required.
    #[error("zero vector: {0}")]
    ZeroVector(String),
    /// A precondition on arguments failed.
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    /// Every branch of a measurement fell below the probability floor.
    #[error("no outcome: {0}")]
    NoOutcome(String),
}

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, SimError>;
