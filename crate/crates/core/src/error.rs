//! Crate-wide error type.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParam(String),

    #[error("domain error: {0}")]
    Domain(String),

    /// A state excluded from the phase space (stopped particle, zero
    /// horizontal velocity on a wall, tangential disk approach).
    #[error("excluded state: {0}")]
    ExcludedState(String),

    /// Internal geometric or dynamical invariant failed; aborting is the
    /// only safe option for an exact event-driven scheme.
    #[error("invariant violation: {0}")]
    InvariantViolation(String),

    /// Event-count safety cap exceeded before the stop condition fired.
    #[error("runaway trajectory: exceeded {0} events")]
    Runaway(u64),

    #[error("quadrature did not converge: {0}")]
    QuadratureNonConvergence(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}
