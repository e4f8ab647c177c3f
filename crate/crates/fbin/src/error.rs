//! Shared error type for the toolkit.
//!
//! Errors split into four families that the CLI maps onto distinct exit
//! codes: configuration errors (bad parameters), data errors (empty or
//! malformed inputs), non-convergence of iterative solvers, and I/O or
//! format failures when reading and writing artifact files.

use thiserror::Error;

/// All failure modes surfaced by the library.
#[derive(Debug, Error)]
pub enum Error {
    /// A configuration value is out of range or inconsistent.
    #[error("invalid configuration: {0}")]
    Config(String),

    /// Input data cannot support the requested computation
    /// (empty coincidence lists, all-rejected events, missing sidebands, ...).
    #[error("invalid data: {0}")]
    Data(String),

    /// An iterative solver exhausted its iteration budget.
    #[error("{what} did not converge after {iterations} iterations (residual {residual:.3e})")]
    NonConvergence {
        what: String,
        iterations: usize,
        residual: f64,
    },

    /// A projector set does not span the full two-qubit operator space.
    /// `missing` names the Pauli directions absent from the span.
    #[error("measurement set is informationally incomplete; missing operator directions: {missing:?}")]
    Incomplete { missing: Vec<String> },

    /// A matrix failed a structural requirement (Hermiticity, unit trace,
    /// positive semidefiniteness).
    #[error("invalid state matrix: {0}")]
    State(String),

    /// Underlying file-system failure.
    #[error("i/o failure: {0}")]
    Io(#[from] std::io::Error),

    /// A file's contents do not match the expected format.
    #[error("format error: {0}")]
    Format(String),
}

/// Convenience alias used across the crate.
pub type Result<T> = std::result::Result<T, Error>;
