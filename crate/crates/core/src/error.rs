//! Crate-wide error type.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// A caller-supplied parameter is outside its documented range.
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    /// An element mapping has (numerically) zero volume.
    #[error("degenerate element {element}: |det J| = {volume:.3e}")]
    DegenerateElement { element: usize, volume: f64 },

    /// The sparse factorization hit a numerically singular pivot.
    #[error("numerically singular pivot{}", match .index {
        Some(i) => format!(" at index {i}"),
        None => String::new(),
    })]
    SingularPivot { index: Option<usize> },

    /// The eigensolver did not reach the requested tolerance.
    #[error("eigensolver converged {converged}/{requested} pairs after {restarts} restarts")]
    NonConvergence {
        converged: usize,
        requested: usize,
        restarts: usize,
    },

    /// Primal and adjoint solves returned incompatible eigenvalue sets.
    #[error("adjoint pairing failed: {0}")]
    AdjointMismatch(String),

    /// A configuration file could not be parsed or is inconsistent.
    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
