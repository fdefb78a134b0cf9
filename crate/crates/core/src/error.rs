//! Crate-wide error type. Input problems are rejected eagerly at
//! construction; downstream routines may additionally refuse instances whose
//! structure makes a requested operation meaningless (singular P for
//! enumeration, q outside range(P) for any lower bound).

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("matrix must be square, got {rows}x{cols}")]
    NotSquare { rows: usize, cols: usize },

    #[error("matrix is not symmetric: relative asymmetry {asymmetry:.3e} exceeds 1e-12")]
    NotSymmetric { asymmetry: f64 },

    #[error("matrix is not positive semidefinite: min eigenvalue {min_eig:.3e} below tolerance {tol:.3e}")]
    NotPsd { min_eig: f64, tol: f64 },

    #[error("problem data contains non-finite entries")]
    NonFinite,

    #[error("P must be nonzero")]
    ZeroMatrix,

    #[error("problem is unbounded below: q has a component outside the range of P")]
    Unbounded,

    #[error("P must be positive definite here: min eigenvalue {min_eig:.3e}")]
    SingularP { min_eig: f64 },

    #[error("enumeration box holds about {points:.3e} points, over the {limit} limit")]
    BoxTooLarge { points: f64, limit: u64 },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("malformed instance data: {0}")]
    Malformed(String),

    #[error("internal invariant violated: {0}")]
    Invariant(String),
}
