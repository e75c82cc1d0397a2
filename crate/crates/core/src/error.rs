use thiserror::Error;

use crate::polycore::TupleDegree;

/// Everything that can go wrong inside the library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("degree {actual} exceeds bound {bound}")]
    DegreeOverflow {
        actual: TupleDegree,
        bound: TupleDegree,
    },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("matrix is not square ({rows}x{cols})")]
    NonSquare { rows: usize, cols: usize },

    #[error("invalid structure operation: {0}")]
    InvalidStructureOp(String),

    #[error("structure degrees differ: {0} vs {1}")]
    DegreeMismatch(TupleDegree, TupleDegree),

    #[error("structure enumeration guard exceeded: <m> = {dim} > {limit}")]
    EnumerationGuard { dim: usize, limit: usize },

    #[error("no candidate structure lies within tolerance {0:e}")]
    NoCandidate(f64),

    #[error("squarefree sweep inconsistent after {attempts} directions")]
    SweepInconsistent { attempts: usize },

    #[error("root cluster collision: separation {separation:e} below {threshold:e}")]
    ClusterCollision { separation: f64, threshold: f64 },

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("factor recovery degenerate: {0}")]
    FactorRecovery(String),

    #[error("unsupported number of variables ({0}) without a structure hint")]
    UnsupportedArity(usize),

    #[error("structure detection failed: {0}")]
    DetectionFailed(String),

    #[error("Gauss-Newton iteration diverged (residual {from:e} -> {to:e})")]
    Diverged { from: f64, to: f64 },

    #[error("no factorization structure certifies within {0:e}")]
    NothingCertifies(f64),
}

pub type Result<T> = std::result::Result<T, Error>;
