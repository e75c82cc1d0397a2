//! Numerical factorization of univariate and multivariate polynomials whose
//! coefficients carry empirical perturbations.
//!
//! Given `f` and a backward tolerance `eps`, the library finds the factorization
//! structure of highest codimension that some polynomial within `eps` of `f`
//! admits, then refines the factors by Gauss-Newton iteration to the nearest
//! polynomial with that structure.

pub mod cli;
pub mod error;
pub mod kernels;
pub mod numgcd;
pub mod pipeline;
pub mod polycore;
pub mod refine;
pub mod split;
pub mod squarefree;
pub mod structure;

pub use error::{Error, Result};
pub use num_complex::Complex64 as C64;
pub use polycore::{CoeffVector, Factorization, MultiPoly, TupleDegree};
pub use structure::FactorStructure;
