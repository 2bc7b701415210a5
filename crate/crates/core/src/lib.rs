//! Verification laboratory for the long-range random field Ising model.
//!
//! The crate turns the contour and coarse-graining machinery of the Peierls
//! argument for the long-range model with a random field into executable
//! algorithms, together with checkers for every inequality they rely on.
//!
//! * [`lattice`]: sites, regions, dyadic cubes, boundaries, volumes.
//! * [`model`]: couplings, energies, exact enumeration, Metropolis sampling, fields.
//! * [`contour`]: incorrect points, multiscale partitions, labels, erasure, enumeration.
//! * [`coarse`]: admissible cubes, discrete-geometry lemmas, approximation bounds.
//! * [`entropy`]: named constants, subordinated collections, counting checks.
//! * [`disorder`]: field-flip free energies, concentration, bad events, lattice animals.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod coarse;
pub mod contour;
pub mod disorder;
pub mod entropy;
pub mod lattice;
pub mod model;
pub mod rng;
pub mod zeta;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("empty region")]
    EmptyRegion,
    #[error("invalid parameter: {0}")]
    Param(String),
    #[error("region mismatch: {0}")]
    RegionMismatch(String),
    #[error("exact enumeration cap exceeded: {size} spins > cap {cap}; use Monte Carlo")]
    ExactCap { size: usize, cap: usize },
    #[error("size cap exceeded: {0}")]
    Cap(String),
    #[error("lattice sum did not reach tolerance: achieved bound {0:e}")]
    Tolerance(f64),
    #[error("not a valid contour of σ: {0}")]
    InvalidContour(String),
    #[error("hypothesis not met: {0}")]
    Hypothesis(String),
    #[error("undefined constant: {0}")]
    Undefined(String),
    #[error("parse error: {0}")]
    Parse(String),
}

pub type Result<T> = std::result::Result<T, Error>;
