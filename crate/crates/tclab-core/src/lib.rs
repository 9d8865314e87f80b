//! Numerical laboratory for the linearized dynamics of rotating shear flows
//! on truncated radial domains.
//!
//! The crate provides four layers:
//!
//! * low-level numerics: uniform Dirichlet grids, complex grid functions,
//!   weighted norms, tridiagonal solves and weighted smallest singular values
//!   ([`grid`], [`tridiag`], [`eig`], [`dense`], [`svd`]);
//! * operator assembly and spectral probes: the Taylor-Couette and Couette
//!   mode operators, resolvent solves, pseudospectral-bound scans and
//!   sharpness witnesses ([`operators`], [`resolvent`]);
//! * time evolution: Crank-Nicolson stepping with space-time norm traces,
//!   weighted decay audits and the conjugated auxiliary flow
//!   ([`evolution`]);
//! * analytic gadgets and counterexamples: dyadic partition of unity, cutoff
//!   and inequality audits, and the divergent weighted-quotient sequences
//!   built from boundary-driven local solves and heat kernels
//!   ([`toolkit`], [`counterexample`]).
//!
//! All operations are deterministic: randomized audits take explicit seeds
//! and draw from a fixed-stream generator.

pub mod checks;
pub mod counterexample;
pub mod dense;
pub mod eig;
pub mod error;
pub mod evolution;
pub mod grid;
pub mod operators;
pub mod profiles;
pub mod resolvent;
pub mod svd;
pub mod toolkit;
pub mod tridiag;

pub use error::CoreError;
pub use grid::{build_grid, inner_product, weighted_norm, Grid, GridFunction, WeightSpec};
pub use operators::{OperatorKind, PhysParams};
pub use tridiag::TridiagonalOperator;

/// Complex scalar used throughout.
pub type C64 = num_complex::Complex64;
