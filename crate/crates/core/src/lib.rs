//! Symmetric tridiagonal eigensolver based on multiple relatively robust
//! representations (MRRR).
//!
//! The solver computes selected eigenpairs of a real symmetric tridiagonal
//! matrix in `O(kn)` operations without Gram-Schmidt orthogonalization.
//! Eigenvalues are located by Sturm-count bisection on bidiagonal
//! factorizations, eigenvectors are extracted from twisted factorizations,
//! and clusters of close eigenvalues are broken up by shifting the spectrum
//! and recursing on new relatively robust representations.
//!
//! The work is organized as a dynamic task graph (singleton, cluster and
//! refinement tasks) executed by a small worker pool, so the same code path
//! serves both sequential and multi-threaded runs. Two precision profiles
//! are provided: a plain double-precision profile and a single/double mixed
//! profile that carries out all arithmetic in double precision but delivers
//! single-precision output with tighter (relative to the output format)
//! accuracy, higher robustness, and less clustering.
//!
//! Entry points:
//! - [`driver::solve`] / [`driver::solve_values`] — the solver itself,
//! - [`testmat::generate`] — the standard test-matrix families,
//! - [`metrics`] — residual/orthogonality/robustness measurement and a dense
//!   Jacobi oracle for cross-checking,
//! - the `mrrr` binary — a CLI wrapping generation, solving, verification
//!   and accuracy sweeps.

pub mod counter;
pub mod driver;
mod error;
pub mod io;
pub mod metrics;
pub mod profile;
pub mod qd;
pub mod rrr;
pub mod sturm;
pub mod testmat;
pub mod tridiag;
pub mod vector;

pub use driver::{solve, solve_values, EigenSystem, Selection};
pub use error::Error;
pub use profile::Profile;
pub use tridiag::{Interval, SolverConfig, Tridiagonal};

/// Unit roundoff of the working format (binary64, round to nearest).
pub const EPS_WORK: f64 = 1.1102230246251565e-16; // 2^-53

/// Unit roundoff of binary32, the output format of the mixed profile.
pub const EPS_SINGLE: f64 = 5.960464477539063e-8; // 2^-24

/// Underflow threshold of the working format (smallest positive normal).
pub const UNDERFLOW: f64 = f64::MIN_POSITIVE;

/// Absolute stopping tolerance for bisection, fixed to twice the underflow
/// threshold so that relative accuracy governs everywhere except at zero.
pub const BISECT_ATOL: f64 = 2.0 * f64::MIN_POSITIVE;
