//! Numerical core for isogeometric shape optimization with PDE-based domain
//! parameterization.
//!
//! The crate is `no_std` (it only needs `alloc`) and contains everything that
//! is pure computation:
//!
//! * [`spline`]: knot vectors, truncated hierarchical B-spline (THB) spaces,
//!   evaluation up to third derivatives, local refinement and prolongation.
//! * [`assembly`]: Gauss quadrature, element loops, sparse matrices with
//!   direct and Krylov solvers.
//! * [`egg`]: elliptic grid generation. Boundary projection, Newton solve,
//!   fold detection and repair, and the derivative blocks used by the adjoint.
//! * [`problems`]: the validation Poisson problem and the cooling-element
//!   problem as [`problems::StateProblem`] plugins.
//! * [`adjoint`]: design gradients of the objective and of all constraints.
//! * [`optimizer`]: design evaluation with variable basis selection, the
//!   warm-start database and an SQP driver.
//!
//! File formats, configuration and the command line live in the companion
//! `shapeopt` crate.
#![no_std]
#![warn(missing_debug_implementations)]
// With `std` linked for tests, inherent float methods shadow `math::Float`.
#![cfg_attr(test, allow(unused_imports))]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod adjoint;
pub mod assembly;
pub mod dual;
pub mod egg;
mod error;
pub mod math;
pub mod optimizer;
pub mod problems;
pub mod spline;

pub use error::{Error, Result};
