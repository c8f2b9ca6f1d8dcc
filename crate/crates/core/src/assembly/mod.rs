//! Quadrature, element loops and sparse linear algebra.

mod integrate;
mod krylov;
mod lu;
mod quadrature;
mod sparse;

pub use integrate::{AssemblyOutput, ElementData, Integrator, MapPoint, Trial};
pub use krylov::{default_eps, matfree_apply, solve_krylov, GMRES_RESTART};
pub use lu::{rcm_order, solve_sparse, SolveMode, SparseLu};
pub use quadrature::{gauss_rule, QuadratureRule};
pub use sparse::{CsrMatrix, PatternBuilder};
