//! State problems: the validation Poisson problem with Nitsche boundary
//! conditions and the cooling-element design problem.

pub mod cooling;
pub mod geometry;
pub mod kernel;
mod markers;
pub mod validation;

use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;

pub use cooling::{CoolingParams, CoolingProblem, CoolerSide, CoolingTemplate};
pub use kernel::{Discretization, KernelPoint, ScalarKernel, VectorKernel, Want, MAX_PARAMS};
pub use markers::{residual_markers, MarkerMode, Markers};
pub use validation::{validation_bump, ValidationCurve, ValidationParams, ValidationProblem, ValidationReference, VALIDATION_A};

use crate::assembly::{CsrMatrix, SolveMode, SparseLu};
use crate::egg::BoundaryCurve;
use crate::math::norm_inf;
use crate::spline::{HierarchicalSpace, SplineFunction};
use crate::{Error, Result};

/// Partial of the state residual with respect to the full geometry
/// coefficient vector: a sparse part plus rank-one terms `col * row^T`
/// coming from global functionals inside the residual.
#[derive(Debug, Clone)]
pub struct GeoOperator {
    pub sparse: CsrMatrix,
    pub low_rank: Vec<(Vec<f64>, Vec<f64>)>,
}

impl GeoOperator {
    pub fn apply(&self, v: &[f64]) -> Vec<f64> {
        let mut y = self.sparse.mul_vec(v);
        for (col, row) in &self.low_rank {
            let s: f64 = row.iter().zip(v).map(|(a, b)| a * b).sum();
            y.iter_mut().zip(col).for_each(|(yi, ci)| *yi += s * ci);
        }
        y
    }

    pub fn apply_transpose(&self, a: &[f64]) -> Vec<f64> {
        let mut y = self.sparse.mul_vec_transpose(a);
        for (col, row) in &self.low_rank {
            let s: f64 = col.iter().zip(a).map(|(x, y)| x * y).sum();
            y.iter_mut().zip(row).for_each(|(yi, ri)| *yi += s * ri);
        }
        y
    }
}

/// State residual `B(d_A, c_A, alpha)` and the requested partials.
#[derive(Debug, Clone)]
pub struct StateResidual {
    pub value: Vec<f64>,
    pub d_state: Option<CsrMatrix>,
    pub d_geo: Option<GeoOperator>,
    /// Row-major `n_state x n_alpha`; `None` also when the residual has no
    /// explicit design dependence.
    pub d_alpha: Option<Vec<f64>>,
}

impl StateResidual {
    /// `[dB/dalpha]^T a`.
    pub fn d_alpha_transpose(&self, a: &[f64], n_alpha: usize) -> Vec<f64> {
        let mut out = vec![0.0; n_alpha];
        if let Some(m) = &self.d_alpha {
            for (i, ai) in a.iter().enumerate() {
                for j in 0..n_alpha {
                    out[j] += m[i * n_alpha + j] * ai;
                }
            }
        }
        out
    }

    /// `[dB/dalpha] v`.
    pub fn d_alpha_apply(&self, v: &[f64], n_state: usize) -> Vec<f64> {
        let mut out = vec![0.0; n_state];
        if let Some(m) = &self.d_alpha {
            let na = v.len();
            for (i, o) in out.iter_mut().enumerate() {
                *o = (0..na).map(|j| m[i * na + j] * v[j]).sum();
            }
        }
        out
    }
}

/// A scalar quantity of interest (objective or constraint) and its partials.
#[derive(Debug, Clone, Default)]
pub struct Functional {
    pub value: f64,
    /// `dJ/dd_A`; empty when the functional ignores the state.
    pub d_state: Vec<f64>,
    /// `dJ/dc_A`; empty when the functional ignores the geometry.
    pub d_geo: Vec<f64>,
    pub d_alpha: Vec<f64>,
}

impl Functional {
    /// Depends on the design vector only, so no adjoint solve is needed.
    pub fn alpha_only(&self) -> bool {
        self.d_state.is_empty() && self.d_geo.is_empty()
    }
}

/// A state PDE on a parameterized domain, with objective, inequality
/// constraints (`g >= 0`) and the boundary-curve family.
pub trait StateProblem {
    fn name(&self) -> &'static str;

    fn n_params(&self) -> usize;

    /// Box bounds `(lower, upper)` of the design vector.
    fn bounds(&self) -> (Vec<f64>, Vec<f64>);

    fn curve(&self) -> &dyn BoundaryCurve;

    fn n_constraints(&self) -> usize;

    /// The residual is affine in the state.
    fn is_linear(&self) -> bool {
        true
    }

    /// Derivative order of the mapping the kernels use.
    fn geo_order(&self) -> usize;

    /// Rejects designs outside the box or for which the boundary template
    /// cannot be built.
    fn check_design(&self, alpha: &[f64]) -> Result<()> {
        let (lo, hi) = self.bounds();
        if alpha.len() != lo.len() {
            return Err(Error::DimensionMismatch { expected: lo.len(), got: alpha.len() });
        }
        for (j, a) in alpha.iter().enumerate() {
            if !(*a >= lo[j] - 1e-12 && *a <= hi[j] + 1e-12) {
                return Err(Error::OutOfBox(j));
            }
        }
        Ok(())
    }

    fn state_residual(&self, disc: &Discretization, want: Want) -> Result<StateResidual>;

    fn objective(&self, disc: &Discretization, want: Want) -> Result<Functional>;

    /// Inequality constraints `g_i >= 0`.
    fn constraints(&self, disc: &Discretization, want: Want) -> Result<Vec<Functional>>;

    /// Per-function strong-residual indicators on the state space. Problems
    /// without a usable strong form return a precondition error.
    fn strong_markers(&self, _disc: &Discretization) -> Result<Vec<f64>> {
        Err(Error::Precondition("problem has no strong residual form".into()))
    }
}

/// Converged discrete state and the factorization of `dB/dd_A` used to get
/// it.
#[derive(Debug, Clone)]
pub struct StateSolution {
    pub space: Arc<HierarchicalSpace>,
    pub coeffs: Vec<f64>,
    pub lu: SparseLu,
    /// `max |B|` at the returned state.
    pub residual: f64,
    pub factorizations: usize,
}

impl StateSolution {
    pub fn function(&self) -> Result<SplineFunction> {
        SplineFunction::new(self.space.clone(), 1, self.coeffs.clone())
    }
}

/// Solves `B(d_A) = 0` on `space` for the given mapping. Linear problems
/// take one factorization; the factor is kept for the adjoint.
pub fn solve_state(
    problem: &dyn StateProblem,
    mapping: &SplineFunction,
    space: Arc<HierarchicalSpace>,
    alpha: &[f64],
    tol: f64,
) -> Result<StateSolution> {
    let n = space.dim();
    let mut d = vec![0.0; n];
    let mut factorizations = 0;
    let mut lu = None;
    for _ in 0..30 {
        let disc = Discretization { mapping, state_space: &space, state: &d, alpha, geo_order: problem.geo_order() };
        let want = if lu.is_none() || !problem.is_linear() { Want::STATE } else { Want::VALUE };
        let r = problem.state_residual(&disc, want)?;
        let res = norm_inf(&r.value);
        let scale = 1.0 + norm_inf(&d);
        if lu.is_some() && res <= tol * scale {
            return Ok(StateSolution { space, coeffs: d, lu: lu.unwrap(), residual: res, factorizations });
        }
        if let Some(j) = r.d_state {
            lu = Some(SparseLu::factor(&j)?);
            factorizations += 1;
        }
        let delta = lu.as_ref().unwrap().solve(&r.value, SolveMode::Normal);
        d.iter_mut().zip(&delta).for_each(|(x, dx)| *x -= dx);
    }
    Err(Error::NotConverged { solver: "state newton", iterations: 30, residual: f64::NAN })
}

#[cfg(test)]
pub(crate) mod tests;
