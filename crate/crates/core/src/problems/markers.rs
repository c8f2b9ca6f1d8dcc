//! Refinement indicators for the state space.

use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;

use super::{Discretization, StateProblem, Want};
use crate::assembly::Integrator;
use crate::math::Float;
use crate::spline::{deriv_slots, HierarchicalSpace, SplineFunction};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MarkerMode {
    /// `∫ φ_i (Δu - Δf)² dS + c ∫ φ_i (u - f)² dγ` per state function.
    Strong,
    /// `B(u_h, ψ_i)²` with `ψ_i` from one uniform refinement of the state
    /// space.
    Weak,
}

/// Per-function indicators and the space they live on.
#[derive(Debug, Clone)]
pub struct Markers {
    pub space: Arc<HierarchicalSpace>,
    pub per_function: Vec<f64>,
    pub total: f64,
}

impl Markers {
    /// Functions whose indicator exceeds `threshold`.
    pub fn marked(&self, threshold: f64) -> Vec<usize> {
        (0..self.per_function.len()).filter(|&i| self.per_function[i] > threshold).collect()
    }
}

/// Evaluates residual markers for the state `state` (coefficients on
/// `state_space`).
pub fn residual_markers(
    problem: &dyn StateProblem,
    mapping: &SplineFunction,
    state_space: &Arc<HierarchicalSpace>,
    state: &[f64],
    alpha: &[f64],
    mode: MarkerMode,
) -> Result<Markers> {
    let geo_order = problem.geo_order();
    match mode {
        MarkerMode::Weak => {
            let fine = Arc::new(state_space.uniformly_refined()?);
            let u = SplineFunction::new(state_space.clone(), 1, state.to_vec())?.prolong(&fine)?;
            let disc = Discretization { mapping, state_space: &fine, state: u.coeffs(), alpha, geo_order };
            let r = problem.state_residual(&disc, Want::VALUE)?;
            let per_function: Vec<f64> = r.value.iter().map(|v| v * v).collect();
            let total = per_function.iter().sum();
            Ok(Markers { space: fine, per_function, total })
        }
        MarkerMode::Strong => {
            let disc = Discretization { mapping, state_space, state, alpha, geo_order };
            let per_function = problem.strong_markers(&disc)?;
            let total = per_function.iter().sum();
            Ok(Markers { space: state_space.clone(), per_function, total })
        }
    }
}

#[inline]
fn slot(kx: usize, ky: usize) -> usize {
    let t = kx + ky;
    t * (t + 1) / 2 + ky
}

/// Strong markers of `-Δu = -Δf`, `u = f` on the boundary, with
/// `f = det J`. Needs the third derivatives of the mapping.
pub(crate) fn strong_poisson_markers(disc: &Discretization, penalty: f64) -> Result<Vec<f64>> {
    if disc.state.len() != disc.state_space.dim() {
        return Err(Error::DimensionMismatch { expected: disc.state_space.dim(), got: disc.state.len() });
    }
    if disc.mapping.space().degree() < 3 {
        return Err(Error::Precondition("strong markers need a C2 mapping".into()));
    }
    let it = Integrator::new(disc.state_space, Some(disc.mapping), 2, 3)?;
    let mut out = vec![0.0; disc.state_space.dim()];
    let mut xb = vec![0.0; 2 * deriv_slots(3)];
    it.for_each_point(false, |ed| {
        disc.mapping.combine(ed.geo.unwrap(), deriv_slots(3), &mut xb);
        let x = |k: usize, kx: usize, ky: usize| xb[slot(kx, ky) * 2 + k];
        let t = ed.test;
        let mut u = [0.0; 6];
        for (r, &f) in t.funcs.iter().enumerate() {
            for (k, uk) in u.iter_mut().enumerate() {
                *uk += disc.state[f] * t.get(k, r);
            }
        }
        // f = a b - c e with a = x_ξ, b = y_η, c = x_η, e = y_ξ
        let fac = [(0, 1, 0), (1, 0, 1), (0, 0, 1), (1, 1, 0)];
        let dv = |w: usize, dx: usize, dy: usize| {
            let (k, kx, ky) = fac[w];
            x(k, kx + dx, ky + dy)
        };
        let prod = |p: usize, q: usize, d1: (usize, usize), d2: (usize, usize)| {
            // second derivative of the product (p q) along d1, d2
            dv(p, d1.0 + d2.0, d1.1 + d2.1) * dv(q, 0, 0)
                + dv(p, d1.0, d1.1) * dv(q, d2.0, d2.1)
                + dv(p, d2.0, d2.1) * dv(q, d1.0, d1.1)
                + dv(p, 0, 0) * dv(q, d1.0 + d2.0, d1.1 + d2.1)
        };
        let first = |p: usize, q: usize, d: (usize, usize)| dv(p, d.0, d.1) * dv(q, 0, 0) + dv(p, 0, 0) * dv(q, d.0, d.1);
        let dirs = [(1, 0), (0, 1)];
        let fg: [f64; 2] = core::array::from_fn(|d| first(0, 1, dirs[d]) - first(2, 3, dirs[d]));
        let fh: [[f64; 2]; 2] =
            core::array::from_fn(|d| core::array::from_fn(|e| prod(0, 1, dirs[d], dirs[e]) - prod(2, 3, dirs[d], dirs[e])));
        // v = u - f in reference coordinates
        let vg = [u[1] - fg[0], u[2] - fg[1]];
        let vh = [[u[3] - fh[0][0], u[4] - fh[0][1]], [u[4] - fh[1][0], u[5] - fh[1][1]]];
        let (xs, ys, xe, ye) = (x(0, 1, 0), x(1, 1, 0), x(0, 0, 1), x(1, 0, 1));
        let det = xs * ye - xe * ys;
        let pg = [(ye * vg[0] - ys * vg[1]) / det, (xs * vg[1] - xe * vg[0]) / det];
        let hx = |k: usize| [[x(k, 2, 0), x(k, 1, 1)], [x(k, 1, 1), x(k, 0, 2)]];
        let (h0, h1) = (hx(0), hx(1));
        let m: [[f64; 2]; 2] = core::array::from_fn(|d| core::array::from_fn(|e| vh[d][e] - pg[0] * h0[d][e] - pg[1] * h1[d][e]));
        // Δv = tr(g^{-1} M) with the metric g = J^T J
        let g11 = xs * xs + ys * ys;
        let g12 = xs * xe + ys * ye;
        let g22 = xe * xe + ye * ye;
        let lap = (g22 * m[0][0] - 2.0 * g12 * m[0][1] + g11 * m[1][1]) / (det * det);
        let w = ed.weight * det.abs() * lap * lap;
        for (r, &f) in t.funcs.iter().enumerate() {
            out[f] += w * t.get(0, r);
        }
        Ok(())
    })?;
    let itb = Integrator::new(disc.state_space, Some(disc.mapping), 0, 1)?;
    itb.for_each_point(true, |ed| {
        let t = ed.test;
        let m = ed.map.unwrap();
        let u: f64 = t.funcs.iter().enumerate().map(|(r, &f)| disc.state[f] * t.get(0, r)).sum();
        let side = ed.side.unwrap();
        let dir = side.tangent_dir();
        let len = Float::sqrt(m.jac[0][dir] * m.jac[0][dir] + m.jac[1][dir] * m.jac[1][dir]);
        let e = u - m.det;
        let w = ed.weight * penalty * len * e * e;
        for (r, &f) in t.funcs.iter().enumerate() {
            out[f] += w * t.get(0, r);
        }
        Ok(())
    })?;
    Ok(out)
}
