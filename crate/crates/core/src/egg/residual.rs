use alloc::vec;
use alloc::vec::Vec;

use crate::assembly::{CsrMatrix, Integrator, Trial};
use crate::spline::{BoundaryIndexSet, SplineFunction};
use crate::Result;

/// Regularization of the metric scaling.
pub const EGG_EPS: f64 = 1e-4;

/// EGG residual restricted to the inner test functions, with optional
/// Jacobian blocks `(dF/dc_I, dF/dc_B)`.
#[derive(Debug, Clone)]
pub struct EggSystem {
    /// Layout `2 * p + k` for inner function `p`.
    pub residual: Vec<f64>,
    pub jacobian: Option<(CsrMatrix, CsrMatrix)>,
}

/// Assembles the EGG residual of `mapping` (all coefficients) against the
/// inner vector test functions.
pub fn egg_system(mapping: &SplineFunction, bis: &BoundaryIndexSet, want_jacobian: bool) -> Result<EggSystem> {
    let space = mapping.space();
    let it = Integrator::new(space, Some(mapping), 2, 2)?;
    let trial = want_jacobian.then_some((Trial::Geometry, 2));
    let out = it.assemble(2, trial, false, |ed, res, jac| {
        let m = ed.map.unwrap();
        let t = ed.test;
        let n = t.len();
        let xs = [m.jac[0][0], m.jac[1][0]];
        let xe = [m.jac[0][1], m.jac[1][1]];
        let g11 = xs[0] * xs[0] + xs[1] * xs[1];
        let g12 = xs[0] * xe[0] + xs[1] * xe[1];
        let g22 = xe[0] * xe[0] + xe[1] * xe[1];
        let s = g11 + g22 + EGG_EPS;
        let nh = [
            g22 * m.hess[0][0] - 2.0 * g12 * m.hess[0][1] + g11 * m.hess[0][2],
            g22 * m.hess[1][0] - 2.0 * g12 * m.hess[1][1] + g11 * m.hess[1][2],
        ];
        let lk = [nh[0] / s, nh[1] / s];
        let (phi, px, py) = (t.slot(0), t.slot(1), t.slot(2));
        for i in 0..n {
            res[2 * i] += ed.weight * phi[i] * lk[0];
            res[2 * i + 1] += ed.weight * phi[i] * lk[1];
        }
        if !jac.is_empty() {
            let ncols = 2 * n;
            let (pxx, pxy, pyy) = (t.slot(3), t.slot(4), t.slot(5));
            // derivative of L_k against coefficient (j, l)
            let mut dl = vec![[0.0; 2]; 2 * n];
            for j in 0..n {
                for l in 0..2 {
                    let dg11 = 2.0 * xs[l] * px[j];
                    let dg22 = 2.0 * xe[l] * py[j];
                    let dg12 = xs[l] * py[j] + xe[l] * px[j];
                    let ds = dg11 + dg22;
                    let own = g22 * pxx[j] - 2.0 * g12 * pxy[j] + g11 * pyy[j];
                    for k in 0..2 {
                        let mut dnh = dg22 * m.hess[k][0] - 2.0 * dg12 * m.hess[k][1] + dg11 * m.hess[k][2];
                        if k == l {
                            dnh += own;
                        }
                        dl[2 * j + l][k] = (dnh - lk[k] * ds) / s;
                    }
                }
            }
            for i in 0..n {
                let wi = ed.weight * phi[i];
                if wi == 0.0 {
                    continue;
                }
                for k in 0..2 {
                    let row = &mut jac[(2 * i + k) * ncols..(2 * i + k + 1) * ncols];
                    for (c, d) in dl.iter().enumerate() {
                        row[c] += wi * d[k];
                    }
                }
            }
        }
        Ok(())
    })?;
    let inner_rows: Vec<usize> = bis.inner().iter().flat_map(|&f| [2 * f, 2 * f + 1]).collect();
    let residual = inner_rows.iter().map(|&r| out.residual[r]).collect();
    let jacobian = out.jacobian.map(|j| {
        let bcols: Vec<usize> = bis.boundary().iter().flat_map(|&f| [2 * f, 2 * f + 1]).collect();
        (j.select(&inner_rows, &inner_rows), j.select(&inner_rows, &bcols))
    });
    Ok(EggSystem { residual, jacobian })
}
