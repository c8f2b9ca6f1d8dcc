use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;

use super::BoundaryCurve;
use crate::assembly::{CsrMatrix, Integrator, SolveMode, SparseLu, Trial};
use crate::math::Float;
use crate::spline::{BoundaryIndexSet, HierarchicalSpace, Side};
use crate::{Error, Result};

/// Outcome of the adaptive boundary projection.
#[derive(Debug, Clone, PartialEq)]
pub struct ProjectionReport {
    /// `R(d_h)`, with `R^2 = 1/2 * sum_i r_i^2`.
    pub residual_total: f64,
    /// `r_i` per boundary function, in boundary-set order.
    pub per_function: Vec<f64>,
    /// `mu_i` per boundary function.
    pub thresholds: Vec<f64>,
    /// Number of refinement rounds performed.
    pub rounds: usize,
}

/// L2 projection of a boundary curve onto the trace space of a hierarchical
/// space. Keeps the factored boundary mass matrix for sensitivity products.
#[derive(Debug, Clone)]
pub struct BoundaryProjection {
    space: Arc<HierarchicalSpace>,
    bis: BoundaryIndexSet,
    mass: CsrMatrix,
    lu: SparseLu,
    c_b: Vec<f64>,
}

impl BoundaryProjection {
    /// Projects `curve` at `alpha` onto the boundary functions of `space`.
    pub fn new(curve: &dyn BoundaryCurve, alpha: &[f64], space: Arc<HierarchicalSpace>) -> Result<Self> {
        check_alpha(curve, alpha)?;
        let bis = space.boundary_decompose();
        let it = Integrator::new(&space, None, 0, 1)?;
        let nb = bis.n_boundary();
        let mut rhs_err = None;
        let out = it.assemble(2, Some((Trial::Test, 1)), true, |ed, res, jac| {
            let side = ed.side.unwrap();
            let s = ed.point[side.tangent_dir()];
            let d = match curve.eval(side, s, alpha) {
                Ok(d) => d,
                Err(e) => {
                    rhs_err.get_or_insert(e);
                    [0.0; 2]
                }
            };
            let phi = ed.test.slot(0);
            let n = phi.len();
            for i in 0..n {
                let wi = ed.weight * phi[i];
                res[2 * i] += wi * d[0];
                res[2 * i + 1] += wi * d[1];
                // two rows per function; only the first carries the mass block
                for j in 0..n {
                    jac[(2 * i) * n + j] += wi * phi[j];
                }
            }
            Ok(())
        })?;
        if let Some(e) = rhs_err {
            return Err(e);
        }
        let full = out.jacobian.unwrap();
        let rows: Vec<usize> = bis.boundary().iter().map(|&f| 2 * f).collect();
        let mass = full.select(&rows, bis.boundary());
        let lu = SparseLu::factor(&mass)?;
        let mut c_b = vec![0.0; 2 * nb];
        for k in 0..2 {
            let b: Vec<f64> = bis.boundary().iter().map(|&f| out.residual[2 * f + k]).collect();
            let x = lu.solve(&b, SolveMode::Normal);
            for (p, v) in x.into_iter().enumerate() {
                c_b[2 * p + k] = v;
            }
        }
        Ok(Self { space, bis, mass, lu, c_b })
    }

    pub fn space(&self) -> &Arc<HierarchicalSpace> {
        &self.space
    }

    pub fn boundary_set(&self) -> &BoundaryIndexSet {
        &self.bis
    }

    /// Boundary coefficients, `2 * p + k` for boundary function `p`.
    pub fn c_b(&self) -> &[f64] {
        &self.c_b
    }

    pub fn mass(&self) -> &CsrMatrix {
        &self.mass
    }

    /// Evaluates the projected curve `d_h` on a side.
    pub fn eval(&self, side: Side, s: f64) -> Result<[f64; 2]> {
        let [x, y] = side.point(s);
        let mut bv = crate::spline::BasisValues::new();
        self.space.eval(x, y, 0, &mut bv)?;
        let mut out = [0.0; 2];
        for (r, &f) in bv.funcs.iter().enumerate() {
            if let (true, p) = self.bis.position(f) {
                out[0] += bv.get(0, r) * self.c_b[2 * p];
                out[1] += bv.get(0, r) * self.c_b[2 * p + 1];
            }
        }
        Ok(out)
    }

    /// Per-function residuals `r_i` and thresholds `mu_i`.
    pub fn report(&self, curve: &dyn BoundaryCurve, alpha: &[f64], mu: f64) -> Result<ProjectionReport> {
        let it = Integrator::new(&self.space, None, 0, 1)?;
        let mut r2 = vec![0.0; self.space.dim()];
        let mut first_err = None;
        it.for_each_point(true, |ed| {
            let side = ed.side.unwrap();
            let s = ed.point[side.tangent_dir()];
            let d = match curve.eval(side, s, alpha) {
                Ok(d) => d,
                Err(e) => {
                    first_err.get_or_insert(e);
                    return Ok(());
                }
            };
            let mut dh = [0.0; 2];
            for (r, &f) in ed.test.funcs.iter().enumerate() {
                if let (true, p) = self.bis.position(f) {
                    dh[0] += ed.test.get(0, r) * self.c_b[2 * p];
                    dh[1] += ed.test.get(0, r) * self.c_b[2 * p + 1];
                }
            }
            let (ex, ey) = (d[0] - dh[0], d[1] - dh[1]);
            let e2 = ex * ex + ey * ey;
            for (r, &f) in ed.test.funcs.iter().enumerate() {
                r2[f] += ed.weight * ed.test.get(0, r) * e2;
            }
            Ok(())
        })?;
        if let Some(e) = first_err {
            return Err(e);
        }
        let per_function: Vec<f64> = self.bis.boundary().iter().map(|&f| Float::sqrt(r2[f].max(0.0))).collect();
        let thresholds: Vec<f64> = (0..self.bis.n_boundary())
            .map(|p| mu / Float::sqrt(Float::sqrt(self.mass.get(p, p))))
            .collect();
        let total = Float::sqrt(0.5 * per_function.iter().map(|r| r * r).sum::<f64>());
        Ok(ProjectionReport { residual_total: total, per_function, thresholds, rounds: 0 })
    }

    /// `[d rhs / d alpha]`: row `2 p + k`, column `j`, entries
    /// `int phi_p d(d_k)/d(alpha_j)` over the boundary.
    pub fn rhs_alpha_derivative(&self, curve: &dyn BoundaryCurve, alpha: &[f64]) -> Result<Vec<Vec<f64>>> {
        let n = alpha.len();
        let it = Integrator::new(&self.space, None, 0, 1)?;
        let mut out = vec![vec![0.0; n]; 2 * self.bis.n_boundary()];
        let mut first_err = None;
        it.for_each_point(true, |ed| {
            let side = ed.side.unwrap();
            let s = ed.point[side.tangent_dir()];
            let dd = match curve.d_dalpha(side, s, alpha) {
                Ok(v) => v,
                Err(e) => {
                    first_err.get_or_insert(e);
                    return Ok(());
                }
            };
            for (r, &f) in ed.test.funcs.iter().enumerate() {
                if let (true, p) = self.bis.position(f) {
                    let w = ed.weight * ed.test.get(0, r);
                    for j in 0..n {
                        out[2 * p][j] += w * dd[j][0];
                        out[2 * p + 1][j] += w * dd[j][1];
                    }
                }
            }
            Ok(())
        })?;
        if let Some(e) = first_err {
            return Err(e);
        }
        Ok(out)
    }

    /// Solves with the boundary mass matrix, componentwise on interleaved
    /// vectors.
    pub fn mass_solve(&self, k: &[f64], mode: SolveMode) -> Vec<f64> {
        let nb = self.bis.n_boundary();
        let mut out = vec![0.0; 2 * nb];
        for comp in 0..2 {
            let b: Vec<f64> = (0..nb).map(|p| k[2 * p + comp]).collect();
            for (p, v) in self.lu.solve(&b, mode).into_iter().enumerate() {
                out[2 * p + comp] = v;
            }
        }
        out
    }

    /// `[d c_B / d alpha]^T k` given the assembled `[d rhs / d alpha]`.
    pub fn dcb_dalpha_transpose_apply(&self, k: &[f64], d_rhs: &[Vec<f64>]) -> Vec<f64> {
        let n = d_rhs.first().map_or(0, |r| r.len());
        let y = self.mass_solve(k, SolveMode::Transpose);
        let mut out = vec![0.0; n];
        for (row, yv) in d_rhs.iter().zip(&y) {
            if *yv != 0.0 {
                for j in 0..n {
                    out[j] += row[j] * yv;
                }
            }
        }
        out
    }

    /// `[d c_B / d alpha] v`.
    pub fn dcb_dalpha_apply(&self, v: &[f64], d_rhs: &[Vec<f64>]) -> Vec<f64> {
        let rhs: Vec<f64> = d_rhs.iter().map(|row| row.iter().zip(v).map(|(a, b)| a * b).sum()).collect();
        self.mass_solve(&rhs, SolveMode::Normal)
    }
}

fn check_alpha(curve: &dyn BoundaryCurve, alpha: &[f64]) -> Result<()> {
    if alpha.len() != curve.n_params() {
        return Err(Error::DimensionMismatch { expected: curve.n_params(), got: alpha.len() });
    }
    Ok(())
}

/// Projects and refines every boundary function whose residual exceeds its
/// threshold until none does.
pub fn project_boundary_adaptive(
    curve: &dyn BoundaryCurve,
    alpha: &[f64],
    space: Arc<HierarchicalSpace>,
    mu: f64,
) -> Result<(BoundaryProjection, ProjectionReport)> {
    if !(mu > 0.0) {
        return Err(Error::InvalidArgument("mu must be positive".into()));
    }
    let mut space = space;
    let mut rounds = 0;
    loop {
        let proj = BoundaryProjection::new(curve, alpha, space.clone())?;
        let mut report = proj.report(curve, alpha, mu)?;
        report.rounds = rounds;
        let marked: Vec<usize> = report
            .per_function
            .iter()
            .zip(&report.thresholds)
            .enumerate()
            .filter(|(_, (r, t))| r > t)
            .map(|(p, _)| proj.boundary_set().boundary()[p])
            .collect();
        if marked.is_empty() {
            return Ok((proj, report));
        }
        space = Arc::new(space.refine_functions(&marked)?);
        rounds += 1;
    }
}
