use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;

use super::space::{deriv_slots, subdivide, BasisValues, HierarchicalSpace};
use crate::math::DenseLu;
use crate::{Error, Result};

/// Vector-valued spline over a hierarchical space. Coefficients are stored
/// interleaved: component `k` of function `i` sits at `i * dim + k`.
#[derive(Debug, Clone)]
pub struct SplineFunction {
    space: Arc<HierarchicalSpace>,
    dim: usize,
    coeffs: Vec<f64>,
}

impl SplineFunction {
    pub fn new(space: Arc<HierarchicalSpace>, dim: usize, coeffs: Vec<f64>) -> Result<Self> {
        if coeffs.len() != space.dim() * dim {
            return Err(Error::DimensionMismatch { expected: space.dim() * dim, got: coeffs.len() });
        }
        Ok(Self { space, dim, coeffs })
    }

    pub fn zeros(space: Arc<HierarchicalSpace>, dim: usize) -> Self {
        let n = space.dim() * dim;
        Self { space, dim, coeffs: vec![0.0; n] }
    }

    pub fn space(&self) -> &Arc<HierarchicalSpace> {
        &self.space
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn coeffs_mut(&mut self) -> &mut [f64] {
        &mut self.coeffs
    }

    pub fn into_coeffs(self) -> Vec<f64> {
        self.coeffs
    }

    /// Combines precomputed basis values: `out[slot * dim + k]`.
    pub fn combine(&self, bv: &BasisValues, n_slots: usize, out: &mut [f64]) {
        let d = self.dim;
        out[..n_slots * d].iter_mut().for_each(|v| *v = 0.0);
        for s in 0..n_slots {
            let vals = bv.slot(s);
            for (r, &f) in bv.funcs.iter().enumerate() {
                let w = vals[r];
                for k in 0..d {
                    out[s * d + k] += w * self.coeffs[f * d + k];
                }
            }
        }
    }

    /// Value and derivatives up to `order`, laid out as `slot * dim + k`.
    pub fn evaluate(&self, xi: f64, eta: f64, order: usize) -> Result<Vec<f64>> {
        let mut bv = BasisValues::new();
        self.space.eval(xi, eta, order, &mut bv)?;
        let ns = deriv_slots(order);
        let mut out = vec![0.0; ns * self.dim];
        self.combine(&bv, ns, &mut out);
        Ok(out)
    }

    pub fn value(&self, xi: f64, eta: f64) -> Result<Vec<f64>> {
        self.evaluate(xi, eta, 0)
    }

    /// Coefficients of the function over the local B-splines of active cell
    /// `cell`, layout `k * q^2 + ly * q + lx`.
    fn local_coeffs(&self, cell: usize) -> Vec<f64> {
        let c = self.space.cell(cell);
        let q = self.space.degree() + 1;
        let nloc = q * q;
        let mut loc = vec![0.0; self.dim * nloc];
        for (r, &f) in c.functions().iter().enumerate() {
            let row = c.row(r);
            for k in 0..self.dim {
                let w = self.coeffs[f * self.dim + k];
                if w != 0.0 {
                    for (l, v) in row.iter().enumerate() {
                        loc[k * nloc + l] += w * v;
                    }
                }
            }
        }
        loc
    }

    /// Exact representation of `self` in a space that refines its own.
    pub fn prolong(&self, target: &Arc<HierarchicalSpace>) -> Result<Self> {
        if !self.space.is_refined_by(target) {
            return Err(Error::NotNested);
        }
        self.transfer(target, false)
    }

    /// Representation in an arbitrary space with the same base mesh. Exact
    /// wherever the target is at least as fine as the source; elsewhere each
    /// coefficient comes from a local least-squares fit on one element.
    pub fn restrict(&self, target: &Arc<HierarchicalSpace>) -> Result<Self> {
        let a = &self.space;
        if a.degree() != target.degree() || a.base_cells() != target.base_cells() {
            return Err(Error::NotNested);
        }
        self.transfer(target, true)
    }

    fn transfer(&self, target: &Arc<HierarchicalSpace>, allow_fit: bool) -> Result<Self> {
        let src = &*self.space;
        let q = src.degree() + 1;
        let nloc = q * q;
        let d = self.dim;
        let mut memo: Vec<Option<Vec<f64>>> = vec![None; target.n_cells()];
        let mut out = vec![0.0; target.dim() * d];
        let mut buf = vec![0.0; nloc];
        for (fid, key) in target.functions().iter().enumerate() {
            let [ri, rj] = target.support_cells(*key);
            let mut found = None;
            'search: for cj in rj.0..=rj.1 {
                for ci in ri.0..=ri.1 {
                    if let Some(id) = target.cell_id(key.level, ci, cj) {
                        found = Some(id);
                        break 'search;
                    }
                }
            }
            let tc = found.ok_or_else(|| Error::Precondition("active function without an active cell".into()))?;
            if memo[tc].is_none() {
                let cell = target.cell(tc);
                let (l, ci, cj) = (cell.level, cell.i, cell.j);
                let xm = 0.5 * (cell.bounds[0][0] + cell.bounds[0][1]);
                let ym = 0.5 * (cell.bounds[1][0] + cell.bounds[1][1]);
                let (m, _, _) = src.descend(xm, ym, usize::MAX);
                let loc = if m <= l {
                    let sc = src.locate(xm, ym)?;
                    let mut loc = self.local_coeffs(sc);
                    for k in m..l {
                        let (pi, pj) = (ci >> (l - k), cj >> (l - k));
                        let (chi, chj) = (ci >> (l - k - 1), cj >> (l - k - 1));
                        let sx = target.local_two_scale(k, 0, pi, chi);
                        let sy = target.local_two_scale(k, 1, pj, chj);
                        for comp in 0..d {
                            subdivide(&mut loc[comp * nloc..(comp + 1) * nloc], &sx, &sy, q, &mut buf);
                        }
                    }
                    loc
                } else if allow_fit {
                    self.fit_on_cell(target, tc)?
                } else {
                    return Err(Error::NotNested);
                };
                memo[tc] = Some(loc);
            }
            let loc = memo[tc].as_ref().unwrap();
            let cell = target.cell(tc);
            let lidx = (key.j - cell.j) * q + (key.i - cell.i);
            for comp in 0..d {
                out[fid * d + comp] = loc[comp * nloc + lidx];
            }
        }
        Self::new(target.clone(), d, out)
    }

    /// Least-squares fit of `self` on target cell `tc` by the local
    /// B-splines of that cell's level.
    fn fit_on_cell(&self, target: &HierarchicalSpace, tc: usize) -> Result<Vec<f64>> {
        let cell = target.cell(tc);
        let p = target.degree();
        let q = p + 1;
        let nloc = q * q;
        let d = self.dim;
        let kx = target.knots(cell.level, 0);
        let ky = target.knots(cell.level, 1);
        let ns = 4 * q;
        let mut rows: Vec<f64> = Vec::with_capacity(ns * ns * nloc);
        let mut rhs: Vec<f64> = Vec::with_capacity(ns * ns * d);
        for sy in 0..ns {
            for sx in 0..ns {
                let x = cell.bounds[0][0] + (sx as f64 + 0.5) / ns as f64 * (cell.bounds[0][1] - cell.bounds[0][0]);
                let y = cell.bounds[1][0] + (sy as f64 + 0.5) / ns as f64 * (cell.bounds[1][1] - cell.bounds[1][0]);
                let bx = kx.basis_ders(cell.i + p, x, 0);
                let by = ky.basis_ders(cell.j + p, y, 0);
                for ly in 0..q {
                    for lx in 0..q {
                        rows.push(bx[0][lx] * by[0][ly]);
                    }
                }
                rhs.extend_from_slice(&self.value(x, y)?);
            }
        }
        let m = ns * ns;
        let mut ata = vec![0.0; nloc * nloc];
        for s in 0..m {
            let phi = &rows[s * nloc..(s + 1) * nloc];
            for a in 0..nloc {
                for b in 0..nloc {
                    ata[a * nloc + b] += phi[a] * phi[b];
                }
            }
        }
        let lu = DenseLu::new(nloc, ata)?;
        // Normal equations plus two rounds of residual correction.
        let mut sol = vec![0.0; nloc * d];
        for _ in 0..3 {
            let mut atr = vec![0.0; nloc * d];
            for s in 0..m {
                let phi = &rows[s * nloc..(s + 1) * nloc];
                for k in 0..d {
                    let fit: f64 = (0..nloc).map(|a| phi[a] * sol[k * nloc + a]).sum();
                    let r = rhs[s * d + k] - fit;
                    for a in 0..nloc {
                        atr[k * nloc + a] += phi[a] * r;
                    }
                }
            }
            for k in 0..d {
                lu.solve(&mut atr[k * nloc..(k + 1) * nloc]);
                for a in 0..nloc {
                    sol[k * nloc + a] += atr[k * nloc + a];
                }
            }
        }
        Ok(sol)
    }
}
