use alloc::vec;
use alloc::vec::Vec;

use super::knots::{KnotVector, MAX_DEGREE};
use crate::{Error, Result};

/// Default number of hierarchy levels.
pub const DEFAULT_MAX_LEVELS: usize = 6;

/// Number of derivative slots produced for a given derivative order:
/// value; `xi, eta`; `xixi, xieta, etaeta`; `xixixi, xixieta, xietaeta, etaetaeta`.
pub const fn deriv_slots(order: usize) -> usize {
    (order + 1) * (order + 2) / 2
}

/// Identifier of a basis function at some level.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct FunctionKey {
    pub level: usize,
    pub i: usize,
    pub j: usize,
}

/// An active element together with the representation of every active
/// hierarchical function that is nonzero on it, in terms of the local
/// tensor-product B-splines of the element's own level.
#[derive(Debug, Clone)]
pub struct Cell {
    pub level: usize,
    pub i: usize,
    pub j: usize,
    /// Parameter box `[xi0, xi1] x [eta0, eta1]`.
    pub bounds: [[f64; 2]; 2],
    funcs: Vec<usize>,
    coef: Vec<f64>,
}

impl Cell {
    /// Global indices of the active functions supported on this cell.
    pub fn functions(&self) -> &[usize] {
        &self.funcs
    }

    /// Coefficients of row `r` over the local B-splines, local index
    /// `ly * (p + 1) + lx`.
    pub fn row(&self, r: usize) -> &[f64] {
        let n = self.coef.len() / self.funcs.len().max(1);
        &self.coef[r * n..(r + 1) * n]
    }

    pub fn area(&self) -> f64 {
        (self.bounds[0][1] - self.bounds[0][0]) * (self.bounds[1][1] - self.bounds[1][0])
    }
}

#[derive(Debug, Clone)]
struct Level {
    knots: [KnotVector; 2],
    refine: Option<[Vec<Vec<(usize, f64)>>; 2]>,
    ncells: [usize; 2],
    nfuncs: [usize; 2],
    in_domain: Vec<bool>,
    refined: Vec<bool>,
    cell_id: Vec<usize>,
    func_id: Vec<usize>,
}

const NONE: usize = usize::MAX;

impl Level {
    fn cell(&self, i: usize, j: usize) -> usize {
        j * self.ncells[0] + i
    }
    fn func(&self, i: usize, j: usize) -> usize {
        j * self.nfuncs[0] + i
    }
}

/// Truncated hierarchical B-spline space of uniform degree over the unit
/// square with dyadic refinement between consecutive levels.
#[derive(Debug, Clone)]
pub struct HierarchicalSpace {
    degree: usize,
    base: [usize; 2],
    max_levels: usize,
    levels: Vec<Level>,
    cells: Vec<Cell>,
    funcs: Vec<FunctionKey>,
}

impl PartialEq for HierarchicalSpace {
    fn eq(&self, other: &Self) -> bool {
        self.degree == other.degree
            && self.base == other.base
            && self.max_levels == other.max_levels
            && self.levels.len() == other.levels.len()
            && self
                .levels
                .iter()
                .zip(&other.levels)
                .all(|(a, b)| a.refined == b.refined)
    }
}

impl HierarchicalSpace {
    /// Tensor-product spline space with `n_cells` uniform elements per
    /// direction and no refinement.
    pub fn uniform(degree: usize, n_cells: [usize; 2]) -> Result<Self> {
        Self::with_max_levels(degree, n_cells, DEFAULT_MAX_LEVELS)
    }

    pub fn with_max_levels(degree: usize, n_cells: [usize; 2], max_levels: usize) -> Result<Self> {
        if degree == 0 || degree > MAX_DEGREE {
            return Err(Error::InvalidArgument(alloc::format!(
                "degree {degree} outside 1..={MAX_DEGREE}"
            )));
        }
        if n_cells[0] == 0 || n_cells[1] == 0 {
            return Err(Error::InvalidArgument("need at least one cell per direction".into()));
        }
        if max_levels == 0 {
            return Err(Error::InvalidArgument("max_levels must be positive".into()));
        }
        Self::build(degree, n_cells, max_levels, vec![vec![false; n_cells[0] * n_cells[1]]])
    }

    /// Builds the space from the per-level refined flags. `refined[l]` has one
    /// entry per level-`l` cell.
    fn build(
        degree: usize,
        base: [usize; 2],
        max_levels: usize,
        mut refined: Vec<Vec<bool>>,
    ) -> Result<Self> {
        while refined.len() > 1 && !refined.last().unwrap().iter().any(|&r| r) {
            refined.pop();
        }
        if refined.last().is_some_and(|r| r.iter().any(|&v| v)) {
            let n = 1usize << refined.len();
            refined.push(vec![false; base[0] * base[1] * n * n]);
        }
        let nl = refined.len();
        if nl > max_levels {
            return Err(Error::RefinementBudget { requested: nl, max_levels });
        }
        let p = degree;
        let mut levels: Vec<Level> = Vec::with_capacity(nl);
        for (l, refined_l) in refined.into_iter().enumerate() {
            let nc = [base[0] << l, base[1] << l];
            let knots = [
                KnotVector::open_uniform(p, nc[0])?,
                KnotVector::open_uniform(p, nc[1])?,
            ];
            let nf = [nc[0] + p, nc[1] + p];
            let in_domain = if l == 0 {
                vec![true; nc[0] * nc[1]]
            } else {
                let prev = &levels[l - 1];
                let mut d = vec![false; nc[0] * nc[1]];
                for j in 0..nc[1] {
                    for i in 0..nc[0] {
                        let pc = prev.cell(i / 2, j / 2);
                        d[j * nc[0] + i] = prev.in_domain[pc] && prev.refined[pc];
                    }
                }
                d
            };
            let refined_l: Vec<bool> = refined_l
                .iter()
                .zip(&in_domain)
                .map(|(&r, &d)| r && d)
                .collect();
            levels.push(Level {
                knots,
                refine: None,
                ncells: nc,
                nfuncs: nf,
                in_domain,
                refined: refined_l,
                cell_id: vec![NONE; nc[0] * nc[1]],
                func_id: vec![NONE; nf[0] * nf[1]],
            });
        }
        for l in 0..nl.saturating_sub(1) {
            let (a, b) = levels.split_at_mut(l + 1);
            a[l].refine = Some([
                a[l].knots[0].refinement_matrix(&b[0].knots[0])?,
                a[l].knots[1].refinement_matrix(&b[0].knots[1])?,
            ]);
        }
        let mut space = Self { degree, base, max_levels, levels, cells: Vec::new(), funcs: Vec::new() };
        space.enumerate();
        Ok(space)
    }

    fn enumerate(&mut self) {
        let p = self.degree;
        let mut funcs = Vec::new();
        let mut cells = Vec::new();
        for l in 0..self.levels.len() {
            let lev = &self.levels[l];
            let mut func_id = vec![NONE; lev.nfuncs[0] * lev.nfuncs[1]];
            for b in 0..lev.nfuncs[1] {
                for a in 0..lev.nfuncs[0] {
                    let (ri, rj) = (support_range(a, p, lev.ncells[0]), support_range(b, p, lev.ncells[1]));
                    let mut all_in = true;
                    let mut any_active = false;
                    for cj in rj.0..=rj.1 {
                        for ci in ri.0..=ri.1 {
                            let c = lev.cell(ci, cj);
                            all_in &= lev.in_domain[c];
                            any_active |= lev.in_domain[c] && !lev.refined[c];
                        }
                    }
                    if all_in && any_active {
                        func_id[lev.func(a, b)] = funcs.len();
                        funcs.push(FunctionKey { level: l, i: a, j: b });
                    }
                }
            }
            let mut cell_id = vec![NONE; lev.ncells[0] * lev.ncells[1]];
            for cj in 0..lev.ncells[1] {
                for ci in 0..lev.ncells[0] {
                    let c = lev.cell(ci, cj);
                    if lev.in_domain[c] && !lev.refined[c] {
                        cell_id[c] = cells.len();
                        cells.push((l, ci, cj));
                    }
                }
            }
            self.levels[l].func_id = func_id;
            self.levels[l].cell_id = cell_id;
        }
        self.funcs = funcs;
        self.cells = cells
            .into_iter()
            .map(|(l, i, j)| self.extract_cell(l, i, j))
            .collect();
    }

    /// True when the support of level-`l` function `(a, b)` lies in the
    /// level-`l` subdomain.
    fn support_in_domain(&self, l: usize, a: usize, b: usize) -> bool {
        let lev = &self.levels[l];
        let p = self.degree;
        let (ri, rj) = (support_range(a, p, lev.ncells[0]), support_range(b, p, lev.ncells[1]));
        (rj.0..=rj.1).all(|cj| (ri.0..=ri.1).all(|ci| lev.in_domain[lev.cell(ci, cj)]))
    }

    fn extract_cell(&self, m: usize, i: usize, j: usize) -> Cell {
        let p = self.degree;
        let q = p + 1;
        let nloc = q * q;
        let mut funcs: Vec<usize> = Vec::new();
        let mut coef: Vec<f64> = Vec::new();
        let mut buf = vec![0.0; nloc];
        for l in 0..=m {
            let (ci, cj) = (i >> (m - l), j >> (m - l));
            if l > 0 {
                let (pi, pj) = (ci >> 1, cj >> 1);
                let sx = self.local_two_scale(l - 1, 0, pi, ci);
                let sy = self.local_two_scale(l - 1, 1, pj, cj);
                for r in 0..funcs.len() {
                    let row = &mut coef[r * nloc..(r + 1) * nloc];
                    subdivide(row, &sx, &sy, q, &mut buf);
                    for by in 0..q {
                        for bx in 0..q {
                            if self.support_in_domain(l, ci + bx, cj + by) {
                                row[by * q + bx] = 0.0;
                            }
                        }
                    }
                }
            }
            let lev = &self.levels[l];
            for ay in 0..q {
                for ax in 0..q {
                    let id = lev.func_id[lev.func(ci + ax, cj + ay)];
                    if id != NONE {
                        funcs.push(id);
                        let mut row = vec![0.0; nloc];
                        row[ay * q + ax] = 1.0;
                        coef.extend_from_slice(&row);
                    }
                }
            }
        }
        let mut f2 = Vec::with_capacity(funcs.len());
        let mut c2 = Vec::with_capacity(coef.len());
        for (r, &f) in funcs.iter().enumerate() {
            let row = &coef[r * nloc..(r + 1) * nloc];
            if row.iter().any(|&v| v != 0.0) {
                f2.push(f);
                c2.extend_from_slice(row);
            }
        }
        let lev = &self.levels[m];
        let hx = 1.0 / lev.ncells[0] as f64;
        let hy = 1.0 / lev.ncells[1] as f64;
        Cell {
            level: m,
            i,
            j,
            bounds: [[i as f64 * hx, (i + 1) as f64 * hx], [j as f64 * hy, (j + 1) as f64 * hy]],
            funcs: f2,
            coef: c2,
        }
    }

    /// `s[ca][fa]`: coefficient of the fine local function `fa` of child cell
    /// `child` in coarse local function `ca` of parent cell `parent`, along
    /// direction `dir`, going from level `l` to `l + 1`.
    pub(crate) fn local_two_scale(&self, l: usize, dir: usize, parent: usize, child: usize) -> Vec<f64> {
        let q = self.degree + 1;
        let r = &self.levels[l].refine.as_ref().expect("level has no finer level")[dir];
        let mut s = vec![0.0; q * q];
        for ca in 0..q {
            for &(f, v) in &r[parent + ca] {
                if f >= child && f < child + q {
                    s[ca * q + (f - child)] = v;
                }
            }
        }
        s
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn base_cells(&self) -> [usize; 2] {
        self.base
    }

    pub fn max_levels(&self) -> usize {
        self.max_levels
    }

    /// Number of levels carrying active elements or functions.
    pub fn n_levels(&self) -> usize {
        self.levels.len()
    }

    pub fn dim(&self) -> usize {
        self.funcs.len()
    }

    pub fn n_cells(&self) -> usize {
        self.cells.len()
    }

    pub fn cells(&self) -> &[Cell] {
        &self.cells
    }

    pub fn cell(&self, id: usize) -> &Cell {
        &self.cells[id]
    }

    pub fn function(&self, id: usize) -> FunctionKey {
        self.funcs[id]
    }

    pub fn functions(&self) -> &[FunctionKey] {
        &self.funcs
    }

    /// Global index of the active function with the given key.
    pub fn function_id(&self, key: FunctionKey) -> Option<usize> {
        let lev = self.levels.get(key.level)?;
        if key.i >= lev.nfuncs[0] || key.j >= lev.nfuncs[1] {
            return None;
        }
        let id = lev.func_id[lev.func(key.i, key.j)];
        (id != NONE).then_some(id)
    }

    /// Active cell id of level-`l` cell `(i, j)` if it is active.
    pub fn cell_id(&self, l: usize, i: usize, j: usize) -> Option<usize> {
        let lev = self.levels.get(l)?;
        if i >= lev.ncells[0] || j >= lev.ncells[1] {
            return None;
        }
        let id = lev.cell_id[lev.cell(i, j)];
        (id != NONE).then_some(id)
    }

    /// Number of cells per direction at level `l`.
    pub fn level_cells(&self, l: usize) -> [usize; 2] {
        [self.base[0] << l, self.base[1] << l]
    }

    pub fn knots(&self, l: usize, dir: usize) -> &KnotVector {
        &self.levels[l].knots[dir]
    }

    /// Level-`l` cell range (inclusive) covered by the support of the
    /// level-`l` function `(a, b)`.
    pub fn support_cells(&self, key: FunctionKey) -> [(usize, usize); 2] {
        let nc = self.level_cells(key.level);
        [support_range(key.i, self.degree, nc[0]), support_range(key.j, self.degree, nc[1])]
    }

    /// Active cell containing `(xi, eta)`.
    pub fn locate(&self, xi: f64, eta: f64) -> Result<usize> {
        if !(0.0..=1.0).contains(&xi) || !(0.0..=1.0).contains(&eta) {
            return Err(Error::OutsideDomain(xi, eta));
        }
        let (l, i, j) = self.descend(xi, eta, usize::MAX);
        Ok(self.levels[l].cell_id[self.levels[l].cell(i, j)])
    }

    /// Walks down from level 0 towards the active cell containing the point,
    /// stopping at level `stop`.
    pub(crate) fn descend(&self, xi: f64, eta: f64, stop: usize) -> (usize, usize, usize) {
        let lev = &self.levels[0];
        let mut i = clamp_index(xi, lev.ncells[0]);
        let mut j = clamp_index(eta, lev.ncells[1]);
        let mut l = 0;
        while l < stop && self.levels[l].refined[self.levels[l].cell(i, j)] {
            l += 1;
            let nc = self.levels[l].ncells;
            i = (clamp_index(xi, nc[0])).clamp(2 * i, 2 * i + 1);
            j = (clamp_index(eta, nc[1])).clamp(2 * j, 2 * j + 1);
        }
        (l, i, j)
    }

    /// Evaluates all functions supported on `cell` and their derivatives up
    /// to `order` at a point of the cell.
    pub fn eval_in_cell(&self, cell: usize, xi: f64, eta: f64, order: usize, out: &mut BasisValues) {
        let c = &self.cells[cell];
        let p = self.degree;
        let q = p + 1;
        let lev = &self.levels[c.level];
        let dx = lev.knots[0].basis_ders(c.i + p, xi, order);
        let dy = lev.knots[1].basis_ders(c.j + p, eta, order);
        let ns = deriv_slots(order);
        let nf = c.funcs.len();
        out.funcs.clear();
        out.funcs.extend_from_slice(&c.funcs);
        out.n_slots = ns;
        out.data.clear();
        out.data.resize(ns * nf, 0.0);
        let mut tensor = [0.0; (MAX_DEGREE + 1) * (MAX_DEGREE + 1)];
        let mut slot = 0;
        for total in 0..=order {
            for ky in 0..=total {
                let kx = total - ky;
                for ly in 0..q {
                    for lx in 0..q {
                        tensor[ly * q + lx] = dx[kx][lx] * dy[ky][ly];
                    }
                }
                let dst = &mut out.data[slot * nf..(slot + 1) * nf];
                for (r, d) in dst.iter_mut().enumerate() {
                    let row = &c.coef[r * q * q..(r + 1) * q * q];
                    *d = row.iter().zip(&tensor[..q * q]).map(|(a, b)| a * b).sum();
                }
                slot += 1;
            }
        }
    }

    /// Evaluates all nonzero functions at a point.
    pub fn eval(&self, xi: f64, eta: f64, order: usize, out: &mut BasisValues) -> Result<usize> {
        let cell = self.locate(xi, eta)?;
        self.eval_in_cell(cell, xi, eta, order, out);
        Ok(cell)
    }

    fn refined_flags(&self) -> Vec<Vec<bool>> {
        self.levels.iter().map(|l| l.refined.clone()).collect()
    }

    fn mark(&self, flags: &mut Vec<Vec<bool>>, l: usize, i: usize, j: usize) -> Result<()> {
        if l + 1 >= self.max_levels {
            return Err(Error::RefinementBudget { requested: l + 2, max_levels: self.max_levels });
        }
        while flags.len() <= l {
            let n = 1usize << flags.len();
            flags.push(vec![false; self.base[0] * self.base[1] * n * n]);
        }
        let nc0 = self.base[0] << l;
        flags[l][j * nc0 + i] = true;
        Ok(())
    }

    /// Refines the given active cells (ids into [`Self::cells`]).
    pub fn refine_cells(&self, cells: &[usize]) -> Result<Self> {
        let mut flags = self.refined_flags();
        for &c in cells {
            let cell = self.cells.get(c).ok_or_else(|| {
                Error::InvalidArgument(alloc::format!("cell id {c} out of range"))
            })?;
            self.mark(&mut flags, cell.level, cell.i, cell.j)?;
        }
        Self::build(self.degree, self.base, self.max_levels, flags)
    }

    /// Refines every active cell, at the function's own level, in the support
    /// of each listed function.
    pub fn refine_functions(&self, funcs: &[usize]) -> Result<Self> {
        let mut flags = self.refined_flags();
        for &f in funcs {
            let key = *self.funcs.get(f).ok_or_else(|| {
                Error::InvalidArgument(alloc::format!("function id {f} out of range"))
            })?;
            let [ri, rj] = self.support_cells(key);
            let lev = &self.levels[key.level];
            for cj in rj.0..=rj.1 {
                for ci in ri.0..=ri.1 {
                    let c = lev.cell(ci, cj);
                    if lev.in_domain[c] && !lev.refined[c] {
                        self.mark(&mut flags, key.level, ci, cj)?;
                    }
                }
            }
        }
        Self::build(self.degree, self.base, self.max_levels, flags)
    }

    /// Refines every active element once. The result carries one more level
    /// of budget so that a space at full depth can still be refined.
    pub fn uniformly_refined(&self) -> Result<Self> {
        let mut flags = self.refined_flags();
        for (l, lev) in self.levels.iter().enumerate() {
            for c in 0..lev.in_domain.len() {
                if lev.in_domain[c] && !lev.refined[c] {
                    flags[l][c] = true;
                }
            }
        }
        let nl = self.levels.len() + 1;
        Self::build(self.degree, self.base, self.max_levels.max(nl), flags)
    }

    /// Coarsest space refining both `self` and `other`.
    pub fn union(&self, other: &Self) -> Result<Self> {
        if self.degree != other.degree || self.base != other.base {
            return Err(Error::NotNested);
        }
        let n = self.levels.len().max(other.levels.len());
        let mut flags = Vec::with_capacity(n);
        for l in 0..n {
            let a = self.levels.get(l).map(|v| &v.refined);
            let b = other.levels.get(l).map(|v| &v.refined);
            let len = (self.base[0] * self.base[1]) << (2 * l);
            flags.push(
                (0..len)
                    .map(|c| a.is_some_and(|v| v[c]) || b.is_some_and(|v| v[c]))
                    .collect(),
            );
        }
        Self::build(self.degree, self.base, self.max_levels.max(other.max_levels), flags)
    }

    /// True when every element of `self` is covered by elements of `fine`
    /// of equal or higher level, so `self` is a subspace of `fine`.
    pub fn is_refined_by(&self, fine: &Self) -> bool {
        if self.degree != fine.degree || self.base != fine.base {
            return false;
        }
        for (l, lev) in self.levels.iter().enumerate() {
            for c in 0..lev.refined.len() {
                if lev.refined[c] && !fine.levels.get(l).is_some_and(|f| f.refined[c]) {
                    return false;
                }
            }
        }
        true
    }
}

/// Values of the functions supported on one cell at one point. Slot order:
/// value, `xi`, `eta`, `xixi`, `xieta`, `etaeta`, then third derivatives.
#[derive(Debug, Clone, Default)]
pub struct BasisValues {
    pub funcs: Vec<usize>,
    n_slots: usize,
    data: Vec<f64>,
}

impl BasisValues {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.funcs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.funcs.is_empty()
    }

    /// Derivative slot `k` of every function.
    pub fn slot(&self, k: usize) -> &[f64] {
        assert!(k < self.n_slots, "derivative slot {k} not evaluated");
        let n = self.funcs.len();
        &self.data[k * n..(k + 1) * n]
    }

    #[inline]
    pub fn get(&self, k: usize, r: usize) -> f64 {
        debug_assert!(k < self.n_slots && r < self.funcs.len());
        self.data[k * self.funcs.len() + r]
    }

    /// Number of derivative slots evaluated.
    pub fn n_slots(&self) -> usize {
        self.n_slots
    }
}

/// Inclusive cell range supporting the B-spline with index `a`.
pub(crate) fn support_range(a: usize, p: usize, n: usize) -> (usize, usize) {
    (a.saturating_sub(p), a.min(n - 1))
}

fn clamp_index(x: f64, n: usize) -> usize {
    let k = libm::floor(x * n as f64);
    if k < 0.0 {
        0
    } else {
        (k as usize).min(n - 1)
    }
}

/// Applies the tensor two-scale relation to local coefficients `row`
/// (layout `ay * q + ax`) in place.
pub(crate) fn subdivide(row: &mut [f64], sx: &[f64], sy: &[f64], q: usize, buf: &mut [f64]) {
    for ay in 0..q {
        for bx in 0..q {
            let mut s = 0.0;
            for ax in 0..q {
                s += row[ay * q + ax] * sx[ax * q + bx];
            }
            buf[ay * q + bx] = s;
        }
    }
    for by in 0..q {
        for bx in 0..q {
            let mut s = 0.0;
            for ay in 0..q {
                s += buf[ay * q + bx] * sy[ay * q + by];
            }
            row[by * q + bx] = s;
        }
    }
}
