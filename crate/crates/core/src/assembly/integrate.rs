use alloc::vec;
use alloc::vec::Vec;

use super::quadrature::{gauss_rule, QuadratureRule};
use super::sparse::{CsrMatrix, PatternBuilder};
use crate::spline::{deriv_slots, BasisValues, HierarchicalSpace, Side, SplineFunction};
use crate::{Error, Result};

/// Geometry mapping evaluated at one point.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct MapPoint {
    pub x: [f64; 2],
    /// `jac[k][d] = d x_k / d xi_d`
    pub jac: [[f64; 2]; 2],
    /// Second derivatives of component `k`: `xixi, xieta, etaeta`.
    pub hess: [[f64; 3]; 2],
    pub det: f64,
}

impl MapPoint {
    fn from_values(v: &[f64], with_hess: bool) -> Self {
        // v is laid out slot * 2 + k
        let mut m = MapPoint { x: [v[0], v[1]], ..Default::default() };
        for k in 0..2 {
            m.jac[k] = [v[2 + k], v[4 + k]];
            if with_hess {
                m.hess[k] = [v[6 + k], v[8 + k], v[10 + k]];
            }
        }
        m.det = m.jac[0][0] * m.jac[1][1] - m.jac[0][1] * m.jac[1][0];
        m
    }
}

/// Everything known at one quadrature point.
#[derive(Debug)]
pub struct ElementData<'a> {
    /// Cell of the test space.
    pub cell: usize,
    pub point: [f64; 2],
    /// Quadrature weight including the cell (or edge) measure.
    pub weight: f64,
    /// Set for boundary integrals.
    pub side: Option<Side>,
    pub test: &'a BasisValues,
    /// Basis of the mapping's space at the point; `None` without mapping.
    pub geo: Option<&'a BasisValues>,
    pub map: Option<&'a MapPoint>,
}

/// Unknowns differentiated against in [`Integrator::assemble`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Trial {
    /// Coefficients in the test space.
    Test,
    /// Coefficients of the geometry mapping.
    Geometry,
}

/// Residual vector with an optional Jacobian from the same element loop.
#[derive(Debug, Clone)]
pub struct AssemblyOutput {
    pub residual: Vec<f64>,
    pub jacobian: Option<CsrMatrix>,
}

/// Gauss quadrature element loop over the active cells of a test space,
/// optionally carrying a geometry mapping defined on the same or a coarser
/// space.
#[derive(Debug, Clone)]
pub struct Integrator<'a> {
    space: &'a HierarchicalSpace,
    mapping: Option<&'a SplineFunction>,
    rule: QuadratureRule,
    order: usize,
    geo_order: usize,
    geo_cells: Vec<usize>,
}

impl<'a> Integrator<'a> {
    /// `order` is the derivative order needed of the test basis,
    /// `geo_order` that of the mapping (1 or 2).
    pub fn new(
        space: &'a HierarchicalSpace,
        mapping: Option<&'a SplineFunction>,
        order: usize,
        geo_order: usize,
    ) -> Result<Self> {
        let rule = gauss_rule(2 * (space.degree() + 1))?;
        Self::with_rule(space, mapping, order, geo_order, rule)
    }

    pub fn with_rule(
        space: &'a HierarchicalSpace,
        mapping: Option<&'a SplineFunction>,
        order: usize,
        geo_order: usize,
        rule: QuadratureRule,
    ) -> Result<Self> {
        let mut geo_cells = Vec::new();
        if let Some(m) = mapping {
            if m.dim() != 2 {
                return Err(Error::DimensionMismatch { expected: 2, got: m.dim() });
            }
            let gs = m.space();
            if !gs.is_refined_by(space) {
                return Err(Error::NotNested);
            }
            for c in space.cells() {
                let xm = 0.5 * (c.bounds[0][0] + c.bounds[0][1]);
                let ym = 0.5 * (c.bounds[1][0] + c.bounds[1][1]);
                geo_cells.push(gs.locate(xm, ym)?);
            }
        }
        Ok(Self { space, mapping, rule, order, geo_order: geo_order.clamp(1, 3), geo_cells })
    }

    pub fn space(&self) -> &HierarchicalSpace {
        self.space
    }

    pub fn rule(&self) -> &QuadratureRule {
        &self.rule
    }

    /// Geometry-space cell containing test cell `cell`.
    pub fn geometry_cell(&self, cell: usize) -> Option<usize> {
        self.geo_cells.get(cell).copied()
    }

    /// Quadrature points grouped by test cell: `(cell, [(xi, eta, weight, side)])`.
    fn cell_points(&self, boundary: bool) -> Vec<(usize, Vec<(f64, f64, f64, Option<Side>)>)> {
        let mut out = Vec::new();
        if boundary {
            for side in Side::ALL {
                for sc in self.space.side_cells(side) {
                    let pts = self
                        .rule
                        .mapped(sc.s0, sc.s1)
                        .map(|(s, w)| {
                            let [x, y] = side.point(s);
                            (x, y, w, Some(side))
                        })
                        .collect();
                    out.push((sc.cell, pts));
                }
            }
        } else {
            for (id, c) in self.space.cells().iter().enumerate() {
                let mut pts = Vec::with_capacity(self.rule.len() * self.rule.len());
                for (y, wy) in self.rule.mapped(c.bounds[1][0], c.bounds[1][1]) {
                    for (x, wx) in self.rule.mapped(c.bounds[0][0], c.bounds[0][1]) {
                        pts.push((x, y, wx * wy, None));
                    }
                }
                out.push((id, pts));
            }
        }
        out
    }

    /// Calls `f` at every quadrature point of the domain, or of the four
    /// sides when `boundary` is set.
    pub fn for_each_point<F>(&self, boundary: bool, mut f: F) -> Result<()>
    where
        F: FnMut(&ElementData) -> Result<()>,
    {
        let mut tb = BasisValues::new();
        let mut gb = BasisValues::new();
        let mut gv = vec![0.0; 2 * deriv_slots(self.geo_order)];
        for (cell, pts) in self.cell_points(boundary) {
            for (x, y, w, side) in pts {
                self.space.eval_in_cell(cell, x, y, self.order, &mut tb);
                let map = match self.mapping {
                    Some(m) => {
                        m.space().eval_in_cell(self.geo_cells[cell], x, y, self.geo_order, &mut gb);
                        m.combine(&gb, deriv_slots(self.geo_order), &mut gv);
                        Some(MapPoint::from_values(&gv, self.geo_order >= 2))
                    }
                    None => None,
                };
                f(&ElementData {
                    cell,
                    point: [x, y],
                    weight: w,
                    side,
                    test: &tb,
                    geo: self.mapping.map(|_| &gb),
                    map: map.as_ref(),
                })?;
            }
        }
        Ok(())
    }

    /// Joint residual/Jacobian loop. The residual has `ncomp` entries per
    /// test function (index `i * ncomp + k`). With `trial = Some((t, m))` the
    /// Jacobian against `m` components per trial function is assembled in the
    /// same pass. `f` is called at every quadrature point and adds into the
    /// local residual (`r * ncomp + k`) and the local row-major Jacobian
    /// block of the current cell, which are scattered once per cell.
    pub fn assemble<F>(
        &self,
        ncomp: usize,
        trial: Option<(Trial, usize)>,
        boundary: bool,
        mut f: F,
    ) -> Result<AssemblyOutput>
    where
        F: FnMut(&ElementData, &mut [f64], &mut [f64]) -> Result<()>,
    {
        let trials: Vec<(Trial, usize)> = trial.into_iter().collect();
        let (residual, mut jacs) = self.assemble_multi(ncomp, &trials, boundary, |ed, lres, ljacs| {
            match ljacs.first_mut() {
                Some(j) => f(ed, lres, j),
                None => f(ed, lres, &mut []),
            }
        })?;
        Ok(AssemblyOutput { residual, jacobian: jacs.pop() })
    }

    /// Like [`Self::assemble`] with several Jacobians from one loop. Local
    /// block `t` has `trials[t].1` components per trial function.
    pub fn assemble_multi<F>(
        &self,
        ncomp: usize,
        trials: &[(Trial, usize)],
        boundary: bool,
        mut f: F,
    ) -> Result<(Vec<f64>, Vec<CsrMatrix>)>
    where
        F: FnMut(&ElementData, &mut [f64], &mut [Vec<f64>]) -> Result<()>,
    {
        let n = self.space.dim();
        if trials.iter().any(|(t, _)| *t == Trial::Geometry) && self.mapping.is_none() {
            return Err(Error::InvalidArgument("geometry Jacobian requested without a mapping".into()));
        }
        let mut jacs: Vec<CsrMatrix> = trials.iter().map(|&(t, m)| self.pattern(ncomp, t, m)).collect();
        let mut residual = vec![0.0; n * ncomp];
        let mut lres = Vec::new();
        let mut ljacs: Vec<Vec<f64>> = vec![Vec::new(); trials.len()];
        let mut tb = BasisValues::new();
        let mut gb = BasisValues::new();
        let mut gv = vec![0.0; 2 * deriv_slots(self.geo_order)];
        for (cell, pts) in self.cell_points(boundary) {
            let test_funcs = self.space.cell(cell).functions();
            let nt = test_funcs.len();
            lres.clear();
            lres.resize(nt * ncomp, 0.0);
            for (t, lj) in trials.iter().zip(ljacs.iter_mut()) {
                let ncols = self.trial_funcs(cell, t.0).len() * t.1;
                lj.clear();
                lj.resize(nt * ncomp * ncols, 0.0);
            }
            for (x, y, w, side) in pts {
                self.space.eval_in_cell(cell, x, y, self.order, &mut tb);
                let map = match self.mapping {
                    Some(mp) => {
                        mp.space().eval_in_cell(self.geo_cells[cell], x, y, self.geo_order, &mut gb);
                        mp.combine(&gb, deriv_slots(self.geo_order), &mut gv);
                        Some(MapPoint::from_values(&gv, self.geo_order >= 2))
                    }
                    None => None,
                };
                let ed = ElementData {
                    cell,
                    point: [x, y],
                    weight: w,
                    side,
                    test: &tb,
                    geo: self.mapping.map(|_| &gb),
                    map: map.as_ref(),
                };
                f(&ed, &mut lres, &mut ljacs)?;
            }
            for (r, &fi) in test_funcs.iter().enumerate() {
                for k in 0..ncomp {
                    residual[fi * ncomp + k] += lres[r * ncomp + k];
                }
            }
            for ((t, lj), j) in trials.iter().zip(&ljacs).zip(jacs.iter_mut()) {
                let (tr, m) = *t;
                let trial_funcs = self.trial_funcs(cell, tr);
                let ncols = trial_funcs.len() * m;
                for (r, &fi) in test_funcs.iter().enumerate() {
                    for k in 0..ncomp {
                        let row = &lj[(r * ncomp + k) * ncols..(r * ncomp + k + 1) * ncols];
                        for (c, &gj) in trial_funcs.iter().enumerate() {
                            for l in 0..m {
                                let v = row[c * m + l];
                                if v != 0.0 {
                                    j.add(fi * ncomp + k, gj * m + l, v);
                                }
                            }
                        }
                    }
                }
            }
        }
        Ok((residual, jacs))
    }

    /// Functions whose coefficients a local Jacobian block of `cell` spans.
    pub fn trial_funcs(&self, cell: usize, trial: Trial) -> &[usize] {
        match trial {
            Trial::Test => self.space.cell(cell).functions(),
            Trial::Geometry => self.mapping.unwrap().space().cell(self.geo_cells[cell]).functions(),
        }
    }

    fn pattern(&self, ncomp: usize, trial: Trial, m: usize) -> CsrMatrix {
        let n = self.space.dim();
        let ncols = match trial {
            Trial::Test => n * m,
            Trial::Geometry => self.mapping.unwrap().space().dim() * m,
        };
        let mut b = PatternBuilder::new(n * ncomp, ncols);
        let mut rows = Vec::new();
        let mut cols = Vec::new();
        for (id, c) in self.space.cells().iter().enumerate() {
            let tf = match trial {
                Trial::Test => c.functions(),
                Trial::Geometry => self.mapping.unwrap().space().cell(self.geo_cells[id]).functions(),
            };
            rows.clear();
            for &f in c.functions() {
                rows.extend((0..ncomp).map(|k| f * ncomp + k));
            }
            cols.clear();
            for &g in tf {
                cols.extend((0..m).map(|l| g * m + l));
            }
            b.add_block(&rows, &cols);
        }
        b.build()
    }
}
