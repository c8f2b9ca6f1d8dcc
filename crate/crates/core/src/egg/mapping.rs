use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;

use super::projection::BoundaryProjection;
use super::residual::{egg_system, EggSystem};
use crate::assembly::{gauss_rule, CsrMatrix};
use crate::spline::{BasisValues, BoundaryIndexSet, HierarchicalSpace, Side, SplineFunction};
use crate::{Error, Result};

/// Scatters inner and boundary coefficient vectors into the interleaved
/// full coefficient vector.
pub fn combine_coefficients(bis: &BoundaryIndexSet, c_i: &[f64], c_b: &[f64]) -> Vec<f64> {
    let n = bis.n_inner() + bis.n_boundary();
    let mut c = vec![0.0; 2 * n];
    for (p, &f) in bis.inner().iter().enumerate() {
        c[2 * f] = c_i[2 * p];
        c[2 * f + 1] = c_i[2 * p + 1];
    }
    for (p, &f) in bis.boundary().iter().enumerate() {
        c[2 * f] = c_b[2 * p];
        c[2 * f + 1] = c_b[2 * p + 1];
    }
    c
}

/// Extracts the inner (`boundary = false`) or boundary coefficients.
pub fn split_coefficients(bis: &BoundaryIndexSet, c: &[f64], boundary: bool) -> Vec<f64> {
    let list = if boundary { bis.boundary() } else { bis.inner() };
    list.iter().flat_map(|&f| [c[2 * f], c[2 * f + 1]]).collect()
}

/// Converged EGG mapping together with the data its sensitivities need.
#[derive(Debug, Clone)]
pub struct GeometryMapping {
    projection: BoundaryProjection,
    c_i: Vec<f64>,
    function: SplineFunction,
    system: Option<EggSystem>,
    fold_free: bool,
}

impl GeometryMapping {
    /// Wraps coefficients without solving anything.
    pub fn from_parts(projection: BoundaryProjection, c_i: Vec<f64>) -> Result<Self> {
        let bis = projection.boundary_set();
        if c_i.len() != 2 * bis.n_inner() {
            return Err(Error::DimensionMismatch { expected: 2 * bis.n_inner(), got: c_i.len() });
        }
        let c = combine_coefficients(bis, &c_i, projection.c_b());
        let function = SplineFunction::new(projection.space().clone(), 2, c)?;
        Ok(Self { projection, c_i, function, system: None, fold_free: false })
    }

    pub(crate) fn set_system(&mut self, system: EggSystem) {
        self.system = Some(system);
    }

    pub(crate) fn set_fold_free(&mut self, v: bool) {
        self.fold_free = v;
    }

    pub fn space(&self) -> &Arc<HierarchicalSpace> {
        self.projection.space()
    }

    pub fn boundary_set(&self) -> &BoundaryIndexSet {
        self.projection.boundary_set()
    }

    pub fn projection(&self) -> &BoundaryProjection {
        &self.projection
    }

    pub fn c_i(&self) -> &[f64] {
        &self.c_i
    }

    pub fn c_b(&self) -> &[f64] {
        self.projection.c_b()
    }

    /// Interleaved coefficients of all functions.
    pub fn coefficients(&self) -> &[f64] {
        self.function.coeffs()
    }

    pub fn function(&self) -> &SplineFunction {
        &self.function
    }

    pub fn fold_free(&self) -> bool {
        self.fold_free
    }

    /// EGG residual and Jacobian blocks at the current coefficients,
    /// assembled once and cached.
    pub fn system(&mut self) -> Result<&EggSystem> {
        if !matches!(&self.system, Some(s) if s.jacobian.is_some()) {
            self.system = Some(egg_system(&self.function, self.boundary_set(), true)?);
        }
        Ok(self.system.as_ref().unwrap())
    }

    pub fn cached_system(&self) -> Option<&EggSystem> {
        self.system.as_ref().filter(|s| s.jacobian.is_some())
    }

    /// `dF/dc_B` at the converged point.
    pub fn df_dcb(&mut self) -> Result<&CsrMatrix> {
        Ok(&self.system()?.jacobian.as_ref().unwrap().1)
    }

    /// `(x, y, det J)` at a parametric point.
    pub fn eval(&self, xi: f64, eta: f64) -> Result<[f64; 3]> {
        let v = self.function.evaluate(xi, eta, 1)?;
        Ok([v[0], v[1], v[2] * v[5] - v[4] * v[3]])
    }

    /// Uniform `n x n` grid of `(xi, eta, x, y, det J)`, row-major in `eta`.
    pub fn sample_grid(&self, n: usize) -> Result<Vec<[f64; 5]>> {
        let mut out = Vec::with_capacity(n * n);
        for j in 0..n {
            let eta = j as f64 / (n - 1).max(1) as f64;
            for i in 0..n {
                let xi = i as f64 / (n - 1).max(1) as f64;
                let [x, y, d] = self.eval(xi, eta)?;
                out.push([xi, eta, x, y, d]);
            }
        }
        Ok(out)
    }

    /// Trace of the mapping on a side.
    pub fn trace(&self, side: Side, s: f64) -> Result<[f64; 2]> {
        let [x, y] = side.point(s);
        let v = self.function.evaluate(x, y, 0)?;
        Ok([v[0], v[1]])
    }
}

/// Cells on which `det J <= 0` at any sample point: the quadrature points,
/// the four corners, the center and a 4x4 uniform grid.
pub fn detect_folds(mapping: &SplineFunction) -> Result<Vec<usize>> {
    let space = mapping.space();
    let rule = gauss_rule(2 * (space.degree() + 1))?;
    let mut local: Vec<(f64, f64)> = Vec::new();
    for &y in &rule.points {
        for &x in &rule.points {
            local.push((x, y));
        }
    }
    for (x, y) in [(0.0, 0.0), (1.0, 0.0), (0.0, 1.0), (1.0, 1.0), (0.5, 0.5)] {
        local.push((x, y));
    }
    for j in 0..4 {
        for i in 0..4 {
            local.push(((i as f64 + 0.5) / 4.0, (j as f64 + 0.5) / 4.0));
        }
    }
    let mut bv = BasisValues::new();
    let mut v = [0.0; 6];
    let mut out = Vec::new();
    for (id, c) in space.cells().iter().enumerate() {
        let (hx, hy) = (c.bounds[0][1] - c.bounds[0][0], c.bounds[1][1] - c.bounds[1][0]);
        for &(u, w) in &local {
            let (x, y) = (c.bounds[0][0] + u * hx, c.bounds[1][0] + w * hy);
            space.eval_in_cell(id, x, y, 1, &mut bv);
            mapping.combine(&bv, 3, &mut v);
            let det = v[2] * v[5] - v[4] * v[3];
            if !(det > 0.0) {
                out.push(id);
                break;
            }
        }
    }
    Ok(out)
}

/// Coons-patch interpolation of the boundary trace, sampled at the Greville
/// points of the inner functions.
pub fn initial_interior_guess(projection: &BoundaryProjection) -> Result<Vec<f64>> {
    let space = projection.space();
    let bis = projection.boundary_set();
    let mut c_i = Vec::with_capacity(2 * bis.n_inner());
    let corner = |side: Side, s: f64| projection.eval(side, s);
    let p00 = corner(Side::South, 0.0)?;
    let p10 = corner(Side::South, 1.0)?;
    let p01 = corner(Side::North, 0.0)?;
    let p11 = corner(Side::North, 1.0)?;
    for &f in bis.inner() {
        let key = space.function(f);
        let u = space.knots(key.level, 0).greville(key.i);
        let v = space.knots(key.level, 1).greville(key.j);
        let s = projection.eval(Side::South, u)?;
        let n = projection.eval(Side::North, u)?;
        let w = projection.eval(Side::West, v)?;
        let e = projection.eval(Side::East, v)?;
        for k in 0..2 {
            let lin = (1.0 - v) * s[k] + v * n[k] + (1.0 - u) * w[k] + u * e[k];
            let bil = (1.0 - u) * (1.0 - v) * p00[k] + u * (1.0 - v) * p10[k] + (1.0 - u) * v * p01[k] + u * v * p11[k];
            c_i.push(lin - bil);
        }
    }
    Ok(c_i)
}
