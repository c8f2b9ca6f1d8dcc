//! Generic pointwise-kernel assembly.
//!
//! A vector kernel returns the coefficients `(R0, R1, R2)` of the test jet
//! `(phi, phi_xi, phi_eta)` at a quadrature point, so that
//! `B_i = sum_qp w (R0 phi_i + R1 phi_i,xi + R2 phi_i,eta)`. A scalar kernel
//! returns the integrand of a functional. Both see the state jet
//! `(u, u_xi, u_eta)`, the geometry jet (slot-major, see [`GEO_JET`]) and the
//! design vector, and are evaluated with `f64` or with dual numbers to get
//! exact partials.

use alloc::vec;
use alloc::vec::Vec;

use crate::assembly::{CsrMatrix, ElementData, Integrator, Trial};
use crate::dual::{Dual, Scalar};
use crate::spline::{HierarchicalSpace, Side, SplineFunction};
use crate::{Error, Result};

/// `(u, u_xi, u_eta)`.
pub const STATE_JET: usize = 3;
/// `(x, y, x_xi, y_xi, x_eta, y_eta, x_xixi, y_xixi, x_xieta, y_xieta,
/// x_etaeta, y_etaeta)`.
pub const GEO_JET: usize = 12;
/// Largest design vector the dual-number passes support.
pub const MAX_PARAMS: usize = 12;

const NJ: usize = STATE_JET + GEO_JET;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KernelPoint {
    /// Parametric point.
    pub xi: [f64; 2],
    /// Set on boundary integrals.
    pub side: Option<Side>,
}

pub trait VectorKernel {
    fn eval<T: Scalar>(&self, p: &KernelPoint, s: &[T; STATE_JET], g: &[T; GEO_JET], a: &[T]) -> Result<[T; 3]>;
}

pub trait ScalarKernel {
    fn eval<T: Scalar>(&self, p: &KernelPoint, s: &[T; STATE_JET], g: &[T; GEO_JET], a: &[T]) -> Result<T>;
}

/// Which partials to assemble.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Want {
    pub state: bool,
    pub geo: bool,
    pub alpha: bool,
}

impl Want {
    pub const VALUE: Want = Want { state: false, geo: false, alpha: false };
    pub const STATE: Want = Want { state: true, geo: false, alpha: false };
    pub const ALL: Want = Want { state: true, geo: true, alpha: true };
}

/// Everything a kernel assembly needs: the mapping (on the geometry space),
/// the state space (which refines the geometry space), the state
/// coefficients and the design vector.
#[derive(Debug, Clone, Copy)]
pub struct Discretization<'a> {
    pub mapping: &'a SplineFunction,
    pub state_space: &'a HierarchicalSpace,
    pub state: &'a [f64],
    pub alpha: &'a [f64],
    /// Derivative order of the mapping the kernels need (1 or 2).
    pub geo_order: usize,
}

impl Discretization<'_> {
    pub fn n_state(&self) -> usize {
        self.state_space.dim()
    }

    pub fn n_geo(&self) -> usize {
        self.mapping.coeffs().len()
    }

    fn check(&self) -> Result<()> {
        if self.state.len() != self.state_space.dim() {
            return Err(Error::DimensionMismatch { expected: self.state_space.dim(), got: self.state.len() });
        }
        if self.alpha.len() > MAX_PARAMS {
            return Err(Error::InvalidArgument("design vector too long for the dual passes".into()));
        }
        Ok(())
    }

    fn integrator(&self) -> Result<Integrator<'_>> {
        self.check()?;
        Integrator::new(self.state_space, Some(self.mapping), 1, self.geo_order)
    }
}

/// Assembled vector kernel with its requested partials.
#[derive(Debug, Clone)]
pub struct VectorOut {
    pub value: Vec<f64>,
    pub d_state: Option<CsrMatrix>,
    pub d_geo: Option<CsrMatrix>,
    /// Row-major `n_state x n_alpha`.
    pub d_alpha: Option<Vec<f64>>,
}

/// Assembled scalar functional with its requested partials (empty vectors
/// when not requested).
#[derive(Debug, Clone, Default)]
pub struct ScalarOut {
    pub value: f64,
    pub d_state: Vec<f64>,
    pub d_geo: Vec<f64>,
    pub d_alpha: Vec<f64>,
}

fn jets(ed: &ElementData, state: &[f64]) -> ([f64; STATE_JET], [f64; GEO_JET]) {
    let t = ed.test;
    let mut s = [0.0; STATE_JET];
    for (r, &f) in t.funcs.iter().enumerate() {
        let c = state[f];
        if c != 0.0 {
            for (k, sk) in s.iter_mut().enumerate() {
                *sk += c * t.get(k, r);
            }
        }
    }
    let m = ed.map.unwrap();
    let mut g = [0.0; GEO_JET];
    for k in 0..2 {
        g[k] = m.x[k];
        g[2 + k] = m.jac[k][0];
        g[4 + k] = m.jac[k][1];
        for d in 0..3 {
            g[6 + 2 * d + k] = m.hess[k][d];
        }
    }
    (s, g)
}

fn seeded<const N: usize, const M: usize>(v: &[f64; M], offset: usize) -> [Dual<N>; M] {
    core::array::from_fn(|i| if offset + i < N { Dual::var(v[i], offset + i) } else { Dual::constant(v[i]) })
}

fn consts<const N: usize>(v: &[f64]) -> Vec<Dual<N>> {
    v.iter().map(|&x| Dual::constant(x)).collect()
}

fn alpha_seeded(a: &[f64]) -> Vec<Dual<MAX_PARAMS>> {
    a.iter().enumerate().map(|(j, &x)| Dual::var(x, j)).collect()
}

fn point(ed: &ElementData) -> KernelPoint {
    KernelPoint { xi: ed.point, side: ed.side }
}

/// Assembles a vector kernel over the domain or the boundary. `row_scale`
/// multiplies the contribution of test function `i` by `row_scale[i]`.
pub fn assemble_vector<K: VectorKernel>(
    disc: &Discretization,
    kernel: &K,
    boundary: bool,
    want: Want,
    row_scale: Option<&[f64]>,
) -> Result<VectorOut> {
    let it = disc.integrator()?;
    let n = disc.n_state();
    let na = disc.alpha.len();
    let mut trials = Vec::new();
    if want.state {
        trials.push((Trial::Test, 1));
    }
    if want.geo {
        trials.push((Trial::Geometry, 2));
    }
    let geo_slot = usize::from(want.state);
    let mut d_alpha = want.alpha.then(|| vec![0.0; n * na]);
    let a_f64 = disc.alpha;
    let a_d15: Vec<Dual<NJ>> = consts(disc.alpha);
    let a_d3: Vec<Dual<STATE_JET>> = consts(disc.alpha);
    let a_da = alpha_seeded(disc.alpha);
    let mut tc = Vec::new();
    let (value, mut jacs) = it.assemble_multi(1, &trials, boundary, |ed, lres, ljacs| {
        let p = point(ed);
        let (s, g) = jets(ed, disc.state);
        let t = ed.test;
        let nt = t.len();
        let (phi, px, py) = (t.slot(0), t.slot(1), t.slot(2));
        let sc = |r: usize| ed.weight * row_scale.map_or(1.0, |rs| rs[t.funcs[r]]);
        // value and state/geometry partials of (R0, R1, R2)
        let mut rv = [0.0; 3];
        let mut dr = [[0.0; NJ]; 3];
        if want.geo {
            let sd: [Dual<NJ>; STATE_JET] = seeded(&s, 0);
            let gd: [Dual<NJ>; GEO_JET] = seeded(&g, STATE_JET);
            let r = kernel.eval(&p, &sd, &gd, &a_d15)?;
            for k in 0..3 {
                rv[k] = r[k].v;
                dr[k] = r[k].d;
            }
        } else if want.state {
            let sd: [Dual<STATE_JET>; STATE_JET] = seeded(&s, 0);
            let gd: [Dual<STATE_JET>; GEO_JET] = core::array::from_fn(|i| Dual::constant(g[i]));
            let r = kernel.eval(&p, &sd, &gd, &a_d3)?;
            for k in 0..3 {
                rv[k] = r[k].v;
                dr[k][..STATE_JET].copy_from_slice(&r[k].d);
            }
        } else {
            rv = kernel.eval(&p, &s, &g, a_f64)?;
        }
        for r in 0..nt {
            lres[r] += sc(r) * (rv[0] * phi[r] + rv[1] * px[r] + rv[2] * py[r]);
        }
        if want.state {
            let lj = &mut ljacs[0];
            tc.clear();
            for c in 0..nt {
                let tr = [phi[c], px[c], py[c]];
                let v: [f64; 3] = core::array::from_fn(|k| (0..3).map(|m| dr[k][m] * tr[m]).sum());
                tc.push(v);
            }
            for r in 0..nt {
                let w = sc(r);
                let (a, b, c0) = (phi[r] * w, px[r] * w, py[r] * w);
                if a == 0.0 && b == 0.0 && c0 == 0.0 {
                    continue;
                }
                let row = &mut lj[r * nt..(r + 1) * nt];
                for (c, v) in tc.iter().enumerate() {
                    row[c] += a * v[0] + b * v[1] + c0 * v[2];
                }
            }
        }
        if want.geo {
            let gb = ed.geo.unwrap();
            let ng = gb.len();
            let slots = gb.n_slots().min(6);
            let lj = &mut ljacs[geo_slot];
            tc.clear();
            for c in 0..ng {
                for l in 0..2 {
                    let v: [f64; 3] = core::array::from_fn(|k| {
                        (0..slots).map(|sl| dr[k][STATE_JET + 2 * sl + l] * gb.get(sl, c)).sum()
                    });
                    tc.push(v);
                }
            }
            for r in 0..nt {
                let w = sc(r);
                let (a, b, c0) = (phi[r] * w, px[r] * w, py[r] * w);
                if a == 0.0 && b == 0.0 && c0 == 0.0 {
                    continue;
                }
                let row = &mut lj[r * 2 * ng..(r + 1) * 2 * ng];
                for (c, v) in tc.iter().enumerate() {
                    row[c] += a * v[0] + b * v[1] + c0 * v[2];
                }
            }
        }
        if let Some(da) = d_alpha.as_mut() {
            let sd: [Dual<MAX_PARAMS>; STATE_JET] = core::array::from_fn(|i| Dual::constant(s[i]));
            let gd: [Dual<MAX_PARAMS>; GEO_JET] = core::array::from_fn(|i| Dual::constant(g[i]));
            let r = kernel.eval(&p, &sd, &gd, &a_da)?;
            for (q, &f) in t.funcs.iter().enumerate() {
                let w = sc(q);
                for j in 0..na {
                    da[f * na + j] += w * (r[0].d[j] * phi[q] + r[1].d[j] * px[q] + r[2].d[j] * py[q]);
                }
            }
        }
        Ok(())
    })?;
    let d_geo = want.geo.then(|| jacs.pop().unwrap());
    let d_state = want.state.then(|| jacs.pop().unwrap());
    Ok(VectorOut { value, d_state, d_geo, d_alpha })
}

/// Integrates a scalar kernel over the domain or the boundary.
pub fn assemble_scalar<K: ScalarKernel>(
    disc: &Discretization,
    kernel: &K,
    boundary: bool,
    want: Want,
) -> Result<ScalarOut> {
    let it = disc.integrator()?;
    let na = disc.alpha.len();
    let mut out = ScalarOut {
        value: 0.0,
        d_state: if want.state { vec![0.0; disc.n_state()] } else { Vec::new() },
        d_geo: if want.geo { vec![0.0; disc.n_geo()] } else { Vec::new() },
        d_alpha: if want.alpha { vec![0.0; na] } else { Vec::new() },
    };
    let a_d15: Vec<Dual<NJ>> = consts(disc.alpha);
    let a_da = alpha_seeded(disc.alpha);
    it.for_each_point(boundary, |ed| {
        let p = point(ed);
        let (s, g) = jets(ed, disc.state);
        let w = ed.weight;
        if want.state || want.geo {
            let sd: [Dual<NJ>; STATE_JET] = seeded(&s, 0);
            let gd: [Dual<NJ>; GEO_JET] = seeded(&g, STATE_JET);
            let r = kernel.eval(&p, &sd, &gd, &a_d15)?;
            out.value += w * r.v;
            if want.state {
                let t = ed.test;
                for (q, &f) in t.funcs.iter().enumerate() {
                    out.d_state[f] += w * (r.d[0] * t.get(0, q) + r.d[1] * t.get(1, q) + r.d[2] * t.get(2, q));
                }
            }
            if want.geo {
                let gb = ed.geo.unwrap();
                let slots = gb.n_slots().min(6);
                for (q, &f) in gb.funcs.iter().enumerate() {
                    for l in 0..2 {
                        let v: f64 = (0..slots).map(|sl| r.d[STATE_JET + 2 * sl + l] * gb.get(sl, q)).sum();
                        out.d_geo[2 * f + l] += w * v;
                    }
                }
            }
        } else {
            out.value += w * kernel.eval(&p, &s, &g, disc.alpha)?;
        }
        if want.alpha {
            let sd: [Dual<MAX_PARAMS>; STATE_JET] = core::array::from_fn(|i| Dual::constant(s[i]));
            let gd: [Dual<MAX_PARAMS>; GEO_JET] = core::array::from_fn(|i| Dual::constant(g[i]));
            let r = kernel.eval(&p, &sd, &gd, &a_da)?;
            for j in 0..na {
                out.d_alpha[j] += w * r.d[j];
            }
        }
        Ok(())
    })?;
    Ok(out)
}
