//! Boundary template of the cooling element: a `2 x 1` rectangle whose
//! south, east and north sides carry circular notches where the coolers
//! sit. Each notch is the cooler circle joined to the straight side by two
//! fillet arcs of radius `ρ = fillet_ratio * R`, so every side is C¹. Sides
//! are parameterized by normalized arc length.

use alloc::format;
use alloc::vec::Vec;
use core::f64::consts::PI;

use crate::dual::{Dual, Scalar};
use crate::egg::BoundaryCurve;
use crate::spline::Side;
use crate::{Error, Result};

/// Number of coolers.
pub const N_COOLERS: usize = 4;
/// Length of the design vector `(x1, y1, ..., x4, y4, R1, ..., R4)`.
pub const N_DESIGN: usize = 3 * N_COOLERS;
/// Number of geometric inequality constraints.
pub const N_GEOMETRIC: usize = 30;

/// Rectangle side a cooler sits on. The west side is the heated inlet and
/// never carries a cooler.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CoolerSide {
    South,
    East,
    North,
}

impl CoolerSide {
    /// Local frame: origin, tangent, inward normal, side length and the
    /// extent of the rectangle along the inward normal.
    pub fn frame(self) -> SideFrame {
        match self {
            CoolerSide::South => SideFrame { origin: [0.0, 0.0], tangent: [1.0, 0.0], normal: [0.0, 1.0], length: 2.0, depth: 1.0 },
            CoolerSide::East => SideFrame { origin: [2.0, 0.0], tangent: [0.0, 1.0], normal: [-1.0, 0.0], length: 1.0, depth: 2.0 },
            CoolerSide::North => SideFrame { origin: [0.0, 1.0], tangent: [1.0, 0.0], normal: [0.0, -1.0], length: 2.0, depth: 1.0 },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SideFrame {
    pub origin: [f64; 2],
    pub tangent: [f64; 2],
    pub normal: [f64; 2],
    pub length: f64,
    pub depth: f64,
}

impl SideFrame {
    /// Physical point of local coordinates `(a, b)`.
    pub fn to_physical<T: Scalar>(&self, a: T, b: T) -> [T; 2] {
        core::array::from_fn(|k| a * self.tangent[k] + b * self.normal[k] + self.origin[k])
    }

    /// Local coordinates of a physical point.
    pub fn to_local<T: Scalar>(&self, x: [T; 2]) -> (T, T) {
        let d = [x[0] - self.origin[0], x[1] - self.origin[1]];
        (d[0] * self.tangent[0] + d[1] * self.tangent[1], d[0] * self.normal[0] + d[1] * self.normal[1])
    }
}

/// One notch in local side coordinates.
#[derive(Debug, Clone, Copy)]
pub struct Notch<T> {
    /// Tangential position of the cooler center.
    pub a: T,
    /// Inward offset of the cooler center.
    pub b: T,
    pub r: T,
    pub rho: T,
    /// Half-width of the notch along the side: the fillets touch the side at
    /// `a ± w`.
    pub w: T,
    /// Angle at the left fillet between its start (pointing at the side) and
    /// the tangent point with the cooler, minus `π/2`.
    pub theta: T,
    pub cooler: usize,
}

impl<T: Scalar> Notch<T> {
    fn new(a: T, b: T, r: T, fillet_ratio: f64, cooler: usize) -> Result<Self> {
        let rho = r * fillet_ratio;
        let w2 = (r + rho).square() - (rho - b).square();
        if !(r.re() > 0.0) || !(w2.re() > 0.0) {
            return Err(Error::Template(format!("cooler {} does not cut its side", cooler + 1)));
        }
        let w = w2.sqrt();
        let theta = (b - rho).atan2(w);
        Ok(Self { a, b, r, rho, w, theta, cooler })
    }

    /// Lengths of the left fillet, the cooler arc and the right fillet.
    fn arc_lengths(&self) -> [T; 3] {
        let fil = self.rho * (self.theta + PI / 2.0);
        [fil, self.r * (self.theta * 2.0 + PI), fil]
    }

    /// Point at arc length `t` along piece `k` (0: left fillet, 1: cooler,
    /// 2: right fillet), local coordinates.
    fn piece_point(&self, k: usize, t: T) -> (T, T) {
        match k {
            0 => {
                let ang = t / self.rho - PI / 2.0;
                (self.a - self.w + self.rho * ang.cos(), self.rho + self.rho * ang.sin())
            }
            1 => {
                let ang = self.theta + PI - t / self.r;
                (self.a + self.r * ang.cos(), self.b + self.r * ang.sin())
            }
            _ => {
                let ang = T::cst(PI) - self.theta + t / self.rho;
                (self.a + self.w + self.rho * ang.cos(), self.rho + self.rho * ang.sin())
            }
        }
    }
}

/// Placement rules and geometric tolerances of the template.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CoolingTemplate {
    pub sides: [CoolerSide; N_COOLERS],
    /// Fillet radius relative to the cooler radius.
    pub fillet_ratio: f64,
    /// Smallest admissible radius.
    pub r_min: f64,
    /// Clearance between a notch and the corners / the opposite side.
    pub e_min: f64,
    /// Admissible inward offset of a center, relative to its radius.
    pub band: f64,
}

impl Default for CoolingTemplate {
    fn default() -> Self {
        Self {
            sides: [CoolerSide::South, CoolerSide::North, CoolerSide::North, CoolerSide::East],
            fillet_ratio: 0.05,
            r_min: 0.03,
            e_min: 0.02,
            band: 0.25,
        }
    }
}

impl CoolingTemplate {
    /// Center and radius of cooler `i`.
    pub fn cooler<T: Scalar>(&self, alpha: &[T], i: usize) -> ([T; 2], T) {
        ([alpha[2 * i], alpha[2 * i + 1]], alpha[2 * N_COOLERS + i])
    }

    /// Local `(a, b, R)` of cooler `i` on its side.
    pub fn local<T: Scalar>(&self, alpha: &[T], i: usize) -> (T, T, T) {
        let (x, r) = self.cooler(alpha, i);
        let (a, b) = self.sides[i].frame().to_local(x);
        (a, b, r)
    }

    /// Design whose coolers sit on their sides at the given tangential
    /// positions with zero inward offset.
    pub fn design(&self, positions: [f64; N_COOLERS], radii: [f64; N_COOLERS]) -> Vec<f64> {
        let mut alpha = alloc::vec![0.0; N_DESIGN];
        for i in 0..N_COOLERS {
            let x = self.sides[i].frame().to_physical(positions[i], 0.0);
            alpha[2 * i] = x[0];
            alpha[2 * i + 1] = x[1];
            alpha[2 * N_COOLERS + i] = radii[i];
        }
        alpha
    }

    /// Notches on `side`, sorted along it; fails when notches overlap or
    /// leave the side.
    pub fn notches<T: Scalar>(&self, alpha: &[T], side: CoolerSide) -> Result<Vec<Notch<T>>> {
        if alpha.len() != N_DESIGN {
            return Err(Error::DimensionMismatch { expected: N_DESIGN, got: alpha.len() });
        }
        let frame = side.frame();
        let mut out = Vec::new();
        for i in (0..N_COOLERS).filter(|&i| self.sides[i] == side) {
            let (a, b, r) = self.local(alpha, i);
            out.push(Notch::new(a, b, r, self.fillet_ratio, i)?);
        }
        out.sort_by(|p, q| p.a.re().total_cmp(&q.a.re()));
        let mut end = 0.0;
        for n in &out {
            let lo = (n.a - n.w).re();
            if lo < end - 1e-14 {
                return Err(Error::Template(format!("notch of cooler {} overlaps its neighbor or the corner", n.cooler + 1)));
            }
            end = (n.a + n.w).re();
        }
        if end > frame.length + 1e-14 {
            return Err(Error::Template("notch reaches past the side end".into()));
        }
        Ok(out)
    }

    /// Point of physical side `side` at normalized arc length `s`.
    pub fn side_point<T: Scalar>(&self, alpha: &[T], side: CoolerSide, s: f64) -> Result<[T; 2]> {
        let frame = side.frame();
        let notches = self.notches(alpha, side)?;
        // piece lengths in walking order
        let mut lens: Vec<T> = Vec::with_capacity(4 * notches.len() + 1);
        let mut pos = T::zero();
        for n in &notches {
            lens.push(n.a - n.w - pos);
            lens.extend_from_slice(&n.arc_lengths());
            pos = n.a + n.w;
        }
        lens.push(T::cst(frame.length) - pos);
        let total = lens.iter().fold(T::zero(), |acc, &l| acc + l);
        let target = total * s;
        let mut start = T::zero();
        let mut a0 = T::zero();
        for (k, &len) in lens.iter().enumerate() {
            let last = k + 1 == lens.len();
            if last || target.re() <= (start + len).re() {
                let t = target - start;
                let (a, b) = if k % 4 == 0 {
                    (a0 + t, T::zero())
                } else {
                    notches[k / 4].piece_point(k % 4 - 1, t)
                };
                return Ok(frame.to_physical(a, b));
            }
            start += len;
            if k % 4 == 3 {
                let n = &notches[k / 4];
                a0 = n.a + n.w;
            }
        }
        unreachable!()
    }

    /// Total length of the physical side.
    pub fn side_length(&self, alpha: &[f64], side: CoolerSide) -> Result<f64> {
        let notches = self.notches(alpha, side)?;
        let mut len = side.frame().length;
        for n in &notches {
            len += n.arc_lengths().iter().sum::<f64>() - 2.0 * n.w;
        }
        Ok(len)
    }

    /// The geometric inequalities `g >= 0`, in the order: pairwise
    /// separation (6), clearance (4 per cooler: both corners, the opposite
    /// side, the minimal radius) and the offset band (2 per cooler).
    pub fn constraints<T: Scalar>(&self, alpha: &[T]) -> Vec<T> {
        let mut g = Vec::with_capacity(N_GEOMETRIC);
        let half_width = |i: usize| {
            let (_, b, r) = self.local(alpha, i);
            let rho = r * self.fillet_ratio;
            ((r + rho).square() - (rho - b).square()).sqrt()
        };
        for i in 0..N_COOLERS {
            for j in i + 1..N_COOLERS {
                if self.sides[i] == self.sides[j] {
                    let (ai, ..) = self.local(alpha, i);
                    let (aj, ..) = self.local(alpha, j);
                    g.push(aj - ai - half_width(i) - half_width(j));
                } else {
                    let (xi, ri) = self.cooler(alpha, i);
                    let (xj, rj) = self.cooler(alpha, j);
                    let d = ((xi[0] - xj[0]).square() + (xi[1] - xj[1]).square()).sqrt();
                    g.push(d - (ri + rj) * (1.0 + self.fillet_ratio));
                }
            }
        }
        for i in 0..N_COOLERS {
            let f = self.sides[i].frame();
            let (a, b, r) = self.local(alpha, i);
            let reach = r * (1.0 + self.fillet_ratio);
            g.push(a - reach - self.e_min);
            g.push(T::cst(f.length) - a - reach - self.e_min);
            g.push(T::cst(f.depth) - b - r - self.e_min);
            g.push(r - self.r_min);
        }
        for i in 0..N_COOLERS {
            let (_, b, r) = self.local(alpha, i);
            g.push(r * self.band - b);
            g.push(b + r * self.band);
        }
        g
    }

    /// Constraint values and their Jacobian (row-major `30 x 12`).
    pub fn constraint_jacobian(&self, alpha: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let ad: Vec<Dual<N_DESIGN>> = alpha.iter().enumerate().map(|(j, &v)| Dual::var(v, j)).collect();
        let g = self.constraints(&ad);
        let vals = g.iter().map(|v| v.v).collect();
        let jac = g.iter().flat_map(|v| v.d).collect();
        (vals, jac)
    }
}

impl BoundaryCurve for CoolingTemplate {
    fn n_params(&self) -> usize {
        N_DESIGN
    }

    fn eval(&self, side: Side, s: f64, alpha: &[f64]) -> Result<[f64; 2]> {
        match side {
            Side::West => Ok([0.0, s]),
            _ => self.side_point(alpha, cooler_side(side), s),
        }
    }

    fn d_dalpha(&self, side: Side, s: f64, alpha: &[f64]) -> Result<Vec<[f64; 2]>> {
        if side == Side::West {
            return Ok(alloc::vec![[0.0; 2]; N_DESIGN]);
        }
        let ad: Vec<Dual<N_DESIGN>> = alpha.iter().enumerate().map(|(j, &v)| Dual::var(v, j)).collect();
        let p = self.side_point(&ad, cooler_side(side), s)?;
        Ok((0..N_DESIGN).map(|j| [p[0].d[j], p[1].d[j]]).collect())
    }
}

fn cooler_side(side: Side) -> CoolerSide {
    match side {
        Side::South => CoolerSide::South,
        Side::East => CoolerSide::East,
        _ => CoolerSide::North,
    }
}
