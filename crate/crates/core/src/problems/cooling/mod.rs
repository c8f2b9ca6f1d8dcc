//! Cooling-element problem: heat enters through the straight west side and
//! an internal Gaussian source and leaves through four coolers sitting in
//! notches of the other sides. The design minimizes area plus cooler cost
//! subject to a bound on the source temperature.

mod template;

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

pub use template::{CoolerSide, CoolingTemplate, Notch, SideFrame, N_COOLERS, N_DESIGN, N_GEOMETRIC};

use super::geometry::{boundary_frame, det, metric_flux, point};
use super::kernel::{assemble_scalar, assemble_vector, ScalarKernel, ScalarOut, VectorKernel, GEO_JET, STATE_JET};
use super::{Discretization, Functional, GeoOperator, KernelPoint, StateProblem, StateResidual, Want};
use crate::dual::{Dual, Scalar};
use crate::egg::BoundaryCurve;
use crate::spline::Side;
use crate::{Error, Result};

/// Physical constants of the cooling problem.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CoolingParams {
    /// Heat conductivity `d`.
    pub conductivity: f64,
    /// Internal dissipation rate `f`.
    pub dissipation: f64,
    /// Total influx `N_tot`.
    pub n_tot: f64,
    /// Width of the Gaussian source.
    pub sigma: f64,
    /// Center of the Gaussian source.
    pub source: [f64; 2],
    pub t_max: f64,
    /// Cost per squared cooler radius.
    pub cost: f64,
    /// Prefactor of the cooling rate `c R³ / |x - x_j|² (u - T_amb)`.
    pub cooling_rate: f64,
    pub ambient: f64,
    /// Upper bound of the radii in the design box.
    pub r_max: f64,
}

impl Default for CoolingParams {
    fn default() -> Self {
        Self {
            conductivity: 0.8,
            dissipation: 1e-3,
            n_tot: 10.0,
            sigma: 0.1,
            source: [1.5, 0.25],
            t_max: 80.0,
            cost: 100.0 / PI,
            cooling_rate: 1.0 / 20.0,
            ambient: 0.0,
            r_max: 0.9,
        }
    }
}

impl CoolingParams {
    /// Source amplitude `A = N_tot / (4πσ²)`.
    pub fn amplitude(&self) -> f64 {
        self.n_tot / (4.0 * PI * self.sigma * self.sigma)
    }

    fn gauss<T: Scalar>(&self, x: [T; 2]) -> T {
        let r2 = (x[0] - self.source[0]).square() + (x[1] - self.source[1]).square();
        (r2 * (-0.5 / (self.sigma * self.sigma))).exp()
    }

    /// `T(P, Q, W)` with `P = ∫_inlet u sin(πy)`, `Q = ∫ u e dS`,
    /// `W = ∫ e dS`.
    pub fn temperature<T: Scalar>(&self, p: T, q: T, w: T) -> Result<T> {
        let s2 = self.sigma * self.sigma;
        let a1 = (T::cst(1.0) - w / (4.0 * PI * s2)) * (PI / 2.0);
        let a2 = w / (8.0 * PI * PI * s2 * s2);
        let den = a1 * (2.0 / PI) + w * a2;
        if !(den.re() > 0.0) {
            return Err(Error::DegenerateGeometry(format!("temperature denominator {:.3e} is not positive", den.re())));
        }
        Ok((a1 * p + a2 * q + self.n_tot) / den)
    }
}

/// Heat balance of a state: influx against the heat removed by the
/// coolers and by dissipation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnergyBalance {
    /// Nominal influx `N_tot`.
    pub n_tot: f64,
    /// Influx of the discrete problem: inlet flux over the mapped inlet
    /// plus the source integral. Differs from `n_tot` by the boundary
    /// fitting error.
    pub influx: f64,
    pub cooling: f64,
    pub dissipation: f64,
}

impl EnergyBalance {
    /// `|influx - cooling - dissipation| / n_tot`.
    pub fn relative_imbalance(&self) -> f64 {
        (self.influx - self.cooling - self.dissipation).abs() / self.n_tot.abs()
    }

    /// `|influx - n_tot| / n_tot`.
    pub fn influx_defect(&self) -> f64 {
        (self.influx - self.n_tot).abs() / self.n_tot.abs()
    }
}

#[derive(Debug, Clone, Default)]
pub struct CoolingProblem {
    pub params: CoolingParams,
    pub template: CoolingTemplate,
}

struct Conduction<'a>(&'a CoolingParams);

impl VectorKernel for Conduction<'_> {
    fn eval<T: Scalar>(&self, _p: &KernelPoint, s: &[T; STATE_JET], g: &[T; GEO_JET], _a: &[T]) -> Result<[T; 3]> {
        let p = self.0;
        let dt = det(g);
        let r0 = (s[0] * p.dissipation - p.gauss(point(g)) * p.amplitude()) * dt;
        let fl = metric_flux(g, [s[1], s[2]]);
        Ok([r0, fl[0] * p.conductivity, fl[1] * p.conductivity])
    }
}

/// Cooling rate density `Σ_j h_j` per unit parametric length.
fn cooling_density<T: Scalar>(p: &CoolingParams, side: Side, s: &[T; STATE_JET], g: &[T; GEO_JET], a: &[T]) -> Result<T> {
    let x = point(g);
    let (_, len) = boundary_frame(side, g);
    let mut k = T::zero();
    for j in 0..N_COOLERS {
        let r2 = (x[0] - a[2 * j]).square() + (x[1] - a[2 * j + 1]).square();
        if r2.re() < 1e-24 {
            return Err(Error::Evaluation(format!("quadrature point at the center of cooler {}", j + 1)));
        }
        let r = a[2 * N_COOLERS + j];
        k += r * r * r / r2;
    }
    Ok(k * (s[0] - p.ambient) * len * p.cooling_rate)
}

struct Cooling<'a>(&'a CoolingParams);

impl VectorKernel for Cooling<'_> {
    fn eval<T: Scalar>(&self, p: &KernelPoint, s: &[T; STATE_JET], g: &[T; GEO_JET], a: &[T]) -> Result<[T; 3]> {
        let side = p.side.ok_or_else(|| Error::InvalidArgument("boundary kernel called in the interior".into()))?;
        Ok([cooling_density(self.0, side, s, g, a)?, T::zero(), T::zero()])
    }
}

impl ScalarKernel for Cooling<'_> {
    fn eval<T: Scalar>(&self, p: &KernelPoint, s: &[T; STATE_JET], g: &[T; GEO_JET], a: &[T]) -> Result<T> {
        let side = p.side.ok_or_else(|| Error::InvalidArgument("boundary kernel called in the interior".into()))?;
        cooling_density(self.0, side, s, g, a)
    }
}

/// `sin(πy) |x_s|` on the inlet; tested against `φ` it gives `φ̃_i`.
struct InletWeight;

fn inlet_weight<T: Scalar>(p: &KernelPoint, g: &[T; GEO_JET]) -> T {
    match p.side {
        Some(Side::West) => (g[1] * PI).sin() * boundary_frame(Side::West, g).1,
        _ => T::zero(),
    }
}

impl VectorKernel for InletWeight {
    fn eval<T: Scalar>(&self, p: &KernelPoint, _s: &[T; STATE_JET], g: &[T; GEO_JET], _a: &[T]) -> Result<[T; 3]> {
        Ok([inlet_weight(p, g), T::zero(), T::zero()])
    }
}

/// `∫_inlet sin(πy) dγ`.
struct InletLength;

impl ScalarKernel for InletLength {
    fn eval<T: Scalar>(&self, p: &KernelPoint, _s: &[T; STATE_JET], g: &[T; GEO_JET], _a: &[T]) -> Result<T> {
        Ok(inlet_weight(p, g))
    }
}

/// `P = ∫_inlet u sin(πy) dγ`.
struct InletTemperature;

impl ScalarKernel for InletTemperature {
    fn eval<T: Scalar>(&self, p: &KernelPoint, s: &[T; STATE_JET], g: &[T; GEO_JET], _a: &[T]) -> Result<T> {
        Ok(s[0] * inlet_weight(p, g))
    }
}

/// `W = ∫ e dS`, or `Q = ∫ u e dS` when weighted by the state.
struct SourceWeight<'a> {
    params: &'a CoolingParams,
    with_state: bool,
}

impl ScalarKernel for SourceWeight<'_> {
    fn eval<T: Scalar>(&self, _p: &KernelPoint, s: &[T; STATE_JET], g: &[T; GEO_JET], _a: &[T]) -> Result<T> {
        let e = self.params.gauss(point(g)) * det(g);
        Ok(if self.with_state { e * s[0] } else { e })
    }
}

struct Area;

impl ScalarKernel for Area {
    fn eval<T: Scalar>(&self, _p: &KernelPoint, _s: &[T; STATE_JET], g: &[T; GEO_JET], _a: &[T]) -> Result<T> {
        Ok(det(g))
    }
}

struct Dissipation<'a>(&'a CoolingParams);

impl ScalarKernel for Dissipation<'_> {
    fn eval<T: Scalar>(&self, _p: &KernelPoint, s: &[T; STATE_JET], g: &[T; GEO_JET], _a: &[T]) -> Result<T> {
        Ok(s[0] * det(g) * self.0.dissipation)
    }
}

impl CoolingProblem {
    pub fn new(params: CoolingParams, template: CoolingTemplate) -> Self {
        Self { params, template }
    }

    /// Coolers at fixed default positions with the given radii.
    pub fn default_design(&self, radii: [f64; N_COOLERS]) -> Vec<f64> {
        let mut pos = [0.0; N_COOLERS];
        let mut count = [0usize; 3];
        for i in 0..N_COOLERS {
            let side = self.template.sides[i];
            let k = side as usize;
            let n = self.template.sides.iter().filter(|&&s| s == side).count();
            count[k] += 1;
            pos[i] = side.frame().length * count[k] as f64 / (n + 1) as f64;
        }
        self.template.design(pos, radii)
    }

    /// `W = ∫ e dS` with the requested partials.
    pub fn source_weight(&self, disc: &Discretization, want: Want) -> Result<ScalarOut> {
        let k = SourceWeight { params: &self.params, with_state: false };
        assemble_scalar(disc, &k, false, Want { state: false, alpha: false, ..want })
    }

    /// Source temperature `T` with partials.
    pub fn temperature(&self, disc: &Discretization, want: Want) -> Result<Functional> {
        let inner = Want { alpha: false, ..want };
        let p = assemble_scalar(disc, &InletTemperature, true, inner)?;
        let q = assemble_scalar(disc, &SourceWeight { params: &self.params, with_state: true }, false, inner)?;
        let w = self.source_weight(disc, want)?;
        let t = self.params.temperature(Dual::<3>::var(p.value, 0), Dual::var(q.value, 1), Dual::var(w.value, 2))?;
        let combine = |a: &[f64], b: &[f64], c: &[f64], n: usize| -> Vec<f64> {
            let mut out = vec![0.0; n];
            for (src, k) in [(a, 0), (b, 1), (c, 2)] {
                if !src.is_empty() {
                    out.iter_mut().zip(src).for_each(|(o, v)| *o += t.d[k] * v);
                }
            }
            out
        };
        let d_state = if want.state { combine(&p.d_state, &q.d_state, &[], disc.n_state()) } else { Vec::new() };
        let d_geo = if want.geo { combine(&p.d_geo, &q.d_geo, &w.d_geo, disc.n_geo()) } else { Vec::new() };
        let d_alpha = if want.alpha { vec![0.0; disc.alpha.len()] } else { Vec::new() };
        Ok(Functional { value: t.v, d_state, d_geo, d_alpha })
    }

    /// Influx against cooling and dissipation for the state in `disc`.
    pub fn energy_balance(&self, disc: &Discretization) -> Result<EnergyBalance> {
        let cooling = assemble_scalar(disc, &Cooling(&self.params), true, Want::VALUE)?.value;
        let dissipation = assemble_scalar(disc, &Dissipation(&self.params), false, Want::VALUE)?.value;
        let p = &self.params;
        let source = p.amplitude() * self.source_weight(disc, Want::VALUE)?.value;
        let inlet = assemble_scalar(disc, &InletLength, true, Want::VALUE)?.value;
        let influx = 0.5 * PI * (p.n_tot - source) * inlet + source;
        Ok(EnergyBalance { n_tot: p.n_tot, influx, cooling, dissipation })
    }
}

impl StateProblem for CoolingProblem {
    fn name(&self) -> &'static str {
        "cooling"
    }

    fn n_params(&self) -> usize {
        N_DESIGN
    }

    fn bounds(&self) -> (Vec<f64>, Vec<f64>) {
        let mut lo = vec![0.0; N_DESIGN];
        let mut hi = vec![0.0; N_DESIGN];
        for i in 0..N_COOLERS {
            hi[2 * i] = 2.0;
            hi[2 * i + 1] = 1.0;
            lo[2 * N_COOLERS + i] = 1e-3;
            hi[2 * N_COOLERS + i] = self.params.r_max;
        }
        (lo, hi)
    }

    fn curve(&self) -> &dyn BoundaryCurve {
        &self.template
    }

    fn n_constraints(&self) -> usize {
        1 + N_GEOMETRIC
    }

    fn geo_order(&self) -> usize {
        1
    }

    fn check_design(&self, alpha: &[f64]) -> Result<()> {
        let (lo, hi) = self.bounds();
        if alpha.len() != N_DESIGN {
            return Err(Error::DimensionMismatch { expected: N_DESIGN, got: alpha.len() });
        }
        for j in 0..N_DESIGN {
            if !(alpha[j] >= lo[j] - 1e-12 && alpha[j] <= hi[j] + 1e-12) {
                return Err(Error::OutOfBox(j));
            }
        }
        for side in [CoolerSide::South, CoolerSide::East, CoolerSide::North] {
            self.template.notches(alpha, side)?;
        }
        Ok(())
    }

    fn state_residual(&self, disc: &Discretization, want: Want) -> Result<StateResidual> {
        let p = &self.params;
        let dom = assemble_vector(disc, &Conduction(p), false, Want { alpha: false, ..want }, None)?;
        let bnd = assemble_vector(disc, &Cooling(p), true, want, None)?;
        let tilde = assemble_vector(disc, &InletWeight, true, Want { state: false, alpha: false, ..want }, None)?;
        let w = self.source_weight(disc, want)?;
        // the inlet flux amplitude F_L = (π/2)(N_tot - A W) enters through φ̃
        let coef = 0.5 * PI * (p.amplitude() * w.value - p.n_tot);
        let mut value = dom.value;
        for i in 0..value.len() {
            value[i] += bnd.value[i] + coef * tilde.value[i];
        }
        let d_state = match (dom.d_state, bnd.d_state) {
            (Some(mut a), Some(b)) => {
                a.add_scaled(&b, 1.0, None);
                Some(a)
            }
            _ => None,
        };
        let d_geo = match (dom.d_geo, bnd.d_geo, tilde.d_geo) {
            (Some(mut a), Some(b), Some(t)) => {
                a.add_scaled(&b, 1.0, None);
                a.add_scaled(&t, coef, None);
                let row: Vec<f64> = w.d_geo.iter().map(|v| 0.5 * PI * p.amplitude() * v).collect();
                Some(GeoOperator { sparse: a, low_rank: vec![(tilde.value, row)] })
            }
            _ => None,
        };
        Ok(StateResidual { value, d_state, d_geo, d_alpha: bnd.d_alpha })
    }

    fn objective(&self, disc: &Discretization, want: Want) -> Result<Functional> {
        let area = assemble_scalar(disc, &Area, false, Want { state: false, alpha: false, ..want })?;
        let mut value = area.value;
        let mut d_alpha = if want.alpha { vec![0.0; N_DESIGN] } else { Vec::new() };
        for i in 0..N_COOLERS {
            let r = disc.alpha[2 * N_COOLERS + i];
            value += self.params.cost * r * r;
            if want.alpha {
                d_alpha[2 * N_COOLERS + i] = 2.0 * self.params.cost * r;
            }
        }
        Ok(Functional { value, d_state: Vec::new(), d_geo: area.d_geo, d_alpha })
    }

    fn constraints(&self, disc: &Discretization, want: Want) -> Result<Vec<Functional>> {
        let mut t = self.temperature(disc, want)?;
        t.value = self.params.t_max - t.value;
        for v in t.d_state.iter_mut().chain(t.d_geo.iter_mut()).chain(t.d_alpha.iter_mut()) {
            *v = -*v;
        }
        let mut out = vec![t];
        let (vals, jac) = self.template.constraint_jacobian(disc.alpha);
        for (k, v) in vals.into_iter().enumerate() {
            out.push(Functional {
                value: v,
                d_state: Vec::new(),
                d_geo: Vec::new(),
                d_alpha: if want.alpha { jac[k * N_DESIGN..(k + 1) * N_DESIGN].to_vec() } else { Vec::new() },
            });
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests;
