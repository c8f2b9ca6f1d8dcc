//! Validation problem: `-Δu = -Δf` with `u = f = det J` on the boundary,
//! imposed with Nitsche's method, on the unit square with four bumped sides.
//! The objective `∫ u dξ + ½|α|²` equals `Area + ½|α|²` in the continuous
//! limit, so the exact optimum is known in closed form.

use alloc::vec;
use alloc::vec::Vec;

use super::geometry::{boundary_frame, det, det_grad, inv_apply, metric_flux, phys_grad};
use super::kernel::{assemble_scalar, assemble_vector, ScalarKernel, VectorKernel, GEO_JET, STATE_JET};
use super::markers::strong_poisson_markers;
use super::{Discretization, Functional, GeoOperator, KernelPoint, StateProblem, StateResidual, Want};
use crate::dual::Scalar;
use crate::egg::BoundaryCurve;
use crate::math::Float;
use crate::spline::Side;
use crate::{Error, Result};

/// `∫₀¹ d(s) ds`.
pub const VALIDATION_A: f64 = 0.237_383_178_513_122_56;

/// Normalized bump `d(s)`: a Gaussian envelope (shifted to vanish at the
/// ends) times `(1 - cos 6πs)/2`, with `d(0) = d(1) = 0` and `d(1/2) = 1`.
pub fn validation_bump(s: f64) -> f64 {
    let g = |t: f64| Float::exp(-(t - 0.5) * (t - 0.5) / (2.0 * 0.2 * 0.2));
    let env = (g(s) - g(0.0)) / (g(0.5) - g(0.0));
    env * 0.5 * (1.0 - Float::cos(6.0 * core::f64::consts::PI * s))
}

/// Known optimum of the validation problem.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ValidationReference {
    pub a_exact: f64,
    pub j_star: f64,
}

impl ValidationReference {
    pub fn new() -> Self {
        let a = VALIDATION_A;
        Self { a_exact: a, j_star: 1.0 - 2.0 * a * a }
    }

    pub fn alpha_star(&self) -> [f64; 4] {
        [self.a_exact; 4]
    }

    /// Continuous objective `1 - A Σα + ½|α|²`.
    pub fn objective(&self, alpha: &[f64]) -> f64 {
        let s: f64 = alpha.iter().sum();
        let q: f64 = alpha.iter().map(|a| a * a).sum();
        1.0 - self.a_exact * s + 0.5 * q
    }
}

impl Default for ValidationReference {
    fn default() -> Self {
        Self::new()
    }
}

/// Boundary family: every side of the unit square is pushed inward by
/// `α_k d(s)`.
#[derive(Debug, Clone, Copy, Default)]
pub struct ValidationCurve;

impl BoundaryCurve for ValidationCurve {
    fn n_params(&self) -> usize {
        4
    }

    fn eval(&self, side: Side, s: f64, alpha: &[f64]) -> Result<[f64; 2]> {
        if alpha.len() != 4 {
            return Err(Error::DimensionMismatch { expected: 4, got: alpha.len() });
        }
        let d = validation_bump(s);
        Ok(match side {
            Side::South => [s, alpha[0] * d],
            Side::East => [1.0 - alpha[1] * d, s],
            Side::North => [s, 1.0 - alpha[2] * d],
            Side::West => [alpha[3] * d, s],
        })
    }

    fn d_dalpha(&self, side: Side, s: f64, alpha: &[f64]) -> Result<Vec<[f64; 2]>> {
        if alpha.len() != 4 {
            return Err(Error::DimensionMismatch { expected: 4, got: alpha.len() });
        }
        let d = validation_bump(s);
        let mut out = vec![[0.0; 2]; 4];
        match side {
            Side::South => out[0] = [0.0, d],
            Side::East => out[1] = [-d, 0.0],
            Side::North => out[2] = [0.0, -d],
            Side::West => out[3] = [d, 0.0],
        }
        Ok(out)
    }
}

/// Constants of the validation problem.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ValidationParams {
    /// Nitsche penalty constant `c` in `η_i = c / I_i`.
    pub penalty: f64,
    /// Upper end of the design box `[0, upper]^4`.
    pub upper: f64,
}

impl Default for ValidationParams {
    fn default() -> Self {
        Self { penalty: 1e3, upper: 0.4 }
    }
}

#[derive(Debug, Clone, Default)]
pub struct ValidationProblem {
    pub params: ValidationParams,
    curve: ValidationCurve,
}

impl ValidationProblem {
    pub fn new(params: ValidationParams) -> Self {
        Self { params, curve: ValidationCurve }
    }

    /// Nitsche weights `η_i` and the boundary integrals `I_i` they come from.
    pub fn penalty_weights(&self, disc: &Discretization, want_geo: bool) -> Result<(Vec<f64>, Vec<f64>, Option<crate::assembly::CsrMatrix>)> {
        let want = Want { state: false, geo: want_geo, alpha: false };
        let out = assemble_vector(disc, &LineElement, true, want, None)?;
        let eta = out.value.iter().map(|&i| if i > PENALTY_CUTOFF { self.params.penalty / i } else { 0.0 }).collect();
        Ok((eta, out.value, out.d_geo))
    }
}

const PENALTY_CUTOFF: f64 = 1e-14;

/// `u - f` and its reference gradient.
#[inline]
fn defect<T: Scalar>(s: &[T; STATE_JET], g: &[T; GEO_JET]) -> (T, [T; 2]) {
    let f = det(g);
    let gf = det_grad(g);
    (s[0] - f, [s[1] - gf[0], s[2] - gf[1]])
}

/// `(∇(u - f), ∇φ)` over the domain.
struct Stiffness;

impl VectorKernel for Stiffness {
    fn eval<T: Scalar>(&self, _p: &KernelPoint, s: &[T; STATE_JET], g: &[T; GEO_JET], _a: &[T]) -> Result<[T; 3]> {
        let (_, dg) = defect(s, g);
        let fl = metric_flux(g, dg);
        Ok([T::zero(), fl[0], fl[1]])
    }
}

/// Consistency and symmetry terms on the boundary.
struct NitscheFlux;

impl VectorKernel for NitscheFlux {
    fn eval<T: Scalar>(&self, p: &KernelPoint, s: &[T; STATE_JET], g: &[T; GEO_JET], _a: &[T]) -> Result<[T; 3]> {
        let side = p.side.ok_or_else(|| Error::InvalidArgument("boundary kernel called in the interior".into()))?;
        let (e, dg) = defect(s, g);
        let (n, _) = boundary_frame(side, g);
        let pg = phys_grad(g, dg);
        let r0 = -(pg[0] * n[0] + pg[1] * n[1]);
        let w = inv_apply(g, n);
        Ok([r0, -(e * w[0]), -(e * w[1])])
    }
}

/// `(u - f) |x_s|` against `φ`; scaled by `η_i` per row.
struct Penalty;

impl VectorKernel for Penalty {
    fn eval<T: Scalar>(&self, p: &KernelPoint, s: &[T; STATE_JET], g: &[T; GEO_JET], _a: &[T]) -> Result<[T; 3]> {
        let side = p.side.ok_or_else(|| Error::InvalidArgument("boundary kernel called in the interior".into()))?;
        let (e, _) = defect(s, g);
        let (_, len) = boundary_frame(side, g);
        Ok([e * len, T::zero(), T::zero()])
    }
}

/// `|x_s|` against `φ`: gives `I_i = ∫ φ_i dγ`.
struct LineElement;

impl VectorKernel for LineElement {
    fn eval<T: Scalar>(&self, p: &KernelPoint, _s: &[T; STATE_JET], g: &[T; GEO_JET], _a: &[T]) -> Result<[T; 3]> {
        let side = p.side.ok_or_else(|| Error::InvalidArgument("boundary kernel called in the interior".into()))?;
        Ok([boundary_frame(side, g).1, T::zero(), T::zero()])
    }
}

/// `∫ u dξ` against the reference measure.
struct ReferenceIntegral;

impl ScalarKernel for ReferenceIntegral {
    fn eval<T: Scalar>(&self, _p: &KernelPoint, s: &[T; STATE_JET], _g: &[T; GEO_JET], _a: &[T]) -> Result<T> {
        Ok(s[0])
    }
}

impl StateProblem for ValidationProblem {
    fn name(&self) -> &'static str {
        "validation"
    }

    fn n_params(&self) -> usize {
        4
    }

    fn bounds(&self) -> (Vec<f64>, Vec<f64>) {
        (vec![0.0; 4], vec![self.params.upper; 4])
    }

    fn curve(&self) -> &dyn BoundaryCurve {
        &self.curve
    }

    fn n_constraints(&self) -> usize {
        0
    }

    fn geo_order(&self) -> usize {
        2
    }

    fn state_residual(&self, disc: &Discretization, want: Want) -> Result<StateResidual> {
        let want = Want { alpha: false, ..want };
        let dom = assemble_vector(disc, &Stiffness, false, want, None)?;
        let bnd = assemble_vector(disc, &NitscheFlux, true, want, None)?;
        let (eta, line, d_line) = self.penalty_weights(disc, want.geo)?;
        let pen = assemble_vector(disc, &Penalty, true, want, Some(&eta))?;
        let mut value = dom.value;
        for i in 0..value.len() {
            value[i] += bnd.value[i] + pen.value[i];
        }
        let d_state = match (dom.d_state, bnd.d_state, pen.d_state) {
            (Some(mut a), Some(b), Some(c)) => {
                a.add_scaled(&b, 1.0, None);
                a.add_scaled(&c, 1.0, None);
                Some(a)
            }
            _ => None,
        };
        let d_geo = match (dom.d_geo, bnd.d_geo, pen.d_geo, d_line) {
            (Some(mut a), Some(b), Some(c), Some(dl)) => {
                a.add_scaled(&b, 1.0, None);
                a.add_scaled(&c, 1.0, None);
                // η_i = c / I_i: d(η_i Q_i) picks up -η_i Q_i / I_i dI_i
                let q: Vec<f64> = (0..eta.len())
                    .map(|i| if eta[i] != 0.0 { -pen.value[i] / line[i] } else { 0.0 })
                    .collect();
                a.add_scaled(&dl, 1.0, Some(&q));
                Some(GeoOperator { sparse: a, low_rank: Vec::new() })
            }
            _ => None,
        };
        Ok(StateResidual { value, d_state, d_geo, d_alpha: None })
    }

    fn objective(&self, disc: &Discretization, want: Want) -> Result<Functional> {
        let out = assemble_scalar(disc, &ReferenceIntegral, false, Want { state: want.state, geo: false, alpha: false })?;
        let q: f64 = disc.alpha.iter().map(|a| a * a).sum();
        Ok(Functional {
            value: out.value + 0.5 * q,
            d_state: out.d_state,
            d_geo: Vec::new(),
            d_alpha: if want.alpha { disc.alpha.to_vec() } else { Vec::new() },
        })
    }

    fn constraints(&self, _disc: &Discretization, _want: Want) -> Result<Vec<Functional>> {
        Ok(Vec::new())
    }

    fn strong_markers(&self, disc: &Discretization) -> Result<Vec<f64>> {
        strong_poisson_markers(disc, self.params.penalty)
    }
}

#[cfg(test)]
mod tests;
