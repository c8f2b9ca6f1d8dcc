//! Design gradients of the objective and the constraints by the discrete
//! adjoint chain through the state equation `B(d_A, c_A, alpha) = 0`, the
//! EGG equation `F(c_I, c_B) = 0` and the boundary projection
//! `M c_B = r(alpha)`.
//!
//! For a functional `J(d_A, c_A, alpha)`:
//!
//! ```text
//! a = [dB/dd_A]^-T  dJ/dd_A
//! b = dJ/dc_A - [dB/dc_A]^T a            split into (b_I, b_B)
//! e = [dF/dc_I]^-T  b_I
//! q = b_B - [dF/dc_B]^T e
//! dJ/dalpha = [dc_B/dalpha]^T q - [dB/dalpha]^T a + dJ/dalpha
//! ```
//!
//! The factorizations of `dB/dd_A` (kept from the state solve) and of
//! `dF/dc_I` are shared by all functionals at a design point.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::assembly::{matfree_apply, solve_krylov, CsrMatrix, SolveMode, SparseLu};
use crate::egg::{combine_coefficients, egg_system, split_coefficients, GeometryMapping};
use crate::math::norm_inf;
use crate::problems::{Discretization, Functional, StateProblem, StateResidual, StateSolution, Want};
use crate::spline::SplineFunction;
use crate::{Error, Result};

/// How the linear systems of the sensitivity chain are solved.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum GradientMode {
    /// Transposed solves with the assembled, factored Jacobians.
    Adjoint,
    /// One forward (tangent) solve per design component, by GMRES with
    /// difference-quotient Jacobian products. Meant for verification on
    /// small instances.
    MatrixFree { tol: f64, max_iter: usize, eps: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdjointOptions {
    /// Largest admissible `max |B| / (1 + max |d_A|)` at the given state.
    pub state_tol: f64,
    /// Largest admissible `max |F|` at the given mapping.
    pub egg_tol: f64,
    pub mode: GradientMode,
}

impl Default for AdjointOptions {
    fn default() -> Self {
        Self { state_tol: 1e-8, egg_tol: 1e-8, mode: GradientMode::Adjoint }
    }
}

/// Objective and constraint values with their total design gradients.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientResult {
    pub objective_value: f64,
    pub gradient: Vec<f64>,
    pub constraint_values: Vec<f64>,
    pub constraint_gradients: Vec<Vec<f64>>,
    /// Matrix factorizations spent at this design point, including the one
    /// of the state solve.
    pub factorizations: usize,
}

/// Intermediate vectors of one adjoint chain.
#[derive(Debug, Clone, PartialEq)]
pub struct AdjointChain {
    /// Adjoint state, one entry per state unknown.
    pub a: Vec<f64>,
    /// Sensitivity with respect to the inner geometry coefficients.
    pub b_inner: Vec<f64>,
    /// Sensitivity with respect to the boundary geometry coefficients.
    pub b_boundary: Vec<f64>,
    /// EGG adjoint, `2 |I|` entries.
    pub e: Vec<f64>,
    /// Boundary sensitivity, `2 |B|` entries.
    pub q: Vec<f64>,
    pub gradient: Vec<f64>,
}

/// Forward sensitivities of the state and geometry coefficients along one
/// design direction.
#[derive(Debug, Clone, PartialEq)]
pub struct Tangent {
    pub direction: Vec<f64>,
    /// `d c_A / d alpha * v`, interleaved like the mapping coefficients.
    pub geometry: Vec<f64>,
    /// `d d_A / d alpha * v`.
    pub state: Vec<f64>,
}

impl Tangent {
    /// Directional derivative `dJ/dalpha * v` of a functional.
    pub fn derivative(&self, f: &Functional) -> f64 {
        let dot = |g: &[f64], v: &[f64]| if g.is_empty() { 0.0 } else { g.iter().zip(v).map(|(a, b)| a * b).sum::<f64>() };
        dot(&f.d_state, &self.state) + dot(&f.d_geo, &self.geometry) + dot(&f.d_alpha, &self.direction)
    }
}

/// Shared data of all sensitivity chains at one converged design point.
pub struct AdjointWorkspace<'a> {
    problem: &'a dyn StateProblem,
    mapping: &'a GeometryMapping,
    state: &'a StateSolution,
    alpha: &'a [f64],
    residual: StateResidual,
    egg_lu: SparseLu,
    df_dcb: CsrMatrix,
    d_rhs: Vec<Vec<f64>>,
    state_lu: Option<SparseLu>,
    factorizations: usize,
}

impl core::fmt::Debug for AdjointWorkspace<'_> {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.debug_struct("AdjointWorkspace")
            .field("problem", &self.problem.name())
            .field("alpha", &self.alpha)
            .field("factorizations", &self.factorizations)
            .finish_non_exhaustive()
    }
}

impl<'a> AdjointWorkspace<'a> {
    /// Assembles `dB/dc_A`, `dB/dalpha`, the EGG blocks and `d r / d alpha`
    /// and factors `dF/dc_I`.
    pub fn new(
        problem: &'a dyn StateProblem,
        mapping: &'a GeometryMapping,
        state: &'a StateSolution,
        alpha: &'a [f64],
        opts: &AdjointOptions,
    ) -> Result<Self> {
        if !mapping.fold_free() {
            return Err(Error::Precondition("mapping is not a converged fold-free parameterization".into()));
        }
        if alpha.len() != problem.n_params() {
            return Err(Error::DimensionMismatch { expected: problem.n_params(), got: alpha.len() });
        }
        let disc = discretization(problem, mapping.function(), state, &state.coeffs, alpha);
        let want = Want { state: !problem.is_linear(), geo: true, alpha: true };
        let residual = problem.state_residual(&disc, want)?;
        let res = norm_inf(&residual.value);
        if !(res <= opts.state_tol * (1.0 + norm_inf(&state.coeffs))) {
            return Err(Error::Precondition(format!("state residual {res:.3e} exceeds the tolerance")));
        }
        let computed;
        let system = match mapping.cached_system() {
            Some(s) => s,
            None => {
                computed = egg_system(mapping.function(), mapping.boundary_set(), true)?;
                &computed
            }
        };
        let egg_res = norm_inf(&system.residual);
        if !(egg_res <= opts.egg_tol) {
            return Err(Error::Precondition(format!("EGG residual {egg_res:.3e} exceeds the tolerance")));
        }
        let (df_dci, df_dcb) = system.jacobian.clone().unwrap();
        let mut factorizations = state.factorizations;
        // Newton's last factor belongs to the previous iterate
        let state_lu = match &residual.d_state {
            Some(j) => {
                factorizations += 1;
                Some(SparseLu::factor(j)?)
            }
            None => None,
        };
        let egg_lu = SparseLu::factor(&df_dci)?;
        factorizations += 1;
        let d_rhs = mapping.projection().rhs_alpha_derivative(problem.curve(), alpha)?;
        Ok(Self { problem, mapping, state, alpha, residual, egg_lu, df_dcb, d_rhs, state_lu, factorizations })
    }

    pub fn factorizations(&self) -> usize {
        self.factorizations
    }

    fn state_lu(&self) -> &SparseLu {
        self.state_lu.as_ref().unwrap_or(&self.state.lu)
    }

    fn n_alpha(&self) -> usize {
        self.alpha.len()
    }

    /// Evaluates the objective and all constraints with their partials.
    pub fn functionals(&self) -> Result<(Functional, Vec<Functional>)> {
        let disc = discretization(self.problem, self.mapping.function(), self.state, &self.state.coeffs, self.alpha);
        Ok((self.problem.objective(&disc, Want::ALL)?, self.problem.constraints(&disc, Want::ALL)?))
    }

    /// Runs the full chain for one functional.
    pub fn chain(&self, f: &Functional) -> Result<AdjointChain> {
        let n_state = self.state.coeffs.len();
        let n_geo = self.mapping.coefficients().len();
        let bis = self.mapping.boundary_set();
        let a = if f.d_state.is_empty() {
            vec![0.0; n_state]
        } else {
            check_len(&f.d_state, n_state)?;
            self.state_lu().solve(&f.d_state, SolveMode::Transpose)
        };
        let mut b = match &self.residual.d_geo {
            Some(op) => op.apply_transpose(&a),
            None => vec![0.0; n_geo],
        };
        b.iter_mut().for_each(|v| *v = -*v);
        if !f.d_geo.is_empty() {
            check_len(&f.d_geo, n_geo)?;
            b.iter_mut().zip(&f.d_geo).for_each(|(x, g)| *x += g);
        }
        let b_inner = split_coefficients(bis, &b, false);
        let b_boundary = split_coefficients(bis, &b, true);
        let e = self.egg_lu.solve(&b_inner, SolveMode::Transpose);
        let fe = self.df_dcb.mul_vec_transpose(&e);
        let q: Vec<f64> = b_boundary.iter().zip(&fe).map(|(b, f)| b - f).collect();
        let mut gradient = self.mapping.projection().dcb_dalpha_transpose_apply(&q, &self.d_rhs);
        let ba = self.residual.d_alpha_transpose(&a, self.n_alpha());
        for j in 0..self.n_alpha() {
            gradient[j] -= ba[j];
        }
        add_alpha_partial(&mut gradient, f)?;
        Ok(AdjointChain { a, b_inner, b_boundary, e, q, gradient })
    }

    /// Total design gradient of a functional. Functionals of the design
    /// alone skip the solves.
    pub fn gradient(&self, f: &Functional) -> Result<Vec<f64>> {
        if f.alpha_only() {
            let mut g = vec![0.0; self.n_alpha()];
            add_alpha_partial(&mut g, f)?;
            return Ok(g);
        }
        Ok(self.chain(f)?.gradient)
    }

    /// Forward sensitivities along `v` with the factored Jacobians.
    pub fn tangent(&self, v: &[f64]) -> Result<Tangent> {
        check_len(v, self.n_alpha())?;
        let bis = self.mapping.boundary_set();
        let dcb = self.mapping.projection().dcb_dalpha_apply(v, &self.d_rhs);
        let rhs: Vec<f64> = self.df_dcb.mul_vec(&dcb).iter().map(|x| -x).collect();
        let dci = self.egg_lu.solve(&rhs, SolveMode::Normal);
        let geometry = combine_coefficients(bis, &dci, &dcb);
        let mut rhs = match &self.residual.d_geo {
            Some(op) => op.apply(&geometry),
            None => vec![0.0; self.state.coeffs.len()],
        };
        let ba = self.residual.d_alpha_apply(v, rhs.len());
        rhs.iter_mut().zip(&ba).for_each(|(r, b)| *r = -(*r + b));
        let state = self.state_lu().solve(&rhs, SolveMode::Normal);
        Ok(Tangent { direction: v.to_vec(), geometry, state })
    }

    /// Forward sensitivities along `v` without assembled Jacobians: the EGG
    /// and state systems are solved by GMRES with central difference
    /// quotients of the residuals.
    pub fn matrix_free_tangent(&self, v: &[f64], tol: f64, max_iter: usize, eps: f64) -> Result<Tangent> {
        check_len(v, self.n_alpha())?;
        let problem = self.problem;
        let mapping = self.mapping;
        let bis = mapping.boundary_set();
        let space = mapping.space().clone();
        let c_i = mapping.c_i();
        let c_b = mapping.c_b();
        let egg = |ci: &[f64], cb: &[f64]| -> Result<Vec<f64>> {
            let f = SplineFunction::new(space.clone(), 2, combine_coefficients(bis, ci, cb))?;
            Ok(egg_system(&f, bis, false)?.residual)
        };
        let dcb = mapping.projection().dcb_dalpha_apply(v, &self.d_rhs);
        let fb = central(|cb| egg(c_i, cb), c_b, &dcb, eps)?;
        let rhs: Vec<f64> = fb.iter().map(|x| -x).collect();
        let dci = solve_krylov(|x| central(|ci| egg(ci, c_b), c_i, x, eps), &rhs, tol, max_iter)?;
        let geometry = combine_coefficients(bis, &dci, &dcb);

        let d = &self.state.coeffs;
        let alpha = self.alpha;
        let res = |m: &SplineFunction, d: &[f64], a: &[f64]| -> Result<Vec<f64>> {
            let disc = discretization(problem, m, self.state, d, a);
            Ok(problem.state_residual(&disc, Want::VALUE)?.value)
        };
        let c = mapping.coefficients();
        let by_geo = |cc: &[f64]| res(&SplineFunction::new(space.clone(), 2, cc.to_vec())?, d, alpha);
        let mut rhs = central(by_geo, c, &geometry, eps)?;
        let ba = central(|a| res(mapping.function(), d, a), alpha, v, eps)?;
        rhs.iter_mut().zip(&ba).for_each(|(r, b)| *r = -(*r + b));
        let state = solve_krylov(|x| central(|dd| res(mapping.function(), dd, alpha), d, x, eps), &rhs, tol, max_iter)?;
        Ok(Tangent { direction: v.to_vec(), geometry, state })
    }
}

/// Central difference `(r(at + eps v) - r(at - eps v)) / (2 eps)` built
/// from two one-sided quotients.
fn central<F>(mut r: F, at: &[f64], v: &[f64], eps: f64) -> Result<Vec<f64>>
where
    F: FnMut(&[f64]) -> Result<Vec<f64>>,
{
    let fwd = matfree_apply(&mut r, at, v, eps)?;
    let neg: Vec<f64> = v.iter().map(|x| -x).collect();
    let bwd = matfree_apply(&mut r, at, &neg, eps)?;
    Ok(fwd.iter().zip(&bwd).map(|(a, b)| 0.5 * (a - b)).collect())
}

fn discretization<'b>(
    problem: &dyn StateProblem,
    mapping: &'b SplineFunction,
    state: &'b StateSolution,
    d: &'b [f64],
    alpha: &'b [f64],
) -> Discretization<'b> {
    Discretization { mapping, state_space: &state.space, state: d, alpha, geo_order: problem.geo_order() }
}

fn check_len(v: &[f64], n: usize) -> Result<()> {
    if v.len() != n {
        return Err(Error::DimensionMismatch { expected: n, got: v.len() });
    }
    Ok(())
}

fn add_alpha_partial(g: &mut [f64], f: &Functional) -> Result<()> {
    if !f.d_alpha.is_empty() {
        check_len(&f.d_alpha, g.len())?;
        g.iter_mut().zip(&f.d_alpha).for_each(|(x, d)| *x += d);
    }
    Ok(())
}

/// Objective and constraint gradients at a converged design point.
pub fn compute_gradient(
    problem: &dyn StateProblem,
    mapping: &GeometryMapping,
    state: &StateSolution,
    alpha: &[f64],
    opts: &AdjointOptions,
) -> Result<GradientResult> {
    let ws = AdjointWorkspace::new(problem, mapping, state, alpha, opts)?;
    let (objective, constraints) = ws.functionals()?;
    let grads = match opts.mode {
        GradientMode::Adjoint => {
            let mut out = vec![ws.gradient(&objective)?];
            for c in &constraints {
                out.push(ws.gradient(c)?);
            }
            out
        }
        GradientMode::MatrixFree { tol, max_iter, eps } => {
            let n = alpha.len();
            let mut out = vec![vec![0.0; n]; 1 + constraints.len()];
            for j in 0..n {
                let mut v = vec![0.0; n];
                v[j] = 1.0;
                let t = ws.matrix_free_tangent(&v, tol, max_iter, eps)?;
                out[0][j] = t.derivative(&objective);
                for (k, c) in constraints.iter().enumerate() {
                    out[k + 1][j] = t.derivative(c);
                }
            }
            out
        }
    };
    let mut grads = grads.into_iter();
    Ok(GradientResult {
        objective_value: objective.value,
        gradient: grads.next().unwrap(),
        constraint_values: constraints.iter().map(|c| c.value).collect(),
        constraint_gradients: grads.collect(),
        factorizations: ws.factorizations(),
    })
}

/// Values and gradients of all constraints.
pub fn constraint_gradients(
    problem: &dyn StateProblem,
    mapping: &GeometryMapping,
    state: &StateSolution,
    alpha: &[f64],
    opts: &AdjointOptions,
) -> Result<Vec<(f64, Vec<f64>)>> {
    let ws = AdjointWorkspace::new(problem, mapping, state, alpha, opts)?;
    let (_, constraints) = ws.functionals()?;
    constraints.iter().map(|c| Ok((c.value, ws.gradient(c)?))).collect()
}

/// One row of a finite-difference gradient check.
#[derive(Debug, Clone, PartialEq)]
pub struct ComponentCheck {
    pub index: usize,
    pub adjoint: f64,
    /// Central difference, `None` when a perturbed evaluation failed.
    pub finite_difference: Option<f64>,
    pub relative_error: f64,
    pub failure: Option<String>,
}

/// Compares `gradient` with central differences of `eval` at `alpha`.
/// Errors are relative to the larger magnitude, floored at `1e-6` times the
/// largest gradient entry.
pub fn fd_gradient_check<F>(mut eval: F, alpha: &[f64], gradient: &[f64], h: f64) -> Result<Vec<ComponentCheck>>
where
    F: FnMut(&[f64]) -> Result<f64>,
{
    if !(h > 0.0) {
        return Err(Error::InvalidArgument("finite-difference step must be positive".into()));
    }
    check_len(gradient, alpha.len())?;
    let floor = 1e-6 * norm_inf(gradient).max(1e-300);
    let mut out = Vec::with_capacity(alpha.len());
    for j in 0..alpha.len() {
        let mut ap = alpha.to_vec();
        let mut am = alpha.to_vec();
        ap[j] += h;
        am[j] -= h;
        let adjoint = gradient[j];
        match eval(&ap).and_then(|p| Ok((p, eval(&am)?))) {
            Ok((p, m)) => {
                let fd = (p - m) / (2.0 * h);
                let scale = adjoint.abs().max(fd.abs()).max(floor);
                out.push(ComponentCheck { index: j, adjoint, finite_difference: Some(fd), relative_error: (adjoint - fd).abs() / scale, failure: None });
            }
            Err(e) => out.push(ComponentCheck {
                index: j,
                adjoint,
                finite_difference: None,
                relative_error: f64::INFINITY,
                failure: Some(format!("{e}")),
            }),
        }
    }
    Ok(out)
}
