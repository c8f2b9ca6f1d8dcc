//! Elliptic grid generation: boundary projection, the nonlinear EGG solve
//! and fold repair by local refinement.

mod mapping;
mod projection;
mod residual;

use alloc::format;
use alloc::sync::Arc;
use alloc::vec::Vec;

pub use mapping::{combine_coefficients, detect_folds, initial_interior_guess, split_coefficients, GeometryMapping};
pub use projection::{project_boundary_adaptive, BoundaryProjection, ProjectionReport};
pub use residual::{egg_system, EggSystem, EGG_EPS};

use crate::assembly::{SolveMode, SparseLu};
use crate::math::{norm2, norm_inf};
use crate::spline::{HierarchicalSpace, Side, SplineFunction};
use crate::{Error, Result};

/// Parametric description of the four boundary contours as a function of the
/// design vector.
pub trait BoundaryCurve {
    /// Length of the design vector.
    fn n_params(&self) -> usize;

    /// Point of side `side` at parameter `s` in `[0, 1]`.
    fn eval(&self, side: Side, s: f64, alpha: &[f64]) -> Result<[f64; 2]>;

    /// Partials of [`Self::eval`]: entry `j` is `d point / d alpha_j`.
    fn d_dalpha(&self, side: Side, s: f64, alpha: &[f64]) -> Result<Vec<[f64; 2]>>;
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NewtonOptions {
    /// Absolute tolerance on the max-norm of the residual.
    pub tol: f64,
    pub max_iter: usize,
    /// Smallest step length of the backtracking line search.
    pub min_step: f64,
}

impl Default for NewtonOptions {
    fn default() -> Self {
        Self { tol: 1e-10, max_iter: 50, min_step: 1.0 / 1024.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EggOptions {
    pub newton: NewtonOptions,
    /// Upper bound on fold-repair rounds before giving up.
    pub max_fold_rounds: usize,
}

impl Default for EggOptions {
    fn default() -> Self {
        Self { newton: NewtonOptions::default(), max_fold_rounds: 6 }
    }
}

/// Result of a damped Newton solve.
#[derive(Debug, Clone)]
pub struct NewtonOutcome {
    pub c_i: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    /// Max-norm of the residual after each iteration, starting with the
    /// initial guess.
    pub history: Vec<f64>,
    /// Residual and Jacobian at the returned iterate.
    pub system: EggSystem,
}

fn newton_core(
    projection: &BoundaryProjection,
    c_i0: Vec<f64>,
    opts: &NewtonOptions,
) -> Result<NewtonOutcome> {
    let bis = projection.boundary_set();
    let space = projection.space();
    let c_b = projection.c_b();
    let eval = |c_i: &[f64]| -> Result<EggSystem> {
        let f = SplineFunction::new(space.clone(), 2, combine_coefficients(bis, c_i, c_b))?;
        egg_system(&f, bis, true)
    };
    let mut c_i = c_i0;
    let mut sys = eval(&c_i)?;
    let mut history = Vec::from([norm_inf(&sys.residual)]);
    let mut iterations = 0;
    loop {
        let r = *history.last().unwrap();
        if r <= opts.tol {
            return Ok(NewtonOutcome { c_i, iterations, converged: true, history, system: sys });
        }
        if iterations >= opts.max_iter {
            break;
        }
        let lu = match SparseLu::factor(&sys.jacobian.as_ref().unwrap().0) {
            Ok(lu) => lu,
            Err(Error::Singular { .. }) => break,
            Err(e) => return Err(e),
        };
        let delta = lu.solve(&sys.residual, SolveMode::Normal);
        let r2 = norm2(&sys.residual);
        let mut t = 1.0;
        let accepted = loop {
            let trial: Vec<f64> = c_i.iter().zip(&delta).map(|(c, d)| c - t * d).collect();
            let ts = eval(&trial)?;
            if norm2(&ts.residual) <= r2 * (1.0 + 1e-12) {
                break Some((trial, ts));
            }
            t *= 0.5;
            if t < opts.min_step {
                break None;
            }
        };
        iterations += 1;
        match accepted {
            Some((c, s)) => {
                c_i = c;
                sys = s;
                history.push(norm_inf(&sys.residual));
            }
            None => break,
        }
    }
    Ok(NewtonOutcome { c_i, iterations, converged: false, history, system: sys })
}

/// Damped Newton solve of the EGG equations for the inner coefficients.
pub fn newton_solve_egg(projection: &BoundaryProjection, c_i0: Vec<f64>, opts: &NewtonOptions) -> Result<NewtonOutcome> {
    if !(opts.tol > 0.0) {
        return Err(Error::InvalidArgument("Newton tolerance must be positive".into()));
    }
    let out = newton_core(projection, c_i0, opts)?;
    if !out.converged {
        return Err(Error::NotConverged {
            solver: "egg newton",
            iterations: out.iterations,
            residual: *out.history.last().unwrap(),
        });
    }
    Ok(out)
}

/// Bookkeeping of one parameterization.
#[derive(Debug, Clone)]
pub struct ParameterizeReport {
    pub projection: ProjectionReport,
    pub fold_rounds: usize,
    /// Newton iterations per solve (one entry per fold-repair round).
    pub newton_iterations: Vec<usize>,
    pub dofs: usize,
}

fn initial_guess(projection: &BoundaryProjection, warm: Option<&SplineFunction>) -> Result<Vec<f64>> {
    match warm {
        Some(w) => {
            let r = w.restrict(projection.space())?;
            Ok(split_coefficients(projection.boundary_set(), r.coeffs(), false))
        }
        None => initial_interior_guess(projection),
    }
}

/// Full pipeline: adaptive boundary projection, initial guess (Coons or a
/// warm start), Newton, and fold repair by refining every function that is
/// nonzero on a defective cell.
pub fn parameterize(
    curve: &dyn BoundaryCurve,
    alpha: &[f64],
    coarse: Arc<HierarchicalSpace>,
    mu: f64,
    warm: Option<&SplineFunction>,
    opts: &EggOptions,
) -> Result<(GeometryMapping, ParameterizeReport)> {
    let (mut projection, preport) = project_boundary_adaptive(curve, alpha, coarse, mu)?;
    let mut c_i = initial_guess(&projection, warm)?;
    let mut iterations = Vec::new();
    let mut rounds = 0;
    loop {
        let out = newton_core(&projection, c_i, &opts.newton)?;
        iterations.push(out.iterations);
        let space = projection.space().clone();
        let bis = projection.boundary_set();
        let function = SplineFunction::new(space.clone(), 2, combine_coefficients(bis, &out.c_i, projection.c_b()))?;
        let folds = detect_folds(&function)?;
        if out.converged && folds.is_empty() {
            let dofs = space.dim();
            let mut m = GeometryMapping::from_parts(projection, out.c_i)?;
            m.set_system(out.system);
            m.set_fold_free(true);
            return Ok((m, ParameterizeReport { projection: preport, fold_rounds: rounds, newton_iterations: iterations, dofs }));
        }
        if folds.is_empty() {
            return Err(Error::Parameterization(format!(
                "EGG Newton did not converge (residual {:.3e}) and no folded cells to refine",
                out.history.last().unwrap()
            )));
        }
        if rounds >= opts.max_fold_rounds {
            return Err(Error::Parameterization(format!(
                "{} defective cells remain after {rounds} repair rounds",
                folds.len()
            )));
        }
        rounds += 1;
        let mut funcs: Vec<usize> = folds.iter().flat_map(|&c| space.cell(c).functions().iter().copied()).collect();
        funcs.sort_unstable();
        funcs.dedup();
        let refined = match space.refine_functions(&funcs) {
            Ok(s) => Arc::new(s),
            Err(Error::RefinementBudget { .. }) => {
                let c = space.cell(folds[0]);
                return Err(Error::Parameterization(format!(
                    "refinement budget exhausted repairing {} defective cells near ({:.3}, {:.3})",
                    folds.len(),
                    0.5 * (c.bounds[0][0] + c.bounds[0][1]),
                    0.5 * (c.bounds[1][0] + c.bounds[1][1])
                )));
            }
            Err(e) => return Err(e),
        };
        let prolonged = function.prolong(&refined)?;
        projection = BoundaryProjection::new(curve, alpha, refined)?;
        c_i = split_coefficients(projection.boundary_set(), prolonged.coeffs(), false);
    }
}

/// Solves on a fixed space: no boundary adaptivity and no fold repair.
pub fn parameterize_fixed(
    curve: &dyn BoundaryCurve,
    alpha: &[f64],
    space: Arc<HierarchicalSpace>,
    warm: Option<&SplineFunction>,
    opts: &EggOptions,
) -> Result<(GeometryMapping, usize)> {
    let projection = BoundaryProjection::new(curve, alpha, space)?;
    let c_i = initial_guess(&projection, warm)?;
    let out = newton_solve_egg(&projection, c_i, &opts.newton)?;
    let its = out.iterations;
    let mut m = GeometryMapping::from_parts(projection, out.c_i)?;
    let folds = detect_folds(m.function())?;
    if !folds.is_empty() {
        return Err(Error::Parameterization(format!("{} defective cells on the frozen space", folds.len())));
    }
    m.set_system(out.system);
    m.set_fold_free(true);
    Ok((m, its))
}

#[cfg(test)]
mod tests;
