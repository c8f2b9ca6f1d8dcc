//! Design evaluation, the warm-start database and an SQP driver.
//!
//! An evaluation runs the whole pipeline at one design: basis selection
//! (adaptive boundary projection from a coarse space, or a fixed space),
//! EGG with fold repair, the state solve on the geometry space refined
//! `u_ref` times, and optionally all adjoint gradients. The SQP driver uses
//! a damped BFGS Hessian and an elastic dual active-set QP; trial points of the
//! line search reuse the incumbent basis and the basis is selected afresh at
//! every accepted iterate.

mod qp;

use core::cell::RefCell;

use alloc::format;
use alloc::string::String;
use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;

pub use qp::{Qp, QpSolution};

use crate::adjoint::{compute_gradient, fd_gradient_check, AdjointOptions, ComponentCheck, GradientMode, GradientResult};
use crate::egg::{parameterize, parameterize_fixed, split_coefficients, EggOptions, GeometryMapping};
use crate::math::{dot, norm_inf, Float};
use crate::problems::cooling::N_COOLERS;
use crate::problems::{solve_state, CoolingProblem, Discretization, StateProblem, StateSolution, Want};
use crate::spline::{HierarchicalSpace, SplineFunction};
use crate::{Error, Result};

/// Source of wall-clock time in seconds; the core crate has no clock of its
/// own.
pub trait Clock {
    fn seconds(&self) -> f64;
}

/// Reports zero elapsed time.
#[derive(Debug, Clone, Copy, Default)]
pub struct NoClock;

impl Clock for NoClock {
    fn seconds(&self) -> f64 {
        0.0
    }
}

/// Design values together with their box.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignVector {
    pub values: Vec<f64>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl DesignVector {
    pub fn new(values: Vec<f64>, lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        let n = values.len();
        for len in [lower.len(), upper.len()] {
            if len != n {
                return Err(Error::DimensionMismatch { expected: n, got: len });
            }
        }
        for j in 0..n {
            if !(lower[j] <= upper[j]) {
                return Err(Error::InvalidArgument(format!("empty box at component {j}")));
            }
            if !(values[j] >= lower[j] && values[j] <= upper[j]) {
                return Err(Error::OutOfBox(j));
            }
        }
        Ok(Self { values, lower, upper })
    }

    /// Uses the box of `problem`.
    pub fn for_problem(problem: &dyn StateProblem, values: Vec<f64>) -> Result<Self> {
        let (lo, hi) = problem.bounds();
        Self::new(values, lo, hi)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Componentwise clamp of `x` into the box.
    pub fn project(&self, x: &[f64]) -> Vec<f64> {
        x.iter().zip(self.lower.iter().zip(&self.upper)).map(|(v, (l, u))| v.max(*l).min(*u)).collect()
    }
}

/// How the geometry space is chosen at accepted iterates.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BasisMode {
    /// Adaptive boundary projection from the coarse space at every design.
    Variable,
    /// The uniform coarse space throughout, without adaptivity.
    Static,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizationConfig {
    /// Admissible constraint violation at termination.
    pub mu_feas: f64,
    /// Boundary projection threshold.
    pub mu: f64,
    /// Uniform refinements from the geometry space to the state space.
    pub u_ref: usize,
    pub kkt_tol: f64,
    pub max_outer_iter: usize,
    pub basis_mode: BasisMode,
    pub degree: usize,
    /// Elements per direction of the coarse (or static) geometry space.
    pub coarse_cells: [usize; 2],
    /// Radius of the warm-start lookup in design space.
    pub warm_start_radius: f64,
    pub egg: EggOptions,
    /// Relative tolerance of the state solve.
    pub state_tol: f64,
    /// Step halvings of one line search before giving up.
    pub max_step_halvings: usize,
    /// Initial BFGS matrix is this multiple of the identity.
    pub hessian_scale: f64,
    /// Stop as stalled once `stall_window` consecutive accepted steps each
    /// lower the merit function by less than `stall_rtol` relative. Zero
    /// disables the test.
    pub stall_rtol: f64,
    pub stall_window: usize,
}

impl OptimizationConfig {
    /// Settings of the validation problem for a projection threshold and
    /// state refinement.
    pub fn validation(mu: f64, u_ref: usize) -> Self {
        Self {
            mu_feas: 1e-6,
            mu,
            u_ref,
            kkt_tol: 1e-6,
            max_outer_iter: 50,
            basis_mode: BasisMode::Variable,
            degree: 3,
            coarse_cells: [7, 7],
            warm_start_radius: 0.05,
            egg: EggOptions::default(),
            state_tol: 1e-10,
            max_step_halvings: 10,
            hessian_scale: 1.0,
            stall_rtol: 0.0,
            stall_window: 3,
        }
    }

    /// Settings of the cooling problem for a temperature limit.
    pub fn cooling(t_max: f64) -> Self {
        Self {
            mu_feas: 1e-6 * t_max,
            mu: 0.5e-3,
            u_ref: 1,
            kkt_tol: 1e-4,
            max_outer_iter: 40,
            coarse_cells: [14, 7],
            hessian_scale: 100.0,
            stall_rtol: 1e-4,
            ..Self::validation(0.5e-3, 1)
        }
    }

    /// Static basis on `n_e x n_e` elements.
    pub fn with_static_basis(mut self, n_e: usize) -> Self {
        self.basis_mode = BasisMode::Static;
        self.coarse_cells = [n_e, n_e];
        self
    }

    fn coarse_space(&self) -> Result<Arc<HierarchicalSpace>> {
        Ok(Arc::new(HierarchicalSpace::uniform(self.degree, self.coarse_cells)?))
    }
}

impl Default for OptimizationConfig {
    fn default() -> Self {
        Self::validation(1e-4, 1)
    }
}

/// A stored design and its geometry mapping.
#[derive(Debug, Clone)]
pub struct WarmStartEntry {
    pub alpha: Vec<f64>,
    pub mapping: SplineFunction,
}

/// Mappings of earlier designs, looked up by Euclidean distance in design
/// space.
#[derive(Debug, Clone)]
pub struct WarmStartDatabase {
    entries: Vec<WarmStartEntry>,
    pub radius: f64,
}

impl WarmStartDatabase {
    pub fn new(radius: f64) -> Self {
        Self { entries: Vec::new(), radius }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[WarmStartEntry] {
        &self.entries
    }

    pub fn insert(&mut self, alpha: Vec<f64>, mapping: SplineFunction) {
        self.entries.push(WarmStartEntry { alpha, mapping });
    }

    /// Nearest stored design within the radius; the earliest wins ties.
    pub fn nearest(&self, alpha: &[f64]) -> Option<&WarmStartEntry> {
        let mut best: Option<(f64, &WarmStartEntry)> = None;
        for e in &self.entries {
            let d: f64 = e.alpha.iter().zip(alpha).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
            if d <= self.radius && best.map_or(true, |(b, _)| d < b) {
                best = Some((d, e));
            }
        }
        best.map(|(_, e)| e)
    }
}

/// Inner coefficients on `space` of the nearest stored mapping, if any.
pub fn warm_start_lookup(db: &WarmStartDatabase, alpha: &[f64], space: &Arc<HierarchicalSpace>) -> Result<Option<Vec<f64>>> {
    let Some(entry) = db.nearest(alpha) else {
        return Ok(None);
    };
    let moved = entry.mapping.restrict(space)?;
    Ok(Some(split_coefficients(&space.boundary_decompose(), moved.coeffs(), false)))
}

/// Where the geometry space of an evaluation comes from.
#[derive(Debug, Clone, Copy)]
pub enum Basis<'a> {
    /// Chosen by the configured [`BasisMode`].
    Select,
    /// The geometry and state spaces of an earlier evaluation, warm started
    /// from its mapping.
    Reuse(&'a Evaluation),
}

/// Everything computed at one design.
#[derive(Debug, Clone)]
pub struct Evaluation {
    pub alpha: Vec<f64>,
    pub objective: f64,
    pub constraints: Vec<f64>,
    pub gradient: Option<GradientResult>,
    pub mapping: GeometryMapping,
    pub state: StateSolution,
    pub fold_rounds: usize,
    /// EGG Newton iterations summed over fold-repair rounds.
    pub newton_iterations: usize,
    pub warm_started: bool,
    pub basis_reused: bool,
}

impl Evaluation {
    /// Geometry degrees of freedom, two per basis function.
    pub fn geometry_dofs(&self) -> usize {
        2 * self.mapping.space().dim()
    }

    pub fn state_dofs(&self) -> usize {
        self.state.space.dim()
    }

    /// `max(0, -min g_i)`.
    pub fn max_violation(&self) -> f64 {
        self.constraints.iter().fold(0.0, |m, g| m.max(-g))
    }

    pub fn gradient_norm(&self) -> Option<f64> {
        self.gradient.as_ref().map(|g| dot(&g.gradient, &g.gradient).sqrt())
    }
}

/// Geometry mapping on the basis chosen by the configured [`BasisMode`],
/// with the fold-repair rounds and the total EGG Newton iterations.
pub fn select_basis(
    problem: &dyn StateProblem,
    alpha: &[f64],
    config: &OptimizationConfig,
    warm: Option<&SplineFunction>,
) -> Result<(GeometryMapping, usize, usize)> {
    let coarse = config.coarse_space()?;
    match config.basis_mode {
        BasisMode::Variable => {
            let (m, rep) = parameterize(problem.curve(), alpha, coarse, config.mu, warm, &config.egg)?;
            Ok((m, rep.fold_rounds, rep.newton_iterations.iter().sum()))
        }
        BasisMode::Static => {
            let (m, its) = parameterize_fixed(problem.curve(), alpha, coarse, warm, &config.egg)?;
            Ok((m, 0, its))
        }
    }
}

/// Evaluates objective and constraints at `alpha`, with all gradients when
/// `with_gradient` is set, and stores the mapping in `db`.
pub fn evaluate_design(
    problem: &dyn StateProblem,
    alpha: &[f64],
    config: &OptimizationConfig,
    db: &mut WarmStartDatabase,
    basis: Basis<'_>,
    with_gradient: bool,
) -> Result<Evaluation> {
    problem.check_design(alpha)?;
    let (mapping, fold_rounds, newton_iterations, warm_started, state_space) = match basis {
        Basis::Reuse(inc) => {
            let (m, its) = parameterize_fixed(problem.curve(), alpha, inc.mapping.space().clone(), Some(inc.mapping.function()), &config.egg)?;
            (m, 0, its, true, inc.state.space.clone())
        }
        Basis::Select => {
            let warm = db.nearest(alpha).map(|e| e.mapping.clone());
            let (m, folds, its, warmed) = match select_basis(problem, alpha, config, warm.as_ref()) {
                Ok((m, f, i)) => (m, f, i, warm.is_some()),
                Err(_) if warm.is_some() => {
                    let (m, f, i) = select_basis(problem, alpha, config, None)?;
                    (m, f, i, false)
                }
                Err(e) => return Err(e),
            };
            let mut space = m.space().clone();
            for _ in 0..config.u_ref {
                space = Arc::new(space.uniformly_refined()?);
            }
            (m, folds, its, warmed, space)
        }
    };
    let state = solve_state(problem, mapping.function(), state_space, alpha, config.state_tol)?;
    let mut ev = Evaluation {
        alpha: alpha.to_vec(),
        objective: f64::NAN,
        constraints: Vec::new(),
        gradient: None,
        mapping,
        state,
        fold_rounds,
        newton_iterations,
        warm_started,
        basis_reused: matches!(basis, Basis::Reuse(_)),
    };
    if with_gradient {
        attach_gradient(problem, &mut ev, config)?;
    } else {
        let disc = Discretization {
            mapping: ev.mapping.function(),
            state_space: &ev.state.space,
            state: &ev.state.coeffs,
            alpha,
            geo_order: problem.geo_order(),
        };
        ev.objective = problem.objective(&disc, Want::VALUE)?.value;
        ev.constraints = problem.constraints(&disc, Want::VALUE)?.iter().map(|c| c.value).collect();
    }
    if !ev.objective.is_finite() || ev.constraints.iter().any(|c| !c.is_finite()) {
        return Err(Error::Evaluation(format!("non-finite objective or constraint at {alpha:?}")));
    }
    db.insert(alpha.to_vec(), ev.mapping.function().clone());
    Ok(ev)
}

/// Adds objective and constraint gradients to an evaluation.
pub fn attach_gradient(problem: &dyn StateProblem, ev: &mut Evaluation, config: &OptimizationConfig) -> Result<()> {
    let opts = AdjointOptions {
        state_tol: config.state_tol.max(1e-8),
        egg_tol: config.egg.newton.tol.max(1e-8),
        mode: GradientMode::Adjoint,
    };
    let g = compute_gradient(problem, &ev.mapping, &ev.state, &ev.alpha, &opts)?;
    ev.objective = g.objective_value;
    ev.constraints = g.constraint_values.clone();
    ev.gradient = Some(g);
    Ok(())
}

/// Role of an evaluation in the optimization history.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RecordKind {
    /// Starting point, or a step of the initial-design search.
    Start,
    /// Line-search trial that was accepted.
    TrialAccepted,
    /// Line-search trial that failed the sufficient-decrease test.
    TrialRejected,
    /// New iterate with a freshly selected basis and gradients.
    Accepted,
    /// The evaluation raised an error.
    Failed,
}

impl RecordKind {
    pub fn as_str(self) -> &'static str {
        match self {
            RecordKind::Start => "start",
            RecordKind::TrialAccepted => "trial-accepted",
            RecordKind::TrialRejected => "trial-rejected",
            RecordKind::Accepted => "accepted",
            RecordKind::Failed => "failed",
        }
    }
}

/// One evaluation in the history.
#[derive(Debug, Clone, PartialEq)]
pub struct IterationRecord {
    /// Outer iteration the evaluation belongs to.
    pub iteration: usize,
    pub kind: RecordKind,
    pub alpha: Vec<f64>,
    /// `NaN` for failed evaluations.
    pub objective: f64,
    pub gradient_norm: Option<f64>,
    pub max_violation: f64,
    pub geometry_dofs: usize,
    pub state_dofs: usize,
    pub fold_rounds: usize,
    pub newton_iterations: usize,
    /// Line-search step length, 0 for iterates that were not reached by a
    /// step.
    pub step: f64,
    /// L1 merit with the penalty weights of the current iteration.
    pub merit: f64,
    /// Merit of the incumbent on the same basis and weights, for trials.
    pub merit_reference: Option<f64>,
    /// KKT residual at an iterate, once computed.
    pub kkt: Option<f64>,
    pub wall_time: f64,
    pub message: Option<String>,
}

impl IterationRecord {
    fn from_evaluation(iteration: usize, kind: RecordKind, ev: &Evaluation, step: f64, merit: f64, clock: &dyn Clock) -> Self {
        Self {
            iteration,
            kind,
            alpha: ev.alpha.clone(),
            objective: ev.objective,
            gradient_norm: ev.gradient_norm(),
            max_violation: ev.max_violation(),
            geometry_dofs: ev.geometry_dofs(),
            state_dofs: ev.state_dofs(),
            fold_rounds: ev.fold_rounds,
            newton_iterations: ev.newton_iterations,
            step,
            merit,
            merit_reference: None,
            kkt: None,
            wall_time: clock.seconds(),
            message: None,
        }
    }

    fn failure(iteration: usize, alpha: &[f64], step: f64, err: &Error, clock: &dyn Clock) -> Self {
        Self {
            iteration,
            kind: RecordKind::Failed,
            alpha: alpha.to_vec(),
            objective: f64::NAN,
            gradient_norm: None,
            max_violation: f64::NAN,
            geometry_dofs: 0,
            state_dofs: 0,
            fold_rounds: 0,
            newton_iterations: 0,
            step,
            merit: f64::NAN,
            merit_reference: None,
            kkt: None,
            wall_time: clock.seconds(),
            message: Some(format!("{err}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Termination {
    /// KKT residual and violation below their tolerances.
    Converged,
    MaxIterations,
    /// The QP step is not a descent direction of the merit function.
    Stalled,
    /// Step halving reached its limit after failed evaluations.
    EvaluationFailure(String),
    /// Step halving reached its limit without sufficient decrease.
    LineSearchFailure,
    /// The QP subproblem could not be solved.
    QpFailure(String),
}

impl Termination {
    pub fn as_str(&self) -> &'static str {
        match self {
            Termination::Converged => "converged",
            Termination::MaxIterations => "max-iterations",
            Termination::Stalled => "stalled",
            Termination::EvaluationFailure(_) => "evaluation-failure",
            Termination::LineSearchFailure => "line-search-failure",
            Termination::QpFailure(_) => "qp-failure",
        }
    }
}

#[derive(Debug, Clone)]
pub struct OptimizationResult {
    pub alpha: Vec<f64>,
    pub objective: f64,
    pub constraints: Vec<f64>,
    pub status: Termination,
    /// Accepted SQP steps.
    pub iterations: usize,
    pub kkt: f64,
    pub history: Vec<IterationRecord>,
    /// Final iterate, with gradients.
    pub evaluation: Evaluation,
}

impl OptimizationResult {
    /// Mean geometry and state DOFs over the iterates (start and accepted
    /// points).
    pub fn average_dofs(&self) -> [f64; 2] {
        let its: Vec<&IterationRecord> =
            self.history.iter().filter(|r| matches!(r.kind, RecordKind::Start | RecordKind::Accepted)).collect();
        let n = its.len().max(1) as f64;
        [
            its.iter().map(|r| r.geometry_dofs as f64).sum::<f64>() / n,
            its.iter().map(|r| r.state_dofs as f64).sum::<f64>() / n,
        ]
    }

    pub fn converged(&self) -> bool {
        self.status == Termination::Converged
    }
}

struct Step {
    d: Vec<f64>,
    /// Multipliers of the linearized constraints.
    lambda: Vec<f64>,
    kkt: f64,
}

/// QP subproblem at `x`: `min 1/2 d^T B d + grad^T d + rho t` with
/// `g_i + a_i^T d + t >= 0`, `t >= 0` and the box on `x + d`.
fn qp_step(b: &[f64], x: &[f64], box_: &DesignVector, grad: &GradientResult) -> Result<Step> {
    let n = x.len();
    let m = grad.constraint_values.len();
    let nz = n + 1;
    let big = 1.0 + norm_inf(&grad.gradient) + grad.constraint_gradients.iter().map(|a| norm_inf(a)).fold(0.0, f64::max);
    let rho = 1e4 * big;
    let mut g = vec![0.0; nz * nz];
    for i in 0..n {
        g[i * nz..i * nz + n].copy_from_slice(&b[i * n..(i + 1) * n]);
    }
    // rho t + rho t^2 / 2 keeps the exact-penalty slope at t = 0
    g[nz * nz - 1] = rho;
    let mut h = grad.gradient.clone();
    h.push(rho);
    let mut rows = Vec::with_capacity(m + 1 + 2 * n);
    let mut rhs = Vec::with_capacity(rows.capacity());
    for (a, c) in grad.constraint_gradients.iter().zip(&grad.constraint_values) {
        let mut r = a.clone();
        r.push(1.0);
        rows.push(r);
        rhs.push(-c);
    }
    let mut unit = vec![0.0; nz];
    unit[n] = 1.0;
    rows.push(unit);
    rhs.push(0.0);
    for j in 0..n {
        let mut r = vec![0.0; nz];
        r[j] = 1.0;
        rows.push(r.clone());
        rhs.push(box_.lower[j] - x[j]);
        r[j] = -1.0;
        rows.push(r);
        rhs.push(x[j] - box_.upper[j]);
    }
    let sol = Qp { n: nz, g, h, rows, rhs }.solve(20 * (nz + m + 2 * n))?;
    let lambda = sol.multipliers[..m].to_vec();
    let mut stat = grad.gradient.clone();
    for (l, a) in lambda.iter().zip(&grad.constraint_gradients) {
        stat.iter_mut().zip(a).for_each(|(s, ai)| *s -= l * ai);
    }
    let mut comp = lambda.iter().zip(&grad.constraint_values).fold(0.0, |acc: f64, (l, c)| acc.max(l * c.abs()));
    for j in 0..n {
        let (lo, hi) = (sol.multipliers[m + 1 + 2 * j], sol.multipliers[m + 2 + 2 * j]);
        stat[j] += hi - lo;
        comp = comp.max(lo * (x[j] - box_.lower[j])).max(hi * (box_.upper[j] - x[j]));
    }
    let kkt = norm_inf(&stat).max(comp);
    let mut d = sol.z;
    d.truncate(n);
    Ok(Step { d, lambda, kkt })
}

fn merit(f: f64, c: &[f64], nu: &[f64]) -> f64 {
    f + c.iter().zip(nu).map(|(ci, w)| w * (-ci).max(0.0)).sum::<f64>()
}

fn lagrangian_gradient(g: &GradientResult, lambda: &[f64]) -> Vec<f64> {
    let mut out = g.gradient.clone();
    for (l, a) in lambda.iter().zip(&g.constraint_gradients) {
        out.iter_mut().zip(a).for_each(|(o, ai)| *o -= l * ai);
    }
    out
}

/// Powell-damped BFGS update of the row-major `b`.
fn bfgs_update(b: &mut [f64], s: &[f64], y: &[f64]) {
    let n = s.len();
    let bs: Vec<f64> = (0..n).map(|i| dot(&b[i * n..(i + 1) * n], s)).collect();
    let sbs = dot(s, &bs);
    if !(sbs > 1e-300) {
        return;
    }
    let sy = dot(s, y);
    let theta = if sy >= 0.2 * sbs { 1.0 } else { 0.8 * sbs / (sbs - sy) };
    let r: Vec<f64> = y.iter().zip(&bs).map(|(yi, bi)| theta * yi + (1.0 - theta) * bi).collect();
    let sr = dot(s, &r);
    for i in 0..n {
        for j in 0..n {
            b[i * n + j] += r[i] * r[j] / sr - bs[i] * bs[j] / sbs;
        }
    }
}

/// SQP from `x0`, which must be feasible within `mu_feas`.
pub fn optimize(
    problem: &dyn StateProblem,
    x0: &DesignVector,
    config: &OptimizationConfig,
    clock: &dyn Clock,
) -> Result<OptimizationResult> {
    let mut db = WarmStartDatabase::new(config.warm_start_radius);
    let mut history = Vec::new();
    let mut inc = evaluate_design(problem, &x0.values, config, &mut db, Basis::Select, true)?;
    if inc.max_violation() > config.mu_feas {
        return Err(Error::Optimizer(format!(
            "starting design violates its constraints by {:.3e}",
            inc.max_violation()
        )));
    }
    let n = x0.len();
    let m = inc.constraints.len();
    let mut nu = vec![0.0; m];
    history.push(IterationRecord::from_evaluation(0, RecordKind::Start, &inc, 0.0, inc.objective, clock));
    let mut b = vec![0.0; n * n];
    for i in 0..n {
        b[i * n + i] = config.hessian_scale;
    }
    let mut iterations = 0;
    let mut kkt = f64::NAN;
    let mut slow = 0;
    let status = loop {
        let grad = inc.gradient.clone().expect("iterates carry gradients");
        let step = match qp_step(&b, &inc.alpha, x0, &grad) {
            Ok(s) => s,
            Err(e) => break Termination::QpFailure(format!("{e}")),
        };
        kkt = step.kkt;
        if let Some(r) = history.iter_mut().rev().find(|r| matches!(r.kind, RecordKind::Start | RecordKind::Accepted)) {
            r.kkt = Some(kkt);
        }
        if kkt <= config.kkt_tol && inc.max_violation() <= config.mu_feas {
            break Termination::Converged;
        }
        if iterations >= config.max_outer_iter {
            break Termination::MaxIterations;
        }
        for (w, l) in nu.iter_mut().zip(&step.lambda) {
            *w = l.abs().max(0.5 * (*w + l.abs()));
        }
        let c = &inc.constraints;
        let phi0 = merit(inc.objective, c, &nu);
        let mut slope = dot(&grad.gradient, &step.d);
        for i in 0..m {
            let lin = c[i] + dot(&grad.constraint_gradients[i], &step.d);
            slope -= nu[i] * ((-c[i]).max(0.0) - (-lin).max(0.0));
        }
        if !(slope < -1e-15 * (1.0 + inc.objective.abs())) {
            break Termination::Stalled;
        }
        let mut s = 1.0;
        let mut halvings = 0;
        let mut last_error: Option<String> = None;
        let accepted = loop {
            let trial_x = x0.project(&inc.alpha.iter().zip(&step.d).map(|(x, d)| x + s * d).collect::<Vec<_>>());
            let trial = evaluate_design(problem, &trial_x, config, &mut db, Basis::Reuse(&inc), false).or_else(|e| match config.basis_mode {
                BasisMode::Variable => evaluate_design(problem, &trial_x, config, &mut db, Basis::Select, false),
                BasisMode::Static => Err(e),
            });
            match trial {
                Ok(t) => {
                    let phi = merit(t.objective, &t.constraints, &nu);
                    let ok = phi <= phi0 + 1e-4 * s * slope;
                    let kind = if ok { RecordKind::TrialAccepted } else { RecordKind::TrialRejected };
                    let mut rec = IterationRecord::from_evaluation(iterations + 1, kind, &t, s, phi, clock);
                    rec.merit_reference = Some(phi0);
                    history.push(rec);
                    if ok {
                        let next = if config.basis_mode == BasisMode::Variable && t.basis_reused {
                            evaluate_design(problem, &trial_x, config, &mut db, Basis::Select, true)
                        } else {
                            let mut t = t;
                            attach_gradient(problem, &mut t, config).map(|_| t)
                        };
                        match next {
                            Ok(e) => break Some(e),
                            Err(e) => {
                                history.push(IterationRecord::failure(iterations + 1, &trial_x, s, &e, clock));
                                last_error = Some(format!("{e}"));
                            }
                        }
                    } else {
                        last_error = None;
                    }
                }
                Err(e) => {
                    history.push(IterationRecord::failure(iterations + 1, &trial_x, s, &e, clock));
                    last_error = Some(format!("{e}"));
                }
            }
            if halvings >= config.max_step_halvings {
                break None;
            }
            halvings += 1;
            s *= 0.5;
        };
        let Some(next) = accepted else {
            break match last_error {
                Some(e) => Termination::EvaluationFailure(e),
                None => Termination::LineSearchFailure,
            };
        };
        iterations += 1;
        let ng = next.gradient.as_ref().expect("accepted iterates carry gradients");
        let sv: Vec<f64> = next.alpha.iter().zip(&inc.alpha).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = lagrangian_gradient(ng, &step.lambda)
            .iter()
            .zip(&lagrangian_gradient(&grad, &step.lambda))
            .map(|(a, b)| a - b)
            .collect();
        bfgs_update(&mut b, &sv, &y);
        let phi = merit(next.objective, &next.constraints, &nu);
        history.push(IterationRecord::from_evaluation(iterations, RecordKind::Accepted, &next, s, phi, clock));
        inc = next;
        slow = if phi0 - phi < config.stall_rtol * phi0.abs().max(1.0) { slow + 1 } else { 0 };
        if config.stall_rtol > 0.0 && slow >= config.stall_window && inc.max_violation() <= config.mu_feas {
            break Termination::Stalled;
        }
    };
    Ok(OptimizationResult {
        alpha: inc.alpha.clone(),
        objective: inc.objective,
        constraints: inc.constraints.clone(),
        status,
        iterations,
        kkt,
        history,
        evaluation: inc,
    })
}

/// Finite-difference check of the objective gradient and of the selected
/// constraint gradients at `alpha`. The perturbed designs keep the basis of
/// the unperturbed evaluation, with tightened solver tolerances.
#[derive(Debug, Clone)]
pub struct GradientCheck {
    pub gradient: GradientResult,
    pub objective: Vec<ComponentCheck>,
    /// `(constraint index, checks)`.
    pub constraints: Vec<(usize, Vec<ComponentCheck>)>,
    pub geometry_dofs: usize,
    pub state_dofs: usize,
}

impl GradientCheck {
    pub fn max_relative_error(&self) -> f64 {
        self.objective
            .iter()
            .chain(self.constraints.iter().flat_map(|(_, c)| c.iter()))
            .fold(0.0, |m, c| m.max(c.relative_error))
    }
}

pub fn check_gradient(
    problem: &dyn StateProblem,
    alpha: &[f64],
    config: &OptimizationConfig,
    h: f64,
    constraint_ids: &[usize],
) -> Result<GradientCheck> {
    let mut tight = config.clone();
    tight.egg.newton.tol = tight.egg.newton.tol.min(1e-13);
    tight.state_tol = tight.state_tol.min(1e-11);
    for &k in constraint_ids {
        if k >= problem.n_constraints() {
            return Err(Error::InvalidArgument(format!("constraint index {k} out of range")));
        }
    }
    let mut db = WarmStartDatabase::new(0.0);
    let base = evaluate_design(problem, alpha, &tight, &mut db, Basis::Select, true)?;
    let gradient = base.gradient.clone().expect("requested gradients");
    // every functional is differenced at the same points: evaluate each once
    let seen: RefCell<Vec<(Vec<f64>, f64, Vec<f64>)>> = RefCell::new(Vec::new());
    let eval = |a: &[f64]| -> Result<(f64, Vec<f64>)> {
        if let Some((_, j, c)) = seen.borrow().iter().find(|(x, _, _)| x.as_slice() == a) {
            return Ok((*j, c.clone()));
        }
        let mut scratch = WarmStartDatabase::new(0.0);
        let e = evaluate_design(problem, a, &tight, &mut scratch, Basis::Reuse(&base), false)?;
        seen.borrow_mut().push((a.to_vec(), e.objective, e.constraints.clone()));
        Ok((e.objective, e.constraints))
    };
    let objective = fd_gradient_check(|a| Ok(eval(a)?.0), alpha, &gradient.gradient, h)?;
    let mut constraints = Vec::new();
    for &k in constraint_ids {
        let checks = fd_gradient_check(|a| Ok(eval(a)?.1[k]), alpha, &gradient.constraint_gradients[k], h)?;
        constraints.push((k, checks));
    }
    Ok(GradientCheck { gradient, objective, constraints, geometry_dofs: base.geometry_dofs(), state_dofs: base.state_dofs() })
}

/// Starting design of the cooling problem: the default placement with every
/// radius at `r0`, then cooler `which` grown in steps of `dr` until the
/// source temperature drops below its limit.
pub fn cooling_initial_design(
    problem: &CoolingProblem,
    config: &OptimizationConfig,
    which: usize,
    r0: f64,
    dr: f64,
    clock: &dyn Clock,
) -> Result<(Vec<f64>, Vec<IterationRecord>)> {
    if which >= N_COOLERS || !(dr > 0.0) {
        return Err(Error::InvalidArgument("cooler index or radius step out of range".into()));
    }
    let mut alpha = problem.default_design([r0; N_COOLERS]);
    let slot = 2 * N_COOLERS + which;
    let mut db = WarmStartDatabase::new(config.warm_start_radius);
    let mut history = Vec::new();
    loop {
        let geometric = problem.template.constraints(&alpha);
        if geometric.iter().any(|g| *g < 0.0) || problem.check_design(&alpha).is_err() {
            return Err(Error::Optimizer(format!(
                "cooler {} cannot grow past R = {:.3} without violating the template constraints",
                which + 1,
                alpha[slot]
            )));
        }
        let ev = evaluate_design(problem, &alpha, config, &mut db, Basis::Select, false)?;
        history.push(IterationRecord::from_evaluation(0, RecordKind::Start, &ev, 0.0, ev.objective, clock));
        if ev.constraints[0] > 0.0 {
            return Ok((alpha, history));
        }
        alpha[slot] += dr;
    }
}

#[cfg(test)]
mod tests;
