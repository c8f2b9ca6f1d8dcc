//! The four subcommands. Each writes its artifacts into the output
//! directory and finishes with `manifest.json`.

use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, Context, Result};
use serde::Serialize;
use shapeopt_core::egg::egg_system;
use shapeopt_core::math::norm_inf;
use shapeopt_core::optimizer::{
    check_gradient, cooling_initial_design, evaluate_design, optimize, select_basis, Basis, Clock, DesignVector, Evaluation,
    IterationRecord, Termination, WarmStartDatabase,
};
use shapeopt_core::problems::{Discretization, ValidationReference};

use crate::config::{Problem, RunConfig};
use crate::export::{
    round12, round_all, write_convergence_log, write_json, write_table, OUTPUT_SCHEMA, SAMPLES_PER_DIRECTION,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    Parameterize,
    Solve,
    Optimize,
    CheckGradient,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Parameterize => "parameterize",
            Command::Solve => "solve",
            Command::Optimize => "optimize",
            Command::CheckGradient => "check-gradient",
        }
    }
}

/// Wall clock started at construction.
#[derive(Debug, Clone, Copy)]
pub struct WallClock(Instant);

impl WallClock {
    pub fn start() -> Self {
        Self(Instant::now())
    }
}

impl Clock for WallClock {
    fn seconds(&self) -> f64 {
        self.0.elapsed().as_secs_f64()
    }
}

/// Files written by a run, relative to the output directory.
#[derive(Debug, Clone, Default)]
pub struct Artifacts {
    pub dir: PathBuf,
    pub files: Vec<String>,
}

impl Artifacts {
    fn path(&mut self, name: &str) -> PathBuf {
        self.files.push(name.to_string());
        self.dir.join(name)
    }
}

#[derive(Serialize)]
struct Manifest<'a> {
    output_schema: u32,
    tool: &'static str,
    version: &'static str,
    command: &'static str,
    seed: u64,
    threads: usize,
    config: &'a RunConfig,
    files: &'a [String],
    wall_time_seconds: f64,
}

/// Runs `command` and writes its artifacts.
pub fn run(command: Command, cfg: &RunConfig) -> Result<Artifacts> {
    let clock = WallClock::start();
    std::fs::create_dir_all(&cfg.output_dir).with_context(|| format!("cannot create {}", cfg.output_dir.display()))?;
    let mut art = Artifacts { dir: cfg.output_dir.clone(), files: Vec::new() };
    match command {
        Command::Parameterize => parameterize_cmd(cfg, &mut art, &clock)?,
        Command::Solve => solve_cmd(cfg, &mut art, &clock)?,
        Command::Optimize => optimize_cmd(cfg, &mut art, &clock)?,
        Command::CheckGradient => check_gradient_cmd(cfg, &mut art, &clock)?,
    }
    let mut files = art.files.clone();
    files.push("manifest.json".into());
    let manifest = Manifest {
        output_schema: OUTPUT_SCHEMA,
        tool: "shapeopt",
        version: env!("CARGO_PKG_VERSION"),
        command: command.name(),
        seed: cfg.seed,
        threads: cfg.threads,
        config: cfg,
        files: &files,
        wall_time_seconds: clock.seconds(),
    };
    write_json(&art.path("manifest.json"), &manifest)?;
    Ok(art)
}

/// The configured design, or the problem default: zero for the validation
/// problem, the grown single-cooler design for the cooling problem.
pub fn starting_design(cfg: &RunConfig, problem: &Problem, clock: &dyn Clock) -> Result<(Vec<f64>, Vec<IterationRecord>)> {
    if let Some(a) = &cfg.design.alpha {
        return Ok((a.clone(), Vec::new()));
    }
    match problem {
        Problem::Validation(_) => Ok((vec![0.0; 4], Vec::new())),
        Problem::Cooling(p) => {
            log::info!("growing cooler {} until the temperature limit holds", cfg.design.grow_cooler);
            let (a, h) = cooling_initial_design(
                p,
                &cfg.optimization.to_core(),
                cfg.design.grow_cooler - 1,
                cfg.design.initial_radius,
                cfg.design.radius_step,
                clock,
            )?;
            Ok((a, h))
        }
    }
}

#[derive(Serialize)]
struct ParameterizeReport {
    alpha: Vec<f64>,
    geometry_dofs: usize,
    boundary_functions: usize,
    inner_functions: usize,
    fold_rounds: usize,
    newton_iterations: usize,
    egg_residual: f64,
    min_det_j_samples: f64,
    levels: usize,
}

fn parameterize_cmd(cfg: &RunConfig, art: &mut Artifacts, clock: &dyn Clock) -> Result<()> {
    let problem = cfg.problem();
    let p = problem.as_dyn();
    let (alpha, _) = starting_design(cfg, &problem, clock)?;
    p.check_design(&alpha)?;
    let (mapping, folds, newton) = select_basis(p, &alpha, &cfg.optimization.to_core(), None)?;
    let samples = mapping.sample_grid(SAMPLES_PER_DIRECTION)?;
    let min_det = samples.iter().map(|s| s[4]).fold(f64::INFINITY, f64::min);
    let residual = norm_inf(&egg_system(mapping.function(), mapping.boundary_set(), false)?.residual);
    write_table(&art.path("mapping_samples.csv"), &["xi", "eta", "x", "y", "det_j"], samples.iter().map(|s| s.to_vec()))?;
    let bis = mapping.boundary_set();
    let report = ParameterizeReport {
        alpha: round_all(&alpha),
        geometry_dofs: 2 * mapping.space().dim(),
        boundary_functions: bis.n_boundary(),
        inner_functions: bis.n_inner(),
        fold_rounds: folds,
        newton_iterations: newton,
        egg_residual: round12(residual),
        min_det_j_samples: round12(min_det),
        levels: mapping.space().n_levels(),
    };
    write_json(&art.path("parameterize_report.json"), &report)?;
    log::info!("parameterized: {} geometry DOFs, {} fold-repair rounds", report.geometry_dofs, folds);
    Ok(())
}

#[derive(Serialize)]
struct EnergyReport {
    influx: f64,
    cooling: f64,
    dissipation: f64,
    relative_imbalance: f64,
}

#[derive(Serialize)]
struct SolveSummary {
    problem: &'static str,
    alpha: Vec<f64>,
    objective: f64,
    constraints: Vec<f64>,
    max_violation: f64,
    geometry_dofs: usize,
    state_dofs: usize,
    fold_rounds: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    source_temperature: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    energy_balance: Option<EnergyReport>,
}

/// `(xi, eta, x, y, det J, u)` on the sample grid.
pub fn field_samples(ev: &Evaluation, n: usize) -> Result<Vec<[f64; 6]>> {
    let u = ev.state.function()?;
    let mut out = Vec::with_capacity(n * n);
    for s in ev.mapping.sample_grid(n)? {
        let v = u.value(s[0], s[1])?;
        out.push([s[0], s[1], s[2], s[3], s[4], v[0]]);
    }
    Ok(out)
}

fn energy_report(problem: &Problem, ev: &Evaluation) -> Result<Option<EnergyReport>> {
    let Problem::Cooling(p) = problem else {
        return Ok(None);
    };
    let disc = Discretization {
        mapping: ev.mapping.function(),
        state_space: &ev.state.space,
        state: &ev.state.coeffs,
        alpha: &ev.alpha,
        geo_order: 1,
    };
    let e = p.energy_balance(&disc)?;
    Ok(Some(EnergyReport {
        influx: round12(e.influx),
        cooling: round12(e.cooling),
        dissipation: round12(e.dissipation),
        relative_imbalance: round12(e.relative_imbalance()),
    }))
}

fn source_temperature(problem: &Problem, ev: &Evaluation) -> Option<f64> {
    match problem {
        Problem::Cooling(p) => Some(round12(p.params.t_max - ev.constraints[0])),
        Problem::Validation(_) => None,
    }
}

fn solve_cmd(cfg: &RunConfig, art: &mut Artifacts, clock: &dyn Clock) -> Result<()> {
    let problem = cfg.problem();
    let p = problem.as_dyn();
    let (alpha, _) = starting_design(cfg, &problem, clock)?;
    let mut db = WarmStartDatabase::new(cfg.optimization.warm_start_radius);
    let ev = evaluate_design(p, &alpha, &cfg.optimization.to_core(), &mut db, Basis::Select, false)?;
    let rows = field_samples(&ev, SAMPLES_PER_DIRECTION)?;
    write_table(&art.path("mapping_samples.csv"), &["xi", "eta", "x", "y", "det_j"], rows.iter().map(|r| r[..5].to_vec()))?;
    write_table(&art.path("field_samples.csv"), &["xi", "eta", "x", "y", "det_j", "u"], rows.iter().map(|r| r.to_vec()))?;
    let summary = SolveSummary {
        problem: p.name(),
        alpha: round_all(&alpha),
        objective: round12(ev.objective),
        constraints: round_all(&ev.constraints),
        max_violation: round12(ev.max_violation()),
        geometry_dofs: ev.geometry_dofs(),
        state_dofs: ev.state_dofs(),
        fold_rounds: ev.fold_rounds,
        source_temperature: source_temperature(&problem, &ev),
        energy_balance: energy_report(&problem, &ev)?,
    };
    write_json(&art.path("solve_summary.json"), &summary)?;
    log::info!("J_h = {:.12}", ev.objective);
    Ok(())
}

#[derive(Serialize)]
struct OptimizeSummary {
    problem: &'static str,
    status: &'static str,
    #[serde(skip_serializing_if = "Option::is_none")]
    status_detail: Option<String>,
    iterations: usize,
    evaluations: usize,
    initial_objective: f64,
    objective: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    objective_error: Option<f64>,
    kkt: f64,
    max_violation: f64,
    average_geometry_dofs: f64,
    average_state_dofs: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    source_temperature: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    energy_balance: Option<EnergyReport>,
    alpha: Vec<f64>,
}

#[derive(Serialize)]
struct FinalDesign {
    problem: &'static str,
    alpha: Vec<f64>,
    lower: Vec<f64>,
    upper: Vec<f64>,
    constraints: Vec<f64>,
}

fn optimize_cmd(cfg: &RunConfig, art: &mut Artifacts, clock: &dyn Clock) -> Result<()> {
    let problem = cfg.problem();
    let p = problem.as_dyn();
    let (alpha, search) = starting_design(cfg, &problem, clock)?;
    let x0 = DesignVector::for_problem(p, alpha)?;
    log::info!("optimizing {} from {:?}", p.name(), x0.values);
    let r = optimize(p, &x0, &cfg.optimization.to_core(), clock)?;
    let mut history = search;
    history.extend(r.history.iter().cloned());
    write_convergence_log(&art.path("convergence.csv"), &history)?;
    let final_design = FinalDesign {
        problem: p.name(),
        alpha: round_all(&r.alpha),
        lower: x0.lower.clone(),
        upper: x0.upper.clone(),
        constraints: round_all(&r.constraints),
    };
    write_json(&art.path("final_design.json"), &final_design)?;
    let [geo, state] = r.average_dofs();
    let detail = match &r.status {
        Termination::EvaluationFailure(s) | Termination::QpFailure(s) => Some(s.clone()),
        _ => None,
    };
    let summary = OptimizeSummary {
        problem: p.name(),
        status: r.status.as_str(),
        status_detail: detail,
        iterations: r.iterations,
        evaluations: r.history.len(),
        initial_objective: round12(r.history[0].objective),
        objective: round12(r.objective),
        objective_error: match problem {
            Problem::Validation(_) => Some(round12((r.objective - ValidationReference::new().j_star).abs())),
            Problem::Cooling(_) => None,
        },
        kkt: round12(r.kkt),
        max_violation: round12(r.evaluation.max_violation()),
        average_geometry_dofs: round12(geo),
        average_state_dofs: round12(state),
        source_temperature: source_temperature(&problem, &r.evaluation),
        energy_balance: energy_report(&problem, &r.evaluation)?,
        alpha: round_all(&r.alpha),
    };
    write_json(&art.path("summary.json"), &summary)?;
    log::info!("{}: {} iterations, J_h = {:.12}", r.status.as_str(), r.iterations, r.objective);
    Ok(())
}

#[derive(Serialize)]
struct GradientCheckSummary {
    problem: &'static str,
    alpha: Vec<f64>,
    step: f64,
    geometry_dofs: usize,
    state_dofs: usize,
    max_relative_error: f64,
    failures: usize,
}

fn check_gradient_cmd(cfg: &RunConfig, art: &mut Artifacts, clock: &dyn Clock) -> Result<()> {
    let problem = cfg.problem();
    let p = problem.as_dyn();
    let (alpha, _) = starting_design(cfg, &problem, clock)?;
    let ids = &cfg.gradient_check.constraints;
    if let Some(k) = ids.iter().find(|&&k| k >= p.n_constraints()) {
        bail!("gradient_check.constraints: index {k} out of range ({} constraints)", p.n_constraints());
    }
    let c = check_gradient(p, &alpha, &cfg.optimization.to_core(), cfg.gradient_check.step, ids)?;
    let path = art.path("gradient_check.csv");
    let mut w = csv::Writer::from_path(&path).with_context(|| format!("cannot create {}", path.display()))?;
    w.write_record(["functional", "component", "adjoint", "finite_difference", "relative_error", "failure"])?;
    let mut failures = 0;
    let named = std::iter::once(("objective".to_string(), &c.objective))
        .chain(c.constraints.iter().map(|(k, v)| (format!("constraint_{k}"), v)));
    for (name, checks) in named {
        for ch in checks {
            failures += usize::from(ch.failure.is_some());
            w.write_record([
                name.clone(),
                ch.index.to_string(),
                crate::export::fmt12(ch.adjoint),
                ch.finite_difference.map_or(String::new(), crate::export::fmt12),
                crate::export::fmt12(ch.relative_error),
                ch.failure.clone().unwrap_or_default(),
            ])?;
        }
    }
    w.flush()?;
    let summary = GradientCheckSummary {
        problem: p.name(),
        alpha: round_all(&alpha),
        step: cfg.gradient_check.step,
        geometry_dofs: c.geometry_dofs,
        state_dofs: c.state_dofs,
        max_relative_error: round12(c.max_relative_error()),
        failures,
    };
    write_json(&art.path("gradient_check.json"), &summary)?;
    log::info!("max relative error {:.3e}", c.max_relative_error());
    Ok(())
}

/// Parses a JSON artifact.
pub fn read_json(path: &Path) -> Result<serde_json::Value> {
    let text = std::fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
    Ok(serde_json::from_str(&text)?)
}
