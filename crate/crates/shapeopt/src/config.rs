//! Run configuration: a TOML document with a fixed schema. Unknown keys are
//! errors; every omitted value takes the problem default and the resolved
//! configuration is echoed into the manifest.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use shapeopt_core::egg::{EggOptions, NewtonOptions};
use shapeopt_core::optimizer::{BasisMode, OptimizationConfig};
use shapeopt_core::problems::{CoolerSide, CoolingParams, CoolingProblem, CoolingTemplate, StateProblem, ValidationParams, ValidationProblem};

/// Version of the configuration schema.
pub const CONFIG_SCHEMA: u32 = 1;

/// Environment variable overriding `threads`.
pub const THREADS_ENV: &str = "SHAPEOPT_THREADS";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProblemId {
    Validation,
    Cooling,
}

/// Configuration as written in the file; every field is optional.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawConfig {
    pub schema: Option<u32>,
    pub problem: Option<ProblemId>,
    pub output_dir: Option<PathBuf>,
    pub seed: Option<u64>,
    pub threads: Option<usize>,
    #[serde(default)]
    pub design: RawDesign,
    #[serde(default)]
    pub optimization: RawOptimization,
    #[serde(default)]
    pub validation: RawValidation,
    #[serde(default)]
    pub cooling: RawCooling,
    #[serde(default)]
    pub gradient_check: RawGradientCheck,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawDesign {
    pub alpha: Option<Vec<f64>>,
    pub grow_cooler: Option<usize>,
    pub initial_radius: Option<f64>,
    pub radius_step: Option<f64>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawOptimization {
    pub mu_feas: Option<f64>,
    pub mu: Option<f64>,
    pub u_ref: Option<usize>,
    pub kkt_tol: Option<f64>,
    pub max_outer_iter: Option<usize>,
    pub basis_mode: Option<BasisModeId>,
    pub degree: Option<usize>,
    pub coarse_cells: Option<[usize; 2]>,
    pub warm_start_radius: Option<f64>,
    pub newton_tol: Option<f64>,
    pub newton_max_iter: Option<usize>,
    pub newton_min_step: Option<f64>,
    pub max_fold_rounds: Option<usize>,
    pub state_tol: Option<f64>,
    pub max_step_halvings: Option<usize>,
    pub hessian_scale: Option<f64>,
    pub stall_rtol: Option<f64>,
    pub stall_window: Option<usize>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawValidation {
    pub penalty: Option<f64>,
    pub upper: Option<f64>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawCooling {
    pub conductivity: Option<f64>,
    pub dissipation: Option<f64>,
    pub n_tot: Option<f64>,
    pub sigma: Option<f64>,
    pub source: Option<[f64; 2]>,
    pub t_max: Option<f64>,
    pub cost: Option<f64>,
    pub cooling_rate: Option<f64>,
    pub ambient: Option<f64>,
    pub r_max: Option<f64>,
    pub sides: Option<[SideId; 4]>,
    pub fillet_ratio: Option<f64>,
    pub r_min: Option<f64>,
    pub e_min: Option<f64>,
    pub band: Option<f64>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawGradientCheck {
    pub step: Option<f64>,
    pub constraints: Option<Vec<usize>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BasisModeId {
    Variable,
    Static,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SideId {
    South,
    East,
    North,
}

impl From<SideId> for CoolerSide {
    fn from(s: SideId) -> Self {
        match s {
            SideId::South => CoolerSide::South,
            SideId::East => CoolerSide::East,
            SideId::North => CoolerSide::North,
        }
    }
}

impl From<CoolerSide> for SideId {
    fn from(s: CoolerSide) -> Self {
        match s {
            CoolerSide::South => SideId::South,
            CoolerSide::East => SideId::East,
            CoolerSide::North => SideId::North,
        }
    }
}

/// Fully resolved configuration; serialized verbatim into the manifest.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunConfig {
    pub schema: u32,
    pub problem: ProblemId,
    pub output_dir: PathBuf,
    pub seed: u64,
    pub threads: usize,
    pub design: Design,
    pub optimization: Optimization,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub validation: Option<Validation>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cooling: Option<Cooling>,
    pub gradient_check: GradientCheckSettings,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Design {
    /// Explicit starting design; `None` selects the problem default.
    pub alpha: Option<Vec<f64>>,
    /// Cooler grown to reach feasibility (1-based); cooling only.
    pub grow_cooler: usize,
    pub initial_radius: f64,
    pub radius_step: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Optimization {
    pub mu_feas: f64,
    pub mu: f64,
    pub u_ref: usize,
    pub kkt_tol: f64,
    pub max_outer_iter: usize,
    pub basis_mode: BasisModeId,
    pub degree: usize,
    pub coarse_cells: [usize; 2],
    pub warm_start_radius: f64,
    pub newton_tol: f64,
    pub newton_max_iter: usize,
    pub newton_min_step: f64,
    pub max_fold_rounds: usize,
    pub state_tol: f64,
    pub max_step_halvings: usize,
    pub hessian_scale: f64,
    pub stall_rtol: f64,
    pub stall_window: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Validation {
    pub penalty: f64,
    pub upper: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Cooling {
    pub conductivity: f64,
    pub dissipation: f64,
    pub n_tot: f64,
    pub sigma: f64,
    pub source: [f64; 2],
    pub t_max: f64,
    pub cost: f64,
    pub cooling_rate: f64,
    pub ambient: f64,
    pub r_max: f64,
    pub sides: [SideId; 4],
    pub fillet_ratio: f64,
    pub r_min: f64,
    pub e_min: f64,
    pub band: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GradientCheckSettings {
    pub step: f64,
    /// Constraint indices checked besides the objective.
    pub constraints: Vec<usize>,
}

impl Optimization {
    fn resolve(raw: &RawOptimization, base: &OptimizationConfig) -> Self {
        Self {
            mu_feas: raw.mu_feas.unwrap_or(base.mu_feas),
            mu: raw.mu.unwrap_or(base.mu),
            u_ref: raw.u_ref.unwrap_or(base.u_ref),
            kkt_tol: raw.kkt_tol.unwrap_or(base.kkt_tol),
            max_outer_iter: raw.max_outer_iter.unwrap_or(base.max_outer_iter),
            basis_mode: raw.basis_mode.unwrap_or(match base.basis_mode {
                BasisMode::Variable => BasisModeId::Variable,
                BasisMode::Static => BasisModeId::Static,
            }),
            degree: raw.degree.unwrap_or(base.degree),
            coarse_cells: raw.coarse_cells.unwrap_or(base.coarse_cells),
            warm_start_radius: raw.warm_start_radius.unwrap_or(base.warm_start_radius),
            newton_tol: raw.newton_tol.unwrap_or(base.egg.newton.tol),
            newton_max_iter: raw.newton_max_iter.unwrap_or(base.egg.newton.max_iter),
            newton_min_step: raw.newton_min_step.unwrap_or(base.egg.newton.min_step),
            max_fold_rounds: raw.max_fold_rounds.unwrap_or(base.egg.max_fold_rounds),
            state_tol: raw.state_tol.unwrap_or(base.state_tol),
            max_step_halvings: raw.max_step_halvings.unwrap_or(base.max_step_halvings),
            hessian_scale: raw.hessian_scale.unwrap_or(base.hessian_scale),
            stall_rtol: raw.stall_rtol.unwrap_or(base.stall_rtol),
            stall_window: raw.stall_window.unwrap_or(base.stall_window),
        }
    }

    pub fn to_core(&self) -> OptimizationConfig {
        OptimizationConfig {
            mu_feas: self.mu_feas,
            mu: self.mu,
            u_ref: self.u_ref,
            kkt_tol: self.kkt_tol,
            max_outer_iter: self.max_outer_iter,
            basis_mode: match self.basis_mode {
                BasisModeId::Variable => BasisMode::Variable,
                BasisModeId::Static => BasisMode::Static,
            },
            degree: self.degree,
            coarse_cells: self.coarse_cells,
            warm_start_radius: self.warm_start_radius,
            egg: EggOptions {
                newton: NewtonOptions { tol: self.newton_tol, max_iter: self.newton_max_iter, min_step: self.newton_min_step },
                max_fold_rounds: self.max_fold_rounds,
            },
            state_tol: self.state_tol,
            max_step_halvings: self.max_step_halvings,
            hessian_scale: self.hessian_scale,
            stall_rtol: self.stall_rtol,
            stall_window: self.stall_window,
        }
    }
}

/// A constructed problem of either kind.
#[derive(Debug, Clone)]
pub enum Problem {
    Validation(ValidationProblem),
    Cooling(CoolingProblem),
}

impl Problem {
    pub fn as_dyn(&self) -> &dyn StateProblem {
        match self {
            Problem::Validation(p) => p,
            Problem::Cooling(p) => p,
        }
    }
}

impl RunConfig {
    /// Parses and resolves a configuration document. `threads_env` is the
    /// value of [`THREADS_ENV`], if set.
    pub fn from_toml(text: &str, threads_env: Option<&str>) -> Result<Self> {
        let raw: RawConfig = toml::from_str(text).context("invalid configuration")?;
        Self::resolve(raw, threads_env)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
        let env = std::env::var(THREADS_ENV).ok();
        Self::from_toml(&text, env.as_deref())
    }

    pub fn resolve(raw: RawConfig, threads_env: Option<&str>) -> Result<Self> {
        let schema = raw.schema.unwrap_or(CONFIG_SCHEMA);
        if schema != CONFIG_SCHEMA {
            bail!("unsupported configuration schema {schema} (this build reads {CONFIG_SCHEMA})");
        }
        let Some(problem) = raw.problem else {
            bail!("missing key `problem` (validation | cooling)");
        };
        let mut threads = raw.threads.unwrap_or(1);
        if let Some(v) = threads_env {
            threads = v.trim().parse().with_context(|| format!("{THREADS_ENV}={v:?} is not a thread count"))?;
        }
        if threads == 0 {
            bail!("threads must be at least 1");
        }
        let (base, validation, cooling, checked) = match problem {
            ProblemId::Validation => {
                if raw.cooling_given() {
                    bail!("section [cooling] given for the validation problem");
                }
                let d = ValidationParams::default();
                let v = Validation { penalty: raw.validation.penalty.unwrap_or(d.penalty), upper: raw.validation.upper.unwrap_or(d.upper) };
                (OptimizationConfig::validation(1e-4, 1), Some(v), None, Vec::new())
            }
            ProblemId::Cooling => {
                if raw.validation.penalty.is_some() || raw.validation.upper.is_some() {
                    bail!("section [validation] given for the cooling problem");
                }
                let c = Cooling::resolve(&raw.cooling);
                (OptimizationConfig::cooling(c.t_max), None, Some(c), vec![0])
            }
        };
        let design = Design {
            alpha: raw.design.alpha.clone(),
            grow_cooler: raw.design.grow_cooler.unwrap_or(1),
            initial_radius: raw.design.initial_radius.unwrap_or(0.05),
            radius_step: raw.design.radius_step.unwrap_or(0.05),
        };
        if !(1..=4).contains(&design.grow_cooler) {
            bail!("design.grow_cooler must be in 1..=4");
        }
        let cfg = Self {
            schema,
            problem,
            output_dir: raw.output_dir.clone().unwrap_or_else(|| PathBuf::from("shapeopt-out")),
            seed: raw.seed.unwrap_or(0),
            threads,
            design,
            optimization: Optimization::resolve(&raw.optimization, &base),
            validation,
            cooling,
            gradient_check: GradientCheckSettings {
                step: raw.gradient_check.step.unwrap_or(match problem {
                    ProblemId::Validation => 1e-5,
                    ProblemId::Cooling => 3e-5,
                }),
                constraints: raw.gradient_check.constraints.clone().unwrap_or(checked),
            },
        };
        let p = cfg.problem();
        if let Some(a) = &cfg.design.alpha {
            if a.len() != p.as_dyn().n_params() {
                bail!("design.alpha has {} entries, the {} problem has {}", a.len(), p.as_dyn().name(), p.as_dyn().n_params());
            }
        }
        Ok(cfg)
    }

    pub fn problem(&self) -> Problem {
        match self.problem {
            ProblemId::Validation => {
                let v = self.validation.as_ref().expect("resolved");
                Problem::Validation(ValidationProblem::new(ValidationParams { penalty: v.penalty, upper: v.upper }))
            }
            ProblemId::Cooling => {
                let c = self.cooling.as_ref().expect("resolved");
                let params = CoolingParams {
                    conductivity: c.conductivity,
                    dissipation: c.dissipation,
                    n_tot: c.n_tot,
                    sigma: c.sigma,
                    source: c.source,
                    t_max: c.t_max,
                    cost: c.cost,
                    cooling_rate: c.cooling_rate,
                    ambient: c.ambient,
                    r_max: c.r_max,
                };
                let template = CoolingTemplate {
                    sides: c.sides.map(CoolerSide::from),
                    fillet_ratio: c.fillet_ratio,
                    r_min: c.r_min,
                    e_min: c.e_min,
                    band: c.band,
                };
                Problem::Cooling(CoolingProblem::new(params, template))
            }
        }
    }
}

impl RawConfig {
    fn cooling_given(&self) -> bool {
        let c = &self.cooling;
        c.conductivity.is_some()
            || c.dissipation.is_some()
            || c.n_tot.is_some()
            || c.sigma.is_some()
            || c.source.is_some()
            || c.t_max.is_some()
            || c.cost.is_some()
            || c.cooling_rate.is_some()
            || c.ambient.is_some()
            || c.r_max.is_some()
            || c.sides.is_some()
            || c.fillet_ratio.is_some()
            || c.r_min.is_some()
            || c.e_min.is_some()
            || c.band.is_some()
    }
}

impl Cooling {
    fn resolve(raw: &RawCooling) -> Self {
        let p = CoolingParams::default();
        let t = CoolingTemplate::default();
        Self {
            conductivity: raw.conductivity.unwrap_or(p.conductivity),
            dissipation: raw.dissipation.unwrap_or(p.dissipation),
            n_tot: raw.n_tot.unwrap_or(p.n_tot),
            sigma: raw.sigma.unwrap_or(p.sigma),
            source: raw.source.unwrap_or(p.source),
            t_max: raw.t_max.unwrap_or(p.t_max),
            cost: raw.cost.unwrap_or(p.cost),
            cooling_rate: raw.cooling_rate.unwrap_or(p.cooling_rate),
            ambient: raw.ambient.unwrap_or(p.ambient),
            r_max: raw.r_max.unwrap_or(p.r_max),
            sides: raw.sides.unwrap_or(t.sides.map(SideId::from)),
            fillet_ratio: raw.fillet_ratio.unwrap_or(t.fillet_ratio),
            r_min: raw.r_min.unwrap_or(t.r_min),
            e_min: raw.e_min.unwrap_or(t.e_min),
            band: raw.band.unwrap_or(t.band),
        }
    }
}
