use alloc::vec;
use alloc::vec::Vec;

use super::*;
use crate::egg::BoundaryCurve;
use crate::problems::{Functional, StateResidual, ValidationParams, ValidationProblem, ValidationReference};

/// Validation state and geometry with an objective `1/2 |alpha - target|^2`
/// and optionally the linear constraint `cap - Σ alpha >= 0`.
struct Toy {
    inner: ValidationProblem,
    target: [f64; 4],
    cap: Option<f64>,
}

impl Toy {
    fn new(target: [f64; 4], cap: Option<f64>) -> Self {
        Self { inner: ValidationProblem::new(ValidationParams::default()), target, cap }
    }
}

impl StateProblem for Toy {
    fn name(&self) -> &'static str {
        "toy"
    }
    fn n_params(&self) -> usize {
        4
    }
    fn bounds(&self) -> (Vec<f64>, Vec<f64>) {
        self.inner.bounds()
    }
    fn curve(&self) -> &dyn BoundaryCurve {
        self.inner.curve()
    }
    fn n_constraints(&self) -> usize {
        usize::from(self.cap.is_some())
    }
    fn geo_order(&self) -> usize {
        self.inner.geo_order()
    }
    fn state_residual(&self, disc: &Discretization, want: Want) -> Result<StateResidual> {
        self.inner.state_residual(disc, want)
    }
    fn objective(&self, disc: &Discretization, want: Want) -> Result<Functional> {
        let a = disc.alpha;
        let value = 0.5 * a.iter().zip(&self.target).map(|(x, t)| (x - t) * (x - t)).sum::<f64>();
        let d_alpha = if want.alpha { a.iter().zip(&self.target).map(|(x, t)| x - t).collect() } else { Vec::new() };
        Ok(Functional { value, d_state: Vec::new(), d_geo: Vec::new(), d_alpha })
    }
    fn constraints(&self, disc: &Discretization, want: Want) -> Result<Vec<Functional>> {
        Ok(self
            .cap
            .iter()
            .map(|c| Functional {
                value: c - disc.alpha.iter().sum::<f64>(),
                d_state: Vec::new(),
                d_geo: Vec::new(),
                d_alpha: if want.alpha { vec![-1.0; 4] } else { Vec::new() },
            })
            .collect())
    }
}

fn fast() -> OptimizationConfig {
    OptimizationConfig { coarse_cells: [4, 4], ..OptimizationConfig::validation(1e-2, 0) }
}

#[test]
fn design_vector_checks_its_box() {
    assert!(DesignVector::new(vec![0.5], vec![0.0], vec![1.0]).is_ok());
    assert_eq!(DesignVector::new(vec![1.5], vec![0.0], vec![1.0]), Err(Error::OutOfBox(0)));
    assert!(DesignVector::new(vec![0.5], vec![0.0, 0.0], vec![1.0]).is_err());
    assert!(DesignVector::new(vec![0.5], vec![1.0], vec![0.0]).is_err());
    let d = DesignVector::new(vec![0.5, 0.5], vec![0.0; 2], vec![1.0; 2]).unwrap();
    assert_eq!(d.project(&[-1.0, 2.0]), vec![0.0, 1.0]);
}

#[test]
fn bfgs_update_satisfies_secant_and_stays_spd() {
    let mut b = vec![1.0, 0.0, 0.0, 1.0];
    let s = [0.3, -0.2];
    let y = [0.9, -0.1];
    bfgs_update(&mut b, &s, &y);
    let bs = [b[0] * s[0] + b[1] * s[1], b[2] * s[0] + b[3] * s[1]];
    assert!((bs[0] - y[0]).abs() < 1e-14 && (bs[1] - y[1]).abs() < 1e-14);
    // negative curvature is damped instead of destroying definiteness
    let mut b = vec![1.0, 0.0, 0.0, 1.0];
    bfgs_update(&mut b, &s, &[-0.3, 0.2]);
    assert!(b[0] > 0.0 && b[0] * b[3] - b[1] * b[2] > 0.0);
}

#[test]
fn flat_domain_has_unit_objective() {
    let p = ValidationProblem::new(ValidationParams::default());
    let mut db = WarmStartDatabase::new(0.05);
    let ev = evaluate_design(&p, &[0.0; 4], &fast(), &mut db, Basis::Select, true).unwrap();
    assert!((ev.objective - 1.0).abs() < 1e-10, "{}", ev.objective);
    assert_eq!(db.len(), 1);
    assert_eq!(ev.geometry_dofs(), 2 * 49);
    assert_eq!(ev.state_dofs(), 49);
    assert_eq!(ev.gradient.as_ref().unwrap().factorizations, 2);
}

#[test]
fn evaluation_is_deterministic() {
    let p = ValidationProblem::new(ValidationParams::default());
    let a = [0.1, 0.2, 0.05, 0.3];
    let run = || {
        let mut db = WarmStartDatabase::new(0.05);
        evaluate_design(&p, &a, &fast(), &mut db, Basis::Select, true).unwrap()
    };
    let (x, y) = (run(), run());
    assert_eq!(x.objective.to_bits(), y.objective.to_bits());
    assert_eq!(x.gradient, y.gradient);
    assert_eq!(x.mapping.coefficients(), y.mapping.coefficients());
}

#[test]
fn warm_start_needs_no_more_newton_iterations() {
    let p = ValidationProblem::new(ValidationParams::default());
    let cfg = fast();
    let mut db = WarmStartDatabase::new(0.05);
    evaluate_design(&p, &[0.2; 4], &cfg, &mut db, Basis::Select, false).unwrap();
    let next = [0.21, 0.2, 0.19, 0.2];
    let warm = evaluate_design(&p, &next, &cfg, &mut db, Basis::Select, false).unwrap();
    let mut empty = WarmStartDatabase::new(0.05);
    let cold = evaluate_design(&p, &next, &cfg, &mut empty, Basis::Select, false).unwrap();
    assert!(warm.warm_started && !cold.warm_started);
    assert!(warm.newton_iterations <= cold.newton_iterations, "{} > {}", warm.newton_iterations, cold.newton_iterations);
    assert!((warm.objective - cold.objective).abs() < 1e-9);
}

#[test]
fn lookup_respects_the_radius() {
    let p = ValidationProblem::new(ValidationParams::default());
    let mut db = WarmStartDatabase::new(0.05);
    let ev = evaluate_design(&p, &[0.2; 4], &fast(), &mut db, Basis::Select, false).unwrap();
    let space = ev.mapping.space().clone();
    assert!(warm_start_lookup(&db, &[0.3; 4], &space).unwrap().is_none());
    let c_i = warm_start_lookup(&db, &[0.21; 4], &space).unwrap().unwrap();
    assert_eq!(c_i, ev.mapping.c_i());
    db.insert(vec![0.22; 4], ev.mapping.function().clone());
    let hit = db.nearest(&[0.225; 4]).unwrap();
    assert_eq!(hit.alpha, vec![0.22; 4]);
}

#[test]
fn reused_basis_keeps_spaces() {
    let p = ValidationProblem::new(ValidationParams::default());
    let cfg = OptimizationConfig { u_ref: 1, ..fast() };
    let mut db = WarmStartDatabase::new(0.05);
    let base = evaluate_design(&p, &[0.1; 4], &cfg, &mut db, Basis::Select, false).unwrap();
    let t = evaluate_design(&p, &[0.12; 4], &cfg, &mut db, Basis::Reuse(&base), false).unwrap();
    assert!(t.basis_reused);
    assert_eq!(t.mapping.space(), base.mapping.space());
    assert!(Arc::ptr_eq(&t.state.space, &base.state.space));
}

#[test]
fn quadratic_toy_converges_quickly() {
    let target = [0.1, 0.3, 0.05, 0.2];
    let p = Toy::new(target, None);
    let x0 = DesignVector::for_problem(&p, vec![0.0; 4]).unwrap();
    let r = optimize(&p, &x0, &fast(), &NoClock).unwrap();
    assert!(r.converged(), "{:?}", r.status);
    assert!(r.iterations <= 4 + 2, "{} iterations", r.iterations);
    for (a, t) in r.alpha.iter().zip(&target) {
        assert!((a - t).abs() < 1e-6);
    }
}

#[test]
fn toy_with_active_constraint_and_bound() {
    // target outside the box in one component; the cap binds as well
    let p = Toy::new([0.5, 0.2, 0.2, 0.1], Some(0.6));
    let x0 = DesignVector::for_problem(&p, vec![0.0; 4]).unwrap();
    let r = optimize(&p, &x0, &fast(), &NoClock).unwrap();
    assert!(r.converged(), "{:?}", r.status);
    // minimizer of the projection onto {Σ a <= 0.6, a <= 0.4}: shift 0.1 off
    // every component
    let expect = [0.4, 0.1, 0.1, 0.0];
    for (a, e) in r.alpha.iter().zip(&expect) {
        assert!((a - e).abs() < 1e-6, "{:?}", r.alpha);
    }
    assert!(r.constraints[0] >= -1e-6);
    for w in r.history.iter().filter(|h| h.kind == RecordKind::TrialAccepted) {
        assert!(w.merit <= w.merit_reference.unwrap());
    }
}

#[test]
fn infeasible_start_is_rejected() {
    let p = Toy::new([0.1; 4], Some(0.2));
    let x0 = DesignVector::for_problem(&p, vec![0.1; 4]).unwrap();
    assert!(matches!(optimize(&p, &x0, &fast(), &NoClock), Err(Error::Optimizer(_))));
}

#[test]
fn validation_optimum_on_coarse_settings() {
    let p = ValidationProblem::new(ValidationParams::default());
    let x0 = DesignVector::for_problem(&p, vec![0.0; 4]).unwrap();
    let r = optimize(&p, &x0, &OptimizationConfig::validation(1e-2, 0), &NoClock).unwrap();
    let j_star = ValidationReference::new().j_star;
    assert!(r.iterations <= 8, "{} iterations", r.iterations);
    assert!((r.objective - j_star).abs() <= 5.0 * 8.2e-3, "{}", r.objective);
    // every evaluation is logged, one start record first
    assert_eq!(r.history[0].kind, RecordKind::Start);
    let accepted = r.history.iter().filter(|h| h.kind == RecordKind::Accepted).count();
    assert_eq!(accepted, r.iterations);
    for h in r.history.iter().filter(|h| h.kind == RecordKind::TrialAccepted) {
        assert!(h.merit <= h.merit_reference.unwrap());
    }
}

#[test]
fn gradient_check_with_frozen_basis() {
    let p = ValidationProblem::new(ValidationParams::default());
    let c = check_gradient(&p, &[0.1; 4], &fast(), 1e-5, &[]).unwrap();
    assert!(c.max_relative_error() <= 1e-5, "{:?}", c.objective);
    assert!(check_gradient(&p, &[0.1; 4], &fast(), 1e-5, &[0]).is_err());
}

