use alloc::boxed::Box;
use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::egg::{parameterize, EggOptions, GeometryMapping};
use crate::problems::tests::{functional_partial_errors, greville_mapping, residual_partial_errors, uniform};
use crate::problems::{solve_state, StateSolution};
use crate::spline::{HierarchicalSpace, SplineFunction};

const SIDES: [CoolerSide; 3] = [CoolerSide::South, CoolerSide::East, CoolerSide::North];

fn rectangle_point(side: CoolerSide, s: f64) -> [f64; 2] {
    match side {
        CoolerSide::South => [2.0 * s, 0.0],
        CoolerSide::East => [2.0, s],
        CoolerSide::North => [2.0 * s, 1.0],
    }
}

fn dist(a: [f64; 2], b: [f64; 2]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt()
}

fn mapped(p: &CoolingProblem, alpha: &[f64], mu: f64) -> (GeometryMapping, Arc<HierarchicalSpace>, StateSolution) {
    let coarse = Arc::new(HierarchicalSpace::uniform(3, [14, 7]).unwrap());
    let (m, _) = parameterize(&p.template, alpha, coarse, mu, None, &EggOptions::default()).unwrap();
    let space = Arc::new(m.space().uniformly_refined().unwrap());
    let sol = solve_state(p, m.function(), space.clone(), alpha, 1e-11).unwrap();
    (m, space, sol)
}

fn rectangle() -> (Arc<HierarchicalSpace>, SplineFunction) {
    let space = uniform(3, 1);
    let map = greville_mapping(&space, |x, y| [2.0 * x, y]);
    (space, map)
}

/// Coolers well outside the unit rectangle, so that the cooling kernel is
/// smooth on its boundary.
fn outside_coolers() -> Vec<f64> {
    vec![0.6, -0.3, 0.5, 1.4, 1.4, 1.25, 2.35, 0.5, 0.2, 0.15, 0.1, 0.25]
}

#[test]
fn mid_south_cooler_has_closed_form_length() {
    let t = CoolingTemplate::default();
    let alpha = t.design([1.0, 0.5, 1.5, 0.5], [0.2, 0.03, 0.03, 0.03]);
    let r = 0.2;
    let rho = t.fillet_ratio * r;
    // fillet centers at (1 ± w, ρ), externally tangent to the cooler
    let w = ((r + rho) * (r + rho) - rho * rho).sqrt();
    let turn = (rho / (r + rho)).acos();
    let expected = 2.0 - 2.0 * w + 2.0 * (r + rho) * turn;
    let got = t.side_length(&alpha, CoolerSide::South).unwrap();
    assert!((got - expected).abs() < 1e-8, "{got} vs {expected}");
    let n = 20_000;
    let poly: f64 = (0..n)
        .map(|k| {
            let a = t.side_point(&alpha, CoolerSide::South, k as f64 / n as f64).unwrap();
            let b = t.side_point(&alpha, CoolerSide::South, (k + 1) as f64 / n as f64).unwrap();
            dist(a, b)
        })
        .sum();
    assert!((poly - expected).abs() < 1e-6, "{poly} vs {expected}");
    let top = t.side_point(&alpha, CoolerSide::South, 0.5).unwrap();
    assert!(dist(top, [1.0, 0.2]) < 1e-12);
}

#[test]
fn sides_are_arc_length_parameterized_and_c1() {
    let t = CoolingTemplate::default();
    let alpha = t.design([1.0, 0.5, 1.5, 0.5], [0.3, 0.2, 0.15, 0.2]);
    for side in SIDES {
        let len = t.side_length(&alpha, side).unwrap();
        let n = 40_000;
        let pts: Vec<[f64; 2]> = (0..=n).map(|k| t.side_point(&alpha, side, k as f64 / n as f64).unwrap()).collect();
        let h = len / n as f64;
        let mut prev: Option<f64> = None;
        for win in pts.windows(2) {
            let d = dist(win[0], win[1]);
            assert!((d - h).abs() < 1e-3 * h, "{side:?}: step {d} vs {h}");
            let ang = (win[1][1] - win[0][1]).atan2(win[1][0] - win[0][0]);
            if let Some(p) = prev {
                let mut turn = (ang - p).abs();
                turn = turn.min(2.0 * PI - turn);
                // smallest curvature radius is the fillet
                assert!(turn < 2.0 * h / (0.05 * 0.15), "{side:?}: kink of {turn}");
            }
            prev = Some(ang);
        }
    }
}

#[test]
fn corners_are_shared_between_sides() {
    let t = CoolingTemplate::default();
    let alpha = t.design([1.0, 0.5, 1.5, 0.5], [0.3, 0.2, 0.15, 0.2]);
    let at = |side, s| t.eval(side, s, &alpha).unwrap();
    assert_eq!(at(Side::South, 0.0), at(Side::West, 0.0));
    assert!(dist(at(Side::South, 1.0), at(Side::East, 0.0)) < 1e-14);
    assert!(dist(at(Side::North, 1.0), at(Side::East, 1.0)) < 1e-14);
    assert!(dist(at(Side::North, 0.0), at(Side::West, 1.0)) < 1e-14);
    assert!(dist(at(Side::South, 1.0), [2.0, 0.0]) < 1e-14);
}

#[test]
fn small_radii_approach_the_rectangle() {
    let t = CoolingTemplate { r_min: 0.0, ..CoolingTemplate::default() };
    for r in [0.05, 0.01, 1e-3] {
        let alpha = t.design([0.7, 0.4, 1.6, 0.5], [r; 4]);
        for side in SIDES {
            let n = 4000;
            let curve: Vec<[f64; 2]> = (0..=n).map(|k| t.side_point(&alpha, side, k as f64 / n as f64).unwrap()).collect();
            let rect: Vec<[f64; 2]> = (0..=n).map(|k| rectangle_point(side, k as f64 / n as f64)).collect();
            let directed = |a: &[[f64; 2]], b: &[[f64; 2]]| {
                a.iter().map(|p| b.iter().map(|q| dist(*p, *q)).fold(f64::INFINITY, f64::min)).fold(0.0, f64::max)
            };
            let haus = directed(&curve, &rect).max(directed(&rect, &curve));
            // sampling adds at most half a rectangle step
            assert!(haus <= 2.0 * r + 1.0 / n as f64, "{side:?} r={r}: {haus}");
        }
    }
}

#[test]
fn design_derivative_matches_differences() {
    let t = CoolingTemplate::default();
    let alpha = t.design([1.0, 0.5, 1.5, 0.5], [0.3, 0.2, 0.15, 0.2]);
    let mut alpha = alpha;
    alpha[1] += 0.02;
    alpha[6] -= 0.01;
    let h = 1e-6;
    for side in [Side::South, Side::East, Side::North, Side::West] {
        for s in [0.1, 0.37, 0.5, 0.62, 0.93] {
            let an = t.d_dalpha(side, s, &alpha).unwrap();
            for j in 0..N_DESIGN {
                let mut ap = alpha.clone();
                let mut am = alpha.clone();
                ap[j] += h;
                am[j] -= h;
                let p = t.eval(side, s, &ap).unwrap();
                let m = t.eval(side, s, &am).unwrap();
                for k in 0..2 {
                    let fd = (p[k] - m[k]) / (2.0 * h);
                    assert!((fd - an[j][k]).abs() < 1e-6, "{side:?} s={s} j={j}: {fd} vs {}", an[j][k]);
                }
            }
        }
    }
}

#[test]
fn tangent_coolers_have_zero_margin() {
    let t = CoolingTemplate::default();
    let fr = 1.0 + t.fillet_ratio;
    // the two north coolers touch fillet to fillet
    let (r2, r3) = (0.2, 0.15);
    let w = |r: f64| {
        let rho = t.fillet_ratio * r;
        ((r + rho) * (r + rho) - rho * rho).sqrt()
    };
    let a2 = 0.6;
    let a3 = a2 + w(r2) + w(r3);
    let mut alpha = t.design([1.0, a2, a3, 0.5], [0.2, r2, r3, 0.2]);
    let g = t.constraints(&alpha);
    // pair (2, 3) is the fourth pairwise entry
    assert!(g[3].abs() < 1e-14, "{}", g[3]);
    let p = CoolingProblem::default();
    p.check_design(&alpha).unwrap();
    // south and east coolers at center distance (R1 + R4)(1 + ratio)
    let (r1, r4) = (0.3, 0.2);
    let d = (r1 + r4) * fr;
    let e = [2.0, 0.4];
    let ang: f64 = 0.3;
    alpha = t.design([1.0, a2, a3, 0.4], [r1, r2, r3, r4]);
    let x1 = [e[0] - d * ang.cos(), e[1] - d * ang.sin()];
    alpha[0] = x1[0];
    alpha[1] = x1[1];
    let g = t.constraints(&alpha);
    assert!(g[2].abs() < 1e-14, "{}", g[2]);
}

#[test]
fn overlapping_notches_are_rejected() {
    let t = CoolingTemplate::default();
    let alpha = t.design([1.0, 0.6, 0.75, 0.5], [0.2, 0.2, 0.2, 0.2]);
    assert!(matches!(t.notches(&alpha, CoolerSide::North), Err(Error::Template(_))));
    let alpha = t.design([0.1, 0.6, 1.5, 0.5], [0.2, 0.2, 0.2, 0.2]);
    assert!(matches!(t.side_point(&alpha, CoolerSide::South, 0.5), Err(Error::Template(_))));
    let alpha = t.design([1.0, 0.6, 1.5, 0.95], [0.2, 0.2, 0.2, 0.2]);
    assert!(matches!(t.notches(&alpha, CoolerSide::East), Err(Error::Template(_))));
    assert!(CoolingProblem::default().check_design(&alpha).is_err());
}

#[test]
fn constraint_jacobian_matches_differences() {
    let t = CoolingTemplate::default();
    let mut alpha = t.design([1.0, 0.5, 1.5, 0.5], [0.3, 0.2, 0.15, 0.2]);
    alpha[1] += 0.03;
    alpha[3] -= 0.02;
    alpha[7] = 0.45;
    let (vals, jac) = t.constraint_jacobian(&alpha);
    assert_eq!(vals.len(), N_GEOMETRIC);
    let h = 1e-6;
    for j in 0..N_DESIGN {
        let mut ap = alpha.clone();
        let mut am = alpha.clone();
        ap[j] += h;
        am[j] -= h;
        let gp = t.constraints(&ap);
        let gm = t.constraints(&am);
        for k in 0..N_GEOMETRIC {
            let fd = (gp[k] - gm[k]) / (2.0 * h);
            assert!((fd - jac[k * N_DESIGN + j]).abs() < 1e-7, "g{k} a{j}: {fd} vs {}", jac[k * N_DESIGN + j]);
        }
    }
}

#[test]
fn source_weight_matches_erf_oracle() {
    let space = uniform(3, 32);
    let map = greville_mapping(&space, |x, y| [2.0 * x, y]);
    let p = CoolingProblem::default();
    let alpha = outside_coolers();
    let state = vec![0.0; space.dim()];
    let disc = Discretization { mapping: &map, state_space: &space, state: &state, alpha: &alpha, geo_order: 1 };
    let w = p.source_weight(&disc, Want::VALUE).unwrap().value;
    let s = p.params.sigma;
    let x0 = p.params.source;
    let q = |lo: f64, hi: f64, c: f64| {
        let k = 1.0 / (s * core::f64::consts::SQRT_2);
        s * (PI / 2.0).sqrt() * (libm::erf((hi - c) * k) - libm::erf((lo - c) * k))
    };
    let oracle = q(0.0, 2.0, x0[0]) * q(0.0, 1.0, x0[1]);
    assert!((w - oracle).abs() < 1e-8, "{w} vs {oracle}");
}

#[test]
fn temperature_of_zero_and_constant_states() {
    let space = uniform(3, 24);
    let map = greville_mapping(&space, |x, y| [2.0 * x, y]);
    let p = CoolingProblem::default();
    let alpha = outside_coolers();
    let zero = vec![0.0; space.dim()];
    let disc = Discretization { mapping: &map, state_space: &space, state: &zero, alpha: &alpha, geo_order: 1 };
    let w = p.source_weight(&disc, Want::VALUE).unwrap().value;
    let s2 = p.params.sigma * p.params.sigma;
    let a1 = PI / 2.0 * (1.0 - w / (4.0 * PI * s2));
    let a2 = w / (8.0 * PI * PI * s2 * s2);
    let t0 = p.temperature(&disc, Want::VALUE).unwrap().value;
    let expected = p.params.n_tot / (2.0 / PI * a1 + w * a2);
    assert!((t0 - expected).abs() < 1e-10 * expected, "{t0} vs {expected}");
    let c = 3.7;
    let shift = vec![c; space.dim()];
    let disc = Discretization { state: &shift, ..disc };
    let tc = p.temperature(&disc, Want::VALUE).unwrap().value;
    assert!((tc - t0 - c).abs() < 1e-9, "{tc} vs {}", t0 + c);
}

#[test]
fn temperature_without_source_reduces_to_inlet_average() {
    let params = CoolingParams::default();
    let t = params.temperature(2.0, 5.0, 0.0).unwrap();
    assert!((t - (PI / 2.0 * 2.0 + params.n_tot)).abs() < 1e-12);
}

fn bernstein(k: usize, t: f64) -> f64 {
    let binom = [1.0, 3.0, 3.0, 1.0][k];
    binom * t.powi(k as i32) * (1.0 - t).powi(3 - k as i32)
}

fn simpson(f: impl Fn(f64) -> f64, n: usize) -> f64 {
    let h = 1.0 / n as f64;
    let mut s = f(0.0) + f(1.0);
    for k in 1..n {
        s += if k % 2 == 1 { 4.0 } else { 2.0 } * f(k as f64 * h);
    }
    s * h / 3.0
}

#[test]
fn constant_state_residual_matches_hand_integrals() {
    let (space, map) = rectangle();
    let p = CoolingProblem::default();
    // far coolers keep the kernel resolved by a single cell
    let alpha = vec![1.0, -3.0, 0.5, 4.0, 1.5, 3.5, 5.0, 0.5, 0.9, 0.8, 0.7, 0.85];
    let c = 2.5;
    let zero = vec![0.0; space.dim()];
    let cst = vec![c; space.dim()];
    let disc0 = Discretization { mapping: &map, state_space: &space, state: &zero, alpha: &alpha, geo_order: 1 };
    let discc = Discretization { state: &cst, ..disc0 };
    let r0 = p.state_residual(&disc0, Want::VALUE).unwrap().value;
    let rc = p.state_residual(&discc, Want::VALUE).unwrap().value;
    let k = |x: [f64; 2]| {
        (0..N_COOLERS)
            .map(|j| {
                let r2 = (x[0] - alpha[2 * j]).powi(2) + (x[1] - alpha[2 * j + 1]).powi(2);
                alpha[8 + j].powi(3) / r2
            })
            .sum::<f64>()
    };
    for (idx, key) in space.functions().iter().enumerate() {
        let (i, j) = (key.i, key.j);
        // reaction: f c ∫ φ det J with det J = 2
        let mut expected = p.params.dissipation * c * 2.0 * 0.25 * 0.25;
        let sides: [(f64, f64, Box<dyn Fn(f64) -> [f64; 2]>); 4] = [
            (bernstein(j, 0.0), 2.0, Box::new(|s| [2.0 * s, 0.0])),
            (bernstein(j, 1.0), 2.0, Box::new(|s| [2.0 * s, 1.0])),
            (bernstein(i, 0.0), 1.0, Box::new(|s| [0.0, s])),
            (bernstein(i, 1.0), 1.0, Box::new(|s| [2.0, s])),
        ];
        for (n, (trace, len, x)) in sides.iter().enumerate() {
            if *trace == 0.0 {
                continue;
            }
            let along = if n < 2 { i } else { j };
            let integral = simpson(|s| bernstein(along, s) * k(x(s)), 4000);
            expected += p.params.cooling_rate * c * trace * len * integral;
        }
        let got = rc[idx] - r0[idx];
        assert!((got - expected).abs() < 1e-10 * expected.abs(), "({i},{j}): {got} vs {expected}");
    }
}

#[test]
fn doubling_influx_doubles_the_load() {
    let (space, map) = rectangle();
    let p1 = CoolingProblem::default();
    let p2 = CoolingProblem::new(CoolingParams { n_tot: 2.0 * p1.params.n_tot, ..p1.params }, p1.template);
    let alpha = outside_coolers();
    let zero = vec![0.0; space.dim()];
    let disc = Discretization { mapping: &map, state_space: &space, state: &zero, alpha: &alpha, geo_order: 1 };
    let r1 = p1.state_residual(&disc, Want::VALUE).unwrap().value;
    let r2 = p2.state_residual(&disc, Want::VALUE).unwrap().value;
    for (a, b) in r1.iter().zip(&r2) {
        assert!((b - 2.0 * a).abs() <= 1e-14 * a.abs().max(1e-12), "{b} vs 2 * {a}");
    }
}

#[test]
fn rectangle_area_is_two() {
    let (space, map) = rectangle();
    let p = CoolingProblem::default();
    let alpha = outside_coolers();
    let zero = vec![0.0; space.dim()];
    let disc = Discretization { mapping: &map, state_space: &space, state: &zero, alpha: &alpha, geo_order: 1 };
    let j = p.objective(&disc, Want::VALUE).unwrap().value;
    let cost: f64 = alpha[8..].iter().map(|r| p.params.cost * r * r).sum();
    assert!((j - cost - 2.0).abs() < 1e-13);
}

#[test]
fn residual_and_functional_partials_match_differences() {
    let p = CoolingProblem::default();
    let alpha = p.default_design([0.3, 0.2, 0.2, 0.2]);
    let (m, space, sol) = mapped(&p, &alpha, 1e-3);
    let [es, eg, ea] = residual_partial_errors(&p, m.function(), &space, &sol.coeffs, &alpha, 1e-6);
    assert!(es < 1e-7 && eg < 1e-6 && ea < 1e-6, "residual: {es:e} {eg:e} {ea:e}");
    let t = |d: &Discretization, w: Want| p.temperature(d, w).unwrap();
    let [es, eg, ea] = functional_partial_errors(&t, m.function(), &space, &sol.coeffs, &alpha, 1, 1e-5);
    // T is about 90 while the directional derivative is small: the state
    // difference is roundoff-bound, shift equivariance is checked below
    assert!(es < 1e-5 && eg < 1e-6 && ea < 1e-6, "temperature: {es:e} {eg:e} {ea:e}");
    let j = |d: &Discretization, w: Want| p.objective(d, w).unwrap();
    let [_, eg, ea] = functional_partial_errors(&j, m.function(), &space, &sol.coeffs, &alpha, 1, 1e-6);
    assert!(eg < 1e-6 && ea < 1e-6, "objective: {eg:e} {ea:e}");
    let disc = Discretization { mapping: m.function(), state_space: &space, state: &sol.coeffs, alpha: &alpha, geo_order: 1 };
    let cons = p.constraints(&disc, Want::ALL).unwrap();
    assert_eq!(cons.len(), p.n_constraints());
    let tf = p.temperature(&disc, Want::ALL).unwrap();
    let shift: f64 = tf.d_state.iter().sum();
    // exact up to the inlet fitting error
    assert!((shift - 1.0).abs() < 1e-5, "{shift}");
    assert!((cons[0].value - (p.params.t_max - tf.value)).abs() < 1e-12);
    assert!(cons[1..].iter().all(|c| c.d_state.is_empty() && c.d_geo.is_empty()));
}

#[test]
fn energy_balance_holds_on_a_fine_fit() {
    let p = CoolingProblem::default();
    let alpha = p.template.design([0.5, 0.5, 1.5, 0.5], [0.45, 0.45, 0.05, 0.05]);
    let (m, space, sol) = mapped(&p, &alpha, 2e-5);
    let disc = Discretization { mapping: m.function(), state_space: &space, state: &sol.coeffs, alpha: &alpha, geo_order: 1 };
    let eb = p.energy_balance(&disc).unwrap();
    assert!(eb.relative_imbalance() < 1e-9, "{eb:?}");
    let nominal = (eb.n_tot - eb.cooling - eb.dissipation).abs() / eb.n_tot;
    assert!(nominal < 1e-6, "{eb:?}");
}

/// Random design whose constraints stay nonnegative after growing any
/// single radius by `grow`.
fn random_feasible(t: &CoolingTemplate, rng: &mut ChaCha8Rng, grow: f64) -> Vec<f64> {
    loop {
        let mut alpha = vec![0.0; N_DESIGN];
        for i in 0..N_COOLERS {
            let f = t.sides[i].frame();
            let r = rng.gen_range(0.05..0.3);
            let a = rng.gen_range(0.0..f.length);
            let b = rng.gen_range(-t.band * r..t.band * r);
            let x = f.to_physical(a, b);
            alpha[2 * i] = x[0];
            alpha[2 * i + 1] = x[1];
            alpha[8 + i] = r;
        }
        let ok = (0..N_COOLERS).all(|i| {
            let mut g = alpha.clone();
            g[8 + i] += grow;
            t.constraints(&g).iter().all(|v| *v >= 0.0)
        });
        if ok {
            return alpha;
        }
    }
}

#[test]
fn temperature_does_not_increase_with_radius() {
    let p = CoolingProblem::default();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let grow = 0.03;
    let temp = |alpha: &[f64]| {
        let (m, space, sol) = mapped(&p, alpha, 1e-3);
        let disc = Discretization { mapping: m.function(), state_space: &space, state: &sol.coeffs, alpha, geo_order: 1 };
        p.temperature(&disc, Want::VALUE).unwrap().value
    };
    for _ in 0..5 {
        let alpha = random_feasible(&p.template, &mut rng, grow);
        let t0 = temp(&alpha);
        for i in 0..N_COOLERS {
            let mut g = alpha.clone();
            g[8 + i] += grow;
            let t1 = temp(&g);
            assert!(t1 <= t0, "cooler {}: {t1} > {t0} at {alpha:?}", i + 1);
        }
    }
}
