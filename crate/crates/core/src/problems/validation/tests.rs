use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;

use super::*;
use crate::egg::{parameterize, EggOptions};
use crate::problems::tests::{functional_partial_errors, greville_mapping, residual_partial_errors, uniform};
use crate::problems::{residual_markers, solve_state, MarkerMode};
use crate::spline::{HierarchicalSpace, SplineFunction};

/// Adaptive Simpson quadrature, refined until successive estimates agree.
fn adaptive_simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    fn rec(f: &dyn Fn(f64) -> f64, a: f64, b: f64, fa: f64, fm: f64, fb: f64, whole: f64, tol: f64, depth: u32) -> f64 {
        let m = 0.5 * (a + b);
        let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
        let (flm, frm) = (f(lm), f(rm));
        let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
        let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
        if depth == 0 || (left + right - whole).abs() <= 15.0 * tol {
            return left + right + (left + right - whole) / 15.0;
        }
        rec(f, a, m, fa, flm, fm, left, tol / 2.0, depth - 1) + rec(f, m, b, fm, frm, fb, right, tol / 2.0, depth - 1)
    }
    let (fa, fm, fb) = (f(a), f(0.5 * (a + b)), f(b));
    rec(f, a, b, fa, fm, fb, (b - a) / 6.0 * (fa + 4.0 * fm + fb), tol, 50)
}

fn solve(problem: &ValidationProblem, mapping: &SplineFunction, space: Arc<HierarchicalSpace>, alpha: &[f64]) -> Vec<f64> {
    solve_state(problem, mapping, space, alpha, 1e-12).unwrap().coeffs
}

fn mapped(alpha: &[f64], n: usize) -> SplineFunction {
    let (m, _) = parameterize(&ValidationCurve, alpha, uniform(3, n), 1e-4, None, &EggOptions::default()).unwrap();
    m.function().clone()
}

#[test]
fn bump_endpoints_and_integral() {
    assert!(validation_bump(0.0).abs() < 1e-15);
    assert!(validation_bump(1.0).abs() < 1e-15);
    assert!((validation_bump(0.5) - 1.0).abs() < 1e-15);
    // split at the kinks of the cosine factor for a well-behaved oracle
    let a: f64 = (0..6).map(|k| adaptive_simpson(&validation_bump, k as f64 / 6.0, (k + 1) as f64 / 6.0, 1e-14)).sum();
    assert!((a - VALIDATION_A).abs() < 1e-12, "{a}");
    let r = ValidationReference::new();
    assert!((r.j_star - (1.0 - 2.0 * a * a)).abs() < 1e-10);
    assert!((r.objective(&r.alpha_star()) - r.j_star).abs() < 1e-15);
}

#[test]
fn curve_is_corner_compatible_and_derivative_exact() {
    let alpha = [0.1, 0.2, 0.3, 0.4];
    let c = ValidationCurve;
    let corners = [
        (Side::South, 0.0, Side::West, 0.0),
        (Side::South, 1.0, Side::East, 0.0),
        (Side::North, 1.0, Side::East, 1.0),
        (Side::North, 0.0, Side::West, 1.0),
    ];
    for (s1, t1, s2, t2) in corners {
        let (p, q) = (c.eval(s1, t1, &alpha).unwrap(), c.eval(s2, t2, &alpha).unwrap());
        assert!((p[0] - q[0]).abs() < 1e-12 && (p[1] - q[1]).abs() < 1e-12);
    }
    for side in Side::ALL {
        let d = c.d_dalpha(side, 0.37, &alpha).unwrap();
        for j in 0..4 {
            let mut ap = alpha;
            let mut am = alpha;
            ap[j] += 1e-6;
            am[j] -= 1e-6;
            let (p, m) = (c.eval(side, 0.37, &ap).unwrap(), c.eval(side, 0.37, &am).unwrap());
            for k in 0..2 {
                assert!(((p[k] - m[k]) / 2e-6 - d[j][k]).abs() < 1e-9);
            }
        }
    }
}

#[test]
fn identity_map_reproduces_constant_state() {
    let p = ValidationProblem::default();
    let space = uniform(3, 4);
    let map = greville_mapping(&space, |x, y| [x, y]);
    let sol = solve_state(&p, &map, space.clone(), &[0.0; 4], 1e-12).unwrap();
    assert_eq!(sol.factorizations, 1);
    assert!(sol.coeffs.iter().all(|c| (c - 1.0).abs() < 1e-10));
    let disc = Discretization { mapping: &map, state_space: &space, state: &sol.coeffs, alpha: &[0.0; 4], geo_order: 2 };
    let r = p.state_residual(&disc, Want::VALUE).unwrap();
    assert!(r.value.iter().all(|v| v.abs() < 1e-10));
    let j = p.objective(&disc, Want::VALUE).unwrap();
    assert!((j.value - 1.0).abs() < 1e-12);
}

#[test]
fn affine_map_with_det_two_gives_constant_two() {
    let p = ValidationProblem::default();
    let space = uniform(3, 3);
    let map = greville_mapping(&space, |x, y| [2.0 * x + 0.5 * y, y]);
    let u = solve(&p, &map, space, &[0.0; 4]);
    assert!(u.iter().all(|c| (c - 2.0).abs() < 1e-10), "{u:?}");
}

#[test]
fn residual_partials_match_finite_differences() {
    let p = ValidationProblem::default();
    let alpha = [0.1, 0.2, 0.15, 0.3];
    let map = mapped(&alpha, 5);
    let space = map.space().clone();
    let mut state: Vec<f64> = solve(&p, &map, space.clone(), &alpha);
    state.iter_mut().enumerate().for_each(|(i, s)| *s += 0.01 * (i as f64).sin());
    let e = residual_partial_errors(&p, &map, &space, &state, &alpha, 1e-6);
    assert!(e[0] < 1e-7 && e[1] < 1e-6 && e[2] == 0.0, "{e:?}");
}

#[test]
fn objective_partials_match_finite_differences() {
    let p = ValidationProblem::default();
    let alpha = [0.1, 0.2, 0.15, 0.3];
    let map = mapped(&alpha, 4);
    let space = map.space().clone();
    let state = solve(&p, &map, space.clone(), &alpha);
    let pick = |d: &Discretization, w: Want| p.objective(d, w).unwrap();
    let e = functional_partial_errors(&pick, &map, &space, &state, &alpha, 2, 1e-6);
    assert!(e.iter().all(|v| *v < 1e-6), "{e:?}");
}

fn l2_error_to_det(map: &SplineFunction, u: &SplineFunction) -> f64 {
    let n = 120;
    let mut e2 = 0.0;
    for i in 0..n {
        for j in 0..n {
            let (x, y) = ((i as f64 + 0.5) / n as f64, (j as f64 + 0.5) / n as f64);
            let g = map.evaluate(x, y, 1).unwrap();
            let det = g[2] * g[5] - g[4] * g[3];
            let v = u.value(x, y).unwrap()[0];
            e2 += (v - det) * (v - det) * det;
        }
    }
    (e2 / (n * n) as f64).sqrt()
}

fn refinement_errors(p: &ValidationProblem, map: &SplineFunction, alpha: &[f64], start: Arc<HierarchicalSpace>, levels: usize) -> Vec<f64> {
    let mut space = start;
    let mut errors = Vec::new();
    for _ in 0..levels {
        let u = SplineFunction::new(space.clone(), 1, solve(p, map, space.clone(), alpha)).unwrap();
        errors.push(l2_error_to_det(map, &u));
        space = Arc::new(space.uniformly_refined().unwrap());
    }
    errors
}

#[test]
fn state_converges_at_full_rate_for_smooth_determinant() {
    // a single Bezier patch: det J is a polynomial, so bicubic states
    // converge with h^4
    let p = ValidationProblem::default();
    let geo = uniform(3, 1);
    let map = greville_mapping(&geo, |x, y| [x, y]);
    let mut c = map.coeffs().to_vec();
    c[2 * 5] += 0.08;
    c[2 * 6 + 1] -= 0.06;
    c[2 * 9 + 1] += 0.05;
    let map = SplineFunction::new(geo, 2, c).unwrap();
    let start = Arc::new(map.space().uniformly_refined().unwrap());
    let errors = refinement_errors(&p, &map, &[0.0; 4], start, 4);
    for k in 1..4 {
        let r = errors[k] / errors[k - 1];
        assert!(r < 1.0 / 12.0, "{errors:?}");
    }
}

#[test]
fn state_converges_to_jacobian_determinant() {
    // on EGG mappings det J is only C1 across the geometry knots, which
    // caps the rate below h^4
    let p = ValidationProblem::default();
    let alpha = [0.2; 4];
    let map = mapped(&alpha, 6);
    let errors = refinement_errors(&p, &map, &alpha, map.space().clone(), 3);
    assert!(errors[1] / errors[0] < 0.3 && errors[2] / errors[1] < 0.3, "{errors:?}");
}

#[test]
fn state_integral_matches_mapped_area() {
    let p = ValidationProblem::default();
    let alpha = [0.3, 0.1, 0.2, 0.25];
    let map = mapped(&alpha, 7);
    let space = Arc::new(map.space().uniformly_refined().unwrap());
    let u = solve(&p, &map, space.clone(), &alpha);
    let disc = Discretization { mapping: &map, state_space: &space, state: &u, alpha: &alpha, geo_order: 2 };
    let j = p.objective(&disc, Want::VALUE).unwrap().value;
    let integral = j - 0.5 * alpha.iter().map(|a| a * a).sum::<f64>();
    // area of the mapped domain from det J on the state space
    let area = {
        let ones = vec![1.0; space.dim()];
        let d = Discretization { state: &ones, ..disc };
        let mut a = 0.0;
        crate::assembly::Integrator::new(d.state_space, Some(d.mapping), 0, 1)
            .unwrap()
            .for_each_point(false, |ed| {
                a += ed.weight * ed.map.unwrap().det;
                Ok(())
            })
            .unwrap();
        a
    };
    let finer = Arc::new(space.uniformly_refined().unwrap());
    let u2 = solve(&p, &map, finer.clone(), &alpha);
    let d2 = Discretization { mapping: &map, state_space: &finer, state: &u2, alpha: &alpha, geo_order: 2 };
    let truncation = (p.objective(&d2, Want::VALUE).unwrap().value - j).abs();
    assert!((integral - area).abs() <= 10.0 * truncation, "{integral} {area} {truncation}");
    let exact = 1.0 - VALIDATION_A * alpha.iter().sum::<f64>();
    assert!((area - exact).abs() < 1e-3, "{area} {exact}");
}

#[test]
fn markers_vanish_for_exact_solutions() {
    let p = ValidationProblem::default();
    let space = uniform(3, 3);
    let map = greville_mapping(&space, |x, y| [x + 0.25 * y, 0.5 * x + y]);
    let u = solve(&p, &map, space.clone(), &[0.0; 4]);
    let weak = residual_markers(&p, &map, &space, &u, &[0.0; 4], MarkerMode::Weak).unwrap();
    assert!(weak.per_function.iter().all(|v| *v < 1e-20), "{}", weak.total);
    assert!(weak.space.dim() > space.dim());
    let strong = residual_markers(&p, &map, &space, &u, &[0.0; 4], MarkerMode::Strong).unwrap();
    assert!(strong.total < 1e-20, "{}", strong.total);
}

#[test]
fn weak_markers_decrease_under_refinement() {
    let p = ValidationProblem::default();
    let alpha = [0.25; 4];
    let map = mapped(&alpha, 6);
    let mut space = map.space().clone();
    let mut totals = Vec::new();
    let mut strong = Vec::new();
    for _ in 0..3 {
        let u = solve(&p, &map, space.clone(), &alpha);
        totals.push(residual_markers(&p, &map, &space, &u, &alpha, MarkerMode::Weak).unwrap().total);
        strong.push(residual_markers(&p, &map, &space, &u, &alpha, MarkerMode::Strong).unwrap().total);
        space = Arc::new(space.uniformly_refined().unwrap());
    }
    assert!(totals[1] < totals[0] && totals[2] < totals[1], "{totals:?}");
    assert!(strong[1] < strong[0] && strong[2] < strong[1], "{strong:?}");
}
