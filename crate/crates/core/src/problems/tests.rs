use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::spline::HierarchicalSpace;

pub(crate) fn uniform(p: usize, n: usize) -> Arc<HierarchicalSpace> {
    Arc::new(HierarchicalSpace::uniform(p, [n, n]).unwrap())
}

/// Greville interpolant of `f`: exact for affine `f` on single-level
/// spaces.
pub(crate) fn greville_mapping(space: &Arc<HierarchicalSpace>, f: impl Fn(f64, f64) -> [f64; 2]) -> SplineFunction {
    let mut c = Vec::with_capacity(2 * space.dim());
    for key in space.functions() {
        let x = space.knots(key.level, 0).greville(key.i);
        let y = space.knots(key.level, 1).greville(key.j);
        c.extend_from_slice(&f(x, y));
    }
    SplineFunction::new(space.clone(), 2, c).unwrap()
}

fn rel(a: &[f64], b: &[f64]) -> f64 {
    let scale = a.iter().chain(b).fold(0.0f64, |m, v| m.max(v.abs())).max(1e-300);
    a.iter().zip(b).fold(0.0f64, |m, (x, y)| m.max((x - y).abs())) / scale
}

fn random_dir(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()
}

fn shifted(mapping: &SplineFunction, v: &[f64], h: f64) -> SplineFunction {
    let c: Vec<f64> = mapping.coeffs().iter().zip(v).map(|(a, b)| a + h * b).collect();
    SplineFunction::new(mapping.space().clone(), 2, c).unwrap()
}

fn add(x: &[f64], v: &[f64], h: f64) -> Vec<f64> {
    x.iter().zip(v).map(|(a, b)| a + h * b).collect()
}

fn diff(a: &[f64], b: &[f64], h: f64) -> Vec<f64> {
    a.iter().zip(b).map(|(p, m)| (p - m) / (2.0 * h)).collect()
}

/// Central differences of the state residual along random directions in
/// the state, the geometry and the design, against the assembled partials.
/// Returns the three relative errors.
pub(crate) fn residual_partial_errors(
    problem: &dyn StateProblem,
    mapping: &SplineFunction,
    space: &HierarchicalSpace,
    state: &[f64],
    alpha: &[f64],
    h: f64,
) -> [f64; 3] {
    let go = problem.geo_order();
    let eval = |m: &SplineFunction, d: &[f64], a: &[f64]| {
        let disc = Discretization { mapping: m, state_space: space, state: d, alpha: a, geo_order: go };
        problem.state_residual(&disc, Want::VALUE).unwrap().value
    };
    let disc = Discretization { mapping, state_space: space, state, alpha, geo_order: go };
    let full = problem.state_residual(&disc, Want::ALL).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let vs = random_dir(&mut rng, state.len());
    let an = full.d_state.as_ref().unwrap().mul_vec(&vs);
    let fd = diff(&eval(mapping, &add(state, &vs, h), alpha), &eval(mapping, &add(state, &vs, -h), alpha), h);
    let e_state = rel(&an, &fd);
    let vg = random_dir(&mut rng, mapping.coeffs().len());
    let an = full.d_geo.as_ref().unwrap().apply(&vg);
    let fd = diff(&eval(&shifted(mapping, &vg, h), state, alpha), &eval(&shifted(mapping, &vg, -h), state, alpha), h);
    let e_geo = rel(&an, &fd);
    let va = random_dir(&mut rng, alpha.len());
    let an = full.d_alpha_apply(&va, state.len());
    let fd = diff(&eval(mapping, state, &add(alpha, &va, h)), &eval(mapping, state, &add(alpha, &va, -h)), h);
    let e_alpha = if fd.iter().all(|v| v.abs() < 1e-9) && an.iter().all(|v| *v == 0.0) { 0.0 } else { rel(&an, &fd) };
    [e_state, e_geo, e_alpha]
}

/// Same check for a functional picked out of the problem by `pick`.
pub(crate) fn functional_partial_errors(
    pick: &dyn Fn(&Discretization, Want) -> Functional,
    mapping: &SplineFunction,
    space: &HierarchicalSpace,
    state: &[f64],
    alpha: &[f64],
    geo_order: usize,
    h: f64,
) -> [f64; 3] {
    let eval = |m: &SplineFunction, d: &[f64], a: &[f64]| {
        let disc = Discretization { mapping: m, state_space: space, state: d, alpha: a, geo_order };
        pick(&disc, Want::VALUE).value
    };
    let disc = Discretization { mapping, state_space: space, state, alpha, geo_order };
    let full = pick(&disc, Want::ALL);
    let dot = |g: &[f64], v: &[f64]| if g.is_empty() { 0.0 } else { g.iter().zip(v).map(|(a, b)| a * b).sum() };
    let cmp = |an: f64, fd: f64| (an - fd).abs() / an.abs().max(fd.abs()).max(1e-12);
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let vs = random_dir(&mut rng, state.len());
    let fd = (eval(mapping, &add(state, &vs, h), alpha) - eval(mapping, &add(state, &vs, -h), alpha)) / (2.0 * h);
    let e_state = cmp(dot(&full.d_state, &vs), fd);
    let vg = random_dir(&mut rng, mapping.coeffs().len());
    let fd = (eval(&shifted(mapping, &vg, h), state, alpha) - eval(&shifted(mapping, &vg, -h), state, alpha)) / (2.0 * h);
    let e_geo = cmp(dot(&full.d_geo, &vg), fd);
    let va = random_dir(&mut rng, alpha.len());
    let fd = (eval(mapping, state, &add(alpha, &va, h)) - eval(mapping, state, &add(alpha, &va, -h))) / (2.0 * h);
    let e_alpha = cmp(dot(&full.d_alpha, &va), fd);
    [e_state, e_geo, e_alpha]
}

#[test]
fn geo_operator_transpose_is_adjoint() {
    let sparse = crate::assembly::CsrMatrix::from_triplets(3, 4, &[(0, 0, 1.0), (1, 2, -2.0), (2, 3, 0.5), (2, 1, 3.0)]);
    let op = GeoOperator { sparse, low_rank: vec![(vec![1.0, 2.0, -1.0], vec![0.5, 0.0, 1.0, -1.0])] };
    let x = [0.3, -1.2, 0.7, 2.0];
    let y = [1.5, -0.4, 0.9];
    let lhs: f64 = op.apply(&x).iter().zip(&y).map(|(a, b)| a * b).sum();
    let rhs: f64 = op.apply_transpose(&y).iter().zip(&x).map(|(a, b)| a * b).sum();
    assert!((lhs - rhs).abs() < 1e-14);
}

#[test]
fn state_residual_alpha_products_are_transposes() {
    let r = StateResidual { value: vec![0.0; 3], d_state: None, d_geo: None, d_alpha: Some(vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]) };
    assert_eq!(r.d_alpha_apply(&[1.0, -1.0], 3), vec![-1.0, -1.0, -1.0]);
    assert_eq!(r.d_alpha_transpose(&[1.0, 0.0, 1.0], 2), vec![6.0, 8.0]);
}
