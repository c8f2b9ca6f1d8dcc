use super::*;
use crate::spline::BasisValues;
use alloc::vec;

/// Unit square with a sinusoidal bulge on the north side and a tilt on east.
struct Warped;

impl BoundaryCurve for Warped {
    fn n_params(&self) -> usize {
        2
    }

    fn eval(&self, side: Side, s: f64, a: &[f64]) -> Result<[f64; 2]> {
        let bump = libm::sin(core::f64::consts::PI * s);
        Ok(match side {
            Side::South => [s, 0.0],
            Side::East => [1.0 + a[1] * s, s],
            Side::North => [s + a[1] * s, 1.0 + a[0] * bump],
            Side::West => [0.0, s],
        })
    }

    fn d_dalpha(&self, side: Side, s: f64, _a: &[f64]) -> Result<Vec<[f64; 2]>> {
        let bump = libm::sin(core::f64::consts::PI * s);
        Ok(match side {
            Side::South | Side::West => vec![[0.0; 2]; 2],
            Side::East => vec![[0.0, 0.0], [s, 0.0]],
            Side::North => vec![[0.0, bump], [s, 0.0]],
        })
    }
}

/// Image of the unit square under a fixed affine map.
struct Affine;

const A: [[f64; 2]; 2] = [[2.0, 0.5], [0.3, 1.0]];
const B: [f64; 2] = [0.5, -0.25];

fn affine(x: f64, y: f64) -> [f64; 2] {
    [A[0][0] * x + A[0][1] * y + B[0], A[1][0] * x + A[1][1] * y + B[1]]
}

impl BoundaryCurve for Affine {
    fn n_params(&self) -> usize {
        0
    }

    fn eval(&self, side: Side, s: f64, _a: &[f64]) -> Result<[f64; 2]> {
        let [x, y] = side.point(s);
        Ok(affine(x, y))
    }

    fn d_dalpha(&self, _side: Side, _s: f64, _a: &[f64]) -> Result<Vec<[f64; 2]>> {
        Ok(Vec::new())
    }
}

fn space(p: usize, n: usize) -> Arc<HierarchicalSpace> {
    Arc::new(HierarchicalSpace::uniform(p, [n, n]).unwrap())
}

#[test]
fn projection_reproduces_affine_boundary() {
    let proj = BoundaryProjection::new(&Affine, &[], space(3, 4)).unwrap();
    for side in Side::ALL {
        for k in 0..=10 {
            let s = k as f64 / 10.0;
            let [x, y] = side.point(s);
            let want = affine(x, y);
            let got = proj.eval(side, s).unwrap();
            assert!((got[0] - want[0]).abs() < 1e-12 && (got[1] - want[1]).abs() < 1e-12);
        }
    }
    let rep = proj.report(&Affine, &[], 1e-3).unwrap();
    assert!(rep.residual_total < 1e-12);
}

#[test]
fn coons_guess_is_exact_for_affine_boundary() {
    let proj = BoundaryProjection::new(&Affine, &[], space(3, 4)).unwrap();
    let c_i = initial_interior_guess(&proj).unwrap();
    let m = GeometryMapping::from_parts(proj, c_i).unwrap();
    for (xi, eta) in [(0.3, 0.7), (0.55, 0.12), (0.9, 0.9)] {
        let v = m.function().value(xi, eta).unwrap();
        let want = affine(xi, eta);
        assert!((v[0] - want[0]).abs() < 1e-12 && (v[1] - want[1]).abs() < 1e-12);
    }
}

#[test]
fn affine_mapping_has_zero_residual() {
    let opts = EggOptions::default();
    let (mut m, rep) = parameterize(&Affine, &[], space(2, 4), 1e-4, None, &opts).unwrap();
    assert_eq!(rep.fold_rounds, 0);
    assert_eq!(rep.newton_iterations, vec![0]);
    assert!(norm_inf(&m.system().unwrap().residual) < 1e-12);
}

#[test]
fn egg_jacobian_matches_finite_differences() {
    let sp = space(3, 3);
    let proj = BoundaryProjection::new(&Warped, &[0.2, 0.1], sp.clone()).unwrap();
    let bis = proj.boundary_set().clone();
    let mut c_i = initial_interior_guess(&proj).unwrap();
    for (q, c) in c_i.iter_mut().enumerate() {
        *c += 0.01 * libm::sin(1.7 * q as f64);
    }
    let c_b = proj.c_b().to_vec();
    let sys = |ci: &[f64], cb: &[f64], jac: bool| {
        let f = SplineFunction::new(sp.clone(), 2, combine_coefficients(&bis, ci, cb)).unwrap();
        egg_system(&f, &bis, jac).unwrap()
    };
    let base = sys(&c_i, &c_b, true);
    let (fi, fb) = base.jacobian.as_ref().unwrap();
    let (fi, fb) = (fi.to_dense(), fb.to_dense());
    let h = 1e-6;
    let scale = fi.iter().chain(&fb).fold(0.0f64, |m, v| m.max(v.abs()));
    let nr = base.residual.len();
    let mut worst: f64 = 0.0;
    for col in 0..c_i.len() {
        let mut p = c_i.clone();
        let mut m = c_i.clone();
        p[col] += h;
        m[col] -= h;
        let (rp, rm) = (sys(&p, &c_b, false).residual, sys(&m, &c_b, false).residual);
        for r in 0..nr {
            let fd = (rp[r] - rm[r]) / (2.0 * h);
            worst = worst.max((fd - fi[r * c_i.len() + col]).abs());
        }
    }
    for col in 0..c_b.len() {
        let mut p = c_b.clone();
        let mut m = c_b.clone();
        p[col] += h;
        m[col] -= h;
        let (rp, rm) = (sys(&c_i, &p, false).residual, sys(&c_i, &m, false).residual);
        for r in 0..nr {
            let fd = (rp[r] - rm[r]) / (2.0 * h);
            worst = worst.max((fd - fb[r * c_b.len() + col]).abs());
        }
    }
    assert!(worst / scale < 1e-5, "relative jacobian error {}", worst / scale);
}

#[test]
fn fold_detection() {
    let sp = space(2, 4);
    let proj = BoundaryProjection::new(&Affine, &[], sp.clone()).unwrap();
    let c_i = initial_interior_guess(&proj).unwrap();
    let m = GeometryMapping::from_parts(proj, c_i.clone()).unwrap();
    assert!(detect_folds(m.function()).unwrap().is_empty());

    // reflection x -> -x flips the orientation everywhere
    let mut refl = m.function().coeffs().to_vec();
    for i in 0..refl.len() / 2 {
        refl[2 * i] = -refl[2 * i];
    }
    let f = SplineFunction::new(sp.clone(), 2, refl).unwrap();
    assert_eq!(detect_folds(&f).unwrap().len(), sp.n_cells());

    // drag one inner control point across its neighbours
    let mut c = m.function().coeffs().to_vec();
    let f0 = m.boundary_set().inner()[0];
    c[2 * f0] += 3.0;
    c[2 * f0 + 1] += 3.0;
    let f = SplineFunction::new(sp.clone(), 2, c).unwrap();
    let folds = detect_folds(&f).unwrap();
    assert!(!folds.is_empty() && folds.len() < sp.n_cells());
    for id in folds {
        assert!(sp.cell(id).functions().contains(&f0));
    }
}

#[test]
fn boundary_sensitivity_matches_finite_differences() {
    let sp = space(3, 4);
    let alpha = [0.15, 0.05];
    let proj = BoundaryProjection::new(&Warped, &alpha, sp.clone()).unwrap();
    let d_rhs = proj.rhs_alpha_derivative(&Warped, &alpha).unwrap();
    let h = 1e-6;
    for j in 0..2 {
        let mut e = [0.0; 2];
        e[j] = 1.0;
        let lin = proj.dcb_dalpha_apply(&e, &d_rhs);
        let mut ap = alpha;
        let mut am = alpha;
        ap[j] += h;
        am[j] -= h;
        let cp = BoundaryProjection::new(&Warped, &ap, sp.clone()).unwrap();
        let cm = BoundaryProjection::new(&Warped, &am, sp.clone()).unwrap();
        for q in 0..lin.len() {
            let fd = (cp.c_b()[q] - cm.c_b()[q]) / (2.0 * h);
            assert!((fd - lin[q]).abs() < 1e-7, "component {q}: {fd} vs {}", lin[q]);
        }
        // transpose product is consistent with the forward one
        let k: Vec<f64> = (0..lin.len()).map(|q| libm::cos(q as f64)).collect();
        let t = proj.dcb_dalpha_transpose_apply(&k, &d_rhs);
        let fwd: f64 = k.iter().zip(&lin).map(|(a, b)| a * b).sum();
        assert!((t[j] - fwd).abs() < 1e-11 * (1.0 + fwd.abs()));
    }
}

#[test]
fn newton_converges_quadratically_on_warped_domain() {
    let sp = space(3, 4);
    let proj = BoundaryProjection::new(&Warped, &[0.3, 0.2], sp).unwrap();
    let c_i = initial_interior_guess(&proj).unwrap();
    let out = newton_solve_egg(&proj, c_i, &NewtonOptions::default()).unwrap();
    assert!(out.converged && out.iterations >= 2 && out.iterations < 12);
    let h = &out.history;
    let n = h.len();
    // the last full contraction should be much faster than linear
    assert!(h[n - 2] < 1e-3 * h[n - 3].max(1e-300) || h[n - 2] < 1e-8, "{h:?}");
}

#[test]
fn parameterize_is_fold_free_and_matches_boundary() {
    let opts = EggOptions::default();
    let alpha = [0.3, 0.2];
    let (m, rep) = parameterize(&Warped, &alpha, space(3, 4), 1e-3, None, &opts).unwrap();
    assert!(m.fold_free());
    assert!(rep.dofs >= 49);
    assert!(detect_folds(m.function()).unwrap().is_empty());
    for (i, r) in rep.projection.per_function.iter().enumerate() {
        assert!(*r <= rep.projection.thresholds[i]);
    }
    let mut bv = BasisValues::new();
    let _ = m.space().eval(0.5, 0.5, 0, &mut bv).unwrap();
    let t = m.trace(Side::North, 0.5).unwrap();
    let d = Warped.eval(Side::North, 0.5, &alpha).unwrap();
    assert!((t[0] - d[0]).abs() < 1e-3 && (t[1] - d[1]).abs() < 1e-3);
}

#[test]
fn warm_start_reduces_newton_work() {
    let opts = EggOptions::default();
    let sp = space(3, 4);
    let (m, _) = parameterize_fixed(&Warped, &[0.3, 0.2], sp.clone(), None, &opts).unwrap();
    let (_, cold) = parameterize_fixed(&Warped, &[0.31, 0.2], sp.clone(), None, &opts).unwrap();
    let (_, warm) = parameterize_fixed(&Warped, &[0.31, 0.2], sp, Some(m.function()), &opts).unwrap();
    assert!(warm <= cold, "warm {warm} cold {cold}");
}

#[test]
fn fold_repair_refines_defective_region() {
    // a strongly indented north side folds the coarse Coons guess
    struct Indent;
    impl BoundaryCurve for Indent {
        fn n_params(&self) -> usize {
            0
        }
        fn eval(&self, side: Side, s: f64, _a: &[f64]) -> Result<[f64; 2]> {
            let bump = libm::exp(-80.0 * (s - 0.5) * (s - 0.5));
            Ok(match side {
                Side::North => [s, 1.0 - 0.85 * bump],
                _ => side.point(s),
            })
        }
        fn d_dalpha(&self, _side: Side, _s: f64, _a: &[f64]) -> Result<Vec<[f64; 2]>> {
            Ok(Vec::new())
        }
    }
    let opts = EggOptions::default();
    let (m, rep) = parameterize(&Indent, &[], space(2, 4), 1e-3, None, &opts).unwrap();
    assert!(rep.fold_rounds >= 1);
    assert_eq!(rep.newton_iterations.len(), rep.fold_rounds + 1);
    assert!(detect_folds(m.function()).unwrap().is_empty());
    assert!(m.space().n_levels() > 1);
}
