//! Pointwise geometric quantities of the mapping, generic over [`Scalar`]
//! and read from the geometry jet.

use crate::dual::Scalar;
use crate::spline::Side;

use super::kernel::GEO_JET;

#[inline]
pub fn point<T: Scalar>(g: &[T; GEO_JET]) -> [T; 2] {
    [g[0], g[1]]
}

/// `det(dx/dxi)`.
#[inline]
pub fn det<T: Scalar>(g: &[T; GEO_JET]) -> T {
    g[2] * g[5] - g[4] * g[3]
}

/// Reference gradient of `det(dx/dxi)`.
pub fn det_grad<T: Scalar>(g: &[T; GEO_JET]) -> [T; 2] {
    let (xs, ys, xe, ye) = (g[2], g[3], g[4], g[5]);
    let (xss, yss, xse, yse, xee, yee) = (g[6], g[7], g[8], g[9], g[10], g[11]);
    [xss * ye + xs * yse - xse * ys - xe * yss, xse * ye + xs * yee - xee * ys - xe * yse]
}

/// Physical gradient `J^{-T} v` of a function with reference gradient `v`.
pub fn phys_grad<T: Scalar>(g: &[T; GEO_JET], v: [T; 2]) -> [T; 2] {
    let d = det(g);
    let (xs, ys, xe, ye) = (g[2], g[3], g[4], g[5]);
    [(ye * v[0] - ys * v[1]) / d, (xs * v[1] - xe * v[0]) / d]
}

/// `det J * J^{-1} J^{-T} v`: the reference-space flux whose pairing with a
/// reference test gradient gives `int grad u . grad phi dS`.
pub fn metric_flux<T: Scalar>(g: &[T; GEO_JET], v: [T; 2]) -> [T; 2] {
    let d = det(g);
    let (xs, ys, xe, ye) = (g[2], g[3], g[4], g[5]);
    let a11 = xe * xe + ye * ye;
    let a12 = -(xs * xe + ys * ye);
    let a22 = xs * xs + ys * ys;
    [(a11 * v[0] + a12 * v[1]) / d, (a12 * v[0] + a22 * v[1]) / d]
}

/// `J^{-1} w`.
pub fn inv_apply<T: Scalar>(g: &[T; GEO_JET], w: [T; 2]) -> [T; 2] {
    let d = det(g);
    let (xs, ys, xe, ye) = (g[2], g[3], g[4], g[5]);
    [(ye * w[0] - xe * w[1]) / d, (xs * w[1] - ys * w[0]) / d]
}

/// Tangent of the side image, oriented with increasing side parameter.
pub fn tangent<T: Scalar>(side: Side, g: &[T; GEO_JET]) -> [T; 2] {
    match side.tangent_dir() {
        0 => [g[2], g[3]],
        _ => [g[4], g[5]],
    }
}

/// Outward normal scaled by the line element, `n |x_s|`, and the line
/// element `|x_s|` itself. Assumes a positively oriented mapping.
pub fn boundary_frame<T: Scalar>(side: Side, g: &[T; GEO_JET]) -> ([T; 2], T) {
    let t = tangent(side, g);
    let len = (t[0] * t[0] + t[1] * t[1]).sqrt();
    let n = match side {
        Side::South | Side::East => [t[1], -t[0]],
        Side::North | Side::West => [-t[1], t[0]],
    };
    (n, len)
}
