use alloc::vec;
use alloc::vec::Vec;

use crate::math::Float;
use crate::{Error, Result};

/// Gauss-Legendre rule on the reference interval `[0, 1]`, used per
/// direction.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadratureRule {
    pub points: Vec<f64>,
    pub weights: Vec<f64>,
}

impl QuadratureRule {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Points and weights mapped to `[a, b]`.
    pub fn mapped(&self, a: f64, b: f64) -> impl Iterator<Item = (f64, f64)> + '_ {
        let h = b - a;
        self.points.iter().zip(&self.weights).map(move |(&x, &w)| (a + h * x, h * w))
    }
}

/// `n`-point Gauss-Legendre rule, `1 <= n <= 16`.
pub fn gauss_rule(n: usize) -> Result<QuadratureRule> {
    if !(1..=16).contains(&n) {
        return Err(Error::InvalidArgument(alloc::format!("quadrature order {n} outside 1..=16")));
    }
    let mut points = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let m = n.div_ceil(2);
    for i in 0..m {
        let mut t = Float::cos(core::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5));
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre(n, t);
            dp = d;
            let dt = p / d;
            t -= dt;
            if dt.abs() < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre(n, t);
        if d != 0.0 {
            dp = d;
        }
        let w = 2.0 / ((1.0 - t * t) * dp * dp);
        // t is the i-th largest root; store ascending on [0, 1].
        points[n - 1 - i] = 0.5 * (1.0 + t);
        weights[n - 1 - i] = 0.5 * w;
        points[i] = 0.5 * (1.0 - t);
        weights[i] = 0.5 * w;
    }
    Ok(QuadratureRule { points, weights })
}

fn legendre(n: usize, t: f64) -> (f64, f64) {
    let (mut p0, mut p1) = (1.0, t);
    for k in 2..=n {
        let p2 = ((2 * k - 1) as f64 * t * p1 - (k - 1) as f64 * p0) / k as f64;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (t * p1 - p0) / (t * t - 1.0);
    (p1, d)
}
