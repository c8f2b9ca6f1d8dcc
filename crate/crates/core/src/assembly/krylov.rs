use alloc::vec;
use alloc::vec::Vec;

use crate::math::{dot, norm2, norm_inf, Float};
use crate::{Error, Result};

/// Restart length of [`solve_krylov`].
pub const GMRES_RESTART: usize = 50;

/// One-sided difference quotient `(r(at + eps d) - r(at)) / eps`.
pub fn matfree_apply<F>(mut residual: F, at: &[f64], direction: &[f64], eps: f64) -> Result<Vec<f64>>
where
    F: FnMut(&[f64]) -> Result<Vec<f64>>,
{
    if eps <= 0.0 {
        return Err(Error::InvalidArgument("eps must be positive".into()));
    }
    if direction.iter().all(|&d| d == 0.0) {
        return Ok(vec![0.0; residual(at)?.len()]);
    }
    let shifted: Vec<f64> = at.iter().zip(direction).map(|(a, d)| a + eps * d).collect();
    let r1 = residual(&shifted)?;
    let r0 = residual(at)?;
    Ok(r1.iter().zip(&r0).map(|(a, b)| (a - b) / eps).collect())
}

/// Default difference step for [`matfree_apply`].
pub fn default_eps(at: &[f64], direction: &[f64]) -> f64 {
    1e-7 * (1.0 + norm_inf(at)) / (1.0 + norm_inf(direction))
}

/// Restarted GMRES without preconditioning. `max_iter` bounds the total
/// number of operator applications.
pub fn solve_krylov<F>(mut apply: F, b: &[f64], tol: f64, max_iter: usize) -> Result<Vec<f64>>
where
    F: FnMut(&[f64]) -> Result<Vec<f64>>,
{
    let n = b.len();
    let bnorm = norm2(b);
    let mut x = vec![0.0; n];
    if bnorm == 0.0 {
        return Ok(x);
    }
    let m = GMRES_RESTART.min(n.max(1));
    let mut iters = 0;
    let mut res;
    loop {
        let ax = if iters == 0 { vec![0.0; n] } else { apply(&x)? };
        let r: Vec<f64> = b.iter().zip(&ax).map(|(b, a)| b - a).collect();
        let beta = norm2(&r);
        res = beta;
        if beta <= tol * bnorm {
            return Ok(x);
        }
        if iters >= max_iter {
            break;
        }
        let mut v: Vec<Vec<f64>> = Vec::with_capacity(m + 1);
        v.push(r.iter().map(|x| x / beta).collect());
        let mut h = vec![vec![0.0; m]; m + 1];
        let mut cs = vec![0.0; m];
        let mut sn = vec![0.0; m];
        let mut g = vec![0.0; m + 1];
        g[0] = beta;
        let mut k_used = 0;
        for k in 0..m {
            if iters >= max_iter {
                break;
            }
            let mut w = apply(&v[k])?;
            iters += 1;
            for (i, vi) in v.iter().enumerate() {
                h[i][k] = dot(&w, vi);
                for (wj, vj) in w.iter_mut().zip(vi) {
                    *wj -= h[i][k] * vj;
                }
            }
            // second Gram-Schmidt pass
            for (i, vi) in v.iter().enumerate() {
                let c = dot(&w, vi);
                h[i][k] += c;
                for (wj, vj) in w.iter_mut().zip(vi) {
                    *wj -= c * vj;
                }
            }
            let hn = norm2(&w);
            h[k + 1][k] = hn;
            for i in 0..k {
                let t = cs[i] * h[i][k] + sn[i] * h[i + 1][k];
                h[i + 1][k] = -sn[i] * h[i][k] + cs[i] * h[i + 1][k];
                h[i][k] = t;
            }
            let d = Float::hypot(h[k][k], h[k + 1][k]);
            cs[k] = h[k][k] / d;
            sn[k] = h[k + 1][k] / d;
            h[k][k] = d;
            h[k + 1][k] = 0.0;
            g[k + 1] = -sn[k] * g[k];
            g[k] *= cs[k];
            k_used = k + 1;
            res = g[k + 1].abs();
            if res <= 0.1 * tol * bnorm || hn == 0.0 {
                break;
            }
            v.push(w.iter().map(|x| x / hn).collect());
        }
        let mut y = vec![0.0; k_used];
        for i in (0..k_used).rev() {
            let mut s = g[i];
            for j in i + 1..k_used {
                s -= h[i][j] * y[j];
            }
            y[i] = s / h[i][i];
        }
        for (j, yj) in y.iter().enumerate() {
            for (xi, vi) in x.iter_mut().zip(&v[j]) {
                *xi += yj * vi;
            }
        }
    }
    Err(Error::NotConverged { solver: "gmres", iterations: iters, residual: res / bnorm })
}
