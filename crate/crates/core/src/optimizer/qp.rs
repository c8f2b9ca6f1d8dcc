//! Dense strictly convex QP by the dual active-set method of Goldfarb and
//! Idnani: start at the unconstrained minimizer and add violated
//! constraints one at a time, dropping those whose multipliers would turn
//! negative.

use alloc::vec;
use alloc::vec::Vec;

use crate::math::{dot, norm_inf, DenseLu};
use crate::{Error, Result};

/// `min 1/2 z^T G z + h^T z` subject to `a_i^T z >= b_i`.
#[derive(Debug, Clone)]
pub struct Qp {
    pub n: usize,
    /// Row-major, symmetric positive definite.
    pub g: Vec<f64>,
    pub h: Vec<f64>,
    pub rows: Vec<Vec<f64>>,
    pub rhs: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct QpSolution {
    pub z: Vec<f64>,
    /// One nonnegative multiplier per constraint row.
    pub multipliers: Vec<f64>,
    pub iterations: usize,
}

impl Qp {
    pub fn solve(&self, max_iter: usize) -> Result<QpSolution> {
        let n = self.n;
        let m = self.rows.len();
        let mut z = self.h.iter().map(|v| -v).collect::<Vec<_>>();
        DenseLu::new(n, self.g.clone())?.solve(&mut z);
        let mut active: Vec<usize> = Vec::new();
        let mut u: Vec<f64> = Vec::new();
        for it in 0..max_iter {
            // most violated constraint
            let mut pick = None;
            let mut worst = 0.0;
            for i in 0..m {
                if active.contains(&i) {
                    continue;
                }
                let a = &self.rows[i];
                let tol = 1e-12 * (1.0 + self.rhs[i].abs() + norm_inf(a) * norm_inf(&z));
                let s = dot(a, &z) - self.rhs[i];
                if s < -tol && s < worst {
                    worst = s;
                    pick = Some(i);
                }
            }
            let Some(p) = pick else {
                let mut multipliers = vec![0.0; m];
                for (k, &i) in active.iter().enumerate() {
                    multipliers[i] = u[k].max(0.0);
                }
                return Ok(QpSolution { z, multipliers, iterations: it });
            };
            let np = &self.rows[p];
            let mut up = 0.0;
            loop {
                let (dz, r) = self.directions(np, &active)?;
                let mut t1 = f64::INFINITY;
                let mut drop = None;
                for (k, rk) in r.iter().enumerate() {
                    if *rk > 0.0 && u[k] / rk < t1 {
                        t1 = u[k] / rk;
                        drop = Some(k);
                    }
                }
                let curv = dot(&dz, np);
                let s = dot(np, &z) - self.rhs[p];
                let t2 = if norm_inf(&dz) > 1e-14 * (1.0 + norm_inf(&z)) && curv > 0.0 { -s / curv } else { f64::INFINITY };
                if t1.is_infinite() && t2.is_infinite() {
                    return Err(Error::Optimizer("QP constraints are inconsistent".into()));
                }
                let t = t1.min(t2);
                if t2.is_finite() {
                    z.iter_mut().zip(&dz).for_each(|(zi, di)| *zi += t * di);
                }
                u.iter_mut().zip(&r).for_each(|(uk, rk)| *uk -= t * rk);
                up += t;
                if t2 <= t1 {
                    active.push(p);
                    u.push(up);
                    break;
                }
                let k = drop.unwrap();
                active.remove(k);
                u.remove(k);
            }
        }
        Err(Error::NotConverged { solver: "dual active-set QP", iterations: max_iter, residual: f64::NAN })
    }

    /// Primal step `H n` and dual step `N* n` for the active rows `N`:
    /// solves `G dz - N mu = n`, `N^T dz = 0` and returns `(dz, -mu)`.
    fn directions(&self, np: &[f64], active: &[usize]) -> Result<(Vec<f64>, Vec<f64>)> {
        let n = self.n;
        let k = active.len();
        let s = n + k;
        let mut kkt = vec![0.0; s * s];
        for i in 0..n {
            kkt[i * s..i * s + n].copy_from_slice(&self.g[i * n..(i + 1) * n]);
        }
        for (r, &w) in active.iter().enumerate() {
            for j in 0..n {
                let a = self.rows[w][j];
                kkt[j * s + n + r] = -a;
                kkt[(n + r) * s + j] = a;
            }
        }
        let lu = DenseLu::new(s, kkt)?;
        let mut rhs = vec![0.0; s];
        rhs[..n].copy_from_slice(np);
        lu.solve(&mut rhs);
        let mu = rhs.split_off(n);
        Ok((rhs, mu.into_iter().map(|v| -v).collect()))
    }
}
