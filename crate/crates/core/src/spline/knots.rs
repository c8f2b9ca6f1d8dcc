use alloc::vec;
use alloc::vec::Vec;

use crate::{Error, Result};

/// Highest supported polynomial degree.
pub const MAX_DEGREE: usize = 4;
/// Highest derivative order produced by basis evaluation.
pub const MAX_DERIV: usize = 3;

/// One-dimensional basis derivatives at a point: `ders[k][r]` is the `k`-th
/// derivative of the `r`-th nonzero function of the span.
pub type LocalDers = [[f64; MAX_DEGREE + 1]; MAX_DERIV + 1];

/// Nondecreasing knot sequence on `[0, 1]` with a fixed degree.
#[derive(Debug, Clone, PartialEq)]
pub struct KnotVector {
    degree: usize,
    knots: Vec<f64>,
}

impl KnotVector {
    /// Validates an open (clamped) knot vector on `[0, 1]`.
    pub fn new(degree: usize, knots: Vec<f64>) -> Result<Self> {
        if degree == 0 || degree > MAX_DEGREE {
            return Err(Error::InvalidArgument(alloc::format!(
                "degree {degree} outside 1..={MAX_DEGREE}"
            )));
        }
        if knots.len() < 2 * (degree + 1) {
            return Err(Error::InvalidArgument(alloc::format!(
                "{} knots cannot carry degree {degree}",
                knots.len()
            )));
        }
        if knots.windows(2).any(|w| w[1] < w[0]) {
            return Err(Error::InvalidArgument("knots must be nondecreasing".into()));
        }
        let first = knots[0];
        let last = knots[knots.len() - 1];
        if first != 0.0 || last != 1.0 {
            return Err(Error::InvalidArgument("knots must span [0, 1]".into()));
        }
        let lead = knots.iter().take_while(|&&k| k == first).count();
        let tail = knots.iter().rev().take_while(|&&k| k == last).count();
        if lead != degree + 1 || tail != degree + 1 {
            return Err(Error::InvalidArgument(
                "end knots must be repeated degree + 1 times".into(),
            ));
        }
        let mut i = lead;
        while i < knots.len() - tail {
            let m = knots[i..].iter().take_while(|&&k| k == knots[i]).count();
            if m > degree {
                return Err(Error::InvalidArgument(alloc::format!(
                    "interior knot {} has multiplicity {m} > degree",
                    knots[i]
                )));
            }
            i += m;
        }
        Ok(Self { degree, knots })
    }

    /// Uniform open knot vector with `n_cells` equal cells and maximal
    /// interior regularity.
    pub fn open_uniform(degree: usize, n_cells: usize) -> Result<Self> {
        if degree < 1 {
            return Err(Error::InvalidArgument("degree must be at least 1".into()));
        }
        if n_cells < 1 {
            return Err(Error::InvalidArgument("need at least one cell".into()));
        }
        let mut knots = vec![0.0; degree + 1];
        for k in 1..n_cells {
            knots.push(k as f64 / n_cells as f64);
        }
        knots.extend(core::iter::repeat(1.0).take(degree + 1));
        Self::new(degree, knots)
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn knots(&self) -> &[f64] {
        &self.knots
    }

    pub fn n_basis(&self) -> usize {
        self.knots.len() - self.degree - 1
    }

    /// Span index `k` with `t_k <= x < t_{k+1}`; the right end maps to the
    /// last nonempty span.
    pub fn find_span(&self, x: f64) -> usize {
        let p = self.degree;
        let n = self.n_basis();
        if x >= self.knots[n] {
            return n - 1;
        }
        if x <= self.knots[p] {
            let mut k = p;
            while self.knots[k + 1] <= x {
                k += 1;
            }
            return k;
        }
        let (mut lo, mut hi) = (p, n);
        while hi - lo > 1 {
            let mid = (lo + hi) / 2;
            if x < self.knots[mid] {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        lo
    }

    /// Greville abscissa of basis function `i`.
    pub fn greville(&self, i: usize) -> f64 {
        let p = self.degree;
        self.knots[i + 1..=i + p].iter().sum::<f64>() / p as f64
    }

    /// Values and derivatives up to `n_ders` of the `degree + 1` functions
    /// that are nonzero on `span` (functions `span - degree ..= span`).
    pub fn basis_ders(&self, span: usize, x: f64, n_ders: usize) -> LocalDers {
        let p = self.degree;
        let t = &self.knots;
        let mut ndu = [[0.0; MAX_DEGREE + 1]; MAX_DEGREE + 1];
        let mut left = [0.0; MAX_DEGREE + 1];
        let mut right = [0.0; MAX_DEGREE + 1];
        ndu[0][0] = 1.0;
        for j in 1..=p {
            left[j] = x - t[span + 1 - j];
            right[j] = t[span + j] - x;
            let mut saved = 0.0;
            for r in 0..j {
                ndu[j][r] = right[r + 1] + left[j - r];
                let temp = ndu[r][j - 1] / ndu[j][r];
                ndu[r][j] = saved + right[r + 1] * temp;
                saved = left[j - r] * temp;
            }
            ndu[j][j] = saved;
        }
        let mut ders: LocalDers = [[0.0; MAX_DEGREE + 1]; MAX_DERIV + 1];
        for j in 0..=p {
            ders[0][j] = ndu[j][p];
        }
        let n = n_ders.min(p).min(MAX_DERIV);
        let mut a = [[0.0; MAX_DEGREE + 1]; 2];
        for r in 0..=p {
            let (mut s1, mut s2) = (0usize, 1usize);
            a[0][0] = 1.0;
            for k in 1..=n {
                let mut d = 0.0;
                let rk = r as isize - k as isize;
                let pk = p - k;
                if r >= k {
                    let rk = rk as usize;
                    a[s2][0] = a[s1][0] / ndu[pk + 1][rk];
                    d = a[s2][0] * ndu[rk][pk];
                }
                let j1 = if rk >= -1 { 1 } else { (-rk) as usize };
                let j2 = if r as isize - 1 <= pk as isize { k - 1 } else { p - r };
                for j in j1..=j2 {
                    let idx = (rk + j as isize) as usize;
                    a[s2][j] = (a[s1][j] - a[s1][j - 1]) / ndu[pk + 1][idx];
                    d += a[s2][j] * ndu[idx][pk];
                }
                if r <= pk {
                    a[s2][k] = -a[s1][k - 1] / ndu[pk + 1][r];
                    d += a[s2][k] * ndu[r][pk];
                }
                ders[k][r] = d;
                core::mem::swap(&mut s1, &mut s2);
            }
        }
        let mut fac = p as f64;
        for k in 1..=n {
            for j in 0..=p {
                ders[k][j] *= fac;
            }
            fac *= (p - k) as f64;
        }
        ders
    }

    /// Matrix expressing every basis function of `self` in the basis of
    /// `fine`, obtained by Boehm knot insertion. `fine` must contain every knot
    /// of `self` with at least the same multiplicity. Entry `k` lists the
    /// nonzero `(fine index, coefficient)` pairs of coarse function `k`.
    pub fn refinement_matrix(&self, fine: &KnotVector) -> Result<Vec<Vec<(usize, f64)>>> {
        if fine.degree != self.degree {
            return Err(Error::NotNested);
        }
        let p = self.degree;
        // Knots to insert: multiset difference fine \ self.
        let mut inserts = Vec::new();
        let (mut i, mut j) = (0, 0);
        while j < fine.knots.len() {
            if i < self.knots.len() && self.knots[i] == fine.knots[j] {
                i += 1;
                j += 1;
            } else if i < self.knots.len() && self.knots[i] < fine.knots[j] {
                return Err(Error::NotNested);
            } else {
                inserts.push(fine.knots[j]);
                j += 1;
            }
        }
        if i != self.knots.len() {
            return Err(Error::NotNested);
        }
        let n0 = self.n_basis();
        // Dense columns: cols[k][r] = coefficient of current basis function r.
        let mut knots = self.knots.clone();
        let mut cols: Vec<Vec<f64>> = (0..n0)
            .map(|k| {
                let mut c = vec![0.0; n0];
                c[k] = 1.0;
                c
            })
            .collect();
        for &u in &inserts {
            let n = knots.len() - p - 1;
            let mut k = p;
            while k + 1 < knots.len() && knots[k + 1] <= u {
                k += 1;
            }
            let k = k.min(n - 1);
            for col in cols.iter_mut() {
                let mut next = vec![0.0; n + 1];
                for r in 0..=n {
                    next[r] = if r + p <= k {
                        col[r]
                    } else if r > k {
                        col[r - 1]
                    } else {
                        let a = (u - knots[r]) / (knots[r + p] - knots[r]);
                        a * col[r] + (1.0 - a) * col[r - 1]
                    };
                }
                *col = next;
            }
            knots.insert(k + 1, u);
        }
        Ok(cols
            .into_iter()
            .map(|c| {
                c.into_iter()
                    .enumerate()
                    .filter(|(_, v)| *v != 0.0)
                    .collect()
            })
            .collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bezier_and_hat_knot_vectors() {
        let kv = KnotVector::open_uniform(3, 1).unwrap();
        assert_eq!(kv.knots(), &[0.0, 0.0, 0.0, 0.0, 1.0, 1.0, 1.0, 1.0]);
        assert_eq!(kv.n_basis(), 4);
        let kv = KnotVector::open_uniform(1, 2).unwrap();
        assert_eq!(kv.knots(), &[0.0, 0.0, 0.5, 1.0, 1.0]);
        assert_eq!(kv.n_basis(), 3);
        let kv = KnotVector::open_uniform(3, 7).unwrap();
        assert_eq!(kv.n_basis(), 10);
        for k in 1..7 {
            assert_eq!(kv.knots()[3 + k], k as f64 / 7.0);
        }
    }

    #[test]
    fn rejects_bad_input() {
        assert!(KnotVector::open_uniform(0, 3).is_err());
        assert!(KnotVector::open_uniform(3, 0).is_err());
        assert!(KnotVector::new(2, vec![0.0, 0.0, 0.0, 0.5, 0.5, 0.5, 1.0, 1.0, 1.0]).is_err());
        assert!(KnotVector::new(1, vec![0.0, 0.0, 0.7, 0.5, 1.0, 1.0]).is_err());
    }

    #[test]
    fn cubic_values_at_interior_knot() {
        let kv = KnotVector::open_uniform(3, 7).unwrap();
        let x = 3.0 / 7.0;
        let span = kv.find_span(x);
        let d = kv.basis_ders(span, x, 2);
        // Uniform cubic B-spline at a knot: (1/6, 2/3, 1/6, 0).
        assert!((d[0][0] - 1.0 / 6.0).abs() < 1e-14);
        assert!((d[0][1] - 2.0 / 3.0).abs() < 1e-14);
        assert!((d[0][2] - 1.0 / 6.0).abs() < 1e-14);
        assert!(d[0][3].abs() < 1e-14);
    }

    #[test]
    fn derivatives_match_finite_differences() {
        let kv = KnotVector::open_uniform(3, 5).unwrap();
        let h = 1e-5;
        for &x in &[0.05, 0.33, 0.51, 0.93] {
            let span = kv.find_span(x);
            let d = kv.basis_ders(span, x, 3);
            let dp = kv.basis_ders(span, x + h, 3);
            let dm = kv.basis_ders(span, x - h, 3);
            for r in 0..4 {
                for k in 0..3 {
                    let fd = (dp[k][r] - dm[k][r]) / (2.0 * h);
                    assert!((fd - d[k + 1][r]).abs() <= 1e-6 * (1.0 + d[k + 1][r].abs()));
                }
            }
        }
    }

    #[test]
    fn dyadic_refinement_reproduces_functions() {
        let coarse = KnotVector::open_uniform(3, 3).unwrap();
        let fine = KnotVector::open_uniform(3, 6).unwrap();
        let r = coarse.refinement_matrix(&fine).unwrap();
        for x in [0.0, 0.1, 0.37, 0.5, 0.81, 1.0] {
            let sc = coarse.find_span(x);
            let dc = coarse.basis_ders(sc, x, 0);
            let sf = fine.find_span(x);
            let df = fine.basis_ders(sf, x, 0);
            for (k, row) in r.iter().enumerate() {
                let vc = if k + 3 >= sc && k <= sc { dc[0][k + 3 - sc] } else { 0.0 };
                let vf: f64 = row
                    .iter()
                    .filter(|(j, _)| *j + 3 >= sf && *j <= sf)
                    .map(|(j, c)| c * df[0][j + 3 - sf])
                    .sum();
                assert!((vc - vf).abs() < 1e-14, "x={x} k={k}");
            }
        }
    }
}
