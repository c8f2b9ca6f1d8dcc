use alloc::vec;
use alloc::vec::Vec;

use crate::{Error, Result};

/// Compressed sparse row matrix. Explicit zeros are kept in the pattern.
#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    nrows: usize,
    ncols: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    vals: Vec<f64>,
}

impl CsrMatrix {
    /// Empty-valued matrix with the given sorted, duplicate-free row patterns.
    pub fn from_pattern(ncols: usize, rows: Vec<Vec<usize>>) -> Self {
        let nrows = rows.len();
        let mut row_ptr = Vec::with_capacity(nrows + 1);
        row_ptr.push(0);
        let nnz = rows.iter().map(|r| r.len()).sum();
        let mut col_idx = Vec::with_capacity(nnz);
        for r in rows {
            debug_assert!(r.windows(2).all(|w| w[0] < w[1]));
            col_idx.extend(r);
            row_ptr.push(col_idx.len());
        }
        Self { nrows, ncols, row_ptr, col_idx, vals: vec![0.0; nnz] }
    }

    pub fn from_triplets(nrows: usize, ncols: usize, triplets: &[(usize, usize, f64)]) -> Self {
        let mut b = PatternBuilder::new(nrows, ncols);
        for &(i, j, _) in triplets {
            b.add(i, j);
        }
        let mut m = b.build();
        for &(i, j, v) in triplets {
            m.add(i, j, v);
        }
        m
    }

    pub fn identity(n: usize) -> Self {
        Self::from_triplets(n, n, &(0..n).map(|i| (i, i, 1.0)).collect::<Vec<_>>())
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn nnz(&self) -> usize {
        self.vals.len()
    }

    pub fn row(&self, i: usize) -> (&[usize], &[f64]) {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        (&self.col_idx[r.clone()], &self.vals[r])
    }

    fn position(&self, i: usize, j: usize) -> Option<usize> {
        let (s, e) = (self.row_ptr[i], self.row_ptr[i + 1]);
        self.col_idx[s..e].binary_search(&j).ok().map(|k| s + k)
    }

    /// Adds `v` to entry `(i, j)`, which must be in the pattern.
    pub fn add(&mut self, i: usize, j: usize, v: f64) {
        let k = self.position(i, j).unwrap_or_else(|| panic!("entry ({i}, {j}) not in pattern"));
        self.vals[k] += v;
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.position(i, j).map_or(0.0, |k| self.vals[k])
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.vals
    }

    /// `self += s * diag(row_scale) * other`. Entries of `other` must lie in
    /// the pattern of `self`.
    pub fn add_scaled(&mut self, other: &CsrMatrix, s: f64, row_scale: Option<&[f64]>) {
        assert_eq!((self.nrows, self.ncols), (other.nrows, other.ncols));
        let same = self.row_ptr == other.row_ptr && self.col_idx == other.col_idx;
        for i in 0..self.nrows {
            let f = s * row_scale.map_or(1.0, |r| r[i]);
            if f == 0.0 {
                continue;
            }
            for k in other.row_ptr[i]..other.row_ptr[i + 1] {
                if same {
                    self.vals[k] += f * other.vals[k];
                } else {
                    self.add(i, other.col_idx[k], f * other.vals[k]);
                }
            }
        }
    }

    pub fn scale(&mut self, s: f64) {
        self.vals.iter_mut().for_each(|v| *v *= s);
    }

    /// `y = A x`
    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.ncols);
        (0..self.nrows)
            .map(|i| {
                let (c, v) = self.row(i);
                c.iter().zip(v).map(|(&j, a)| a * x[j]).sum()
            })
            .collect()
    }

    /// `y = A^T x`
    pub fn mul_vec_transpose(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.nrows);
        let mut y = vec![0.0; self.ncols];
        for (i, &xi) in x.iter().enumerate() {
            if xi == 0.0 {
                continue;
            }
            let (c, v) = self.row(i);
            for (&j, a) in c.iter().zip(v) {
                y[j] += a * xi;
            }
        }
        y
    }

    pub fn transpose(&self) -> Self {
        let mut rows = vec![Vec::new(); self.ncols];
        for i in 0..self.nrows {
            for &j in self.row(i).0 {
                rows[j].push(i);
            }
        }
        let mut t = Self::from_pattern(self.nrows, rows);
        for i in 0..self.nrows {
            let (c, v) = self.row(i);
            for (&j, &a) in c.iter().zip(v) {
                t.add(j, i, a);
            }
        }
        t
    }

    /// Submatrix with the listed rows and columns, in that order.
    pub fn select(&self, rows: &[usize], cols: &[usize]) -> Self {
        let mut map = vec![usize::MAX; self.ncols];
        for (k, &c) in cols.iter().enumerate() {
            map[c] = k;
        }
        let mut pat = Vec::with_capacity(rows.len());
        for &r in rows {
            let mut p: Vec<usize> = self.row(r).0.iter().filter(|&&c| map[c] != usize::MAX).map(|&c| map[c]).collect();
            p.sort_unstable();
            pat.push(p);
        }
        let mut out = Self::from_pattern(cols.len(), pat);
        for (k, &r) in rows.iter().enumerate() {
            let (c, v) = self.row(r);
            for (&j, &a) in c.iter().zip(v) {
                if map[j] != usize::MAX {
                    out.add(k, map[j], a);
                }
            }
        }
        out
    }

    pub fn to_dense(&self) -> Vec<f64> {
        let mut d = vec![0.0; self.nrows * self.ncols];
        for i in 0..self.nrows {
            let (c, v) = self.row(i);
            for (&j, &a) in c.iter().zip(v) {
                d[i * self.ncols + j] += a;
            }
        }
        d
    }

    pub fn max_abs(&self) -> f64 {
        self.vals.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn check_square(&self) -> Result<()> {
        if self.nrows != self.ncols {
            return Err(Error::DimensionMismatch { expected: self.nrows, got: self.ncols });
        }
        Ok(())
    }
}

/// Collects the nonzero structure of a matrix before values are assembled.
#[derive(Debug, Clone)]
pub struct PatternBuilder {
    ncols: usize,
    rows: Vec<Vec<usize>>,
}

impl PatternBuilder {
    pub fn new(nrows: usize, ncols: usize) -> Self {
        Self { ncols, rows: vec![Vec::new(); nrows] }
    }

    pub fn add(&mut self, i: usize, j: usize) {
        debug_assert!(j < self.ncols);
        self.rows[i].push(j);
    }

    /// Adds the dense block `rows x cols`.
    pub fn add_block(&mut self, rows: &[usize], cols: &[usize]) {
        for &r in rows {
            self.rows[r].extend_from_slice(cols);
        }
    }

    pub fn build(mut self) -> CsrMatrix {
        for r in self.rows.iter_mut() {
            r.sort_unstable();
            r.dedup();
        }
        CsrMatrix::from_pattern(self.ncols, self.rows)
    }
}
