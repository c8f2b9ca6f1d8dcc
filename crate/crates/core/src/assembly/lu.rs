use alloc::collections::VecDeque;
use alloc::vec;
use alloc::vec::Vec;

use super::sparse::CsrMatrix;
use crate::{Error, Result};

/// Which system to solve with a factored matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolveMode {
    Normal,
    Transpose,
}

/// LU factorization of a square sparse matrix: reverse Cuthill-McKee
/// ordering followed by banded Gaussian elimination with partial pivoting.
#[derive(Debug, Clone)]
pub struct SparseLu {
    n: usize,
    /// `perm[new] = old`
    perm: Vec<usize>,
    kl: usize,
    ku: usize,
    /// Column-major band storage, leading dimension `2 kl + ku + 1`.
    ab: Vec<f64>,
    piv: Vec<usize>,
}

impl SparseLu {
    pub fn factor(a: &CsrMatrix) -> Result<Self> {
        a.check_square()?;
        let n = a.nrows();
        let perm = rcm_order(a);
        let mut inv = vec![0; n];
        for (new, &old) in perm.iter().enumerate() {
            inv[old] = new;
        }
        let (mut kl, mut ku) = (0usize, 0usize);
        for i in 0..n {
            for &j in a.row(i).0 {
                let (pi, pj) = (inv[i], inv[j]);
                if pi > pj {
                    kl = kl.max(pi - pj);
                } else {
                    ku = ku.max(pj - pi);
                }
            }
        }
        let kv = kl + ku;
        let ld = 2 * kl + ku + 1;
        let mut ab = vec![0.0; ld * n];
        for i in 0..n {
            let (c, v) = a.row(i);
            for (&j, &x) in c.iter().zip(v) {
                let (pi, pj) = (inv[i], inv[j]);
                ab[pj * ld + kv + pi - pj] += x;
            }
        }
        let scale = a.max_abs().max(f64::MIN_POSITIVE);
        let tiny = scale * f64::EPSILON * 16.0;
        let mut piv = vec![0; n];
        let at = |i: usize, j: usize| j * ld + kv + i - j;
        for k in 0..n {
            let km = kl.min(n - 1 - k);
            let mut p = k;
            let mut best = ab[at(k, k)].abs();
            for i in k + 1..=k + km {
                let v = ab[at(i, k)].abs();
                if v > best {
                    best = v;
                    p = i;
                }
            }
            piv[k] = p;
            if best <= tiny {
                return Err(Error::Singular { column: perm[k], pivot: best });
            }
            let jmax = (k + kv).min(n - 1);
            if p != k {
                for j in k..=jmax {
                    ab.swap(at(k, j), at(p, j));
                }
            }
            let d = 1.0 / ab[at(k, k)];
            for i in k + 1..=k + km {
                ab[at(i, k)] *= d;
            }
            for j in k + 1..=jmax {
                let akj = ab[at(k, j)];
                if akj == 0.0 {
                    continue;
                }
                let base_l = at(k + 1, k);
                let base_j = at(k + 1, j);
                for t in 0..km {
                    ab[base_j + t] -= ab[base_l + t] * akj;
                }
            }
        }
        Ok(Self { n, perm, kl, ku, ab, piv })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    /// Bandwidths `(lower, upper)` after reordering.
    pub fn bandwidth(&self) -> (usize, usize) {
        (self.kl, self.ku)
    }

    pub fn solve(&self, b: &[f64], mode: SolveMode) -> Vec<f64> {
        assert_eq!(b.len(), self.n);
        let mut x: Vec<f64> = self.perm.iter().map(|&o| b[o]).collect();
        match mode {
            SolveMode::Normal => self.solve_permuted(&mut x),
            SolveMode::Transpose => self.solve_permuted_t(&mut x),
        }
        let mut out = vec![0.0; self.n];
        for (new, &old) in self.perm.iter().enumerate() {
            out[old] = x[new];
        }
        out
    }

    fn solve_permuted(&self, b: &mut [f64]) {
        let (n, kl, kv) = (self.n, self.kl, self.kl + self.ku);
        let ld = 2 * kl + self.ku + 1;
        let at = |i: usize, j: usize| j * ld + kv + i - j;
        for k in 0..n {
            let p = self.piv[k];
            if p != k {
                b.swap(k, p);
            }
            let bk = b[k];
            if bk != 0.0 {
                let km = kl.min(n - 1 - k);
                let base = at(k + 1, k);
                for t in 0..km {
                    b[k + 1 + t] -= self.ab[base + t] * bk;
                }
            }
        }
        for j in (0..n).rev() {
            b[j] /= self.ab[at(j, j)];
            let bj = b[j];
            if bj != 0.0 {
                let i0 = j.saturating_sub(kv);
                for i in i0..j {
                    b[i] -= self.ab[at(i, j)] * bj;
                }
            }
        }
    }

    fn solve_permuted_t(&self, b: &mut [f64]) {
        let (n, kl, kv) = (self.n, self.kl, self.kl + self.ku);
        let ld = 2 * kl + self.ku + 1;
        let at = |i: usize, j: usize| j * ld + kv + i - j;
        for j in 0..n {
            let i0 = j.saturating_sub(kv);
            let mut s = b[j];
            for i in i0..j {
                s -= self.ab[at(i, j)] * b[i];
            }
            b[j] = s / self.ab[at(j, j)];
        }
        for k in (0..n).rev() {
            let km = kl.min(n - 1 - k);
            let base = at(k + 1, k);
            let mut s = b[k];
            for t in 0..km {
                s -= self.ab[base + t] * b[k + 1 + t];
            }
            b[k] = s;
            let p = self.piv[k];
            if p != k {
                b.swap(k, p);
            }
        }
    }
}

/// Solves `A y = b` or `A^T y = b` with a fresh factorization.
pub fn solve_sparse(a: &CsrMatrix, b: &[f64], mode: SolveMode) -> Result<Vec<f64>> {
    if b.len() != a.nrows() {
        return Err(Error::DimensionMismatch { expected: a.nrows(), got: b.len() });
    }
    Ok(SparseLu::factor(a)?.solve(b, mode))
}

/// Reverse Cuthill-McKee ordering of the symmetrized pattern; returns
/// `perm[new] = old`.
pub fn rcm_order(a: &CsrMatrix) -> Vec<usize> {
    let n = a.nrows();
    let mut adj: Vec<Vec<usize>> = vec![Vec::new(); n];
    for i in 0..n {
        for &j in a.row(i).0 {
            if i != j {
                adj[i].push(j);
                adj[j].push(i);
            }
        }
    }
    for l in adj.iter_mut() {
        l.sort_unstable();
        l.dedup();
    }
    let mut visited = vec![false; n];
    let mut order = Vec::with_capacity(n);
    let mut queue = VecDeque::new();
    loop {
        let Some(seed) = (0..n).filter(|&i| !visited[i]).min_by_key(|&i| adj[i].len()) else {
            break;
        };
        let start = peripheral(seed, &adj);
        visited[start] = true;
        queue.push_back(start);
        while let Some(v) = queue.pop_front() {
            order.push(v);
            let mut nb: Vec<usize> = adj[v].iter().copied().filter(|&w| !visited[w]).collect();
            nb.sort_by_key(|&w| (adj[w].len(), w));
            for w in nb {
                visited[w] = true;
                queue.push_back(w);
            }
        }
    }
    order.reverse();
    order
}

/// Pseudo-peripheral node of the component containing `seed`.
fn peripheral(seed: usize, adj: &[Vec<usize>]) -> usize {
    let mut node = seed;
    let mut ecc = 0;
    for _ in 0..8 {
        let (far, depth) = bfs_far(node, adj);
        if depth <= ecc {
            break;
        }
        ecc = depth;
        node = far;
    }
    node
}

fn bfs_far(start: usize, adj: &[Vec<usize>]) -> (usize, usize) {
    let mut dist = vec![usize::MAX; adj.len()];
    dist[start] = 0;
    let mut q = VecDeque::from([start]);
    let mut far = (start, 0);
    while let Some(v) = q.pop_front() {
        let d = dist[v];
        if d > far.1 || (d == far.1 && adj[v].len() < adj[far.0].len()) {
            far = (v, d);
        }
        for &w in &adj[v] {
            if dist[w] == usize::MAX {
                dist[w] = d + 1;
                q.push_back(w);
            }
        }
    }
    far
}
