//! Compressed sparse row matrices and a banded direct solver.
//!
//! The finite element matrices produced here come from structured meshes, so
//! a reverse Cuthill–McKee reordering followed by a banded LU factorization is
//! both simple and fast enough for every system the solvers need.

use std::collections::VecDeque;

use crate::error::{Error, Result};

/// Square or rectangular matrix in compressed sparse row layout with sorted column indices.
#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    nrows: usize,
    ncols: usize,
    indptr: Vec<usize>,
    indices: Vec<usize>,
    data: Vec<f64>,
}

impl CsrMatrix {
    /// Build from `(row, col, value)` triplets, summing duplicates in insertion order.
    pub fn from_triplets(nrows: usize, ncols: usize, triplets: &[(usize, usize, f64)]) -> Self {
        let mut counts = vec![0usize; nrows + 1];
        for &(r, c, _) in triplets {
            assert!(r < nrows && c < ncols, "triplet ({r}, {c}) outside {nrows}x{ncols}");
            counts[r + 1] += 1;
        }
        for i in 0..nrows {
            counts[i + 1] += counts[i];
        }
        let mut fill = counts.clone();
        let mut cols = vec![0usize; triplets.len()];
        let mut vals = vec![0.0; triplets.len()];
        for &(r, c, v) in triplets {
            cols[fill[r]] = c;
            vals[fill[r]] = v;
            fill[r] += 1;
        }
        let mut indptr = Vec::with_capacity(nrows + 1);
        let mut indices = Vec::with_capacity(triplets.len());
        let mut data = Vec::with_capacity(triplets.len());
        indptr.push(0);
        let mut order: Vec<usize> = Vec::new();
        for r in 0..nrows {
            let (s, e) = (counts[r], counts[r + 1]);
            order.clear();
            order.extend(s..e);
            // stable sort keeps the summation order deterministic
            order.sort_by_key(|&k| cols[k]);
            let mut last: Option<usize> = None;
            for &k in &order {
                if last == Some(cols[k]) {
                    *data.last_mut().unwrap() += vals[k];
                } else {
                    indices.push(cols[k]);
                    data.push(vals[k]);
                    last = Some(cols[k]);
                }
            }
            indptr.push(indices.len());
        }
        Self {
            nrows,
            ncols,
            indptr,
            indices,
            data,
        }
    }

    pub fn identity(n: usize) -> Self {
        Self {
            nrows: n,
            ncols: n,
            indptr: (0..=n).collect(),
            indices: (0..n).collect(),
            data: vec![1.0; n],
        }
    }

    pub fn zeros(nrows: usize, ncols: usize) -> Self {
        Self {
            nrows,
            ncols,
            indptr: vec![0; nrows + 1],
            indices: Vec::new(),
            data: Vec::new(),
        }
    }

    pub fn from_dense(rows: &[Vec<f64>]) -> Self {
        let nrows = rows.len();
        let ncols = rows.first().map_or(0, |r| r.len());
        let mut t = Vec::new();
        for (i, row) in rows.iter().enumerate() {
            for (j, &v) in row.iter().enumerate() {
                if v != 0.0 {
                    t.push((i, j, v));
                }
            }
        }
        Self::from_triplets(nrows, ncols, &t)
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn nnz(&self) -> usize {
        self.data.len()
    }

    pub fn indptr(&self) -> &[usize] {
        &self.indptr
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let (s, e) = (self.indptr[i], self.indptr[i + 1]);
        self.indices[s..e].iter().copied().zip(self.data[s..e].iter().copied())
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (s, e) = (self.indptr[i], self.indptr[i + 1]);
        match self.indices[s..e].binary_search(&j) {
            Ok(k) => self.data[s + k],
            Err(_) => 0.0,
        }
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let mut out = vec![vec![0.0; self.ncols]; self.nrows];
        for (i, row) in out.iter_mut().enumerate() {
            for (j, v) in self.row(i) {
                row[j] += v;
            }
        }
        out
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.nrows];
        self.matvec_into(x, &mut y);
        y
    }

    pub fn matvec_into(&self, x: &[f64], y: &mut [f64]) {
        assert_eq!(x.len(), self.ncols);
        assert_eq!(y.len(), self.nrows);
        for (i, yi) in y.iter_mut().enumerate() {
            let (s, e) = (self.indptr[i], self.indptr[i + 1]);
            let mut acc = 0.0;
            for k in s..e {
                acc += self.data[k] * x[self.indices[k]];
            }
            *yi = acc;
        }
    }

    /// `x^T A y`.
    pub fn bilinear(&self, x: &[f64], y: &[f64]) -> f64 {
        let mut acc = 0.0;
        for (i, &xi) in x.iter().enumerate() {
            if xi == 0.0 {
                continue;
            }
            let (s, e) = (self.indptr[i], self.indptr[i + 1]);
            let mut r = 0.0;
            for k in s..e {
                r += self.data[k] * y[self.indices[k]];
            }
            acc += xi * r;
        }
        acc
    }

    pub fn transpose(&self) -> Self {
        let mut t = Vec::with_capacity(self.nnz());
        for i in 0..self.nrows {
            for (j, v) in self.row(i) {
                t.push((j, i, v));
            }
        }
        Self::from_triplets(self.ncols, self.nrows, &t)
    }

    pub fn scaled(&self, c: f64) -> Self {
        let mut out = self.clone();
        out.data.iter_mut().for_each(|v| *v *= c);
        out
    }

    /// `Σ c_k A_k` for matrices of equal shape.
    pub fn linear_combination(terms: &[(f64, &CsrMatrix)]) -> Self {
        assert!(!terms.is_empty());
        let (nr, nc) = (terms[0].1.nrows, terms[0].1.ncols);
        let mut t = Vec::new();
        for &(c, a) in terms {
            assert_eq!((a.nrows, a.ncols), (nr, nc));
            for i in 0..nr {
                for (j, v) in a.row(i) {
                    t.push((i, j, c * v));
                }
            }
        }
        Self::from_triplets(nr, nc, &t)
    }

    /// Submatrix with the given row and column index lists (in that order).
    pub fn submatrix(&self, rows: &[usize], cols: &[usize]) -> Self {
        let mut col_map = vec![usize::MAX; self.ncols];
        for (k, &c) in cols.iter().enumerate() {
            col_map[c] = k;
        }
        let mut t = Vec::new();
        for (ri, &r) in rows.iter().enumerate() {
            for (j, v) in self.row(r) {
                let cj = col_map[j];
                if cj != usize::MAX {
                    t.push((ri, cj, v));
                }
            }
        }
        Self::from_triplets(rows.len(), cols.len(), &t)
    }

    /// Column `j` restricted to `rows`.
    pub fn column_on(&self, j: usize, rows: &[usize]) -> Vec<f64> {
        rows.iter().map(|&r| self.get(r, j)).collect()
    }

    pub fn is_symmetric(&self, rel_tol: f64) -> bool {
        if self.nrows != self.ncols {
            return false;
        }
        let scale = self.data.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(f64::MIN_POSITIVE);
        for i in 0..self.nrows {
            for (j, v) in self.row(i) {
                if (v - self.get(j, i)).abs() > rel_tol * scale {
                    return false;
                }
            }
        }
        true
    }

    /// Symmetric permutation `P A P^T` where `perm[new] = old`.
    pub fn permuted(&self, perm: &[usize]) -> Self {
        assert_eq!(self.nrows, self.ncols);
        let mut inv = vec![0usize; perm.len()];
        for (new, &old) in perm.iter().enumerate() {
            inv[old] = new;
        }
        let mut t = Vec::with_capacity(self.nnz());
        for i in 0..self.nrows {
            for (j, v) in self.row(i) {
                t.push((inv[i], inv[j], v));
            }
        }
        Self::from_triplets(self.nrows, self.ncols, &t)
    }

    /// Lower and upper bandwidths.
    pub fn bandwidths(&self) -> (usize, usize) {
        let (mut kl, mut ku) = (0, 0);
        for i in 0..self.nrows {
            for (j, _) in self.row(i) {
                if j < i {
                    kl = kl.max(i - j);
                } else {
                    ku = ku.max(j - i);
                }
            }
        }
        (kl, ku)
    }
}

/// Precomputed union sparsity for repeatedly forming `Σ c_k A_k` with changing weights.
#[derive(Debug, Clone)]
pub struct CombinationPattern {
    pattern: CsrMatrix,
    slots: Vec<Vec<usize>>,
    values: Vec<Vec<f64>>,
}

impl CombinationPattern {
    pub fn new(mats: &[&CsrMatrix]) -> Self {
        assert!(!mats.is_empty());
        let terms: Vec<(f64, &CsrMatrix)> = mats.iter().map(|&m| (0.0, m)).collect();
        let pattern = CsrMatrix::linear_combination(&terms);
        let slots = mats
            .iter()
            .map(|m| {
                let mut s = Vec::with_capacity(m.nnz());
                for i in 0..m.nrows {
                    let (ps, pe) = (pattern.indptr[i], pattern.indptr[i + 1]);
                    for (j, _) in m.row(i) {
                        let k = pattern.indices[ps..pe].binary_search(&j).unwrap();
                        s.push(ps + k);
                    }
                }
                s
            })
            .collect();
        let values = mats.iter().map(|m| m.data.clone()).collect();
        Self {
            pattern,
            slots,
            values,
        }
    }

    pub fn n_terms(&self) -> usize {
        self.slots.len()
    }

    pub fn combine(&self, coeffs: &[f64]) -> CsrMatrix {
        assert_eq!(coeffs.len(), self.slots.len());
        let mut out = self.pattern.clone();
        out.data.iter_mut().for_each(|v| *v = 0.0);
        for ((slots, vals), &c) in self.slots.iter().zip(&self.values).zip(coeffs) {
            if c == 0.0 {
                continue;
            }
            for (&s, &v) in slots.iter().zip(vals) {
                out.data[s] += c * v;
            }
        }
        out
    }
}

/// Reverse Cuthill–McKee ordering of the symmetrized pattern; `perm[new] = old`.
pub fn reverse_cuthill_mckee(a: &CsrMatrix) -> Vec<usize> {
    let n = a.nrows;
    let mut adj: Vec<Vec<usize>> = vec![Vec::new(); n];
    for i in 0..n {
        for (j, _) in a.row(i) {
            if i != j {
                adj[i].push(j);
                adj[j].push(i);
            }
        }
    }
    for nb in adj.iter_mut() {
        nb.sort_unstable();
        nb.dedup();
    }
    let degree: Vec<usize> = adj.iter().map(|v| v.len()).collect();
    let mut visited = vec![false; n];
    let mut order = Vec::with_capacity(n);

    let bfs_levels = |start: usize| -> (usize, usize) {
        let mut dist = vec![usize::MAX; n];
        let mut q = VecDeque::new();
        dist[start] = 0;
        q.push_back(start);
        let mut far = start;
        while let Some(u) = q.pop_front() {
            if dist[u] > dist[far] || (dist[u] == dist[far] && degree[u] < degree[far]) {
                far = u;
            }
            for &v in &adj[u] {
                if dist[v] == usize::MAX {
                    dist[v] = dist[u] + 1;
                    q.push_back(v);
                }
            }
        }
        (far, dist[far])
    };

    while order.len() < n {
        let seed = (0..n)
            .filter(|&i| !visited[i])
            .min_by_key(|&i| degree[i])
            .unwrap();
        // pseudo-peripheral start node
        let mut start = seed;
        let (mut far, mut ecc) = bfs_levels(start);
        for _ in 0..8 {
            let (f2, e2) = bfs_levels(far);
            if e2 <= ecc {
                break;
            }
            start = far;
            far = f2;
            ecc = e2;
        }
        let mut q = VecDeque::new();
        visited[start] = true;
        q.push_back(start);
        let mut nbrs = Vec::new();
        while let Some(u) = q.pop_front() {
            order.push(u);
            nbrs.clear();
            nbrs.extend(adj[u].iter().copied().filter(|&v| !visited[v]));
            nbrs.sort_by_key(|&v| (degree[v], v));
            for &v in &nbrs {
                visited[v] = true;
                q.push_back(v);
            }
        }
    }
    order.reverse();
    order
}

/// Banded LU factorization of a reordered square matrix, optionally with partial pivoting.
#[derive(Debug, Clone)]
pub struct BandedLu {
    n: usize,
    kl: usize,
    ku: usize,
    width: usize,
    band: Vec<f64>,
    pivots: Vec<usize>,
    perm: Vec<usize>,
}

impl BandedLu {
    /// Factor `a` after a reverse Cuthill–McKee reordering.
    pub fn factor(a: &CsrMatrix) -> Result<Self> {
        let perm = reverse_cuthill_mckee(a);
        let pivoting = !a.is_symmetric(1e-12);
        Self::factor_with(a, perm, pivoting)
    }

    /// Factor with a caller-supplied ordering (`perm[new] = old`).
    pub fn factor_with(a: &CsrMatrix, perm: Vec<usize>, pivoting: bool) -> Result<Self> {
        if a.nrows != a.ncols {
            return Err(Error::DimensionMismatch(format!(
                "cannot factor a {}x{} matrix",
                a.nrows, a.ncols
            )));
        }
        let n = a.nrows;
        let p = a.permuted(&perm);
        let (kl, ku0) = p.bandwidths();
        // pivoting can push fill up to kl + ku above the diagonal
        let ku = if pivoting { ku0 + kl } else { ku0 };
        let width = kl + ku + 1;
        let mut band = vec![0.0; n * width];
        let idx = |r: usize, c: usize| r * width + (c + kl - r);
        for i in 0..n {
            for (j, v) in p.row(i) {
                band[idx(i, j)] += v;
            }
        }
        let scale = p.data.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let tiny = scale * 1e-14;
        let mut pivots = vec![0usize; n];
        for i in 0..n {
            let last_row = (i + kl).min(n.saturating_sub(1));
            let last_col = (i + ku).min(n.saturating_sub(1));
            let mut piv = i;
            if pivoting {
                let mut best = band[idx(i, i)].abs();
                for r in i + 1..=last_row {
                    let v = band[idx(r, i)].abs();
                    if v > best {
                        best = v;
                        piv = r;
                    }
                }
                if piv != i {
                    for c in i..=last_col {
                        band.swap(idx(i, c), idx(piv, c));
                    }
                }
            }
            pivots[i] = piv;
            let d = band[idx(i, i)];
            if !d.is_finite() || d.abs() <= tiny {
                return Err(Error::SingularMatrix { row: perm[i] });
            }
            for r in i + 1..=last_row {
                let l = band[idx(r, i)] / d;
                if l == 0.0 {
                    continue;
                }
                band[idx(r, i)] = l;
                for c in i + 1..=last_col {
                    band[idx(r, c)] -= l * band[idx(i, c)];
                }
            }
        }
        Ok(Self {
            n,
            kl,
            ku,
            width,
            band,
            pivots,
            perm,
        })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn solve(&self, rhs: &[f64]) -> Vec<f64> {
        assert_eq!(rhs.len(), self.n);
        let n = self.n;
        let (kl, ku, w) = (self.kl, self.ku, self.width);
        let idx = |r: usize, c: usize| r * w + (c + kl - r);
        let mut y: Vec<f64> = self.perm.iter().map(|&o| rhs[o]).collect();
        for i in 0..n {
            let p = self.pivots[i];
            if p != i {
                y.swap(i, p);
            }
            let yi = y[i];
            if yi != 0.0 {
                for r in i + 1..=(i + kl).min(n - 1) {
                    y[r] -= self.band[idx(r, i)] * yi;
                }
            }
        }
        for i in (0..n).rev() {
            let mut acc = y[i];
            for c in i + 1..=(i + ku).min(n - 1) {
                acc -= self.band[idx(i, c)] * y[c];
            }
            y[i] = acc / self.band[idx(i, i)];
        }
        let mut x = vec![0.0; n];
        for (new, &old) in self.perm.iter().enumerate() {
            x[old] = y[new];
        }
        x
    }
}

/// One-shot direct solve.
pub fn solve(a: &CsrMatrix, rhs: &[f64]) -> Result<Vec<f64>> {
    Ok(BandedLu::factor(a)?.solve(rhs))
}

/// Solve a small dense system `A X = B` (row-major `A`, columns of `B` as vectors)
/// by Gaussian elimination with partial pivoting.
pub fn dense_solve(mut a: Vec<Vec<f64>>, mut b: Vec<Vec<f64>>) -> Result<Vec<Vec<f64>>> {
    let n = a.len();
    let scale = a.iter().flatten().fold(0.0f64, |m, v| m.max(v.abs()));
    for k in 0..n {
        let piv = (k..n)
            .max_by(|&i, &j| a[i][k].abs().total_cmp(&a[j][k].abs()))
            .unwrap();
        if !(a[piv][k].abs() > 1e-300_f64.max(scale * 1e-15)) {
            return Err(Error::SingularMatrix { row: k });
        }
        a.swap(k, piv);
        for col in b.iter_mut() {
            col.swap(k, piv);
        }
        for i in k + 1..n {
            let l = a[i][k] / a[k][k];
            if l == 0.0 {
                continue;
            }
            for j in k..n {
                a[i][j] -= l * a[k][j];
            }
            for col in b.iter_mut() {
                col[i] -= l * col[k];
            }
        }
    }
    for col in b.iter_mut() {
        for i in (0..n).rev() {
            let mut acc = col[i];
            for j in i + 1..n {
                acc -= a[i][j] * col[j];
            }
            col[i] = acc / a[i][i];
        }
    }
    Ok(b)
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

pub fn norm_inf(a: &[f64]) -> f64 {
    a.iter().fold(0.0f64, |m, v| m.max(v.abs()))
}

/// `y += c x`.
pub fn axpy(c: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += c * xi;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{DMatrix, DVector};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn laplace_2d(nx: usize, ny: usize) -> CsrMatrix {
        let id = |i: usize, j: usize| j * nx + i;
        let mut t = Vec::new();
        for j in 0..ny {
            for i in 0..nx {
                t.push((id(i, j), id(i, j), 4.0));
                if i > 0 {
                    t.push((id(i, j), id(i - 1, j), -1.0));
                }
                if i + 1 < nx {
                    t.push((id(i, j), id(i + 1, j), -1.0));
                }
                if j > 0 {
                    t.push((id(i, j), id(i, j - 1), -1.0));
                }
                if j + 1 < ny {
                    t.push((id(i, j), id(i, j + 1), -1.0));
                }
            }
        }
        CsrMatrix::from_triplets(nx * ny, nx * ny, &t)
    }

    #[test]
    fn triplets_sum_duplicates() {
        let a = CsrMatrix::from_triplets(2, 2, &[(0, 1, 1.0), (0, 1, 2.0), (1, 0, -1.0)]);
        assert_eq!(a.get(0, 1), 3.0);
        assert_eq!(a.get(1, 0), -1.0);
        assert_eq!(a.get(0, 0), 0.0);
        assert_eq!(a.nnz(), 2);
    }

    #[test]
    fn rcm_reduces_bandwidth() {
        let a = laplace_2d(30, 6);
        let before = a.bandwidths().0;
        let perm = reverse_cuthill_mckee(&a);
        let after = a.permuted(&perm).bandwidths().0;
        assert!(after < before, "{after} !< {before}");
        let mut sorted = perm.clone();
        sorted.sort_unstable();
        assert_eq!(sorted, (0..180).collect::<Vec<_>>());
    }

    #[test]
    fn banded_solve_matches_dense() {
        let a = laplace_2d(7, 5);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let b: Vec<f64> = (0..35).map(|_| rng.random_range(-1.0..1.0)).collect();
        let x = solve(&a, &b).unwrap();
        let r: Vec<f64> = a.matvec(&x).iter().zip(&b).map(|(p, q)| p - q).collect();
        assert!(norm2(&r) < 1e-12);
    }

    #[test]
    fn pivoting_handles_zero_diagonal() {
        let a = CsrMatrix::from_dense(&[
            vec![0.0, 1.0, 0.0],
            vec![2.0, 0.0, 1.0],
            vec![0.0, 1.0, 3.0],
        ]);
        let b = vec![1.0, 2.0, 3.0];
        let x = BandedLu::factor_with(&a, vec![0, 1, 2], true).unwrap().solve(&b);
        let r = a.matvec(&x);
        for (p, q) in r.iter().zip(&b) {
            assert!((p - q).abs() < 1e-12);
        }
        assert!(BandedLu::factor_with(&a, vec![0, 1, 2], false).is_err());
    }

    #[test]
    fn dense_solve_small_system() {
        let a = vec![vec![0.0, 2.0], vec![1.0, 1.0]];
        let x = dense_solve(a, vec![vec![2.0, 3.0]]).unwrap();
        assert!((x[0][0] - 2.0).abs() < 1e-15 && (x[0][1] - 1.0).abs() < 1e-15);
        assert!(dense_solve(vec![vec![1.0, 2.0], vec![2.0, 4.0]], vec![vec![1.0, 1.0]]).is_err());
    }

    #[test]
    fn singular_matrix_reported() {
        let a = CsrMatrix::from_dense(&[vec![1.0, 1.0], vec![1.0, 1.0]]);
        assert!(matches!(solve(&a, &[1.0, 1.0]), Err(Error::SingularMatrix { .. })));
    }

    #[test]
    fn combination_pattern_matches_direct_sum() {
        let a = laplace_2d(4, 3);
        let b = CsrMatrix::identity(12).scaled(2.0);
        let pat = CombinationPattern::new(&[&a, &b]);
        let c = pat.combine(&[0.5, -3.0]);
        let d = CsrMatrix::linear_combination(&[(0.5, &a), (-3.0, &b)]);
        assert_eq!(c.to_dense(), d.to_dense());
    }

    #[test]
    fn submatrix_and_column_views() {
        let a = laplace_2d(3, 3);
        let s = a.submatrix(&[4, 0], &[4, 1, 3]);
        assert_eq!(s.to_dense(), vec![vec![4.0, -1.0, -1.0], vec![0.0, -1.0, -1.0]]);
        assert_eq!(a.column_on(1, &[0, 4, 8]), vec![-1.0, -1.0, 0.0]);
    }

    proptest! {
        #[test]
        fn nonsymmetric_banded_solve_vs_nalgebra(seed in 0u64..500, n in 2usize..25) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut t = Vec::new();
            for i in 0..n {
                t.push((i, i, 4.0 + rng.random_range(0.0..1.0)));
                for _ in 0..3 {
                    let j = rng.random_range(0..n);
                    t.push((i, j, rng.random_range(-1.0..1.0)));
                }
            }
            let a = CsrMatrix::from_triplets(n, n, &t);
            let b: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
            let x = solve(&a, &b).unwrap();
            let dense = a.to_dense();
            let m = DMatrix::from_fn(n, n, |i, j| dense[i][j]);
            let xr = m.lu().solve(&DVector::from_vec(b.clone())).unwrap();
            for i in 0..n {
                prop_assert!((x[i] - xr[i]).abs() <= 1e-9 * (1.0 + xr[i].abs()));
            }
        }
    }
}
