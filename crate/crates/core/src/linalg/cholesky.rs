//! Sparse Cholesky factorization for SPD matrices.
//!
//! The matrix is reordered with reverse Cuthill–McKee and factored in
//! envelope (skyline) form: row `i` of `L` is stored densely from its first
//! structural nonzero up to the diagonal. Fill only occurs inside the
//! envelope, which RCM keeps narrow for the grid operators used here.

use std::collections::VecDeque;

use super::csr::CsrMatrix;
use super::dense::dot;
use crate::error::{check_dim, Error, Result};

/// Factor `P A Pᵀ = L Lᵀ`.
#[derive(Clone, Debug)]
pub struct SparseCholesky {
    n: usize,
    /// `perm[new] = old`
    perm: Vec<usize>,
    /// First stored column of each row of `L`.
    first: Vec<usize>,
    /// Offset of each row in `data`.
    start: Vec<usize>,
    data: Vec<f64>,
}

impl SparseCholesky {
    pub fn factorize(a: &CsrMatrix) -> Result<Self> {
        let n = a.nrows();
        check_dim("sparse_cholesky", n, a.ncols())?;
        let perm = reverse_cuthill_mckee(a);
        let b = a.permute_symmetric(&perm)?;

        let mut first: Vec<usize> = (0..n).collect();
        for (i, fi) in first.iter_mut().enumerate() {
            if let Some((j, _)) = b.row(i).next() {
                *fi = (*fi).min(j);
            }
        }
        let mut start = Vec::with_capacity(n + 1);
        start.push(0);
        for i in 0..n {
            start.push(start[i] + i - first[i] + 1);
        }
        let mut data = vec![0.0; start[n]];

        for i in 0..n {
            let fi = first[i];
            let (done, rest) = data.split_at_mut(start[i]);
            let row_i = &mut rest[..i - fi + 1];
            let mut diag = 0.0;
            for (j, v) in b.row(i) {
                if j <= i {
                    row_i[j - fi] = v;
                }
                if j == i {
                    diag = v;
                }
            }
            for j in fi..i {
                let fj = first[j];
                let row_j = &done[start[j]..start[j + 1]];
                let k0 = fi.max(fj);
                let s = row_i[j - fi] - dot(&row_i[k0 - fi..j - fi], &row_j[k0 - fj..j - fj]);
                row_i[j - fi] = s / row_j[j - fj];
            }
            let off = &row_i[..i - fi];
            let d = row_i[i - fi] - dot(off, off);
            if !(d > 16.0 * f64::EPSILON * diag.abs()) || !d.is_finite() {
                return Err(Error::NotPositiveDefinite { pivot: perm[i] });
            }
            row_i[i - fi] = d.sqrt();
        }
        Ok(Self {
            n,
            perm,
            first,
            start,
            data,
        })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    /// Stored entries of `L`, including envelope zeros.
    pub fn factor_nnz(&self) -> usize {
        self.data.len()
    }

    /// Fill-reducing permutation, `perm[new] = old`.
    pub fn permutation(&self) -> &[usize] {
        &self.perm
    }

    #[inline]
    fn row(&self, i: usize) -> &[f64] {
        &self.data[self.start[i]..self.start[i + 1]]
    }

    pub fn solve(&self, b: &[f64]) -> Result<Vec<f64>> {
        check_dim("SparseCholesky::solve", self.n, b.len())?;
        let mut y: Vec<f64> = self.perm.iter().map(|&p| b[p]).collect();
        // L z = y
        for i in 0..self.n {
            let fi = self.first[i];
            let row = self.row(i);
            let s = dot(&row[..i - fi], &y[fi..i]);
            y[i] = (y[i] - s) / row[i - fi];
        }
        // Lᵀ x = z
        for i in (0..self.n).rev() {
            let fi = self.first[i];
            let row = self.row(i);
            y[i] /= row[i - fi];
            let xi = y[i];
            for (yk, lk) in y[fi..i].iter_mut().zip(&row[..i - fi]) {
                *yk -= lk * xi;
            }
        }
        let mut x = vec![0.0; self.n];
        for (new, &old) in self.perm.iter().enumerate() {
            x[old] = y[new];
        }
        Ok(x)
    }

    /// `Pᵀ L w`: maps i.i.d. standard normals to a sample with covariance `A`.
    pub fn mul_factor(&self, w: &[f64]) -> Result<Vec<f64>> {
        check_dim("SparseCholesky::mul_factor", self.n, w.len())?;
        let mut out = vec![0.0; self.n];
        for i in 0..self.n {
            let fi = self.first[i];
            out[self.perm[i]] = dot(self.row(i), &w[fi..=i]);
        }
        Ok(out)
    }
}

/// Reverse Cuthill–McKee ordering of the symmetrized pattern of `a`.
///
/// Deterministic: ties are broken by degree, then by index.
pub fn reverse_cuthill_mckee(a: &CsrMatrix) -> Vec<usize> {
    let n = a.nrows();
    let mut adj: Vec<Vec<usize>> = vec![Vec::new(); n];
    for i in 0..n {
        for (j, _) in a.row(i) {
            if j != i && j < n {
                adj[i].push(j);
                adj[j].push(i);
            }
        }
    }
    for nb in adj.iter_mut() {
        nb.sort_unstable();
        nb.dedup();
    }
    let degree: Vec<usize> = adj.iter().map(Vec::len).collect();
    for nb in adj.iter_mut() {
        nb.sort_by_key(|&j| (degree[j], j));
    }

    let mut order = Vec::with_capacity(n);
    let mut visited = vec![false; n];
    let mut by_degree: Vec<usize> = (0..n).collect();
    by_degree.sort_by_key(|&i| (degree[i], i));
    for &seed in &by_degree {
        if visited[seed] {
            continue;
        }
        let root = pseudo_peripheral(&adj, &degree, seed);
        let mut queue = VecDeque::from([root]);
        visited[root] = true;
        while let Some(v) = queue.pop_front() {
            order.push(v);
            for &w in &adj[v] {
                if !visited[w] {
                    visited[w] = true;
                    queue.push_back(w);
                }
            }
        }
    }
    order.reverse();
    order
}

/// George–Liu pseudo-peripheral node search within the component of `start`.
fn pseudo_peripheral(adj: &[Vec<usize>], degree: &[usize], start: usize) -> usize {
    let mut root = start;
    let (mut levels, mut ecc) = bfs_levels(adj, root);
    loop {
        let last = levels.last().expect("bfs yields at least the root");
        let cand = *last
            .iter()
            .min_by_key(|&&v| (degree[v], v))
            .expect("level is nonempty");
        let (cand_levels, cand_ecc) = bfs_levels(adj, cand);
        if cand_ecc > ecc {
            root = cand;
            levels = cand_levels;
            ecc = cand_ecc;
        } else {
            return root;
        }
    }
}

fn bfs_levels(adj: &[Vec<usize>], root: usize) -> (Vec<Vec<usize>>, usize) {
    let mut seen = vec![false; adj.len()];
    seen[root] = true;
    let mut levels = vec![vec![root]];
    loop {
        let mut next = Vec::new();
        for &v in levels.last().unwrap() {
            for &w in &adj[v] {
                if !seen[w] {
                    seen[w] = true;
                    next.push(w);
                }
            }
        }
        if next.is_empty() {
            break;
        }
        levels.push(next);
    }
    let ecc = levels.len() - 1;
    (levels, ecc)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::dense::norm2;

    fn laplacian_1d(n: usize) -> CsrMatrix {
        let mut t = Vec::new();
        for i in 0..n {
            t.push((i, i, 2.0));
            if i > 0 {
                t.push((i, i - 1, -1.0));
            }
            if i + 1 < n {
                t.push((i, i + 1, -1.0));
            }
        }
        CsrMatrix::from_triplets(n, n, &t).unwrap()
    }

    fn laplacian_2d(m: usize) -> CsrMatrix {
        let n = m * m;
        let mut t = Vec::new();
        for j in 0..m {
            for i in 0..m {
                let k = j * m + i;
                t.push((k, k, 4.0));
                if i > 0 {
                    t.push((k, k - 1, -1.0));
                }
                if i + 1 < m {
                    t.push((k, k + 1, -1.0));
                }
                if j > 0 {
                    t.push((k, k - m, -1.0));
                }
                if j + 1 < m {
                    t.push((k, k + m, -1.0));
                }
            }
        }
        CsrMatrix::from_triplets(n, n, &t).unwrap()
    }

    #[test]
    fn identity_solve() {
        let f = SparseCholesky::factorize(&CsrMatrix::identity(5)).unwrap();
        let b = vec![1.0, -2.0, 3.0, 0.5, 7.0];
        assert_eq!(f.solve(&b).unwrap(), b);
    }

    #[test]
    fn tridiagonal_hand_solution() {
        let f = SparseCholesky::factorize(&laplacian_1d(4)).unwrap();
        let x = f.solve(&[1.0, 0.0, 0.0, 0.0]).unwrap();
        for (got, want) in x.iter().zip([0.8, 0.6, 0.4, 0.2]) {
            assert!((got - want).abs() < 1e-14, "{x:?}");
        }
    }

    #[test]
    fn grid_residual() {
        let a = laplacian_2d(20);
        let f = SparseCholesky::factorize(&a).unwrap();
        let b: Vec<f64> = (0..a.nrows()).map(|i| ((i * 7) % 13) as f64 - 6.0).collect();
        let x = f.solve(&b).unwrap();
        let r: Vec<f64> = a.spmv(&x).unwrap().iter().zip(&b).map(|(p, q)| p - q).collect();
        assert!(norm2(&r) / norm2(&b) < 1e-12);
    }

    #[test]
    fn indefinite_reports_original_pivot() {
        let a = CsrMatrix::from_triplets(3, 3, &[(0, 0, 1.0), (1, 1, -2.0), (2, 2, 1.0)]).unwrap();
        match SparseCholesky::factorize(&a) {
            Err(Error::NotPositiveDefinite { pivot }) => assert_eq!(pivot, 1),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn rcm_is_a_permutation_and_narrows_band() {
        let a = laplacian_2d(12);
        // Scramble the natural ordering, then check RCM recovers a narrow band.
        let n = a.nrows();
        let scramble: Vec<usize> = (0..n).map(|i| (i * 37) % n).collect();
        let s = a.permute_symmetric(&scramble).unwrap();
        let p = reverse_cuthill_mckee(&s);
        let mut seen = p.clone();
        seen.sort_unstable();
        assert_eq!(seen, (0..n).collect::<Vec<_>>());
        let b = s.permute_symmetric(&p).unwrap();
        let bw = (0..n)
            .flat_map(|i| b.row(i).map(move |(j, _)| i.abs_diff(j)))
            .max()
            .unwrap();
        assert!(bw <= 2 * 12, "bandwidth {bw}");
    }

    #[test]
    fn factor_sample_has_matrix_covariance_structure() {
        // L Lᵀ reproduces A: check Pᵀ L (Pᵀ L)ᵀ e_k column by column.
        let a = laplacian_2d(5);
        let f = SparseCholesky::factorize(&a).unwrap();
        let n = a.nrows();
        let cols: Vec<Vec<f64>> = (0..n)
            .map(|k| {
                let mut e = vec![0.0; n];
                e[k] = 1.0;
                f.mul_factor(&e).unwrap()
            })
            .collect();
        for i in 0..n {
            for j in 0..n {
                let v: f64 = cols.iter().map(|c| c[i] * c[j]).sum();
                assert!((v - a.get(i, j)).abs() < 1e-12);
            }
        }
    }
}
