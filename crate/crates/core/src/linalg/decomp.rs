//! Dense factorizations: thin QR, thin SVD, Cholesky, symmetric-definite
//! generalized eigenproblems and pseudoinverse solves.

use nalgebra::{SymmetricEigen, SVD};

use super::dense::{dot, DenseMatrix};
use crate::error::{check_dim, Error, Result};

/// Relative tolerance for the "symmetric" precondition.
pub const SYMMETRY_TOL: f64 = 1e-10;

/// Thin Householder QR, `A = Q R` with `Q` of size `m x n` and `R` `n x n`.
///
/// Rank-deficient input is not an error; `R` then carries near-zero diagonal
/// entries which callers may inspect.
pub fn thin_qr(a: &DenseMatrix) -> Result<(DenseMatrix, DenseMatrix)> {
    if a.nrows() < a.ncols() {
        return Err(Error::InvalidArgument(format!(
            "thin_qr needs nrows >= ncols, got {}x{}",
            a.nrows(),
            a.ncols()
        )));
    }
    a.require_finite("thin_qr")?;
    if a.ncols() == 0 {
        return Ok((DenseMatrix::zeros(a.nrows(), 0), DenseMatrix::zeros(0, 0)));
    }
    let qr = a.to_nalgebra().qr();
    Ok((
        DenseMatrix::from_nalgebra(qr.q()),
        DenseMatrix::from_nalgebra(qr.r()),
    ))
}

/// Thin SVD with singular values in nonincreasing order.
#[derive(Clone, Debug)]
pub struct Svd {
    pub u: DenseMatrix,
    pub s: Vec<f64>,
    pub vt: DenseMatrix,
}

pub fn thin_svd(a: &DenseMatrix) -> Result<Svd> {
    a.require_finite("thin_svd")?;
    let (m, n) = (a.nrows(), a.ncols());
    if m == 0 || n == 0 {
        return Ok(Svd {
            u: DenseMatrix::zeros(m, 0),
            s: Vec::new(),
            vt: DenseMatrix::zeros(0, n),
        });
    }
    if m < n {
        let t = thin_svd(&a.transpose())?;
        return Ok(Svd {
            u: t.vt.transpose(),
            s: t.s,
            vt: t.u.transpose(),
        });
    }
    // Tall matrices: reduce to the square triangular factor first.
    let (q, core) = if m >= 2 * n {
        let (q, r) = thin_qr(a)?;
        (Some(q), r)
    } else {
        (None, a.clone())
    };
    let svd = SVD::new(core.to_nalgebra(), true, true);
    let u = svd.u.ok_or(Error::NonFinite("thin_svd"))?;
    let vt = svd.v_t.ok_or(Error::NonFinite("thin_svd"))?;
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&i, &j| svd.singular_values[j].total_cmp(&svd.singular_values[i]));
    let s: Vec<f64> = order.iter().map(|&k| svd.singular_values[k]).collect();
    let u = DenseMatrix::from_fn(u.nrows(), order.len(), |i, j| u[(i, order[j])]);
    let vt = DenseMatrix::from_fn(order.len(), vt.ncols(), |i, j| vt[(order[i], j)]);
    let u = match q {
        Some(q) => q.matmul(&u)?,
        None => u,
    };
    Ok(Svd { u, s, vt })
}

/// Dense Cholesky `A = L Lᵀ`, lower triangular `L`.
pub fn cholesky(a: &DenseMatrix) -> Result<DenseMatrix> {
    let n = a.nrows();
    check_dim("cholesky", n, a.ncols())?;
    let mut l = DenseMatrix::zeros(n, n);
    // Row-oriented so that each entry is a contiguous dot product on Lᵀ.
    let mut lt = DenseMatrix::zeros(n, n);
    for j in 0..n {
        let cj = &lt.col(j)[..j];
        let d = a[(j, j)] - dot(cj, cj);
        if !(d > 0.0) || !d.is_finite() {
            return Err(Error::NotPositiveDefinite { pivot: j });
        }
        let djj = d.sqrt();
        lt[(j, j)] = djj;
        for i in j + 1..n {
            let s = a[(i, j)] - dot(&lt.col(i)[..j], &lt.col(j)[..j]);
            lt[(j, i)] = s / djj;
        }
    }
    for j in 0..n {
        for i in j..n {
            l[(i, j)] = lt[(j, i)];
        }
    }
    Ok(l)
}

/// Solves `L X = B` for lower triangular `L`.
pub fn solve_lower(l: &DenseMatrix, b: &DenseMatrix) -> Result<DenseMatrix> {
    check_dim("solve_lower", l.nrows(), b.nrows())?;
    let n = l.nrows();
    let mut x = b.clone();
    for c in 0..x.ncols() {
        let col = x.col_mut(c);
        for j in 0..n {
            col[j] /= l[(j, j)];
            let xj = col[j];
            if xj != 0.0 {
                for i in j + 1..n {
                    col[i] -= l[(i, j)] * xj;
                }
            }
        }
    }
    Ok(x)
}

/// Solves `Lᵀ X = B` for lower triangular `L`.
pub fn solve_lower_transpose(l: &DenseMatrix, b: &DenseMatrix) -> Result<DenseMatrix> {
    check_dim("solve_lower_transpose", l.nrows(), b.nrows())?;
    let n = l.nrows();
    let mut x = b.clone();
    for c in 0..x.ncols() {
        let col = x.col_mut(c);
        for j in (0..n).rev() {
            let s = dot(&l.col(j)[j + 1..], &col[j + 1..]);
            col[j] = (col[j] - s) / l[(j, j)];
        }
    }
    Ok(x)
}

/// Solves `R x = b` for upper triangular (leading `n x n` block of) `R`.
pub fn solve_upper(r: &DenseMatrix, b: &[f64]) -> Vec<f64> {
    let n = b.len();
    let mut x = b.to_vec();
    for j in (0..n).rev() {
        x[j] /= r[(j, j)];
        let xj = x[j];
        for i in 0..j {
            x[i] -= r[(i, j)] * xj;
        }
    }
    x
}

/// Result of the symmetric-definite generalized eigenproblem `K φ = λ M φ`.
#[derive(Clone, Debug)]
pub struct GeneralizedEigen {
    /// Eigenvalues in ascending order.
    pub values: Vec<f64>,
    /// Orthonormal eigenvectors of `L⁻¹ K L⁻ᵀ`.
    pub u: DenseMatrix,
    /// Cholesky factor of `M`.
    pub l: DenseMatrix,
}

impl GeneralizedEigen {
    /// `M`-orthonormal generalized eigenvectors `Φ = L⁻ᵀ U`.
    pub fn eigenvectors(&self) -> Result<DenseMatrix> {
        solve_lower_transpose(&self.l, &self.u)
    }
}

pub fn sym_generalized_eig(k: &DenseMatrix, m: &DenseMatrix) -> Result<GeneralizedEigen> {
    let n = k.nrows();
    check_dim("sym_generalized_eig K", n, k.ncols())?;
    check_dim("sym_generalized_eig M", n, m.nrows())?;
    check_dim("sym_generalized_eig M", n, m.ncols())?;
    k.require_finite("sym_generalized_eig")?;
    for (name, mat) in [("K", k), ("M", m)] {
        let defect = mat.symmetry_defect();
        if defect > SYMMETRY_TOL {
            return Err(Error::NotSymmetric(format!(
                "{name} has relative asymmetry {defect:.2e}"
            )));
        }
    }
    let l = cholesky(m)?;
    // C = L⁻¹ K L⁻ᵀ = L⁻¹ (L⁻¹ K)ᵀ for symmetric K.
    let x = solve_lower(&l, k)?;
    let mut c = solve_lower(&l, &x.transpose())?;
    c.symmetrize();
    let eig = SymmetricEigen::new(c.to_nalgebra());
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let u = DenseMatrix::from_fn(n, n, |i, j| eig.eigenvectors[(i, order[j])]);
    Ok(GeneralizedEigen { values, u, l })
}

/// Minimum-norm least-squares solution `X = B⁺ C` via SVD.
///
/// Singular values `σ ≤ max(m, n)·ε·σ_max` are treated as zero.
pub fn pinv_solve(b: &DenseMatrix, c: &DenseMatrix) -> Result<DenseMatrix> {
    check_dim("pinv_solve", b.nrows(), c.nrows())?;
    let svd = thin_svd(b)?;
    let cutoff = pinv_cutoff(b.nrows(), b.ncols(), &svd.s);
    let rank = svd.s.iter().take_while(|&&s| s > cutoff).count();
    // X = V_r Σ_r⁻¹ U_rᵀ C
    let mut utc = svd.u.columns(0, rank).tr_matmul(c)?;
    for j in 0..utc.ncols() {
        for i in 0..rank {
            utc[(i, j)] /= svd.s[i];
        }
    }
    let v_r = DenseMatrix::from_fn(b.ncols(), rank, |i, j| svd.vt[(j, i)]);
    if rank == 0 {
        return Ok(DenseMatrix::zeros(b.ncols(), c.ncols()));
    }
    v_r.matmul(&utc)
}

/// Numerical-rank threshold used by [`pinv_solve`].
pub fn pinv_cutoff(m: usize, n: usize, s: &[f64]) -> f64 {
    let smax = s.first().copied().unwrap_or(0.0);
    m.max(n) as f64 * f64::EPSILON * smax
}

/// Number of singular values treated as nonzero by [`pinv_solve`].
pub fn numerical_rank(m: usize, n: usize, s: &[f64]) -> usize {
    let cutoff = pinv_cutoff(m, n, s);
    s.iter().filter(|&&v| v > cutoff).count()
}
