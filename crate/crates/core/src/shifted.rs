//! Multi-preconditioned GMRES for shifted families `(C1 + σ_k C2) x_k = b`.
//!
//! One search space `Z` is grown for all shifts. Each iteration applies the
//! shift-and-invert preconditioners `P_i = C1 + τ_i C2` to the last column of
//! the newest orthonormal block `V̂`, maps the result through `C2`,
//! orthogonalizes it against all earlier blocks and takes a thin QR to get the
//! next block. Every shift then solves
//!
//! ```text
//! min_p ‖b - (C1 + σ C2) Z p‖
//! ```
//!
//! over the common `Z`.
//!
//! Residuals are tracked through an orthonormal basis `Q` of the images
//! `[C1 Z, C2 Z]` with `[C1 Z, C2 Z] = Q R`. Each shift then only works with
//! the small matrix `R1 + σ R2`, whose Householder QR is extended column block
//! by column block. The part of `b` outside `span(Q)` is kept explicitly so
//! that small residuals do not suffer from cancellation.

use rayon::prelude::*;

use crate::error::{check_dim, Error, Result};
use crate::linalg::{dot, norm2, pinv_solve, thin_qr, CsrMatrix, DenseMatrix, SparseCholesky};
use crate::random::GaussianStream;

/// Preconditioner shifts used throughout.
pub const DEFAULT_TAUS: [f64; 3] = [1e-8, 1e-4, 1e-2];

// Above this ratio of extreme diagonal magnitudes the projected solve falls
// back to the pseudoinverse.
const TRIANGULAR_COND_LIMIT: f64 = 1e12;

const BREAKDOWN_TOL: f64 = 1e-14;

/// `(C1 + σ_k C2) x_k = b` for a list of shifts.
#[derive(Clone, Copy, Debug)]
pub struct ShiftedFamily<'a> {
    pub c1: &'a CsrMatrix,
    pub c2: &'a CsrMatrix,
    pub shifts: &'a [f64],
    pub rhs: &'a [f64],
}

impl<'a> ShiftedFamily<'a> {
    pub fn new(
        c1: &'a CsrMatrix,
        c2: &'a CsrMatrix,
        shifts: &'a [f64],
        rhs: &'a [f64],
    ) -> Result<Self> {
        let n = c1.nrows();
        check_dim("ShiftedFamily C1", n, c1.ncols())?;
        check_dim("ShiftedFamily C2 rows", n, c2.nrows())?;
        check_dim("ShiftedFamily C2 cols", n, c2.ncols())?;
        check_dim("ShiftedFamily rhs", n, rhs.len())?;
        if let Some(s) = shifts.iter().find(|s| !(s.is_finite() && **s >= 0.0)) {
            return Err(Error::InvalidArgument(format!(
                "shifts must be finite and nonnegative, got {s}"
            )));
        }
        Ok(Self {
            c1,
            c2,
            shifts,
            rhs,
        })
    }

    pub fn dim(&self) -> usize {
        self.c1.nrows()
    }

    /// `C1 + σ C2`
    pub fn operator(&self, sigma: f64) -> Result<CsrMatrix> {
        self.c1.add_scaled(self.c2, 1.0, sigma)
    }
}

/// Factorized `P_i = C1 + τ_i C2`.
#[derive(Clone, Debug)]
pub struct Preconditioners {
    taus: Vec<f64>,
    factors: Vec<SparseCholesky>,
}

impl Preconditioners {
    pub fn factorize(c1: &CsrMatrix, c2: &CsrMatrix, taus: &[f64]) -> Result<Self> {
        if taus.is_empty() {
            return Err(Error::InvalidArgument("need at least one preconditioner".into()));
        }
        if taus.windows(2).any(|w| !(w[1] > w[0])) || taus.iter().any(|t| !t.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "preconditioner shifts must be finite and strictly increasing, got {taus:?}"
            )));
        }
        let factors = taus
            .par_iter()
            .map(|&t| SparseCholesky::factorize(&c1.add_scaled(c2, 1.0, t)?))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            taus: taus.to_vec(),
            factors,
        })
    }

    pub fn taus(&self) -> &[f64] {
        &self.taus
    }

    pub fn len(&self) -> usize {
        self.taus.len()
    }

    pub fn is_empty(&self) -> bool {
        self.taus.is_empty()
    }

    /// `[P_1⁻¹ v, ..., P_np⁻¹ v]`
    pub fn apply(&self, v: &[f64]) -> Result<Vec<Vec<f64>>> {
        self.factors.par_iter().map(|f| f.solve(v)).collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SolverOptions {
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            tol: 1e-8,
            max_iter: 60,
        }
    }
}

/// Search space `Z = [W^(1) ... W^(k_m)]`.
#[derive(Clone, Debug)]
pub struct SearchBasis {
    pub z: DenseMatrix,
    /// Number of iterations `k_m`.
    pub iterations: usize,
}

impl SearchBasis {
    pub fn len(&self) -> usize {
        self.z.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.z.ncols() == 0
    }
}

#[derive(Clone, Debug)]
pub struct MpgmresOutput {
    pub basis: SearchBasis,
    /// Orthonormal blocks `[V̂^(1) ... V̂^(k_m+1)]`.
    pub v_hat: DenseMatrix,
    /// Column `k` holds `p_k`, so that `x_k = Z p_k`.
    pub coefficients: DenseMatrix,
    /// Final relative residuals `‖b - (C1 + σ_k C2) x_k‖ / ‖b‖`, computed explicitly.
    pub residuals: Vec<f64>,
    /// Relative residual of every shift after each iteration.
    pub history: Vec<Vec<f64>>,
    pub converged: bool,
    pub breakdown: bool,
}

impl MpgmresOutput {
    /// `X = Z P`, one column per shift.
    pub fn solutions(&self) -> Result<DenseMatrix> {
        self.basis.z.matmul(&self.coefficients)
    }

    pub fn max_residual(&self) -> f64 {
        self.residuals.iter().fold(0.0, |m, &r| m.max(r))
    }

    /// `Z · Σ_k c_k p_k`
    pub fn combine(&self, weights: &[f64]) -> Result<Vec<f64>> {
        check_dim("MpgmresOutput::combine", self.coefficients.ncols(), weights.len())?;
        let p = self.coefficients.matvec(weights)?;
        self.basis.z.matvec(&p)
    }
}

/// Householder QR of `R1 + σ R2`, grown by column blocks.
struct ShiftLs {
    sigma: f64,
    /// Reflector `I - β v vᵀ` acting on rows `k..k + v.len()`.
    reflectors: Vec<(Vec<f64>, f64)>,
    /// Upper triangular part of each transformed column.
    r_cols: Vec<Vec<f64>>,
    /// Reflected projection `Qᵀ b` onto the image basis.
    qtc: Vec<f64>,
}

impl ShiftLs {
    fn new(sigma: f64) -> Self {
        Self {
            sigma,
            reflectors: Vec::new(),
            r_cols: Vec::new(),
            qtc: Vec::new(),
        }
    }

    fn apply(refl: &(Vec<f64>, f64), k: usize, x: &mut [f64]) {
        let (v, beta) = refl;
        if *beta == 0.0 {
            return;
        }
        let seg = &mut x[k..k + v.len()];
        let s = beta * dot(v, seg);
        for (xi, vi) in seg.iter_mut().zip(v) {
            *xi -= s * vi;
        }
    }

    /// Adds columns `first..` of `R1 + σ R2`; `c_new` extends `Qᵀ b`.
    fn extend(&mut self, r_img: &[Vec<f64>], first: usize, rows: usize, c_new: &[f64]) {
        self.qtc.extend_from_slice(c_new);
        debug_assert_eq!(self.qtc.len(), rows);
        for j in first..r_img.len() / 2 {
            let mut col = vec![0.0; rows];
            for (i, v) in r_img[2 * j].iter().enumerate() {
                col[i] = *v;
            }
            for (i, v) in r_img[2 * j + 1].iter().enumerate() {
                col[i] += self.sigma * v;
            }
            for (k, refl) in self.reflectors.iter().enumerate() {
                Self::apply(refl, k, &mut col);
            }
            let refl = householder(&col[j..]);
            Self::apply(&refl, j, &mut col);
            Self::apply(&refl, j, &mut self.qtc);
            self.reflectors.push(refl);
            col.truncate(j + 1);
            self.r_cols.push(col);
        }
    }

    fn projected_residual_sq(&self) -> f64 {
        let m = self.r_cols.len();
        self.qtc[m..].iter().map(|v| v * v).sum()
    }

    fn well_conditioned(&self) -> bool {
        let diag = self.r_cols.iter().map(|c| c.last().unwrap().abs());
        let (lo, hi) = diag.fold((f64::INFINITY, 0.0_f64), |(lo, hi), d| (lo.min(d), hi.max(d)));
        lo > 0.0 && hi / lo <= TRIANGULAR_COND_LIMIT
    }

    fn back_substitute(&self) -> Vec<f64> {
        let m = self.r_cols.len();
        let mut x = self.qtc[..m].to_vec();
        for j in (0..m).rev() {
            x[j] /= self.r_cols[j][j];
            let xj = x[j];
            for (xi, rij) in x[..j].iter_mut().zip(&self.r_cols[j]) {
                *xi -= rij * xj;
            }
        }
        x
    }
}

/// Reflector mapping `x` to a multiple of `e_1`.
fn householder(x: &[f64]) -> (Vec<f64>, f64) {
    let nrm = norm2(x);
    if nrm == 0.0 {
        return (vec![0.0; x.len()], 0.0);
    }
    let alpha = if x[0] >= 0.0 { -nrm } else { nrm };
    let mut v = x.to_vec();
    v[0] -= alpha;
    let vv = dot(&v, &v);
    if vv == 0.0 {
        return (v, 0.0);
    }
    (v, 2.0 / vv)
}

/// Orthonormal basis of the images `C1 w`, `C2 w` with triangular factor.
struct ImageBasis {
    q: DenseMatrix,
    r_cols: Vec<Vec<f64>>,
    /// Part of `b` orthogonal to `span(q)`.
    b_perp: Vec<f64>,
    fallback: GaussianStream,
}

impl ImageBasis {
    fn new(b: &[f64]) -> Self {
        Self {
            q: DenseMatrix::zeros(b.len(), 0),
            r_cols: Vec::new(),
            b_perp: b.to_vec(),
            fallback: GaussianStream::new(0x5eed, 0),
        }
    }

    fn project_out(&self, v: &mut [f64], r: &mut [f64]) -> Result<()> {
        if self.q.ncols() == 0 {
            return Ok(());
        }
        let h = self.q.tr_matvec(v)?;
        let qh = self.q.matvec(&h)?;
        for (vi, qi) in v.iter_mut().zip(&qh) {
            *vi -= qi;
        }
        for (ri, hi) in r.iter_mut().zip(&h) {
            *ri += hi;
        }
        Ok(())
    }

    /// Appends `v`, returning the new entry of `Qᵀ b`.
    fn push(&mut self, mut v: Vec<f64>) -> Result<f64> {
        let orig = norm2(&v);
        let mut r = vec![0.0; self.q.ncols()];
        self.project_out(&mut v, &mut r)?;
        self.project_out(&mut v, &mut r)?;
        let mut nrm = norm2(&v);
        if nrm <= 1e-10 * orig {
            self.project_out(&mut v, &mut r)?;
            nrm = norm2(&v);
        }
        let q_col = if nrm > 0.0 && nrm > 1e-300 {
            v.iter().map(|x| x / nrm).collect::<Vec<_>>()
        } else {
            // Exactly dependent image: any unit vector orthogonal to span(Q).
            nrm = 0.0;
            let mut u = self.fallback.vector(v.len());
            let mut scratch = vec![0.0; self.q.ncols()];
            self.project_out(&mut u, &mut scratch)?;
            self.project_out(&mut u, &mut scratch)?;
            let un = norm2(&u);
            u.iter().map(|x| x / un).collect()
        };
        r.push(nrm);
        let c = dot(&q_col, &self.b_perp);
        for (bi, qi) in self.b_perp.iter_mut().zip(&q_col) {
            *bi -= c * qi;
        }
        self.q.push_col(&q_col)?;
        self.r_cols.push(r);
        Ok(c)
    }
}

/// Runs the simplified MPGMRES-Sh iteration.
///
/// Non-convergence within `max_iter` is reported through
/// [`MpgmresOutput::converged`], not as an error.
pub fn mpgmres_sh(
    family: &ShiftedFamily<'_>,
    precs: &Preconditioners,
    opts: &SolverOptions,
) -> Result<MpgmresOutput> {
    let n = family.dim();
    for f in &precs.factors {
        check_dim("mpgmres_sh preconditioner", n, f.dim())?;
    }
    if opts.max_iter == 0 {
        return Err(Error::InvalidArgument("max_iter must be at least 1".into()));
    }
    let b = family.rhs;
    let beta = norm2(b);
    if beta == 0.0 {
        return Err(Error::ZeroRhs);
    }
    if !beta.is_finite() {
        return Err(Error::NonFinite("right-hand side"));
    }

    let mut v_hat = DenseMatrix::zeros(n, 0);
    v_hat.push_col(&b.iter().map(|x| x / beta).collect::<Vec<_>>())?;
    let mut z = DenseMatrix::zeros(n, 0);
    let mut c1z = DenseMatrix::zeros(n, 0);
    let mut c2z = DenseMatrix::zeros(n, 0);
    let mut image = ImageBasis::new(b);
    let mut shifts: Vec<ShiftLs> = family.shifts.iter().map(|&s| ShiftLs::new(s)).collect();
    let mut history = Vec::new();
    let mut breakdown = false;
    let mut iterations = 0;
    let mut result = None;

    for _ in 0..opts.max_iter {
        // The image basis holds two columns per search direction and cannot
        // outgrow the space.
        if image.q.ncols() + 2 * precs.len() > n {
            log::warn!("MPGMRES-Sh search space exhausted after {iterations} iterations");
            breakdown = true;
            break;
        }
        iterations += 1;
        let last = v_hat.col(v_hat.ncols() - 1).to_vec();
        let w = precs.apply(&last)?;
        let first_col = z.ncols();
        let rows_before = image.q.ncols();
        let mut c_new = Vec::with_capacity(2 * w.len());
        let mut w_hat = DenseMatrix::zeros(n, 0);
        for wi in &w {
            let a1 = family.c1.spmv(wi)?;
            let a2 = family.c2.spmv(wi)?;
            c_new.push(image.push(a1.clone())?);
            c_new.push(image.push(a2.clone())?);
            z.push_col(wi)?;
            c1z.push_col(&a1)?;
            c2z.push_col(&a2)?;
            w_hat.push_col(&a2)?;
        }
        let rows = image.q.ncols();
        debug_assert_eq!(rows, rows_before + 2 * w.len());

        let r_img = &image.r_cols;
        shifts
            .par_iter_mut()
            .for_each(|s| s.extend(r_img, first_col, rows, &c_new));
        let perp_sq = dot(&image.b_perp, &image.b_perp);
        let rel: Vec<f64> = shifts
            .iter()
            .map(|s| (perp_sq + s.projected_residual_sq()).sqrt() / beta)
            .collect();
        let estimated_ok = rel.iter().all(|&r| r <= opts.tol);
        history.push(rel);

        if estimated_ok {
            let (p, res) = finish(family, &shifts, &c1z, &c2z, beta)?;
            if res.iter().all(|&r| r <= opts.tol) {
                result = Some((p, res, true));
                break;
            }
            log::debug!("residual estimate below tolerance but explicit check failed; continuing");
        }

        // Next orthonormal block from C2 W.
        let w_norm = w_hat.frobenius_norm();
        for _ in 0..2 {
            for j in 0..v_hat.ncols() {
                let vj = v_hat.col(j).to_vec();
                for k in 0..w_hat.ncols() {
                    let col = w_hat.col_mut(k);
                    let h = dot(&vj, col);
                    for (ci, vi) in col.iter_mut().zip(&vj) {
                        *ci -= h * vi;
                    }
                }
            }
        }
        let (q, r) = thin_qr(&w_hat)?;
        if (0..r.ncols()).any(|i| r[(i, i)].abs() < BREAKDOWN_TOL * w_norm) {
            log::warn!("MPGMRES-Sh block QR breakdown after {iterations} iterations");
            breakdown = true;
            break;
        }
        for j in 0..q.ncols() {
            v_hat.push_col(q.col(j))?;
        }
    }

    let (coefficients, residuals, converged) = match result {
        Some(r) => r,
        None => {
            let (p, res) = finish(family, &shifts, &c1z, &c2z, beta)?;
            let ok = res.iter().all(|&r| r <= opts.tol);
            (p, res, ok)
        }
    };
    if !converged {
        log::warn!(
            "MPGMRES-Sh stopped after {iterations} iterations with max relative residual {:.3e}",
            residuals.iter().fold(0.0_f64, |m, &r| m.max(r))
        );
    }
    Ok(MpgmresOutput {
        basis: SearchBasis { z, iterations },
        v_hat,
        coefficients,
        residuals,
        history,
        converged,
        breakdown,
    })
}

/// Coefficients of every shift plus explicit relative residuals.
fn finish(
    family: &ShiftedFamily<'_>,
    shifts: &[ShiftLs],
    c1z: &DenseMatrix,
    c2z: &DenseMatrix,
    beta: f64,
) -> Result<(DenseMatrix, Vec<f64>)> {
    let m = c1z.ncols();
    let cols: Vec<Vec<f64>> = shifts
        .par_iter()
        .map(|s| {
            if s.well_conditioned() {
                Ok(s.back_substitute())
            } else {
                least_squares(c1z, c2z, s.sigma, family.rhs)
            }
        })
        .collect::<Result<_>>()?;
    let p = DenseMatrix::from_columns(m, &cols)?;
    let g1 = c1z.matmul(&p)?;
    let g2 = c2z.matmul(&p)?;
    let res = (0..shifts.len())
        .into_par_iter()
        .map(|k| {
            let r: Vec<f64> = family
                .rhs
                .iter()
                .zip(g1.col(k).iter().zip(g2.col(k)))
                .map(|(bi, (a, c))| bi - a - shifts[k].sigma * c)
                .collect();
            norm2(&r) / beta
        })
        .collect();
    Ok((p, res))
}

/// Minimum-norm least squares `min ‖b - (G1 + σ G2) p‖` via the pseudoinverse.
fn least_squares(g1: &DenseMatrix, g2: &DenseMatrix, sigma: f64, b: &[f64]) -> Result<Vec<f64>> {
    let mut g = g1.clone();
    g.add_scaled(sigma, g2)?;
    let rhs = DenseMatrix::from_col_major(b.len(), 1, b.to_vec())?;
    Ok(pinv_solve(&g, &rhs)?.into_data())
}

/// `argmin_p ‖b - (C1 + σ C2) Z p‖` via a thin QR of `(C1 + σ C2) Z`.
pub fn solve_projected(
    basis: &SearchBasis,
    family: &ShiftedFamily<'_>,
    sigma: f64,
) -> Result<Vec<f64>> {
    if basis.is_empty() {
        return Err(Error::InvalidArgument("empty search basis".into()));
    }
    let g = family.operator(sigma)?.mul_dense(&basis.z)?;
    let (q, r) = thin_qr(&g)?;
    let diag: Vec<f64> = (0..r.ncols()).map(|i| r[(i, i)].abs()).collect();
    let lo = diag.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = diag.iter().copied().fold(0.0, f64::max);
    if lo > 0.0 && hi / lo <= TRIANGULAR_COND_LIMIT {
        let qtb = q.tr_matvec(family.rhs)?;
        Ok(crate::linalg::solve_upper(&r, &qtb))
    } else {
        let rhs = DenseMatrix::from_col_major(family.dim(), 1, family.rhs.to_vec())?;
        Ok(pinv_solve(&g, &rhs)?.into_data())
    }
}

/// Solutions of `(K + e^{z_k} M) u_k = f` from a family built with
/// `C1 = M`, `C2 = K`, `σ_k = e^{-z_k}` and right-hand side `f`:
/// `u_k = σ_k Z p_k`.
pub fn solve_family_rhs_scaled(
    basis: &SearchBasis,
    family: &ShiftedFamily<'_>,
) -> Result<DenseMatrix> {
    let cols = family
        .shifts
        .par_iter()
        .map(|&s| {
            let p = solve_projected(basis, family, s)?;
            let mut u = basis.z.matvec(&p)?;
            u.iter_mut().for_each(|v| *v *= s);
            Ok(u)
        })
        .collect::<Result<Vec<_>>>()?;
    DenseMatrix::from_columns(family.dim(), &cols)
}

/// Scaled solutions `σ_k Z p_k` from a finished solve.
pub fn scaled_solutions(out: &MpgmresOutput, shifts: &[f64]) -> Result<DenseMatrix> {
    check_dim("scaled_solutions", out.coefficients.ncols(), shifts.len())?;
    let mut x = out.solutions()?;
    for (k, &s) in shifts.iter().enumerate() {
        x.col_mut(k).iter_mut().for_each(|v| *v *= s);
    }
    Ok(x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fem::{assemble_mass, assemble_stiffness, BoundaryCondition, Coefficient, Tensor2};
    use crate::fem::StructuredMesh;
    use crate::quadrature::SincRule;

    fn tridiag(n: usize, d: f64, o: f64) -> CsrMatrix {
        let mut t = Vec::new();
        for i in 0..n {
            t.push((i, i, d));
            if i > 0 {
                t.push((i, i - 1, o));
                t.push((i - 1, i, o));
            }
        }
        CsrMatrix::from_triplets(n, n, &t).unwrap()
    }

    fn gp_pencil(n: usize, kappa2: f64) -> (CsrMatrix, CsrMatrix) {
        let m = StructuredMesh::unit_square(n).unwrap();
        let bc = BoundaryCondition::HomogeneousNeumann;
        let mass = assemble_mass(&m, bc);
        let a = assemble_stiffness(&m, bc, &Coefficient::Constant(Tensor2::IDENTITY)).unwrap();
        let k = a.add_scaled(&mass, 1.0, kappa2).unwrap();
        (mass, k)
    }

    fn rel_err(a: &[f64], b: &[f64]) -> f64 {
        let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
        norm2(&d) / norm2(b)
    }

    #[test]
    fn identity_with_zero_shift_returns_rhs() {
        let n = 12;
        let c1 = CsrMatrix::identity(n);
        let c2 = tridiag(n, 2.0, -1.0);
        let b: Vec<f64> = (0..n).map(|i| 1.0 + i as f64).collect();
        let shifts = [0.0];
        let fam = ShiftedFamily::new(&c1, &c2, &shifts, &b).unwrap();
        let precs = Preconditioners::factorize(&c1, &c2, &DEFAULT_TAUS).unwrap();
        let out = mpgmres_sh(&fam, &precs, &SolverOptions::default()).unwrap();
        assert!(out.converged);
        assert_eq!(out.basis.iterations, 1);
        let x = out.solutions().unwrap();
        assert!(rel_err(x.col(0), &b) < 1e-8);
    }

    #[test]
    fn exact_preconditioner_converges_in_one_step() {
        let (c1, c2) = gp_pencil(9, 30.0);
        let sigma = 0.37;
        let b: Vec<f64> = (0..c1.nrows()).map(|i| (i as f64).cos()).collect();
        let shifts = [sigma];
        let fam = ShiftedFamily::new(&c1, &c2, &shifts, &b).unwrap();
        let precs = Preconditioners::factorize(&c1, &c2, &[sigma]).unwrap();
        let out = mpgmres_sh(&fam, &precs, &SolverOptions::default()).unwrap();
        assert!(out.converged);
        assert_eq!(out.basis.iterations, 1);
        let direct = SparseCholesky::factorize(&fam.operator(sigma).unwrap())
            .unwrap()
            .solve(&b)
            .unwrap();
        assert!(rel_err(out.solutions().unwrap().col(0), &direct) < 1e-12);
    }

    #[test]
    fn gp_family_matches_direct_solves() {
        let (mass, k) = gp_pencil(17, 50.0);
        let rule = SincRule::training(1.0 / 16.0).unwrap();
        let shifts: Vec<f64> = rule.nodes().iter().map(|z| (-z).exp()).collect();
        let b: Vec<f64> = (0..mass.nrows()).map(|i| ((i * 13) % 7) as f64 - 3.0).collect();
        let fam = ShiftedFamily::new(&mass, &k, &shifts, &b).unwrap();
        let precs = Preconditioners::factorize(&mass, &k, &DEFAULT_TAUS).unwrap();
        let out = mpgmres_sh(&fam, &precs, &SolverOptions::default()).unwrap();
        assert!(out.converged, "{:?}", out.residuals);
        assert!(out.basis.iterations <= 60);
        let x = out.solutions().unwrap();
        for (j, &s) in shifts.iter().enumerate() {
            let op = fam.operator(s).unwrap();
            let r: Vec<f64> = op
                .spmv(x.col(j))
                .unwrap()
                .iter()
                .zip(&b)
                .map(|(a, b)| b - a)
                .collect();
            assert!(norm2(&r) / norm2(&b) <= 1e-8);
            assert!((norm2(&r) / norm2(&b) - out.residuals[j]).abs() < 1e-12);
        }
        // Basis bookkeeping.
        assert_eq!(out.basis.len(), 3 * out.basis.iterations);
        let g = out.v_hat.tr_matmul(&out.v_hat).unwrap();
        assert!(g.sub(&DenseMatrix::identity(g.nrows())).unwrap().max_abs() < 1e-10);
        for w in out.history.windows(2) {
            for (a, b) in w[0].iter().zip(&w[1]) {
                assert!(*b <= a * (1.0 + 1e-8) + 1e-15);
            }
        }
    }

    #[test]
    fn projected_solve_agrees_with_iteration() {
        let (mass, k) = gp_pencil(9, 20.0);
        let shifts = [1e-3, 0.5, 40.0];
        let b = vec![1.0; mass.nrows()];
        let fam = ShiftedFamily::new(&mass, &k, &shifts, &b).unwrap();
        let precs = Preconditioners::factorize(&mass, &k, &DEFAULT_TAUS).unwrap();
        let out = mpgmres_sh(&fam, &precs, &SolverOptions::default()).unwrap();
        for (j, &s) in shifts.iter().enumerate() {
            let p = solve_projected(&out.basis, &fam, s).unwrap();
            let x = out.basis.z.matvec(&p).unwrap();
            let r: Vec<f64> = fam
                .operator(s)
                .unwrap()
                .spmv(&x)
                .unwrap()
                .iter()
                .zip(&b)
                .map(|(a, b)| b - a)
                .collect();
            assert!((norm2(&r) / norm2(&b) - out.residuals[j]).abs() < 1e-10);
        }
    }

    #[test]
    fn single_column_basis_recovers_scaling() {
        let c1 = CsrMatrix::identity(4);
        let c2 = tridiag(4, 2.0, -1.0);
        let x = vec![1.0, -2.0, 0.5, 3.0];
        let b = fam_rhs(&c1, &c2, 0.3, &x, 2.5);
        let shifts = [0.3];
        let fam = ShiftedFamily::new(&c1, &c2, &shifts, &b).unwrap();
        let basis = SearchBasis {
            z: DenseMatrix::from_col_major(4, 1, x).unwrap(),
            iterations: 1,
        };
        let p = solve_projected(&basis, &fam, 0.3).unwrap();
        assert!((p[0] - 2.5).abs() < 1e-14);
    }

    fn fam_rhs(c1: &CsrMatrix, c2: &CsrMatrix, s: f64, x: &[f64], scale: f64) -> Vec<f64> {
        let a = c1.add_scaled(c2, 1.0, s).unwrap();
        a.spmv(x).unwrap().iter().map(|v| v * scale).collect()
    }

    #[test]
    fn scaled_family_limits() {
        let (mass, k) = gp_pencil(9, 10.0);
        let rule = SincRule::training(1.0 / 8.0).unwrap();
        let shifts: Vec<f64> = rule.nodes().iter().map(|z| (-z).exp()).collect();
        let f: Vec<f64> = (0..mass.nrows()).map(|i| (0.3 * i as f64).sin() + 1.0).collect();
        let fam = ShiftedFamily::new(&mass, &k, &shifts, &f).unwrap();
        let precs = Preconditioners::factorize(&mass, &k, &DEFAULT_TAUS).unwrap();
        let out = mpgmres_sh(&fam, &precs, &SolverOptions::default()).unwrap();
        let u = scaled_solutions(&out, &shifts).unwrap();
        let via_spec = solve_family_rhs_scaled(&out.basis, &fam).unwrap();
        assert!(u.sub(&via_spec).unwrap().max_abs() <= 1e-8 * u.max_abs());

        // Largest node: u ≈ e^{-z} M⁻¹ f.
        let last = shifts.len() - 1;
        let mf = SparseCholesky::factorize(&mass).unwrap().solve(&f).unwrap();
        let ratio = norm2(u.col(last)) / (shifts[last] * norm2(&mf));
        assert!((ratio - 1.0).abs() < 0.05, "{ratio}");

        // Direct solves of (K + e^z M) u = f.
        let mut worst = 0.0_f64;
        for (j, &z) in rule.nodes().iter().enumerate() {
            let op = k.add_scaled(&mass, 1.0, z.exp()).unwrap();
            let d = SparseCholesky::factorize(&op).unwrap().solve(&f).unwrap();
            worst = worst.max(rel_err(u.col(j), &d));
        }
        assert!(worst <= 1e-7, "{worst}");
    }

    #[test]
    fn commuting_pencil() {
        let m = StructuredMesh::unit_square(7).unwrap();
        let mass = assemble_mass(&m, BoundaryCondition::HomogeneousNeumann);
        let shifts = [0.01, 1.0, 100.0];
        let f: Vec<f64> = (0..mass.nrows()).map(|i| 1.0 + (i % 3) as f64).collect();
        let fam = ShiftedFamily::new(&mass, &mass, &shifts, &f).unwrap();
        let precs = Preconditioners::factorize(&mass, &mass, &DEFAULT_TAUS).unwrap();
        let out = mpgmres_sh(&fam, &precs, &SolverOptions::default()).unwrap();
        let u = scaled_solutions(&out, &shifts).unwrap();
        let fm = SparseCholesky::factorize(&mass).unwrap().solve(&f).unwrap();
        for (j, &s) in shifts.iter().enumerate() {
            let ez = 1.0 / s;
            let want: Vec<f64> = fm.iter().map(|v| v / (1.0 + ez)).collect();
            assert!(rel_err(u.col(j), &want) < 1e-8);
        }
    }

    #[test]
    fn deterministic_basis() {
        let (mass, k) = gp_pencil(9, 77.0);
        let shifts = [1e-4, 1.0, 1e4];
        let b = vec![1.0; mass.nrows()];
        let fam = ShiftedFamily::new(&mass, &k, &shifts, &b).unwrap();
        let precs = Preconditioners::factorize(&mass, &k, &DEFAULT_TAUS).unwrap();
        let a = mpgmres_sh(&fam, &precs, &SolverOptions::default()).unwrap();
        let c = mpgmres_sh(&fam, &precs, &SolverOptions::default()).unwrap();
        assert_eq!(a.basis.z, c.basis.z);
        assert_eq!(a.coefficients, c.coefficients);
    }

    #[test]
    fn errors() {
        let c = CsrMatrix::identity(3);
        let zero = vec![0.0; 3];
        let fam = ShiftedFamily::new(&c, &c, &[1.0], &zero).unwrap();
        let precs = Preconditioners::factorize(&c, &c, &[1.0]).unwrap();
        assert!(matches!(
            mpgmres_sh(&fam, &precs, &SolverOptions::default()),
            Err(Error::ZeroRhs)
        ));
        assert!(ShiftedFamily::new(&c, &c, &[-1.0], &zero).is_err());
        assert!(Preconditioners::factorize(&c, &c, &[1.0, 0.5]).is_err());
        assert!(Preconditioners::factorize(&c, &c, &[]).is_err());
    }

    #[test]
    fn max_iter_reached_is_reported() {
        let (mass, k) = gp_pencil(17, 10.0);
        let shifts = [1e-6, 1e6];
        let b: Vec<f64> = (0..mass.nrows()).map(|i| (i as f64).sin()).collect();
        let fam = ShiftedFamily::new(&mass, &k, &shifts, &b).unwrap();
        let precs = Preconditioners::factorize(&mass, &k, &[1e-8]).unwrap();
        let opts = SolverOptions {
            tol: 1e-14,
            max_iter: 2,
        };
        let out = mpgmres_sh(&fam, &precs, &opts).unwrap();
        assert!(!out.converged);
        assert_eq!(out.basis.iterations, 2);
        assert_eq!(out.history.len(), 2);
    }

    #[test]
    fn tiny_space_stops_before_overflowing() {
        let n = 10;
        let c1 = CsrMatrix::identity(n);
        let c2 = tridiag(n, 2.0, -1.0);
        let b: Vec<f64> = (0..n).map(|i| (i as f64 * 0.7).sin() + 0.1).collect();
        let shifts = [1e-3, 1.0, 1e3];
        let fam = ShiftedFamily::new(&c1, &c2, &shifts, &b).unwrap();
        let precs = Preconditioners::factorize(&c1, &c2, &DEFAULT_TAUS).unwrap();
        let opts = SolverOptions {
            tol: 1e-300,
            max_iter: 50,
        };
        let out = mpgmres_sh(&fam, &precs, &opts).unwrap();
        assert!(out.breakdown);
        assert!(2 * out.basis.len() <= n);
        assert!(out.residuals.iter().all(|r| r.is_finite()));
    }
}
