//! Full-order and dense reference solvers.

use std::time::Instant;

use rayon::prelude::*;
use serde::Serialize;

use super::{project, RomArtifact, TrainingPlan};
use crate::error::{check_dim, Error, Result};
use crate::fem::AffineProblem;
use crate::linalg::{
    dot, solve_lower, solve_lower_transpose, sym_generalized_eig, thin_qr, thin_svd, CsrMatrix,
    DenseMatrix, SparseCholesky, Vec64,
};
use crate::quadrature::SincRule;
use crate::shifted::{mpgmres_sh, Preconditioners, ShiftedFamily, SolverOptions, DEFAULT_TAUS};

/// Largest system handed to the dense eigensolver.
pub const SPECTRAL_ORACLE_LIMIT: usize = 5000;

// Entries of the dense snapshot matrix built by `naive_offline`.
const SNAPSHOT_LIMIT: usize = 200_000_000;

/// `y ≈ L(μ)^{-α} g(μ)` by sinc quadrature with one MPGMRES-Sh solve.
pub fn fom_solve(
    problem: &AffineProblem,
    mu: &[f64],
    alpha: f64,
    h: f64,
    opts: &SolverOptions,
) -> Result<Vec64> {
    Ok(fom_solve_multi(problem, mu, &[alpha], h, opts)?.remove(0))
}

/// One solution per exponent, sharing a single search space over the union
/// of the quadrature nodes.
pub fn fom_solve_multi(
    problem: &AffineProblem,
    mu: &[f64],
    alphas: &[f64],
    h: f64,
    opts: &SolverOptions,
) -> Result<Vec<Vec64>> {
    if alphas.is_empty() {
        return Ok(Vec::new());
    }
    let rules = alphas
        .iter()
        .map(|&a| {
            if a > 0.0 && a < 1.0 {
                SincRule::build(a, h)
            } else {
                Err(Error::InvalidArgument(format!(
                    "fractional exponent must lie in (0, 1), got {a}"
                )))
            }
        })
        .collect::<Result<Vec<_>>>()?;
    let (k, f) = problem.materialize(mu)?;
    let n = problem.ndof();
    if f.iter().all(|&v| v == 0.0) {
        return Ok(vec![vec![0.0; n]; alphas.len()]);
    }
    let zeta = rules[0].zeta();
    let lo = rules.iter().map(|r| r.z_minus()).max().unwrap_or(0) as i64;
    let hi = rules.iter().map(|r| r.z_plus()).max().unwrap_or(0) as i64;
    let shifts: Vec<f64> = (-lo..=hi).map(|j| (-(zeta * j as f64)).exp()).collect();

    let precs = Preconditioners::factorize(&problem.mass, &k, &DEFAULT_TAUS)?;
    let fam = ShiftedFamily::new(&problem.mass, &k, &shifts, &f)?;
    let out = mpgmres_sh(&fam, &precs, opts)?;
    if !out.converged {
        return Err(Error::NotConverged {
            iterations: out.basis.iterations,
            max_residual: out.max_residual(),
        });
    }
    rules
        .iter()
        .map(|r| {
            let mut c = vec![0.0; shifts.len()];
            let first = (lo - r.z_minus() as i64) as usize;
            for (i, &w) in r.weights().iter().enumerate() {
                c[first + i] = w * shifts[first + i];
            }
            out.combine(&c)
        })
        .collect()
}

/// `y = Φ Λ^{-α} Φᵀ g(μ)` from a dense generalized eigendecomposition.
///
/// Accepts `α ∈ (0, 1]`.
pub fn spectral_oracle(problem: &AffineProblem, mu: &[f64], alpha: f64) -> Result<Vec64> {
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(Error::InvalidArgument(format!(
            "exponent must lie in (0, 1], got {alpha}"
        )));
    }
    let n = problem.ndof();
    if n > SPECTRAL_ORACLE_LIMIT {
        return Err(Error::TooLarge {
            n,
            limit: SPECTRAL_ORACLE_LIMIT,
        });
    }
    let (k, f) = problem.materialize(mu)?;
    let eig = sym_generalized_eig(&k.to_dense(), &problem.mass.to_dense())?;
    if eig.values[0] <= 0.0 {
        return Err(Error::InvalidArgument(format!(
            "operator is not positive definite (smallest eigenvalue {:.3e})",
            eig.values[0]
        )));
    }
    let lf = solve_lower(&eig.l, &DenseMatrix::from_col_major(n, 1, f)?)?;
    let mut c = eig.u.tr_matvec(lf.data())?;
    for (ci, &lam) in c.iter_mut().zip(&eig.values) {
        *ci *= lam.powf(-alpha);
    }
    let uc = eig.u.matvec(&c)?;
    Ok(solve_lower_transpose(&eig.l, &DenseMatrix::from_col_major(n, 1, uc)?)?.into_data())
}

/// `‖y - y_ref‖_M / ‖y_ref‖_M`.
pub fn rel_l2_error(mass: &CsrMatrix, y: &[f64], y_ref: &[f64]) -> Result<f64> {
    check_dim("rel_l2_error", y_ref.len(), y.len())?;
    let e: Vec<f64> = y.iter().zip(y_ref).map(|(a, b)| a - b).collect();
    let num = dot(&e, &mass.spmv(&e)?).max(0.0).sqrt();
    let den = dot(y_ref, &mass.spmv(y_ref)?).max(0.0).sqrt();
    Ok(if den > 0.0 { num / den } else { num })
}

/// Largest principal angle between `span(a)` and `span(b)`, in radians.
///
/// With different dimensions, measures how far the smaller space is from
/// lying inside the larger one.
pub fn max_principal_angle(a: &DenseMatrix, b: &DenseMatrix) -> Result<f64> {
    check_dim("max_principal_angle", a.nrows(), b.nrows())?;
    let (big, small) = if a.ncols() >= b.ncols() { (a, b) } else { (b, a) };
    let (qa, _) = thin_qr(big)?;
    let (qb, _) = thin_qr(small)?;
    let c = qa.tr_matmul(&qb)?;
    let cos = thin_svd(&c)?.s.last().copied().unwrap_or(0.0).min(1.0);
    // The sine is taken from the residual so that tiny angles stay accurate.
    let resid = qb.sub(&qa.matmul(&c)?)?;
    let sin = thin_svd(&resid)?.s.first().copied().unwrap_or(0.0).min(1.0);
    Ok(sin.atan2(cos))
}

#[derive(Clone, Debug, Default, Serialize)]
pub struct NaiveReport {
    pub snapshot_columns: usize,
    pub singular_values: Vec<f64>,
    pub snapshot_seconds: f64,
    pub compression_seconds: f64,
}

/// Reference basis from the SVD of all shifted snapshots
/// `(K(μ_j) + e^{z_k} M) u = g(μ_j)` over the training rule.
pub fn naive_offline(
    plan: &TrainingPlan,
    problem: &AffineProblem,
) -> Result<(RomArtifact, NaiveReport)> {
    plan.validate(problem)?;
    let n = problem.ndof();
    let rule = SincRule::training(plan.h)?;
    let cols = plan.samples.len() * rule.len();
    if n.saturating_mul(cols) > SNAPSHOT_LIMIT {
        return Err(Error::TooLarge {
            n: n.saturating_mul(cols),
            limit: SNAPSHOT_LIMIT,
        });
    }
    let t0 = Instant::now();
    let mut snaps = Vec::with_capacity(cols);
    for mu in &plan.samples {
        let (k, f) = problem.materialize(mu)?;
        let block = rule
            .nodes()
            .par_iter()
            .map(|&z| {
                let a = k.add_scaled(&problem.mass, 1.0, z.exp())?;
                SparseCholesky::factorize(&a)?.solve(&f)
            })
            .collect::<Result<Vec<_>>>()?;
        snaps.extend(block);
    }
    let s = DenseMatrix::from_columns(n, &snaps)?;
    drop(snaps);
    let snapshot_seconds = t0.elapsed().as_secs_f64();

    let t1 = Instant::now();
    let k = plan.sketch.rank;
    if k > n.min(cols) {
        return Err(Error::InvalidArgument(format!(
            "rank {k} exceeds snapshot matrix size {n} x {cols}"
        )));
    }
    let svd = thin_svd(&s)?;
    let v = svd.u.columns(0, k);
    let compression_seconds = t1.elapsed().as_secs_f64();
    let artifact = project(problem, v, plan)?;
    Ok((
        artifact,
        NaiveReport {
            snapshot_columns: cols,
            singular_values: svd.s,
            snapshot_seconds,
            compression_seconds,
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problems::{GpRhs, ProblemSpec};

    fn gp(n: usize) -> AffineProblem {
        ProblemSpec::Gp {
            rhs: GpRhs::WhiteNoise { seed: 2 },
        }
        .build(n, n)
        .unwrap()
    }

    fn tight() -> SolverOptions {
        SolverOptions {
            tol: 1e-10,
            max_iter: 200,
        }
    }

    /// `Σ_k w_k (K + e^{z_k} M)⁻¹ g` by one sparse factorization per node.
    fn direct_quadrature(p: &AffineProblem, mu: &[f64], rule: &SincRule) -> Vec64 {
        let (k, f) = p.materialize(mu).unwrap();
        let mut y = vec![0.0; p.ndof()];
        for (&z, &w) in rule.nodes().iter().zip(rule.weights()) {
            let a = k.add_scaled(&p.mass, 1.0, z.exp()).unwrap();
            let u = SparseCholesky::factorize(&a).unwrap().solve(&f).unwrap();
            y.iter_mut().zip(&u).for_each(|(yi, ui)| *yi += w * ui);
        }
        y
    }

    #[test]
    fn fom_matches_direct_quadrature() {
        let p = gp(17);
        let h = p.mesh.h();
        for (mu, alpha) in [(10.0, 0.3), (120.0, 0.5), (200.0, 0.9)] {
            let rule = SincRule::build(alpha, h).unwrap();
            let y = fom_solve(&p, &[mu], alpha, h, &tight()).unwrap();
            let want = direct_quadrature(&p, &[mu], &rule);
            let err = rel_l2_error(&p.mass, &y, &want).unwrap();
            assert!(err < 1e-8, "mu {mu} alpha {alpha}: {err:.2e}");
        }
    }

    #[test]
    fn fom_multi_equals_separate_solves() {
        let p = gp(9);
        let h = p.mesh.h();
        let alphas = [0.25, 0.5, 0.75];
        let ys = fom_solve_multi(&p, &[40.0], &alphas, h, &tight()).unwrap();
        for (y, &a) in ys.iter().zip(&alphas) {
            let want = direct_quadrature(&p, &[40.0], &SincRule::build(a, h).unwrap());
            assert!(rel_l2_error(&p.mass, y, &want).unwrap() < 1e-8);
        }
    }

    #[test]
    fn fom_error_bounded_by_scalar_quadrature_error() {
        // In the M-orthonormal eigenbasis the error of every component is
        // the scalar quadrature error at that eigenvalue.
        let p = gp(17);
        let h = p.mesh.h();
        let (k, _) = p.materialize(&[30.0]).unwrap();
        let lam = sym_generalized_eig(&k.to_dense(), &p.mass.to_dense()).unwrap().values;
        for alpha in [0.2, 0.5, 0.8] {
            let rule = SincRule::build(alpha, h).unwrap();
            let bound = lam
                .iter()
                .map(|&l| (rule.fractional_factor(l) * l.powf(alpha) - 1.0).abs())
                .fold(0.0, f64::max);
            let y = fom_solve(&p, &[30.0], alpha, h, &tight()).unwrap();
            let yref = spectral_oracle(&p, &[30.0], alpha).unwrap();
            let err = rel_l2_error(&p.mass, &y, &yref).unwrap();
            assert!(err <= bound * 1.01 + 1e-9, "alpha {alpha}: {err:.2e} vs {bound:.2e}");
        }
    }

    #[test]
    fn spectral_oracle_at_unit_exponent_is_a_solve() {
        let p = gp(9);
        let (k, f) = p.materialize(&[25.0]).unwrap();
        let x = SparseCholesky::factorize(&k).unwrap().solve(&f).unwrap();
        let y = spectral_oracle(&p, &[25.0], 1.0).unwrap();
        assert!(rel_l2_error(&p.mass, &y, &x).unwrap() < 1e-10);
    }

    #[test]
    fn zero_load_gives_zero_solution() {
        let p = ProblemSpec::Gp {
            rhs: GpRhs::ConstantOne,
        }
        .build(5, 5)
        .unwrap();
        let mut p0 = p.clone();
        p0.load_terms[0].value.iter_mut().for_each(|v| *v = 0.0);
        let y = fom_solve(&p0, &[20.0], 0.5, p.mesh.h(), &tight()).unwrap();
        assert!(y.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn oracle_guards() {
        let p = gp(5);
        assert!(spectral_oracle(&p, &[20.0], 0.0).is_err());
        assert!(spectral_oracle(&p, &[20.0], 1.5).is_err());
        assert!(fom_solve(&p, &[20.0], 1.0, 0.1, &tight()).is_err());
        let starved = SolverOptions {
            tol: 1e-14,
            max_iter: 1,
        };
        assert!(matches!(
            fom_solve(&p, &[20.0], 0.5, 0.1, &starved),
            Err(Error::NotConverged { .. })
        ));
    }

    #[test]
    fn principal_angles() {
        let e = DenseMatrix::identity(4);
        let a = e.columns(0, 2);
        assert!(max_principal_angle(&a, &a).unwrap() < 1e-15);
        let b = DenseMatrix::from_columns(4, &[vec![1.0, 0.0, 0.0, 0.0], vec![0.0, 1.0, 1.0, 0.0]])
            .unwrap();
        let t = max_principal_angle(&a, &b).unwrap();
        assert!((t - std::f64::consts::FRAC_PI_4).abs() < 1e-14);
        let tiny = DenseMatrix::from_columns(4, &[vec![1.0, 1e-10, 0.0, 0.0]]).unwrap();
        let t = max_principal_angle(&e.columns(0, 1), &tiny).unwrap();
        assert!((t - 1e-10).abs() < 1e-20);
    }

    #[test]
    fn naive_basis_is_orthonormal_and_projects_consistently() {
        let p = gp(9);
        let plan = TrainingPlan::new(vec![vec![20.0], vec![150.0]], p.mesh.h(), 8, 0).unwrap();
        let (rom, rep) = naive_offline(&plan, &p).unwrap();
        rom.validate().unwrap();
        assert_eq!(rep.snapshot_columns, 2 * SincRule::training(p.mesh.h()).unwrap().len());
        assert!(rep.singular_values.windows(2).all(|w| w[0] >= w[1]));
    }
}
