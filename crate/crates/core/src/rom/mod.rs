//! Reduced-order model: offline training and online evaluation.
//!
//! Offline, every training parameter gets one MPGMRES-Sh search space over
//! the `α = 0.5` shift set. The spaces are streamed into a randomized sketch
//! and discarded; the sketch yields the basis `V` onto which the affine terms
//! are projected. Online, the projected pencil `(K̂, M̂)` is diagonalized and
//! the sinc quadrature is applied to its eigenvalues:
//!
//! ```text
//! ŷ = Φ diag(Σ_k w_k / (Λ + e^{z_k})) Φᵀ ĝ,   Φ = L⁻ᵀ U,   M̂ = L Lᵀ
//! ```

mod reference;

use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{check_dim, Error, Result};
use crate::fem::{AffineProblem, BoundaryCondition, CoeffFn, StructuredMesh};
use crate::linalg::{cholesky, solve_lower, solve_lower_transpose, sym_generalized_eig};
use crate::linalg::{DenseMatrix, Vec64};
use crate::problems::ProblemSpec;
use crate::quadrature::SincRule;
use crate::shifted::{mpgmres_sh, MpgmresOutput, Preconditioners, ShiftedFamily, SolverOptions, DEFAULT_TAUS};
use crate::sketch::{SketchConfig, SketchState};

pub use reference::{
    fom_solve, fom_solve_multi, max_principal_angle, naive_offline, rel_l2_error,
    spectral_oracle, NaiveReport, SPECTRAL_ORACLE_LIMIT,
};

/// Inputs of the offline stage.
#[derive(Clone, Debug)]
pub struct TrainingPlan {
    pub samples: Vec<Vec<f64>>,
    /// Mesh parameter of the training quadrature rule.
    pub h: f64,
    pub sketch: SketchConfig,
    pub solver: SolverOptions,
    pub taus: Vec<f64>,
    /// Recorded in the artifact metadata.
    pub spec: Option<ProblemSpec>,
    /// Creation time, seconds since the Unix epoch.
    pub created: u64,
    pub basis_scaling: BasisScaling,
}

/// Which basis of each search space `span(Z^(j))` is fed to the sketch.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BasisScaling {
    /// Columns `P_i⁻¹ v̂` exactly as produced by the solver.
    #[default]
    Raw,
    /// Each column scaled to unit length.
    UnitColumns,
    /// Orthonormal basis from a thin QR of `Z^(j)`.
    Orthonormal,
    /// `Z U_C Σ_C` from the SVD of the solution coefficients
    /// `C = [σ_k p_k]`, so the block has the Gram matrix of the shifted
    /// solutions `U^(j) = Z C` without forming them.
    SolutionWeighted,
}

impl BasisScaling {
    pub(crate) fn apply(self, out: MpgmresOutput, shifts: &[f64]) -> Result<DenseMatrix> {
        let z = out.basis.z;
        match self {
            BasisScaling::Raw => Ok(z),
            BasisScaling::UnitColumns => {
                let mut z = z;
                for j in 0..z.ncols() {
                    let nrm = crate::linalg::norm2(z.col(j));
                    if nrm > 0.0 {
                        z.col_mut(j).iter_mut().for_each(|v| *v /= nrm);
                    }
                }
                Ok(z)
            }
            BasisScaling::Orthonormal => Ok(crate::linalg::thin_qr(&z)?.0),
            BasisScaling::SolutionWeighted => {
                let mut c = out.coefficients;
                for (k, &s) in shifts.iter().enumerate() {
                    c.col_mut(k).iter_mut().for_each(|v| *v *= s);
                }
                let svd = crate::linalg::thin_svd(&c)?;
                let mut us = svd.u;
                for (j, &s) in svd.s.iter().enumerate() {
                    us.col_mut(j).iter_mut().for_each(|v| *v *= s);
                }
                z.matmul(&us)
            }
        }
    }
}

impl TrainingPlan {
    pub fn new(samples: Vec<Vec<f64>>, h: f64, rank: usize, seed: u64) -> Result<Self> {
        Ok(Self {
            samples,
            h,
            sketch: SketchConfig::new(rank, seed)?,
            solver: SolverOptions::default(),
            taus: DEFAULT_TAUS.to_vec(),
            spec: None,
            created: 0,
            basis_scaling: BasisScaling::default(),
        })
    }

    fn validate(&self, problem: &AffineProblem) -> Result<()> {
        if self.samples.is_empty() {
            return Err(Error::InvalidArgument("training set is empty".into()));
        }
        for mu in &self.samples {
            check_dim("training sample", problem.num_params(), mu.len())?;
            if !problem.in_box(mu) {
                log::warn!("training sample {mu:?} outside the parameter box");
            }
        }
        Ok(())
    }
}

/// SHA-256 of the training samples, as little-endian `f64` bytes.
pub fn training_digest(samples: &[Vec<f64>]) -> String {
    let mut h = Sha256::new();
    for mu in samples {
        h.update((mu.len() as u64).to_le_bytes());
        for v in mu {
            h.update(v.to_le_bytes());
        }
    }
    hex::encode(h.finalize())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RomMeta {
    pub problem: String,
    pub spec: Option<ProblemSpec>,
    pub mesh: StructuredMesh,
    pub bc: BoundaryCondition,
    pub n_dof: usize,
    pub rank: usize,
    /// Mesh parameter used for every online quadrature rule.
    pub h: f64,
    pub sketch_seed: u64,
    pub taus: Vec<f64>,
    pub tol: f64,
    pub n_samples: usize,
    pub training_digest: String,
    pub created: u64,
    pub stiffness_coeffs: Vec<CoeffFn>,
    pub load_coeffs: Vec<CoeffFn>,
    pub param_box: Vec<(f64, f64)>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RomArtifact {
    pub v: DenseMatrix,
    pub a_hat: Vec<DenseMatrix>,
    pub m_hat: DenseMatrix,
    pub g_hat: Vec<Vec64>,
    pub meta: RomMeta,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OnlineQuery<'a> {
    pub mu: &'a [f64],
    pub alpha: f64,
}

#[derive(Clone, Debug, Default, Serialize)]
pub struct SampleReport {
    pub mu: Vec<f64>,
    pub iterations: usize,
    pub basis_size: usize,
    pub converged: bool,
    pub breakdown: bool,
    pub max_residual: f64,
}

#[derive(Clone, Debug, Default, Serialize)]
pub struct OfflineReport {
    pub samples: Vec<SampleReport>,
    pub singular_values: Vec<f64>,
    pub sketch_rank_deficient: bool,
    pub snapshot_seconds: f64,
    pub compression_seconds: f64,
    pub projection_seconds: f64,
}

impl RomArtifact {
    pub fn rank(&self) -> usize {
        self.v.ncols()
    }

    pub fn n_dof(&self) -> usize {
        self.v.nrows()
    }

    /// Shapes, symmetry, `M̂` definiteness and `VᵀV = I`.
    pub fn validate(&self) -> Result<()> {
        let k = self.rank();
        let meta = &self.meta;
        check_dim("artifact rank", meta.rank, k)?;
        check_dim("artifact n_dof", meta.n_dof, self.n_dof())?;
        check_dim("artifact operator terms", meta.stiffness_coeffs.len(), self.a_hat.len())?;
        check_dim("artifact load terms", meta.load_coeffs.len(), self.g_hat.len())?;
        for a in self.a_hat.iter().chain(std::iter::once(&self.m_hat)) {
            check_dim("artifact reduced matrix rows", k, a.nrows())?;
            check_dim("artifact reduced matrix cols", k, a.ncols())?;
            if a.symmetry_defect() > 1e-10 {
                return Err(Error::NotSymmetric("reduced operator".into()));
            }
        }
        for g in &self.g_hat {
            check_dim("artifact reduced load", k, g.len())?;
        }
        cholesky(&self.m_hat)?;
        let defect = self
            .v
            .tr_matmul(&self.v)?
            .sub(&DenseMatrix::identity(k))?
            .max_abs();
        if defect > 1e-10 {
            return Err(Error::Format(format!(
                "basis is not orthonormal (defect {defect:.2e})"
            )));
        }
        Ok(())
    }

    /// `K̂(μ)` and `ĝ(μ)`.
    pub fn reduced_system(&self, mu: &[f64]) -> Result<(DenseMatrix, Vec64)> {
        check_dim("online parameter", self.meta.param_box.len(), mu.len())?;
        let k = self.rank();
        let mut kh = DenseMatrix::zeros(k, k);
        for (a, f) in self.a_hat.iter().zip(&self.meta.stiffness_coeffs) {
            kh.add_scaled(f.eval(mu), a)?;
        }
        let mut gh = vec![0.0; k];
        for (g, f) in self.g_hat.iter().zip(&self.meta.load_coeffs) {
            let c = f.eval(mu);
            for (o, v) in gh.iter_mut().zip(g) {
                *o += c * v;
            }
        }
        Ok((kh, gh))
    }
}

fn check_alpha(alpha: f64) -> Result<()> {
    if alpha > 0.0 && alpha < 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!(
            "fractional exponent must lie in (0, 1), got {alpha}"
        )))
    }
}

/// Runs MPGMRES-Sh for every training sample over the `α = 0.5` shift set and
/// hands each (scaled) search space to `sink` in sample order.
fn stream_search_spaces(
    plan: &TrainingPlan,
    problem: &AffineProblem,
    mut sink: impl FnMut(DenseMatrix) -> Result<()>,
) -> Result<Vec<SampleReport>> {
    plan.validate(problem)?;
    let rule = SincRule::training(plan.h)?;
    let shifts: Vec<f64> = rule.nodes().iter().map(|z| (-z).exp()).collect();
    let mut reports = Vec::with_capacity(plan.samples.len());
    // Solves run concurrently a chunk at a time; `sink` sees blocks in order.
    let chunk = rayon::current_num_threads().max(1);
    for group in plan.samples.chunks(chunk) {
        let outs = group
            .par_iter()
            .map(|mu| {
                let (k, f) = problem.materialize(mu)?;
                let precs = Preconditioners::factorize(&problem.mass, &k, &plan.taus)?;
                let fam = ShiftedFamily::new(&problem.mass, &k, &shifts, &f)?;
                mpgmres_sh(&fam, &precs, &plan.solver)
            })
            .collect::<Result<Vec<_>>>()?;
        for (mu, out) in group.iter().zip(outs) {
            if !out.converged {
                log::warn!(
                    "training sample {mu:?}: MPGMRES-Sh not converged (residual {:.2e}), basis kept",
                    out.max_residual()
                );
            }
            reports.push(SampleReport {
                mu: mu.clone(),
                iterations: out.basis.iterations,
                basis_size: out.basis.len(),
                converged: out.converged,
                breakdown: out.breakdown,
                max_residual: out.max_residual(),
            });
            sink(plan.basis_scaling.apply(out, &shifts)?)?;
        }
    }
    Ok(reports)
}

/// Offline stage: search spaces, streaming sketch, projection.
pub fn offline_train(
    plan: &TrainingPlan,
    problem: &AffineProblem,
) -> Result<(RomArtifact, OfflineReport)> {
    let mut sketch = SketchState::new(problem.ndof(), plan.sketch)?;
    let mut report = OfflineReport::default();

    let t0 = Instant::now();
    report.samples = stream_search_spaces(plan, problem, |z| sketch.update(&z))?;
    report.snapshot_seconds = t0.elapsed().as_secs_f64();

    let t1 = Instant::now();
    let sk = sketch.finalize(plan.sketch.rank)?;
    report.compression_seconds = t1.elapsed().as_secs_f64();
    report.singular_values = sk.singular_values;
    report.sketch_rank_deficient = sk.rank_deficient;

    let t2 = Instant::now();
    let artifact = project(problem, sk.v, plan)?;
    report.projection_seconds = t2.elapsed().as_secs_f64();
    Ok((artifact, report))
}

/// Same search spaces as [`offline_train`], but stored side by side as
/// `Ŝ = [Z^(1) ... Z^(M)]` and compressed with a dense SVD.
pub fn offline_train_svd(
    plan: &TrainingPlan,
    problem: &AffineProblem,
) -> Result<(RomArtifact, OfflineReport)> {
    let n = problem.ndof();
    let mut report = OfflineReport::default();
    let t0 = Instant::now();
    let mut s_hat = DenseMatrix::zeros(n, 0);
    report.samples = stream_search_spaces(plan, problem, |z| {
        for j in 0..z.ncols() {
            s_hat.push_col(z.col(j))?;
        }
        Ok(())
    })?;
    report.snapshot_seconds = t0.elapsed().as_secs_f64();

    let t1 = Instant::now();
    let k = plan.sketch.rank;
    if k > s_hat.ncols().min(n) {
        return Err(Error::InvalidArgument(format!(
            "rank {k} exceeds snapshot matrix size {n} x {}",
            s_hat.ncols()
        )));
    }
    let svd = crate::linalg::thin_svd(&s_hat)?;
    drop(s_hat);
    let v = svd.u.columns(0, k);
    report.compression_seconds = t1.elapsed().as_secs_f64();
    report.singular_values = svd.s;

    let t2 = Instant::now();
    let artifact = project(problem, v, plan)?;
    report.projection_seconds = t2.elapsed().as_secs_f64();
    Ok((artifact, report))
}

/// Galerkin projection of every affine term onto `V`.
pub(crate) fn project(
    problem: &AffineProblem,
    v: DenseMatrix,
    plan: &TrainingPlan,
) -> Result<RomArtifact> {
    let proj = |a: &crate::linalg::CsrMatrix| -> Result<DenseMatrix> {
        let mut r = v.tr_matmul(&a.mul_dense(&v)?)?;
        r.symmetrize();
        Ok(r)
    };
    let a_hat = problem
        .stiffness_terms
        .par_iter()
        .map(|t| proj(&t.value))
        .collect::<Result<Vec<_>>>()?;
    let m_hat = proj(&problem.mass)?;
    let g_hat = problem
        .load_terms
        .iter()
        .map(|t| v.tr_matvec(&t.value))
        .collect::<Result<Vec<_>>>()?;
    let meta = RomMeta {
        problem: problem.id.clone(),
        spec: plan.spec,
        mesh: problem.mesh.clone(),
        bc: problem.bc,
        n_dof: problem.ndof(),
        rank: v.ncols(),
        h: plan.h,
        sketch_seed: plan.sketch.seed,
        taus: plan.taus.clone(),
        tol: plan.solver.tol,
        n_samples: plan.samples.len(),
        training_digest: training_digest(&plan.samples),
        created: plan.created,
        stiffness_coeffs: problem.stiffness_terms.iter().map(|t| t.coeff).collect(),
        load_coeffs: problem.load_terms.iter().map(|t| t.coeff).collect(),
        param_box: problem.param_box.clone(),
    };
    Ok(RomArtifact {
        v,
        a_hat,
        m_hat,
        g_hat,
        meta,
    })
}

/// Reduced coordinates `ŷ` via the generalized eigendecomposition of `(K̂, M̂)`.
pub fn online_reduced(rom: &RomArtifact, q: &OnlineQuery<'_>, rule: &SincRule) -> Result<Vec64> {
    check_alpha(q.alpha)?;
    let (kh, gh) = rom.reduced_system(q.mu)?;
    let eig = sym_generalized_eig(&kh, &rom.m_hat)?;
    // Uᵀ L⁻¹ ĝ
    let lg = solve_lower(&eig.l, &DenseMatrix::from_col_major(gh.len(), 1, gh)?)?;
    let mut c = eig.u.tr_matvec(lg.data())?;
    for (ci, &lam) in c.iter_mut().zip(&eig.values) {
        *ci *= rule.fractional_factor(lam);
    }
    // L⁻ᵀ U c
    let uc = eig.u.matvec(&c)?;
    Ok(solve_lower_transpose(&eig.l, &DenseMatrix::from_col_major(uc.len(), 1, uc)?)?.into_data())
}

/// Online stage with the quadrature rule built at the training mesh parameter.
pub fn online_solve(rom: &RomArtifact, q: &OnlineQuery<'_>) -> Result<Vec64> {
    check_alpha(q.alpha)?;
    let rule = SincRule::build(q.alpha, rom.meta.h)?;
    let yh = online_reduced(rom, q, &rule)?;
    rom.v.matvec(&yh)
}

/// Reduced coordinates by one dense solve `(K̂ + e^{z_k} M̂) û_k = ĝ` per node.
pub fn online_reduced_per_shift(
    rom: &RomArtifact,
    q: &OnlineQuery<'_>,
    rule: &SincRule,
) -> Result<Vec64> {
    check_alpha(q.alpha)?;
    let (kh, gh) = rom.reduced_system(q.mu)?;
    let k = rom.rank();
    let g = DenseMatrix::from_col_major(k, 1, gh)?;
    let terms = rule
        .nodes()
        .par_iter()
        .zip(rule.weights())
        .map(|(&z, &w)| {
            let mut a = kh.clone();
            a.add_scaled(z.exp(), &rom.m_hat)?;
            let l = cholesky(&a)?;
            let u = solve_lower_transpose(&l, &solve_lower(&l, &g)?)?;
            Ok(u.into_data().into_iter().map(|v| w * v).collect::<Vec<_>>())
        })
        .collect::<Result<Vec<_>>>()?;
    let mut y = vec![0.0; k];
    for t in terms {
        for (yi, ti) in y.iter_mut().zip(t) {
            *yi += ti;
        }
    }
    Ok(y)
}
