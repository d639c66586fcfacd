//! Single-view randomized low-rank approximation with streaming updates.
//!
//! For `S` revealed a column block at a time, keeps only
//! `Y1 = S Ω` (`n x ℓ1`) and `Y2ᵀ = Ψᵀ S` (`ℓ2 x cols`), with `ℓ1 = 2K + 1`
//! and `ℓ2 = 2ℓ1 + 1`. The approximation is `S ≈ Q (ΨᵀQ)⁺ Y2ᵀ` with
//! `Y1 = Q R`.
//!
//! Row `r` of `Ω` is drawn from the substream keyed by the global column
//! ordinal `r`, so the sketch does not depend on how columns are grouped into
//! blocks. `Ψ` uses the reserved stream `u64::MAX`.

use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::linalg::{numerical_rank, pinv_solve, thin_qr, thin_svd, DenseMatrix};
use crate::random::GaussianStream;

const PSI_STREAM: u64 = u64::MAX;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SketchConfig {
    pub rank: usize,
    pub seed: u64,
}

impl SketchConfig {
    pub fn new(rank: usize, seed: u64) -> Result<Self> {
        if rank == 0 {
            return Err(Error::InvalidArgument("sketch rank must be at least 1".into()));
        }
        Ok(Self { rank, seed })
    }

    pub fn l1(&self) -> usize {
        2 * self.rank + 1
    }

    pub fn l2(&self) -> usize {
        2 * self.l1() + 1
    }
}

#[derive(Clone, Debug)]
pub struct SketchState {
    cfg: SketchConfig,
    psi: DenseMatrix,
    y1: DenseMatrix,
    /// `Y2ᵀ`, grown by columns.
    y2t: DenseMatrix,
    blocks: usize,
}

#[derive(Clone, Debug)]
pub struct SketchOutput {
    /// Orthonormal `n x K` basis.
    pub v: DenseMatrix,
    /// Leading `K` singular value estimates.
    pub sigma: Vec<f64>,
    /// All `min(ℓ1, cols)` singular values of the core factor.
    pub singular_values: Vec<f64>,
    /// `ΨᵀQ` was numerically rank deficient.
    pub rank_deficient: bool,
}

impl SketchState {
    pub fn new(n_dof: usize, cfg: SketchConfig) -> Result<Self> {
        if n_dof == 0 {
            return Err(Error::InvalidArgument("sketch needs n_dof >= 1".into()));
        }
        let psi = GaussianStream::new(cfg.seed, PSI_STREAM).matrix(n_dof, cfg.l2());
        Ok(Self {
            cfg,
            psi,
            y1: DenseMatrix::zeros(n_dof, cfg.l1()),
            y2t: DenseMatrix::zeros(cfg.l2(), 0),
            blocks: 0,
        })
    }

    pub fn config(&self) -> SketchConfig {
        self.cfg
    }

    pub fn psi(&self) -> &DenseMatrix {
        &self.psi
    }

    pub fn y1(&self) -> &DenseMatrix {
        &self.y1
    }

    /// `Y2ᵀ`, size `ℓ2 x cols_seen`.
    pub fn y2t(&self) -> &DenseMatrix {
        &self.y2t
    }

    pub fn cols_seen(&self) -> usize {
        self.y2t.ncols()
    }

    pub fn blocks(&self) -> usize {
        self.blocks
    }

    /// Rows `first..first + count` of the test matrix `Ω`.
    pub fn omega_rows(&self, first: usize, count: usize) -> DenseMatrix {
        let l1 = self.cfg.l1();
        let mut omega = DenseMatrix::zeros(count, l1);
        for r in 0..count {
            let mut g = GaussianStream::new(self.cfg.seed, (first + r) as u64);
            for c in 0..l1 {
                omega[(r, c)] = g.sample();
            }
        }
        omega
    }

    /// `Y1 += Z_j Ω_j` and `Y2ᵀ ← [Y2ᵀ, Ψᵀ Z_j]`.
    pub fn update(&mut self, zj: &DenseMatrix) -> Result<()> {
        check_dim("sketch update", self.y1.nrows(), zj.nrows())?;
        let omega = self.omega_rows(self.cols_seen(), zj.ncols());
        let inc = zj.matmul(&omega)?;
        self.y1.add_scaled(1.0, &inc)?;
        let rows = self.psi.tr_matmul(zj)?;
        for j in 0..rows.ncols() {
            self.y2t.push_col(rows.col(j))?;
        }
        self.blocks += 1;
        Ok(())
    }

    /// `(Q, W)` with `S ≈ Q W`.
    pub fn approximation(&self) -> Result<(DenseMatrix, DenseMatrix)> {
        if self.y1.max_abs() == 0.0 {
            return Err(Error::InvalidArgument("sketch of a zero matrix".into()));
        }
        let q = if self.y1.nrows() >= self.y1.ncols() {
            thin_qr(&self.y1)?.0
        } else {
            thin_svd(&self.y1)?.u
        };
        let w = pinv_solve(&self.psi.tr_matmul(&q)?, &self.y2t)?;
        Ok((q, w))
    }

    /// Rank-`k` orthonormal basis `V = Q U_W(:, 1:k)`.
    pub fn finalize(&self, k: usize) -> Result<SketchOutput> {
        let limit = self.cols_seen().min(self.cfg.l1()).min(self.y1.nrows());
        if k == 0 || k > limit {
            return Err(Error::InvalidArgument(format!(
                "cannot extract rank {k} from a sketch with {} columns, {} rows and l1 = {}",
                self.cols_seen(),
                self.y1.nrows(),
                self.cfg.l1()
            )));
        }
        let (q, w) = self.approximation()?;
        let pq = self.psi.tr_matmul(&q)?;
        let ps = thin_svd(&pq)?.s;
        let rank_deficient = numerical_rank(pq.nrows(), pq.ncols(), &ps) < pq.ncols();
        if rank_deficient {
            log::warn!("sketch: Psi^T Q is numerically rank deficient");
        }
        let svd = thin_svd(&w)?;
        let v = q.matmul(&svd.u.columns(0, k))?;
        Ok(SketchOutput {
            v,
            sigma: svd.s[..k].to_vec(),
            singular_values: svd.s,
            rank_deficient,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn random(n: usize, m: usize, seed: u64) -> DenseMatrix {
        GaussianStream::new(seed, 7).matrix(n, m)
    }

    #[test]
    fn sizes_and_determinism() {
        let cfg = SketchConfig::new(5, 11).unwrap();
        let a = SketchState::new(40, cfg).unwrap();
        let b = SketchState::new(40, cfg).unwrap();
        assert_eq!(a.psi(), b.psi());
        assert_eq!((a.y1().nrows(), a.y1().ncols()), (40, 11));
        assert_eq!((a.psi().nrows(), a.psi().ncols()), (40, 23));
        assert_eq!(a.cols_seen(), 0);
        assert!(SketchConfig::new(0, 1).is_err());
    }

    #[test]
    fn psi_column_means_vanish() {
        let n = 20_000;
        let s = SketchState::new(n, SketchConfig::new(2, 3).unwrap()).unwrap();
        for j in 0..s.psi().ncols() {
            let mean = s.psi().col(j).iter().sum::<f64>() / n as f64;
            assert!(mean.abs() <= 4.0 / (n as f64).sqrt());
        }
    }

    #[test]
    fn zero_block_appends_zero_rows() {
        let mut s = SketchState::new(10, SketchConfig::new(2, 0).unwrap()).unwrap();
        s.update(&random(10, 3, 1)).unwrap();
        let y1 = s.y1().clone();
        s.update(&DenseMatrix::zeros(10, 4)).unwrap();
        assert_eq!(s.y1(), &y1);
        assert_eq!(s.cols_seen(), 7);
        assert!(s.y2t().columns(3, 7).max_abs() == 0.0);
        assert!(s.update(&DenseMatrix::zeros(9, 1)).is_err());
    }

    #[test]
    fn zero_matrix_is_degenerate() {
        let mut s = SketchState::new(10, SketchConfig::new(2, 0).unwrap()).unwrap();
        s.update(&DenseMatrix::zeros(10, 5)).unwrap();
        assert!(s.finalize(2).is_err());
    }

    #[test]
    fn dense_oracle_for_y1() {
        let n = 30;
        let cfg = SketchConfig::new(3, 9).unwrap();
        let blocks = [random(n, 4, 1), random(n, 6, 2), random(n, 5, 3)];
        let mut s = SketchState::new(n, cfg).unwrap();
        for b in &blocks {
            s.update(b).unwrap();
        }
        let full = DenseMatrix::hcat(&blocks.iter().collect::<Vec<_>>()).unwrap();
        let omega = s.omega_rows(0, full.ncols());
        let want = full.matmul(&omega).unwrap();
        assert!(s.y1().sub(&want).unwrap().max_abs() <= 1e-12 * want.max_abs());
        let y2t = s.psi().tr_matmul(&full).unwrap();
        assert!(s.y2t().sub(&y2t).unwrap().max_abs() <= 1e-12 * y2t.max_abs());
    }

    #[test]
    fn exact_rank_is_reconstructed() {
        let (n, m, r) = (60, 40, 4);
        let s_true = random(n, r, 1).matmul(&random(r, m, 2)).unwrap();
        let mut s = SketchState::new(n, SketchConfig::new(r, 5).unwrap()).unwrap();
        s.update(&s_true.columns(0, 15)).unwrap();
        s.update(&s_true.columns(15, 40)).unwrap();
        let (q, w) = s.approximation().unwrap();
        let approx = q.matmul(&w).unwrap();
        let err = s_true.sub(&approx).unwrap().frobenius_norm() / s_true.frobenius_norm();
        assert!(err < 1e-10, "{err}");
        let out = s.finalize(r).unwrap();
        let g = out.v.tr_matmul(&out.v).unwrap();
        assert!(g.sub(&DenseMatrix::identity(r)).unwrap().max_abs() < 1e-10);
        assert_eq!(out.singular_values.len(), 2 * r + 1);
        assert!(out.sigma.windows(2).all(|w| w[0] >= w[1]));
    }

    #[test]
    fn sketch_wider_than_the_space() {
        let n = 6;
        let s_true = random(n, 30, 4);
        let mut s = SketchState::new(n, SketchConfig::new(n, 2).unwrap()).unwrap();
        s.update(&s_true).unwrap();
        let (q, w) = s.approximation().unwrap();
        let err = s_true.sub(&q.matmul(&w).unwrap()).unwrap().frobenius_norm();
        assert!(err < 1e-10 * s_true.frobenius_norm());
        let out = s.finalize(n).unwrap();
        let g = out.v.tr_matmul(&out.v).unwrap();
        assert!(g.sub(&DenseMatrix::identity(n)).unwrap().max_abs() < 1e-10);
        assert!(s.finalize(n + 1).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]
        #[test]
        fn streaming_equals_batch(split in 1usize..19, seed in 0u64..1000) {
            let n = 25;
            let full = random(n, 20, seed);
            let cfg = SketchConfig::new(3, seed).unwrap();
            let mut a = SketchState::new(n, cfg).unwrap();
            a.update(&full.columns(0, split)).unwrap();
            a.update(&full.columns(split, 20)).unwrap();
            let mut b = SketchState::new(n, cfg).unwrap();
            b.update(&full).unwrap();
            let scale = a.y1().max_abs();
            prop_assert!(a.y1().sub(b.y1()).unwrap().max_abs() <= 1e-12 * scale);
            prop_assert!(a.y2t().sub(b.y2t()).unwrap().max_abs() <= 1e-12 * b.y2t().max_abs());
            let va = a.finalize(3).unwrap().v;
            let vb = b.finalize(3).unwrap().v;
            // Same subspace up to column signs.
            let c = va.tr_matmul(&vb).unwrap();
            for i in 0..3 {
                prop_assert!((c[(i, i)].abs() - 1.0).abs() < 1e-9);
            }
        }
    }
}
