use serde::{Deserialize, Serialize};

use super::mesh::{BoundaryCondition, StructuredMesh};
use crate::error::{check_dim, Error, Result};
use crate::linalg::{CsrMatrix, Vec64};

/// Scalar coefficient function `f_t(μ)` of one affine term.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CoeffFn {
    One,
    /// `μ[i]`
    Param(usize),
    /// `cos²θ D1 + sin²θ D2` with `μ = (D1, D2, θ)`
    AnisoXX,
    /// `sinθ cosθ (D2 - D1)`
    AnisoXY,
    /// `sin²θ D1 + cos²θ D2`
    AnisoYY,
}

impl CoeffFn {
    pub fn eval(&self, mu: &[f64]) -> f64 {
        match *self {
            CoeffFn::One => 1.0,
            CoeffFn::Param(i) => mu[i],
            CoeffFn::AnisoXX => {
                let (s, c) = mu[2].sin_cos();
                c * c * mu[0] + s * s * mu[1]
            }
            CoeffFn::AnisoXY => {
                let (s, c) = mu[2].sin_cos();
                s * c * (mu[1] - mu[0])
            }
            CoeffFn::AnisoYY => {
                let (s, c) = mu[2].sin_cos();
                s * s * mu[0] + c * c * mu[1]
            }
        }
    }

    fn min_params(&self) -> usize {
        match *self {
            CoeffFn::One => 0,
            CoeffFn::Param(i) => i + 1,
            _ => 3,
        }
    }
}

#[derive(Clone, Debug)]
pub struct AffineTerm<T> {
    pub name: String,
    pub value: T,
    pub coeff: CoeffFn,
}

/// `A(μ) = Σ f_t^a(μ) A_t`, `g(μ) = Σ f_t^g(μ) g_t`, plus the mass matrix.
#[derive(Clone, Debug)]
pub struct AffineProblem {
    pub id: String,
    pub mesh: StructuredMesh,
    pub bc: BoundaryCondition,
    pub stiffness_terms: Vec<AffineTerm<CsrMatrix>>,
    pub mass: CsrMatrix,
    pub load_terms: Vec<AffineTerm<Vec64>>,
    /// Inclusive bounds for each parameter component.
    pub param_box: Vec<(f64, f64)>,
}

impl AffineProblem {
    /// Checks dimensions and symmetry of every term.
    pub fn validate(&self) -> Result<()> {
        let n = self.mass.nrows();
        check_dim("AffineProblem mass", n, self.mass.ncols())?;
        if !self.mass.is_symmetric(1e-10) {
            return Err(Error::NotSymmetric("mass matrix".into()));
        }
        if self.stiffness_terms.is_empty() || self.load_terms.is_empty() {
            return Err(Error::InvalidArgument(
                "affine problem needs at least one operator and one load term".into(),
            ));
        }
        let p = self.num_params();
        for t in &self.stiffness_terms {
            check_dim("AffineProblem operator rows", n, t.value.nrows())?;
            check_dim("AffineProblem operator cols", n, t.value.ncols())?;
            if !t.value.is_symmetric(1e-10) {
                return Err(Error::NotSymmetric(format!("operator term {}", t.name)));
            }
            if t.coeff.min_params() > p {
                return Err(Error::InvalidArgument(format!(
                    "term {} needs {} parameters, box has {p}",
                    t.name,
                    t.coeff.min_params()
                )));
            }
        }
        for t in &self.load_terms {
            check_dim("AffineProblem load", n, t.value.len())?;
            if t.coeff.min_params() > p {
                return Err(Error::InvalidArgument(format!(
                    "load {} needs {} parameters, box has {p}",
                    t.name,
                    t.coeff.min_params()
                )));
            }
        }
        Ok(())
    }

    pub fn ndof(&self) -> usize {
        self.mass.nrows()
    }

    pub fn num_params(&self) -> usize {
        self.param_box.len()
    }

    pub fn n_a(&self) -> usize {
        self.stiffness_terms.len()
    }

    pub fn n_g(&self) -> usize {
        self.load_terms.len()
    }

    pub fn in_box(&self, mu: &[f64]) -> bool {
        mu.len() == self.num_params()
            && mu
                .iter()
                .zip(&self.param_box)
                .all(|(&m, &(lo, hi))| m >= lo && m <= hi)
    }

    fn check_mu(&self, mu: &[f64]) -> Result<()> {
        check_dim("parameter vector", self.num_params(), mu.len())?;
        if mu.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("parameter vector"));
        }
        if !self.in_box(mu) {
            log::warn!(
                "{}: parameter {mu:?} outside box {:?}, extrapolating",
                self.id,
                self.param_box
            );
        }
        Ok(())
    }

    pub fn stiffness_coeffs(&self, mu: &[f64]) -> Result<Vec<f64>> {
        self.check_mu(mu)?;
        Ok(self.stiffness_terms.iter().map(|t| t.coeff.eval(mu)).collect())
    }

    pub fn load_coeffs(&self, mu: &[f64]) -> Result<Vec<f64>> {
        check_dim("parameter vector", self.num_params(), mu.len())?;
        Ok(self.load_terms.iter().map(|t| t.coeff.eval(mu)).collect())
    }

    /// `K(μ) = Σ f_t^a(μ) A_t` and `f(μ) = Σ f_t^g(μ) g_t`.
    pub fn materialize(&self, mu: &[f64]) -> Result<(CsrMatrix, Vec64)> {
        let ca = self.stiffness_coeffs(mu)?;
        let cg = self.load_coeffs(mu)?;
        let mut k = self.stiffness_terms[0].value.scaled(ca[0]);
        for (t, &c) in self.stiffness_terms.iter().zip(&ca).skip(1) {
            k = k.add_scaled(&t.value, 1.0, c)?;
        }
        let mut f = vec![0.0; self.ndof()];
        for (t, &c) in self.load_terms.iter().zip(&cg) {
            for (fi, gi) in f.iter_mut().zip(&t.value) {
                *fi += c * gi;
            }
        }
        Ok((k, f))
    }
}
