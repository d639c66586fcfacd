//! Benchmark problems: Gaussian-process SPDE, fractional cookies and
//! anisotropic diffusion, plus parameter sampling.

use std::f64::consts::FRAC_PI_2;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fem::{
    assemble_load, assemble_mass, assemble_stiffness, AffineProblem, AffineTerm,
    BoundaryCondition, CoeffFn, Coefficient, Source, StructuredMesh, Tensor2,
};
use crate::linalg::SparseCholesky;
use crate::random::GaussianStream;

/// Right-hand side of the Gaussian-process problem.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "mode")]
pub enum GpRhs {
    /// `g = L_M ω` with `M = L_M L_Mᵀ` and `ω` standard normal.
    WhiteNoise { seed: u64 },
    ConstantOne,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum CookiesCase {
    A,
    B,
}

impl CookiesCase {
    /// Disc centres and radius.
    pub fn discs(&self) -> (&'static [[f64; 2]], f64) {
        match self {
            CookiesCase::A => (&[[0.0, 0.0]], 0.5),
            CookiesCase::B => (&[[-0.5, -0.5], [-0.5, 0.5], [0.5, 0.5], [0.5, -0.5]], 0.3),
        }
    }
}

/// Problem identifier plus its options, as used in run configurations.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "id")]
pub enum ProblemSpec {
    Gp {
        #[serde(default = "default_gp_rhs")]
        rhs: GpRhs,
    },
    CookiesA,
    CookiesB,
    Aniso,
}

fn default_gp_rhs() -> GpRhs {
    GpRhs::WhiteNoise { seed: 0 }
}

impl ProblemSpec {
    pub fn id(&self) -> &'static str {
        match self {
            ProblemSpec::Gp { .. } => "gp",
            ProblemSpec::CookiesA => "cookies-a",
            ProblemSpec::CookiesB => "cookies-b",
            ProblemSpec::Aniso => "aniso",
        }
    }

    pub fn mesh(&self, nx: usize, ny: usize) -> Result<StructuredMesh> {
        match self {
            ProblemSpec::CookiesA | ProblemSpec::CookiesB => {
                StructuredMesh::new((-1.0, 1.0), (-1.0, 1.0), nx, ny)
            }
            _ => StructuredMesh::new((0.0, 1.0), (0.0, 1.0), nx, ny),
        }
    }

    pub fn build(&self, nx: usize, ny: usize) -> Result<AffineProblem> {
        let mesh = self.mesh(nx, ny)?;
        match *self {
            ProblemSpec::Gp { rhs } => build_gp(rhs, mesh),
            ProblemSpec::CookiesA => build_cookies(CookiesCase::A, mesh),
            ProblemSpec::CookiesB => build_cookies(CookiesCase::B, mesh),
            ProblemSpec::Aniso => build_aniso(mesh),
        }
    }
}

/// `(κ² - Δ)` with Neumann conditions: `A_1` stiffness with `f = 1`, `A_2` mass with `f = κ²`.
pub fn build_gp(rhs: GpRhs, mesh: StructuredMesh) -> Result<AffineProblem> {
    let bc = BoundaryCondition::HomogeneousNeumann;
    let mass = assemble_mass(&mesh, bc);
    let stiff = assemble_stiffness(&mesh, bc, &Coefficient::Constant(Tensor2::IDENTITY))?;
    let g = match rhs {
        GpRhs::ConstantOne => assemble_load(&mesh, bc, &Source::Constant(1.0))?,
        GpRhs::WhiteNoise { seed } => {
            let omega = GaussianStream::new(seed, 0).vector(mass.nrows());
            SparseCholesky::factorize(&mass)?.mul_factor(&omega)?
        }
    };
    let p = AffineProblem {
        id: "gp".into(),
        bc,
        stiffness_terms: vec![
            term("stiffness", stiff, CoeffFn::One),
            term("mass", mass.clone(), CoeffFn::Param(0)),
        ],
        mass,
        load_terms: vec![term("load", g, CoeffFn::One)],
        param_box: vec![(10.0, 200.0)],
        mesh,
    };
    p.validate()?;
    Ok(p)
}

/// `-∇·((1 + Σ μ_t χ_t)∇u)` on `(-1, 1)²` with Dirichlet conditions.
pub fn build_cookies(case: CookiesCase, mesh: StructuredMesh) -> Result<AffineProblem> {
    let bc = BoundaryCondition::HomogeneousDirichlet;
    let (centres, r) = case.discs();
    let mut terms = Vec::with_capacity(centres.len() + 1);
    for (t, c) in centres.iter().enumerate() {
        let c = *c;
        let chi = Coefficient::indicator(&mesh, move |p| {
            (p[0] - c[0]).powi(2) + (p[1] - c[1]).powi(2) < r * r
        });
        terms.push(term(
            &format!("region_{}", t + 1),
            assemble_stiffness(&mesh, bc, &chi)?,
            CoeffFn::Param(t),
        ));
    }
    terms.push(term(
        "global",
        assemble_stiffness(&mesh, bc, &Coefficient::Constant(Tensor2::IDENTITY))?,
        CoeffFn::One,
    ));
    let p = AffineProblem {
        id: match case {
            CookiesCase::A => "cookies-a",
            CookiesCase::B => "cookies-b",
        }
        .into(),
        bc,
        stiffness_terms: terms,
        mass: assemble_mass(&mesh, bc),
        load_terms: vec![term(
            "load",
            assemble_load(&mesh, bc, &Source::Constant(1.0))?,
            CoeffFn::One,
        )],
        param_box: vec![(0.0, 1.0); centres.len()],
        mesh,
    };
    p.validate()?;
    Ok(p)
}

/// Rotated anisotropic diffusion with `μ = (D1, D2, θ)`.
pub fn build_aniso(mesh: StructuredMesh) -> Result<AffineProblem> {
    let bc = BoundaryCondition::HomogeneousDirichlet;
    let a = |t: Tensor2| assemble_stiffness(&mesh, bc, &Coefficient::Constant(t));
    let p = AffineProblem {
        id: "aniso".into(),
        bc,
        stiffness_terms: vec![
            term("xx", a(Tensor2::new(1.0, 0.0, 0.0))?, CoeffFn::AnisoXX),
            term("xy", a(Tensor2::new(0.0, 1.0, 0.0))?, CoeffFn::AnisoXY),
            term("yy", a(Tensor2::new(0.0, 0.0, 1.0))?, CoeffFn::AnisoYY),
        ],
        mass: assemble_mass(&mesh, bc),
        load_terms: vec![term(
            "load",
            assemble_load(&mesh, bc, &Source::Constant(1.0))?,
            CoeffFn::One,
        )],
        param_box: vec![(0.5, 4.5), (0.5, 4.5), (0.0, FRAC_PI_2)],
        mesh,
    };
    p.validate()?;
    Ok(p)
}

fn term<T>(name: &str, value: T, coeff: CoeffFn) -> AffineTerm<T> {
    AffineTerm {
        name: name.into(),
        value,
        coeff,
    }
}

/// Fractional exponent `α = (ν + d/2)/2` of the Matérn SPDE.
pub fn alpha_from_nu_d(nu: f64, d: u32) -> Result<f64> {
    let alpha = (nu + d as f64 / 2.0) / 2.0;
    if alpha > 0.0 && alpha < 1.0 {
        Ok(alpha)
    } else {
        Err(Error::InvalidArgument(format!(
            "nu = {nu}, d = {d} gives alpha = {alpha}, outside (0, 1)"
        )))
    }
}

/// Tensor grid `lower + i·step` per component, last component fastest.
pub fn grid_sweep(lower: &[f64], upper: &[f64], step: &[f64]) -> Result<Vec<Vec<f64>>> {
    if lower.len() != upper.len() || lower.len() != step.len() || lower.is_empty() {
        return Err(Error::InvalidArgument(
            "grid sweep bounds and steps must have the same nonzero length".into(),
        ));
    }
    let mut axes = Vec::with_capacity(lower.len());
    for ((&lo, &hi), &st) in lower.iter().zip(upper).zip(step) {
        if !(st > 0.0) || !(hi >= lo) {
            return Err(Error::InvalidArgument(format!(
                "grid sweep needs step > 0 and upper >= lower, got [{lo}, {hi}] step {st}"
            )));
        }
        let n = ((hi - lo) / st + 1e-9).floor() as usize + 1;
        axes.push((0..n).map(|i| lo + i as f64 * st).collect::<Vec<_>>());
    }
    let mut out = vec![Vec::new()];
    for axis in &axes {
        out = out
            .iter()
            .flat_map(|p| {
                axis.iter().map(move |&v| {
                    let mut q = p.clone();
                    q.push(v);
                    q
                })
            })
            .collect();
    }
    Ok(out)
}

/// Stratified Latin hypercube: one sample per stratum and axis, strata
/// matched across axes by independent seeded permutations.
pub fn latin_hypercube(bounds: &[(f64, f64)], count: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = GaussianStream::new(seed, 1);
    let mut samples = vec![vec![0.0; bounds.len()]; count];
    for (d, &(lo, hi)) in bounds.iter().enumerate() {
        let mut perm: Vec<usize> = (0..count).collect();
        for i in (1..count).rev() {
            perm.swap(i, rng.index(i + 1));
        }
        for (s, &p) in samples.iter_mut().zip(&perm) {
            let u = (p as f64 + rng.uniform()) / count as f64;
            s[d] = lo + u * (hi - lo);
        }
    }
    samples
}

/// Independent uniform samples in the box.
pub fn uniform_samples(bounds: &[(f64, f64)], count: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = GaussianStream::new(seed, 2);
    (0..count)
        .map(|_| {
            bounds
                .iter()
                .map(|&(lo, hi)| lo + rng.uniform() * (hi - lo))
                .collect()
        })
        .collect()
}
