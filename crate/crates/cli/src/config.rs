//! JSON run configuration.

use std::path::{Path, PathBuf};

use fracrom_core::problems::{alpha_from_nu_d, grid_sweep, latin_hypercube, uniform_samples};
use fracrom_core::rom::BasisScaling;
use fracrom_core::shifted::DEFAULT_TAUS;
use fracrom_core::{AffineProblem, ProblemSpec};
use serde::{Deserialize, Serialize};

use crate::error::CliError;

/// Parameter samples, either listed or generated from a seed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "generator", rename_all = "snake_case")]
pub enum SampleSpec {
    Explicit {
        samples: Vec<Vec<f64>>,
    },
    /// Tensor grid `lower:step:upper`, last component fastest.
    GridSweep {
        lower: Vec<f64>,
        upper: Vec<f64>,
        step: Vec<f64>,
    },
    LatinHypercube {
        count: usize,
        seed: u64,
    },
    UniformRandom {
        count: usize,
        seed: u64,
    },
}

impl SampleSpec {
    pub fn generate(&self, bounds: &[(f64, f64)], field: &str) -> Result<Vec<Vec<f64>>, CliError> {
        let samples = match self {
            SampleSpec::Explicit { samples } => samples.clone(),
            SampleSpec::GridSweep { lower, upper, step } => grid_sweep(lower, upper, step)
                .map_err(|e| CliError::Config(format!("{field}: {e}")))?,
            SampleSpec::LatinHypercube { count, seed } => latin_hypercube(bounds, *count, *seed),
            SampleSpec::UniformRandom { count, seed } => uniform_samples(bounds, *count, *seed),
        };
        for (i, mu) in samples.iter().enumerate() {
            if mu.len() != bounds.len() {
                return Err(CliError::Config(format!(
                    "{field}[{i}]: expected {} parameter components, got {}",
                    bounds.len(),
                    mu.len()
                )));
            }
            if mu.iter().any(|v| !v.is_finite()) {
                return Err(CliError::Config(format!("{field}[{i}]: non-finite component")));
            }
        }
        Ok(samples)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    pub nx: usize,
    pub ny: usize,
}

/// `(ν, d)` pair mapped to `α = (ν + d/2) / 2`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NuD {
    pub nu: f64,
    pub d: u32,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TestSpec {
    pub samples: SampleSpec,
    #[serde(default)]
    pub alphas: Vec<f64>,
    #[serde(default)]
    pub nu_d: Vec<NuD>,
}

fn default_taus() -> Vec<f64> {
    DEFAULT_TAUS.to_vec()
}

fn default_tol() -> f64 {
    1e-8
}

fn default_fom_tol() -> f64 {
    1e-10
}

fn default_max_iter() -> usize {
    60
}

fn default_fom_max_iter() -> usize {
    300
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub problem: ProblemSpec,
    pub grid: Grid,
    pub training: SampleSpec,
    pub rank: usize,
    #[serde(default = "default_taus")]
    pub taus: Vec<f64>,
    #[serde(default = "default_tol")]
    pub tol: f64,
    #[serde(default = "default_max_iter")]
    pub max_iter: usize,
    pub sketch_seed: u64,
    #[serde(default)]
    pub basis_scaling: BasisScaling,
    #[serde(default)]
    pub test: Option<TestSpec>,
    #[serde(default = "default_fom_tol")]
    pub fom_tol: f64,
    #[serde(default = "default_fom_max_iter")]
    pub fom_max_iter: usize,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
}

pub fn check_alpha(alpha: f64, field: &str) -> Result<f64, CliError> {
    if alpha > 0.0 && alpha < 1.0 {
        Ok(alpha)
    } else {
        Err(CliError::Config(format!(
            "{field}: fractional exponent must lie in (0, 1), got {alpha}"
        )))
    }
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self, CliError> {
        let cfg: RunConfig =
            serde_json::from_str(text).map_err(|e| CliError::Config(format!("config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let cfg = |m: String| Err(CliError::Config(m));
        if self.grid.nx < 2 || self.grid.ny < 2 {
            return cfg(format!(
                "grid: need at least 2 nodes per side, got {}x{}",
                self.grid.nx, self.grid.ny
            ));
        }
        if self.rank < 1 {
            return cfg("rank: must be at least 1".into());
        }
        if self.taus.is_empty() {
            return cfg("taus: at least one preconditioner shift is required".into());
        }
        if self.taus.iter().any(|t| !(t.is_finite() && *t > 0.0))
            || self.taus.windows(2).any(|w| w[0] >= w[1])
        {
            return cfg(format!(
                "taus: must be positive and strictly increasing, got {:?}",
                self.taus
            ));
        }
        for (name, v) in [("tol", self.tol), ("fom_tol", self.fom_tol)] {
            if !(v.is_finite() && v > 0.0) {
                return cfg(format!("{name}: must be positive, got {v}"));
            }
        }
        if self.max_iter < 1 || self.fom_max_iter < 1 {
            return cfg("max_iter: must be at least 1".into());
        }
        if let SampleSpec::Explicit { samples } = &self.training {
            if samples.is_empty() {
                return cfg("training: empty training set".into());
            }
        }
        if let SampleSpec::LatinHypercube { count: 0, .. }
        | SampleSpec::UniformRandom { count: 0, .. } = self.training
        {
            return cfg("training: empty training set".into());
        }
        if let Some(test) = &self.test {
            test.alphas()?;
        }
        Ok(())
    }

    pub fn build_problem(&self) -> Result<AffineProblem, CliError> {
        self.problem
            .build(self.grid.nx, self.grid.ny)
            .map_err(|e| CliError::Config(format!("problem: {e}")))
    }

    pub fn training_samples(&self, problem: &AffineProblem) -> Result<Vec<Vec<f64>>, CliError> {
        let s = self.training.generate(&problem.param_box, "training")?;
        if s.is_empty() {
            return Err(CliError::Config("training: empty training set".into()));
        }
        Ok(s)
    }
}

impl TestSpec {
    /// Exponents from `alphas` followed by those mapped from `nu_d`.
    pub fn alphas(&self) -> Result<Vec<f64>, CliError> {
        let mut out = Vec::with_capacity(self.alphas.len() + self.nu_d.len());
        for (i, &a) in self.alphas.iter().enumerate() {
            out.push(check_alpha(a, &format!("test.alphas[{i}]"))?);
        }
        for (i, p) in self.nu_d.iter().enumerate() {
            let a = alpha_from_nu_d(p.nu, p.d)
                .map_err(|e| CliError::Config(format!("test.nu_d[{i}]: {e}")))?;
            out.push(check_alpha(a, &format!("test.nu_d[{i}]"))?);
        }
        Ok(out)
    }
}
