//! Reduced-order models for parameterized spectral fractional elliptic PDEs.
//!
//! The fractional solve `A(μ)^{-α} b` is evaluated with sinc quadrature of
//! the Kato integral. The offline stage builds a search space per parameter
//! sample with a multi-preconditioned shifted GMRES and compresses the union
//! with a streaming randomized sketch; the online stage solves the projected
//! problem through a generalized eigendecomposition.

pub mod error;
pub mod fem;
pub mod linalg;
pub mod problems;
pub mod quadrature;
pub mod random;
pub mod rom;
pub mod shifted;
pub mod sketch;

pub use error::{Error, Result};
pub use fem::{AffineProblem, BoundaryCondition, StructuredMesh};
pub use linalg::{CsrMatrix, DenseMatrix, SparseCholesky, Vec64};
pub use problems::ProblemSpec;
pub use quadrature::SincRule;
pub use rom::{OnlineQuery, RomArtifact, RomMeta, TrainingPlan};
