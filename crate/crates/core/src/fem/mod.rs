//! P1 finite elements on structured triangulations of rectangles.

mod assembly;
mod mesh;
mod problem;

pub use assembly::{assemble_load, assemble_mass, assemble_stiffness, Coefficient, Source, Tensor2};
pub use mesh::{BoundaryCondition, DofMap, StructuredMesh};
pub use problem::{AffineProblem, AffineTerm, CoeffFn};
