//! Shared fixtures for the benchmarks.

use fracrom_core::problems::{grid_sweep, GpRhs};
use fracrom_core::{AffineProblem, ProblemSpec};

/// GP problem on an `n x n` node grid with a fixed white-noise load.
pub fn gp_problem(n: usize) -> AffineProblem {
    ProblemSpec::Gp {
        rhs: GpRhs::WhiteNoise { seed: 0 },
    }
    .build(n, n)
    .expect("valid grid")
}

/// `κ²` training grid `10:step:200`.
pub fn gp_training(step: f64) -> Vec<Vec<f64>> {
    grid_sweep(&[10.0], &[200.0], &[step]).expect("valid sweep")
}
