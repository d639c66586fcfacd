//! Dense and sparse numeric kernels.

mod cholesky;
mod csr;
mod decomp;
mod dense;

pub use cholesky::{reverse_cuthill_mckee, SparseCholesky};
pub use csr::CsrMatrix;
pub use decomp::{
    cholesky, numerical_rank, pinv_cutoff, pinv_solve, solve_lower, solve_lower_transpose,
    solve_upper, sym_generalized_eig, thin_qr, thin_svd, GeneralizedEigen, Svd, SYMMETRY_TOL,
};
pub use dense::{axpy, dot, norm2, DenseMatrix};

/// Plain `f64` vector, used for right-hand sides, solutions and coefficients.
pub type Vec64 = Vec<f64>;
