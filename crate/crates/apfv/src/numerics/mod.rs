//! Dense and sparse linear-algebra kernels plus deterministic randomness.
//!
//! Everything here is deliberately small and reproducible: the dense
//! eigensolver is a cyclic Jacobi iteration (model dimensions stay below a
//! few hundred), the sparse solver is a Jacobi-preconditioned BiCGSTAB with
//! a dense elimination fallback for small systems, and the RNG is a fixed
//! xorshift64* generator so that random meshes are identical on every
//! platform.

mod dense;
mod rng;
mod sparse;

pub use dense::{solve_dense, sym_eigendecompose, pos_neg_split, DenseMatrix};
pub use rng::Rng;
pub use sparse::SparseOperator;

use thiserror::Error;

/// Relative eigenvalue threshold below which an eigenvalue of a PSD matrix
/// counts as zero (kernel identification).
pub const KERNEL_EIGENVALUE_TOL: f64 = 1e-10;

#[derive(Debug, Error)]
pub enum NumericsError {
    #[error("matrix is not symmetric: max |M - M^t| = {defect:.3e} exceeds {tol:.3e}")]
    NonSymmetric { defect: f64, tol: f64 },
    #[error("iteration budget exhausted, final residual {residual:.3e}")]
    NoConvergence { residual: f64 },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("matrix is singular or numerically rank-deficient")]
    Singular,
}
