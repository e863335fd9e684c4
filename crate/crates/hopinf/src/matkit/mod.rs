//! Dense matrix kit: storage, Kronecker/vectorization helpers, SVD, and the
//! least-squares solvers used by operator inference.

mod dense;
mod hopm;
mod kron;
mod lstsq;
mod svd;

pub use dense::DenseMatrix;
pub use hopm::{read_hopm, read_hopm_with_header, write_hopm, write_hopm_with_header};
pub use kron::{commutation_matrix, kron, oplus_bar, unvec_mat, vec_mat};
pub use lstsq::{constrained_lstsq, lstsq_opinf, solve_gradient_system};
pub use svd::{svd, SvdResult};

/// Symmetry class a constrained least-squares solution is required to satisfy.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SymmetryKind {
    Symmetric,
    Skew,
}

impl SymmetryKind {
    /// Sign of the transpose in `(D + sign * D^T)/2`.
    pub fn sign(self) -> f64 {
        match self {
            SymmetryKind::Symmetric => 1.0,
            SymmetryKind::Skew => -1.0,
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum MatError {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: String, got: String },
    #[error("matrix data length {len} does not equal rows*cols = {expected}")]
    BadLength { len: usize, expected: usize },
    #[error("rank-deficient system with eta = 0; retry with eta > 0")]
    RankDeficient,
    #[error("eta must be nonnegative, got {0}")]
    NegativeEta(f64),
    #[error("SVD failed to converge")]
    SvdFailed,
    #[error("matrix is not {property} (defect {defect:.3e})")]
    StructureViolation { property: &'static str, defect: f64 },
    #[error("{path}: {msg}")]
    Io { path: String, msg: String },
    #[error("{path}:{line}: {msg}")]
    Parse { path: String, line: usize, msg: String },
}
