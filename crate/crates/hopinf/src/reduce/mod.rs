//! Reduced-operator construction: intrusive Galerkin and Hamiltonian
//! projections, the inference algorithms, truncation, and assembly of
//! linear and cubic reduced models ready for the time steppers.

mod assemble;
mod infer;

pub use assemble::{
    assemble_bbm_rom, assemble_kdv_rom, assemble_kdv_v2_rom, assemble_linear_rom,
    cubic_rom_step_functions, integrate_cubic_rom, integrate_linear_rom, lift_trajectory,
    CubicMethod, LinearMethod,
};
pub use infer::{
    opinf_canonical, opinf_generic, opinf_legacy_separable, opinf_noncanonical, CanonicalVariant,
};

use crate::basis::PodBasis;
use crate::matkit::{DenseMatrix, MatError};

#[derive(Debug, thiserror::Error)]
pub enum ReduceError {
    #[error("model {0} is not linear; use the cubic assemblers")]
    NonlinearModel(String),
    #[error("{method} is not available for {what}")]
    UnsupportedMethod { what: &'static str, method: &'static str },
    #[error("separable inference needs a cotangent-lift basis, got {0}")]
    NeedsCotangentBasis(&'static str),
    #[error("inference needs {0}")]
    MissingInput(&'static str),
    #[error("inference system is singular with eta = 0; retry with a small ridge, e.g. eta = {suggested:.3e}")]
    Singular { suggested: f64 },
    #[error(transparent)]
    Mat(#[from] MatError),
}

/// Quadrature applied to the nonlinear term inside an implicit step.
///
/// `AvfThirds` is the average-vector-field rule for a cubic Hamiltonian
/// gradient (exact integral of a quadratic along the chord); `Midpoint`
/// evaluates the quadratic right-hand side at the half step, which is the
/// scheme obtained when discretization happens before projection.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Quadrature {
    AvfThirds,
    Midpoint,
}

/// Order-three coefficient array stored as an n x n^2 matrix; row a holds
/// the flattened block T[a][b][c] at column b*n + c, symmetrized in (b, c).
#[derive(Debug, Clone)]
pub struct CubicTensor {
    n: usize,
    w: DenseMatrix,
}

impl CubicTensor {
    pub fn zeros(n: usize) -> Self {
        CubicTensor { n, w: DenseMatrix::zeros(n, n * n) }
    }

    /// Wrap a flat n x n^2 coefficient matrix, symmetrizing the trailing
    /// index pair so contraction order never matters.
    pub fn from_flat(w: DenseMatrix) -> Result<Self, MatError> {
        let n = w.rows();
        if w.cols() != n * n {
            return Err(MatError::DimensionMismatch {
                expected: format!("{n}x{}", n * n),
                got: format!("{}x{}", w.rows(), w.cols()),
            });
        }
        let sym = DenseMatrix::from_fn(n, n * n, |a, bc| {
            let (b, c) = (bc / n, bc % n);
            0.5 * (w.get(a, b * n + c) + w.get(a, c * n + b))
        });
        Ok(CubicTensor { n, w: sym })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn get(&self, a: usize, b: usize, c: usize) -> f64 {
        self.w.get(a, b * self.n + c)
    }

    pub fn max_abs(&self) -> f64 {
        self.w.max_abs()
    }

    /// z_a = sum_{b,c} T[a][b][c] x_b y_c.
    pub fn contract(&self, x: &[f64], y: &[f64]) -> Vec<f64> {
        let n = self.n;
        let mut v = vec![0.0; n * n];
        for b in 0..n {
            for c in 0..n {
                v[b * n + c] = x[b] * y[c];
            }
        }
        self.w.matvec(&v)
    }

    /// M[a][b] = sum_c T[a][b][c] x_c, the derivative of contract(v, v)
    /// at v = x up to the factor 2 (T is symmetric in the trailing pair).
    pub fn contract_mat(&self, x: &[f64]) -> DenseMatrix {
        let n = self.n;
        DenseMatrix::from_fn(n, n, |a, b| {
            let mut acc = 0.0;
            for c in 0..n {
                acc += self.w.get(a, b * n + c) * x[c];
            }
            acc
        })
    }

    /// Leading n' x n' x n' sub-block.
    pub fn truncate(&self, n2: usize) -> Self {
        assert!(n2 <= self.n, "cannot truncate {} modes to {}", self.n, n2);
        let n = self.n;
        let w = DenseMatrix::from_fn(n2, n2 * n2, |a, bc| {
            let (b, c) = (bc / n2, bc % n2);
            self.w.get(a, b * n + c)
        });
        CubicTensor { n: n2, w }
    }
}

/// Linear reduced model  xhat' = Dhat xhat + chat, with the skew and
/// symmetric factors kept when the operator was built as a product.
#[derive(Debug, Clone)]
pub struct ReducedLinearModel {
    pub dhat: DenseMatrix,
    pub lhat: Option<DenseMatrix>,
    pub ahat: Option<DenseMatrix>,
    pub chat: Vec<f64>,
}

impl ReducedLinearModel {
    pub fn modes(&self) -> usize {
        self.dhat.rows()
    }

    pub fn rhs(&self, xhat: &[f64]) -> Vec<f64> {
        let mut r = self.dhat.matvec(xhat);
        for (ri, ci) in r.iter_mut().zip(&self.chat) {
            *ri += ci;
        }
        r
    }

    /// Leading n' modes of every block.
    pub fn truncate(&self, n2: usize) -> Self {
        ReducedLinearModel {
            dhat: self.dhat.top_left(n2, n2),
            lhat: self.lhat.as_ref().map(|l| l.top_left(n2, n2)),
            ahat: self.ahat.as_ref().map(|a| a.top_left(n2, n2)),
            chat: self.chat[..n2].to_vec(),
        }
    }
}

/// Cubic reduced model. With `lhat` present the flow is
/// xhat' = Lhat (chat + Chat xhat + T(xhat, xhat)); without it the
/// operator is already folded into the coefficients (Galerkin form).
#[derive(Debug, Clone)]
pub struct ReducedCubicModel {
    pub lhat: Option<DenseMatrix>,
    pub chat: Vec<f64>,
    pub cmat: DenseMatrix,
    pub tensor: CubicTensor,
    pub quadrature: Quadrature,
}

impl ReducedCubicModel {
    pub fn modes(&self) -> usize {
        self.cmat.rows()
    }

    /// chat + Chat v + T(v, v): the reduced gradient in Hamiltonian form,
    /// or the full right-hand side in Galerkin form.
    pub fn gradient(&self, v: &[f64]) -> Vec<f64> {
        let mut g = self.cmat.matvec(v);
        let t = self.tensor.contract(v, v);
        for i in 0..g.len() {
            g[i] += self.chat[i] + t[i];
        }
        g
    }

    pub fn rhs(&self, v: &[f64]) -> Vec<f64> {
        let g = self.gradient(v);
        match &self.lhat {
            Some(l) => l.matvec(&g),
            None => g,
        }
    }

    /// Potential of the gradient factor: chat'v + v'Chat v/2 + v'T(v,v)/3.
    /// This is the conserved reduced Hamiltonian when Chat is symmetric and
    /// the tensor is fully symmetric (the Hamiltonian-form assemblies).
    pub fn hamiltonian(&self, v: &[f64]) -> f64 {
        let cv = self.cmat.matvec(v);
        let tv = self.tensor.contract(v, v);
        let mut h = 0.0;
        for i in 0..v.len() {
            h += self.chat[i] * v[i] + 0.5 * v[i] * cv[i] + v[i] * tv[i] / 3.0;
        }
        h
    }

    pub fn truncate(&self, n2: usize) -> Self {
        ReducedCubicModel {
            lhat: self.lhat.as_ref().map(|l| l.top_left(n2, n2)),
            chat: self.chat[..n2].to_vec(),
            cmat: self.cmat.top_left(n2, n2),
            tensor: self.tensor.truncate(n2),
            quadrature: self.quadrature,
        }
    }
}

/// Projected training data for the inference algorithms.
#[derive(Debug, Clone)]
pub struct InferenceInputs {
    /// Reduced states, n x n_s.
    pub xhat: DenseMatrix,
    /// Reduced time derivatives, n x n_s.
    pub xhat_t: DenseMatrix,
    /// Reduced gradient snapshots (of f in the canonical algorithms, of H
    /// in the noncanonical one); omitted means identically zero.
    pub grad: Option<DenseMatrix>,
    /// Reduced canonical structure matrix U'JU (canonical algorithms only).
    pub jhat: Option<DenseMatrix>,
    pub eta: f64,
}

impl InferenceInputs {
    /// Project full-order snapshot data for the canonical algorithms.
    /// States are centered by the basis shift; derivatives and gradients
    /// project without it.
    pub fn canonical(
        x: &DenseMatrix,
        x_t: &DenseMatrix,
        grad_f: Option<&DenseMatrix>,
        basis: &PodBasis,
        eta: f64,
    ) -> Result<Self, MatError> {
        let dim = basis.dim();
        let half = dim / 2;
        let j_full = DenseMatrix::from_fn(dim, dim, |i, j| {
            if j == i + half {
                1.0
            } else if i == j + half {
                -1.0
            } else {
                0.0
            }
        });
        let jhat = basis.u.transpose().matmul(&j_full)?.matmul(&basis.u)?.symmetrize(-1.0);
        Ok(InferenceInputs {
            xhat: basis.project_states(x)?,
            xhat_t: basis.project_rates(x_t)?,
            grad: grad_f.map(|g| basis.project_rates(g)).transpose()?,
            jhat: Some(jhat),
            eta,
        })
    }

    /// Project full-order snapshot data for the noncanonical algorithm.
    pub fn noncanonical(
        x: &DenseMatrix,
        x_t: &DenseMatrix,
        grad_h: &DenseMatrix,
        basis: &PodBasis,
        eta: f64,
    ) -> Result<Self, MatError> {
        Ok(InferenceInputs {
            xhat: basis.project_states(x)?,
            xhat_t: basis.project_rates(x_t)?,
            grad: Some(basis.project_rates(grad_h)?),
            jhat: None,
            eta,
        })
    }
}

/// Congruence projection Dhat = U'DU with the mean-centering offset
/// chat = U'D x0.
pub fn intrusive_galerkin(
    d: &DenseMatrix,
    basis: &PodBasis,
) -> Result<ReducedLinearModel, MatError> {
    let u = &basis.u;
    let dhat = u.transpose().matmul(&d.matmul(u)?)?;
    let chat = match &basis.shift {
        Some(x0) => u.matvec_t(&d.matvec(x0)),
        None => vec![0.0; dhat.rows()],
    };
    Ok(ReducedLinearModel { dhat, lhat: None, ahat: None, chat })
}

/// Lhat = U'LU, the least-squares solution of U'L = Lhat U', re-skewed.
/// Rejects an L that is not skew to begin with.
pub fn intrusive_hamiltonian(l: &DenseMatrix, u: &DenseMatrix) -> Result<DenseMatrix, MatError> {
    let defect = l.symmetry_defect(-1.0);
    let scale = l.max_abs().max(1.0);
    if defect > 1e-10 * scale {
        return Err(MatError::StructureViolation { property: "skew-symmetric", defect });
    }
    Ok(u.transpose().matmul(&l.matmul(u)?)?.symmetrize(-1.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::basis::{pod_cotangent_lift, pod_ordinary};
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random_matrix(rows: usize, cols: usize, seed: u64) -> DenseMatrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        DenseMatrix::from_fn(rows, cols, |_, _| rng.gen_range(-1.0..1.0))
    }

    #[test]
    fn galerkin_projection_of_identity_is_identity() {
        let x = random_matrix(10, 8, 1);
        let b = pod_ordinary(&x, 4, false).unwrap();
        let rom = intrusive_galerkin(&DenseMatrix::identity(10), &b).unwrap();
        assert!(rom.dhat.sub(&DenseMatrix::identity(4)).unwrap().max_abs() < 1e-12);
        assert_eq!(rom.chat, vec![0.0; 4]);
    }

    #[test]
    fn galerkin_projection_preserves_skewness() {
        let x = random_matrix(10, 8, 2);
        let b = pod_ordinary(&x, 4, true).unwrap();
        let d = random_matrix(10, 10, 3);
        let skew = d.sub(&d.transpose()).unwrap();
        let rom = intrusive_galerkin(&skew, &b).unwrap();
        assert!(rom.dhat.symmetry_defect(-1.0) < 1e-12);
    }

    #[test]
    fn galerkin_projection_matches_entrywise_oracle() {
        let x = random_matrix(7, 9, 4);
        let b = pod_ordinary(&x, 3, true).unwrap();
        let d = random_matrix(7, 7, 5);
        let rom = intrusive_galerkin(&d, &b).unwrap();
        for a in 0..3 {
            for c in 0..3 {
                let mut acc = 0.0;
                for i in 0..7 {
                    for j in 0..7 {
                        acc += b.u.get(i, a) * d.get(i, j) * b.u.get(j, c);
                    }
                }
                assert!((rom.dhat.get(a, c) - acc).abs() < 1e-12);
            }
        }
        let x0 = b.shift.as_ref().unwrap();
        let expect = b.u.matvec_t(&d.matvec(x0));
        for (have, want) in rom.chat.iter().zip(&expect) {
            assert!((have - want).abs() < 1e-14);
        }
    }

    #[test]
    fn hamiltonian_projection_of_j_through_cotangent_basis_is_canonical() {
        let x = random_matrix(12, 10, 6);
        let b = pod_cotangent_lift(&x, 3, false).unwrap();
        let j = DenseMatrix::from_fn(12, 12, |i, j| {
            if j == i + 6 {
                1.0
            } else if i == j + 6 {
                -1.0
            } else {
                0.0
            }
        });
        let lhat = intrusive_hamiltonian(&j, &b.u).unwrap();
        let jn = DenseMatrix::from_fn(6, 6, |i, j| {
            if j == i + 3 {
                1.0
            } else if i == j + 3 {
                -1.0
            } else {
                0.0
            }
        });
        assert!(lhat.sub(&jn).unwrap().max_abs() < 1e-12);
    }

    #[test]
    fn hamiltonian_projection_rejects_nonskew_input() {
        let u = DenseMatrix::identity(4);
        let err = intrusive_hamiltonian(&DenseMatrix::identity(4), &u).unwrap_err();
        assert!(matches!(err, MatError::StructureViolation { .. }));
        let zero = intrusive_hamiltonian(&DenseMatrix::zeros(4, 4), &u).unwrap();
        assert_eq!(zero.max_abs(), 0.0);
    }

    #[test]
    fn cubic_tensor_contraction_and_symmetry() {
        let n = 3;
        let raw = random_matrix(n, n * n, 7);
        let t = CubicTensor::from_flat(raw.clone()).unwrap();
        for a in 0..n {
            for b in 0..n {
                for c in 0..n {
                    assert_eq!(t.get(a, b, c), t.get(a, c, b));
                    let want = 0.5 * (raw.get(a, b * n + c) + raw.get(a, c * n + b));
                    assert!((t.get(a, b, c) - want).abs() < 1e-15);
                }
            }
        }
        // contract against a direct triple loop
        let x = [0.3, -1.2, 0.7];
        let y = [1.1, 0.4, -0.6];
        let z = t.contract(&x, &y);
        for a in 0..n {
            let mut acc = 0.0;
            for b in 0..n {
                for c in 0..n {
                    acc += t.get(a, b, c) * x[b] * y[c];
                }
            }
            assert!((z[a] - acc).abs() < 1e-13);
        }
        // contract_mat times x equals contract(x, x)
        let m = t.contract_mat(&x);
        let via_mat = m.matvec(&x);
        let direct = t.contract(&x, &x);
        for a in 0..n {
            assert!((via_mat[a] - direct[a]).abs() < 1e-13);
        }
    }

    #[test]
    fn tensor_truncation_takes_leading_block() {
        let t = CubicTensor::from_flat(random_matrix(4, 16, 8)).unwrap();
        let s = t.truncate(2);
        for a in 0..2 {
            for b in 0..2 {
                for c in 0..2 {
                    assert_eq!(s.get(a, b, c), t.get(a, b, c));
                }
            }
        }
    }

    #[test]
    fn linear_model_truncation_trims_every_block() {
        let rom = ReducedLinearModel {
            dhat: random_matrix(5, 5, 9),
            lhat: Some(random_matrix(5, 5, 10)),
            ahat: None,
            chat: vec![1.0, 2.0, 3.0, 4.0, 5.0],
        };
        let small = rom.truncate(2);
        assert_eq!(small.dhat.rows(), 2);
        assert_eq!(small.lhat.as_ref().unwrap().cols(), 2);
        assert_eq!(small.chat, vec![1.0, 2.0]);
        assert_eq!(small.dhat.get(1, 0), rom.dhat.get(1, 0));
    }
}
