use super::{DenseMatrix, MatError};

/// Kronecker product A (x) B. Block (i, j) of the result equals a_ij * B.
pub fn kron(a: &DenseMatrix, b: &DenseMatrix) -> DenseMatrix {
    let (ar, ac) = (a.rows(), a.cols());
    let (br, bc) = (b.rows(), b.cols());
    let mut out = DenseMatrix::zeros(ar * br, ac * bc);
    for i in 0..ar {
        for j in 0..ac {
            let aij = a.get(i, j);
            if aij == 0.0 {
                continue;
            }
            for k in 0..br {
                for l in 0..bc {
                    out.set(i * br + k, j * bc + l, aij * b.get(k, l));
                }
            }
        }
    }
    out
}

/// Column-stacking vectorization: vec(A)[j*m + i] = A[i][j] for A of size m x n.
pub fn vec_mat(a: &DenseMatrix) -> Vec<f64> {
    let (m, n) = (a.rows(), a.cols());
    let mut v = Vec::with_capacity(m * n);
    for j in 0..n {
        for i in 0..m {
            v.push(a.get(i, j));
        }
    }
    v
}

/// Inverse of `vec_mat`: reshape a length m*n vector into an m x n matrix column-wise.
pub fn unvec_mat(v: &[f64], m: usize, n: usize) -> Result<DenseMatrix, MatError> {
    if v.len() != m * n {
        return Err(MatError::BadLength { len: v.len(), expected: m * n });
    }
    Ok(DenseMatrix::from_fn(m, n, |i, j| v[j * m + i]))
}

/// Commutation matrix K(m, n): the mn x mn 0/1 matrix with K vec(X) = vec(X^T)
/// for every m x n matrix X. Exactly one 1 per row and per column.
pub fn commutation_matrix(m: usize, n: usize) -> DenseMatrix {
    let mut k = DenseMatrix::zeros(m * n, m * n);
    for j in 0..n {
        for i in 0..m {
            // vec(X) position of X_ij is j*m + i; vec(X^T) position is i*n + j.
            k.set(i * n + j, j * m + i, 1.0);
        }
    }
    k
}

/// Symmetrized Kronecker sum  A (+) B = A (x) B + B (x) A  for square A, B of
/// equal size. This is the system matrix of the symmetry-constrained
/// least-squares normal equations.
pub fn oplus_bar(a: &DenseMatrix, b: &DenseMatrix) -> Result<DenseMatrix, MatError> {
    if a.rows() != a.cols() || b.rows() != b.cols() || a.rows() != b.rows() {
        return Err(MatError::DimensionMismatch {
            expected: "square matrices of equal size".into(),
            got: format!("{}x{} and {}x{}", a.rows(), a.cols(), b.rows(), b.cols()),
        });
    }
    kron(a, b).add(&kron(b, a))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn seq(rows: usize, cols: usize, start: f64) -> DenseMatrix {
        DenseMatrix::from_fn(rows, cols, |i, j| start + (i * cols + j) as f64)
    }

    #[test]
    fn kron_index_formula() {
        // Independent oracle: (A (x) B)[i*p+k][j*q+l] = A[i][j] * B[k][l].
        let a = seq(2, 3, 1.0);
        let b = seq(3, 2, -4.0);
        let k = kron(&a, &b);
        assert_eq!(k.rows(), 6);
        assert_eq!(k.cols(), 6);
        for i in 0..2 {
            for j in 0..3 {
                for p in 0..3 {
                    for q in 0..2 {
                        assert_eq!(k.get(i * 3 + p, j * 2 + q), a.get(i, j) * b.get(p, q));
                    }
                }
            }
        }
    }

    #[test]
    fn kron_identity_left() {
        let b = seq(2, 2, 3.0);
        let k = kron(&DenseMatrix::identity(2), &b);
        let expect = b.block_diag(&b);
        assert_eq!(k, expect);
    }

    #[test]
    fn vec_unvec_roundtrip() {
        let a = seq(3, 4, 0.5);
        let v = vec_mat(&a);
        // Column-stacking: first three entries are column 0.
        assert_eq!(&v[0..3], &[0.5, 4.5, 8.5]);
        let back = unvec_mat(&v, 3, 4).unwrap();
        assert_eq!(back, a);
    }

    #[test]
    fn vec_trick() {
        // vec(A X B) = (B^T (x) A) vec(X).
        let a = seq(2, 3, 1.0);
        let x = seq(3, 2, -2.0);
        let b = seq(2, 4, 0.25);
        let lhs = vec_mat(&a.matmul(&x).unwrap().matmul(&b).unwrap());
        let rhs = kron(&b.transpose(), &a);
        let rv = rhs.matvec(&vec_mat(&x));
        for (u, v) in lhs.iter().zip(&rv) {
            assert!((u - v).abs() < 1e-12);
        }
    }

    #[test]
    fn commutation_transposes() {
        let x = seq(3, 5, 2.0);
        let k = commutation_matrix(3, 5);
        let lhs = k.matvec(&vec_mat(&x));
        let rhs = vec_mat(&x.transpose());
        assert_eq!(lhs, rhs);
    }

    #[test]
    fn commutation_inverse_pair() {
        let k1 = commutation_matrix(3, 4);
        let k2 = commutation_matrix(4, 3);
        let prod = k1.matmul(&k2).unwrap();
        assert!(prod.is_identity(0.0));
    }

    #[test]
    fn commutation_row_vectors_is_identity() {
        assert!(commutation_matrix(1, 6).is_identity(0.0));
        assert!(commutation_matrix(6, 1).is_identity(0.0));
    }

    #[test]
    fn commutation_is_permutation() {
        let k = commutation_matrix(3, 4);
        for i in 0..12 {
            let row_ones = (0..12).filter(|&j| k.get(i, j) != 0.0).count();
            let col_ones = (0..12).filter(|&j| k.get(j, i) != 0.0).count();
            assert_eq!(row_ones, 1);
            assert_eq!(col_ones, 1);
        }
    }

    #[test]
    fn oplus_bar_symmetric_in_arguments() {
        let a = seq(3, 3, 1.0);
        let b = seq(3, 3, -5.0);
        let ab = oplus_bar(&a, &b).unwrap();
        let ba = oplus_bar(&b, &a).unwrap();
        assert_eq!(ab, ba);
    }

    #[test]
    fn oplus_bar_identity_pair() {
        // I (+) I = 2 I.
        let i3 = DenseMatrix::identity(3);
        let s = oplus_bar(&i3, &i3).unwrap();
        assert_eq!(s, DenseMatrix::identity(9).scale(2.0));
    }

    #[test]
    fn oplus_bar_rejects_mismatch() {
        let a = DenseMatrix::identity(2);
        let b = DenseMatrix::identity(3);
        assert!(oplus_bar(&a, &b).is_err());
    }
}
