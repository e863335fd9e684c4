use super::{DenseMatrix, MatError, SymmetryKind};
use nalgebra::{Cholesky, DMatrix, SymmetricEigen};

/// Generic operator-inference least squares:
/// minimize ||Xhat_t - D Xhat||_F^2 + eta ||D||_F^2 over all n x n D.
///
/// Normal equations: D (Xhat Xhat^T + eta I) = Xhat_t Xhat^T.
pub fn lstsq_opinf(
    xhat: &DenseMatrix,
    xhat_t: &DenseMatrix,
    eta: f64,
) -> Result<DenseMatrix, MatError> {
    if eta < 0.0 {
        return Err(MatError::NegativeEta(eta));
    }
    if xhat.rows() != xhat_t.rows() || xhat.cols() != xhat_t.cols() {
        return Err(MatError::DimensionMismatch {
            expected: format!("{}x{}", xhat.rows(), xhat.cols()),
            got: format!("{}x{}", xhat_t.rows(), xhat_t.cols()),
        });
    }
    let n = xhat.rows();
    let x = xhat.to_na();
    let xt = xhat_t.to_na();
    let mut gram = &x * x.transpose();
    for i in 0..n {
        gram[(i, i)] += eta;
    }
    let rhs = &x * xt.transpose(); // (Xhat Xhat_t^T) = (Xhat_t Xhat^T)^T
    let chol = spd_cholesky(gram)?;
    let d_t = chol.solve(&rhs);
    Ok(DenseMatrix::from_na(&d_t.transpose()))
}

/// Cholesky with an explicit near-singularity check so rank-deficient
/// normal matrices surface as an error instead of a wildly scaled solution.
fn spd_cholesky(g: DMatrix<f64>) -> Result<Cholesky<f64, nalgebra::Dyn>, MatError> {
    let chol = g.cholesky().ok_or(MatError::RankDeficient)?;
    let diag = chol.l_dirty().diagonal();
    let dmax = diag.amax();
    let dmin = diag.iter().fold(f64::INFINITY, |m, v| m.min(v.abs()));
    if dmax == 0.0 || dmin <= 1e-13 * dmax {
        return Err(MatError::RankDeficient);
    }
    Ok(chol)
}

/// Symmetry-constrained least squares:
/// minimize ||C - A D B||_F^2 + eta ||D||_F^2 over symmetric (or skew) D.
///
/// The stationarity condition restricted to the constraint class is the
/// n^2 x n^2 linear system
///     (A^T A (+) B B^T + 2 eta I) vec(D) = vec(A^T C B^T +/- B C^T A)
/// with (+) the symmetrized Kronecker sum and sign +/- matching
/// Symmetric/Skew. The system is unique exactly when A and B have maximal
/// rank or eta > 0.
pub fn constrained_lstsq(
    a: &DenseMatrix,
    b: &DenseMatrix,
    c: &DenseMatrix,
    kind: SymmetryKind,
    eta: f64,
) -> Result<DenseMatrix, MatError> {
    if eta < 0.0 {
        return Err(MatError::NegativeEta(eta));
    }
    let n = a.rows();
    if a.cols() != n {
        return Err(MatError::DimensionMismatch {
            expected: "square A".into(),
            got: format!("{}x{}", a.rows(), a.cols()),
        });
    }
    if b.rows() != n || c.rows() != n || b.cols() != c.cols() {
        return Err(MatError::DimensionMismatch {
            expected: format!("B, C of shape {}x*", n),
            got: format!("B {}x{}, C {}x{}", b.rows(), b.cols(), c.rows(), c.cols()),
        });
    }
    let p = if a.is_identity(0.0) {
        DenseMatrix::identity(n)
    } else {
        a.transpose().matmul(a)?
    };
    let q = b.matmul(&b.transpose())?;
    // A^T C B^T, then close under the requested symmetry: the transpose of
    // A^T C B^T is exactly B C^T A.
    let m0 = a.transpose().matmul(c)?.matmul(&b.transpose())?;
    let m = m0.add(&m0.transpose().scale(kind.sign()))?;
    solve_gradient_system(&p, &q, &m, eta, kind)
}

/// Solve the matrix equation  P D Q + Q D P + 2 eta D = M  for D with the
/// requested symmetry, with P and Q symmetric positive semidefinite. This is
/// the unvectorized form of (P (+) Q + 2 eta I) vec(D) = vec(M).
///
/// When P is exactly the identity the equation decouples in the eigenbasis
/// of Q, which turns the n^2 solve into an n x n symmetric eigenproblem. The
/// general case factors the system restricted to the requested symmetry
/// class, n(n+1)/2 or n(n-1)/2 unknowns: the map D -> P D Q + Q D P keeps
/// each class invariant, so the restriction loses nothing, and a null
/// direction of the opposite class can no longer mask a well-posed solve.
pub fn solve_gradient_system(
    p: &DenseMatrix,
    q: &DenseMatrix,
    m: &DenseMatrix,
    eta: f64,
    kind: SymmetryKind,
) -> Result<DenseMatrix, MatError> {
    if eta < 0.0 {
        return Err(MatError::NegativeEta(eta));
    }
    let n = p.rows();
    if p.cols() != n || q.rows() != n || q.cols() != n || m.rows() != n || m.cols() != n {
        return Err(MatError::DimensionMismatch {
            expected: format!("square {n}x{n} P, Q, M"),
            got: format!(
                "P {}x{}, Q {}x{}, M {}x{}",
                p.rows(),
                p.cols(),
                q.rows(),
                q.cols(),
                m.rows(),
                m.cols()
            ),
        });
    }
    if p.is_identity(0.0) {
        return solve_lyapunov_diagonalized(q, m, eta, kind);
    }

    // Index pairs (i, j), i <= j, of the class basis E_ij with entries
    // E[i][j] = 1 and E[j][i] = sign; the skew class has no diagonal.
    let mut pairs = Vec::new();
    for i in 0..n {
        for j in i..n {
            if i == j && kind == SymmetryKind::Skew {
                continue;
            }
            pairs.push((i, j));
        }
    }
    if pairs.is_empty() {
        // The 1 x 1 skew class is {0}, and M symmetrized into it is 0 too.
        return Ok(DenseMatrix::zeros(n, n));
    }
    let sigma = kind.sign();
    // [P E_ij Q + Q E_ij P]_{rs}, using that P and Q are symmetric.
    let entry = |r: usize, s: usize, i: usize, j: usize| -> f64 {
        if i == j {
            p.get(r, i) * q.get(i, s) + q.get(r, i) * p.get(i, s)
        } else {
            p.get(r, i) * q.get(j, s)
                + sigma * p.get(r, j) * q.get(i, s)
                + q.get(r, i) * p.get(j, s)
                + sigma * q.get(r, j) * p.get(i, s)
        }
    };
    let k = pairs.len();
    let mut sys = DMatrix::<f64>::zeros(k, k);
    let mut rhs = nalgebra::DVector::<f64>::zeros(k);
    for (row, &(r, s)) in pairs.iter().enumerate() {
        for (col, &(i, j)) in pairs.iter().enumerate() {
            let mut val = entry(r, s, i, j);
            if r != s {
                val += sigma * entry(s, r, i, j);
            }
            if row == col {
                // ||E_rr||_F^2 = 1, ||E_rs||_F^2 = 2 for r < s.
                val += 2.0 * eta * if r == s { 1.0 } else { 2.0 };
            }
            sys[(row, col)] = val;
        }
        rhs[row] = if r == s { m.get(r, r) } else { m.get(r, s) + sigma * m.get(s, r) };
    }
    let lu = sys.lu();
    let udiag = lu.u().diagonal();
    let umax = udiag.amax();
    let umin = udiag.iter().fold(f64::INFINITY, |acc, v| acc.min(v.abs()));
    if umax == 0.0 || umin <= 1e-13 * umax {
        return Err(MatError::RankDeficient);
    }
    let sol = lu.solve(&rhs).ok_or(MatError::RankDeficient)?;
    let mut d = DenseMatrix::zeros(n, n);
    for (col, &(i, j)) in pairs.iter().enumerate() {
        if i == j {
            d.set(i, i, sol[col]);
        } else {
            d.set(i, j, sol[col]);
            d.set(j, i, sigma * sol[col]);
        }
    }
    Ok(d)
}

/// P = I specialization:  Q D + D Q + 2 eta D = M  decouples entrywise in the
/// eigenbasis of Q as  Dt_ij (lam_i + lam_j + 2 eta) = Mt_ij.
///
/// A vanishing denominator on the diagonal is harmless for the skew class
/// (skew diagonals are identically zero); anywhere else it means the data do
/// not determine D and we surface the rank-deficiency error.
fn solve_lyapunov_diagonalized(
    q: &DenseMatrix,
    m: &DenseMatrix,
    eta: f64,
    kind: SymmetryKind,
) -> Result<DenseMatrix, MatError> {
    let n = q.rows();
    let eig = SymmetricEigen::new(q.symmetrize(1.0).to_na());
    let lam = &eig.eigenvalues;
    let v = &eig.eigenvectors;
    let lam_max = lam.iter().fold(0.0_f64, |acc, &l| acc.max(l.abs()));
    let scale = lam_max.max(2.0 * eta);
    if scale == 0.0 {
        return Err(MatError::RankDeficient);
    }
    let thresh = 1e-13 * scale;
    let mt = v.transpose() * m.to_na() * v;
    let mut dt = DMatrix::<f64>::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            let den = lam[i] + lam[j] + 2.0 * eta;
            if den.abs() > thresh {
                dt[(i, j)] = mt[(i, j)] / den;
            } else if kind == SymmetryKind::Skew && i == j {
                dt[(i, j)] = 0.0;
            } else {
                return Err(MatError::RankDeficient);
            }
        }
    }
    let d = v * dt * v.transpose();
    Ok(DenseMatrix::from_na(&d).symmetrize(kind.sign()))
}
