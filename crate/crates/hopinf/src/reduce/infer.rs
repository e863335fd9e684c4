//! The inference algorithms: generic least squares, the symmetric- and
//! skew-constrained structure-preserving variants, and the separable
//! baseline that fits the two diagonal blocks independently.

use super::{InferenceInputs, ReduceError};
use crate::basis::PodKind;
use crate::matkit::{
    constrained_lstsq, lstsq_opinf, solve_gradient_system, DenseMatrix, MatError, SymmetryKind,
};

/// How the symmetric-constrained canonical problem is solved.
///
/// `Exact` keeps the true normal equations with the reduced structure
/// matrix Jhat on the left. `JtjApproxIdentity` replaces Jhat'Jhat by the
/// identity, which decouples the solve; the two coincide whenever the basis
/// makes Jhat exactly canonical (the cotangent lift).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CanonicalVariant {
    Exact,
    JtjApproxIdentity,
}

/// Map a singular solve at eta = 0 to an error that carries a usable ridge
/// suggestion scaled by the data Gram, trace(B B') / n.
fn hint_on_singular(
    res: Result<DenseMatrix, MatError>,
    eta: f64,
    data: &DenseMatrix,
) -> Result<DenseMatrix, ReduceError> {
    match res {
        Err(MatError::RankDeficient) if eta == 0.0 => {
            let n = data.rows().max(1) as f64;
            let scale = data.frob_norm().powi(2) / n;
            Err(ReduceError::Singular { suggested: 1e-10 * scale.max(1.0) })
        }
        other => Ok(other?),
    }
}

/// Unconstrained fit of xhat_t ~ D xhat with ridge weight eta.
pub fn opinf_generic(
    xhat: &DenseMatrix,
    xhat_t: &DenseMatrix,
    eta: f64,
) -> Result<DenseMatrix, ReduceError> {
    hint_on_singular(lstsq_opinf(xhat, xhat_t, eta), eta, xhat)
}

/// Symmetric-constrained inference of the quadratic energy block Ahat from
/// canonical trajectory data: fit xhat_t ~ Jhat (Ahat xhat + grad f).
pub fn opinf_canonical(
    inputs: &InferenceInputs,
    variant: CanonicalVariant,
) -> Result<DenseMatrix, ReduceError> {
    let jhat = inputs
        .jhat
        .as_ref()
        .ok_or(ReduceError::MissingInput("the reduced structure matrix"))?;
    let n = inputs.xhat.rows();
    let zero_grad;
    let grad = match &inputs.grad {
        Some(g) => g,
        None => {
            zero_grad = DenseMatrix::zeros(n, inputs.xhat.cols());
            &zero_grad
        }
    };
    let ahat = match variant {
        CanonicalVariant::Exact => {
            let c = inputs.xhat_t.sub(&jhat.matmul(grad)?)?;
            let res = constrained_lstsq(jhat, &inputs.xhat, &c, SymmetryKind::Symmetric, inputs.eta);
            hint_on_singular(res, inputs.eta, &inputs.xhat)?
        }
        CanonicalVariant::JtjApproxIdentity => {
            let q = inputs.xhat.matmul(&inputs.xhat.transpose())?;
            let m0 = jhat
                .transpose()
                .matmul(&inputs.xhat_t)?
                .sub(grad)?
                .matmul(&inputs.xhat.transpose())?;
            let m = m0.add(&m0.transpose())?;
            let res = solve_gradient_system(
                &DenseMatrix::identity(n),
                &q,
                &m,
                inputs.eta,
                SymmetryKind::Symmetric,
            );
            hint_on_singular(res, inputs.eta, &inputs.xhat)?
        }
    };
    Ok(ahat.symmetrize(1.0))
}

/// Skew-constrained inference of the structure matrix Lhat from gradient
/// snapshots: fit xhat_t ~ Lhat grad H.
pub fn opinf_noncanonical(inputs: &InferenceInputs) -> Result<DenseMatrix, ReduceError> {
    let grad = inputs
        .grad
        .as_ref()
        .ok_or(ReduceError::MissingInput("gradient snapshots"))?;
    let id = DenseMatrix::identity(grad.rows());
    let res = constrained_lstsq(&id, grad, &inputs.xhat_t, SymmetryKind::Skew, inputs.eta);
    let lhat = hint_on_singular(res, inputs.eta, grad)?;
    Ok(lhat.symmetrize(-1.0))
}

/// Separable baseline: two independent symmetric fits of the q- and p-block
/// energies, returning blockdiag(Aq, Ap). Off-diagonal coupling is
/// structurally zero, which is exactly what makes this method fail on
/// nonseparable problems.
pub fn opinf_legacy_separable(
    inputs: &InferenceInputs,
    kind: PodKind,
) -> Result<DenseMatrix, ReduceError> {
    if kind != PodKind::CotangentLift {
        return Err(ReduceError::NeedsCotangentBasis(kind.label()));
    }
    let n = inputs.xhat.rows();
    if n % 2 != 0 {
        return Err(ReduceError::Mat(MatError::DimensionMismatch {
            expected: "even reduced dimension".into(),
            got: format!("{n}"),
        }));
    }
    let m = n / 2;
    let ns = inputs.xhat.cols();
    let xq = inputs.xhat.row_block(0, m);
    let xp = inputs.xhat.row_block(m, m);
    let xqt = inputs.xhat_t.row_block(0, m);
    let xpt = inputs.xhat_t.row_block(m, m);
    let (gq, gp) = match &inputs.grad {
        Some(g) => (g.row_block(0, m), g.row_block(m, m)),
        None => (DenseMatrix::zeros(m, ns), DenseMatrix::zeros(m, ns)),
    };
    let id = DenseMatrix::identity(m);
    // p' = -Aq q - grad_q f, so Aq fits -(Xp_t + Gq) against Xq.
    let cq = xpt.add(&gq)?.scale(-1.0);
    let aq = hint_on_singular(
        constrained_lstsq(&id, &xq, &cq, SymmetryKind::Symmetric, inputs.eta),
        inputs.eta,
        &xq,
    )?;
    // q' = Ap p + grad_p f, so Ap fits Xq_t - Gp against Xp.
    let cp = xqt.sub(&gp)?;
    let ap = hint_on_singular(
        constrained_lstsq(&id, &xp, &cp, SymmetryKind::Symmetric, inputs.eta),
        inputs.eta,
        &xp,
    )?;
    Ok(aq.symmetrize(1.0).block_diag(&ap.symmetrize(1.0)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::basis::pod_ordinary;
    use crate::matkit::svd;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random_matrix(rows: usize, cols: usize, seed: u64) -> DenseMatrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        DenseMatrix::from_fn(rows, cols, |_, _| rng.gen_range(-1.0..1.0))
    }

    fn canonical_j(n: usize) -> DenseMatrix {
        let half = n / 2;
        DenseMatrix::from_fn(n, n, |i, j| {
            if j == i + half {
                1.0
            } else if i == j + half {
                -1.0
            } else {
                0.0
            }
        })
    }

    fn rel_err(have: &DenseMatrix, want: &DenseMatrix) -> f64 {
        have.sub(want).unwrap().frob_norm() / want.frob_norm()
    }

    #[test]
    fn canonical_exact_recovers_manufactured_operator() {
        let n = 6;
        let a0 = random_matrix(n, n, 1).symmetrize(1.0);
        let j = canonical_j(n);
        let xhat = random_matrix(n, 20, 2);
        let grad = random_matrix(n, 20, 3);
        // Exact derivatives of xhat' = J (A0 xhat + grad f).
        let xhat_t = j.matmul(&a0.matmul(&xhat).unwrap().add(&grad).unwrap()).unwrap();
        let inputs = InferenceInputs {
            xhat,
            xhat_t,
            grad: Some(grad),
            jhat: Some(j),
            eta: 0.0,
        };
        let a = opinf_canonical(&inputs, CanonicalVariant::Exact).unwrap();
        assert!(rel_err(&a, &a0) < 1e-8, "error {}", rel_err(&a, &a0));
    }

    #[test]
    fn exact_and_approx_coincide_for_canonical_structure() {
        // J'J = I exactly, so the approximation step changes nothing.
        let n = 6;
        let a0 = random_matrix(n, n, 4).symmetrize(1.0);
        let j = canonical_j(n);
        let xhat = random_matrix(n, 15, 5);
        let xhat_t = j.matmul(&a0.matmul(&xhat).unwrap()).unwrap();
        let inputs = InferenceInputs { xhat, xhat_t, grad: None, jhat: Some(j), eta: 1e-10 };
        let exact = opinf_canonical(&inputs, CanonicalVariant::Exact).unwrap();
        let approx = opinf_canonical(&inputs, CanonicalVariant::JtjApproxIdentity).unwrap();
        assert!(exact.sub(&approx).unwrap().max_abs() < 1e-10);
    }

    #[test]
    fn ridge_returns_zero_on_zero_data() {
        let n = 4;
        let inputs = InferenceInputs {
            xhat: DenseMatrix::zeros(n, 8),
            xhat_t: DenseMatrix::zeros(n, 8),
            grad: None,
            jhat: Some(canonical_j(n)),
            eta: 1e-3,
        };
        let a = opinf_canonical(&inputs, CanonicalVariant::Exact).unwrap();
        assert!(a.max_abs() < 1e-14);
        let b = opinf_canonical(&inputs, CanonicalVariant::JtjApproxIdentity).unwrap();
        assert!(b.max_abs() < 1e-14);
    }

    #[test]
    fn singular_system_suggests_a_ridge() {
        // Rank-1 data cannot determine a 4x4 operator at eta = 0; the error
        // should point at the fix and scale the suggestion with the data.
        let n = 4;
        let col = random_matrix(n, 1, 40);
        let xhat = DenseMatrix::from_fn(n, 9, |i, _| col.get(i, 0));
        let err = opinf_generic(&xhat, &xhat, 0.0).unwrap_err();
        match err {
            ReduceError::Singular { suggested } => {
                assert!(suggested > 0.0);
                let expect = 1e-10 * (xhat.frob_norm().powi(2) / n as f64).max(1.0);
                assert!((suggested - expect).abs() < 1e-18);
            }
            other => panic!("expected a ridge suggestion, got {other:?}"),
        }
        assert!(format!("{err}").contains("eta"));
        // With the suggested ridge the same fit goes through.
        let suggested = match err {
            ReduceError::Singular { suggested } => suggested,
            _ => unreachable!(),
        };
        opinf_generic(&xhat, &xhat, suggested).unwrap();
    }

    #[test]
    fn noncanonical_recovers_manufactured_skew_operator() {
        let n = 5;
        let l0 = {
            let r = random_matrix(n, n, 6);
            r.sub(&r.transpose()).unwrap()
        };
        let grad = random_matrix(n, 15, 7);
        let xhat_t = l0.matmul(&grad).unwrap();
        let inputs = InferenceInputs {
            xhat: DenseMatrix::zeros(n, 15),
            xhat_t,
            grad: Some(grad),
            jhat: None,
            eta: 0.0,
        };
        let l = opinf_noncanonical(&inputs).unwrap();
        assert!(rel_err(&l, &l0) < 1e-8);
        assert!(l.symmetry_defect(-1.0) < 1e-12);
    }

    #[test]
    fn noncanonical_zero_derivatives_give_zero_operator() {
        let n = 5;
        let inputs = InferenceInputs {
            xhat: DenseMatrix::zeros(n, 12),
            xhat_t: DenseMatrix::zeros(n, 12),
            grad: Some(random_matrix(n, 12, 8)),
            jhat: None,
            eta: 0.0,
        };
        let l = opinf_noncanonical(&inputs).unwrap();
        assert!(l.max_abs() < 1e-12);
    }

    #[test]
    fn separable_recovery_matches_canonical_on_blockdiagonal_truth() {
        let m = 2;
        let n = 2 * m;
        let aq = random_matrix(m, m, 9).symmetrize(1.0);
        let ap = random_matrix(m, m, 10).symmetrize(1.0);
        let a0 = aq.block_diag(&ap);
        let j = canonical_j(n);
        let xhat = random_matrix(n, 12, 11);
        let xhat_t = j.matmul(&a0.matmul(&xhat).unwrap()).unwrap();
        let inputs = InferenceInputs {
            xhat,
            xhat_t,
            grad: None,
            jhat: Some(j),
            eta: 0.0,
        };
        let sep = opinf_legacy_separable(&inputs, PodKind::CotangentLift).unwrap();
        assert!(rel_err(&sep, &a0) < 1e-8);
        let full = opinf_canonical(&inputs, CanonicalVariant::Exact).unwrap();
        assert!(sep.sub(&full).unwrap().max_abs() < 1e-8);
        // Off-diagonal blocks are structural zeros.
        for i in 0..m {
            for j in 0..m {
                assert_eq!(sep.get(i, m + j), 0.0);
                assert_eq!(sep.get(m + i, j), 0.0);
            }
        }
    }

    #[test]
    fn separable_requires_cotangent_basis() {
        let inputs = InferenceInputs {
            xhat: DenseMatrix::zeros(4, 6),
            xhat_t: DenseMatrix::zeros(4, 6),
            grad: None,
            jhat: None,
            eta: 1e-6,
        };
        let err = opinf_legacy_separable(&inputs, PodKind::Ordinary).unwrap_err();
        assert!(matches!(err, ReduceError::NeedsCotangentBasis(_)));
        // With the right basis kind, zero data and ridge give zero blocks.
        let a = opinf_legacy_separable(&inputs, PodKind::CotangentLift).unwrap();
        assert!(a.max_abs() < 1e-14);
    }

    #[test]
    fn generic_truncation_equals_resolving() {
        // Projected snapshots from one SVD have a diagonal Gram matrix, so
        // the leading block of the size-6 solution is the size-3 solution.
        let x = random_matrix(10, 30, 12);
        let basis = pod_ordinary(&x, 6, true).unwrap();
        let xhat = basis.project_states(&x).unwrap();
        let xhat_t = random_matrix(6, 30, 13);
        let big = opinf_generic(&xhat, &xhat_t, 0.0).unwrap();
        let small = opinf_generic(&xhat.top_left(3, 30), &xhat_t.top_left(3, 30), 0.0).unwrap();
        assert!(big.top_left(3, 3).sub(&small).unwrap().max_abs() < 1e-10);
    }

    #[test]
    fn constrained_truncation_equals_resolving_in_diagonal_case() {
        // Diagonal solution plus diagonal B B' is the stated hypothesis.
        let n = 4;
        let ns = 12;
        let v = svd(&random_matrix(ns, n, 14)).unwrap().u; // orthonormal columns
        let scales = [2.0, 1.5, 1.0, 0.7];
        let b = DenseMatrix::from_fn(n, ns, |i, j| scales[i] * v.get(j, i));
        let a0 = DenseMatrix::from_fn(n, n, |i, j| if i == j { (i + 1) as f64 } else { 0.0 });
        let c = a0.matmul(&b).unwrap();
        let id = DenseMatrix::identity(n);
        let eta = 1e-8;
        let big = constrained_lstsq(&id, &b, &c, SymmetryKind::Symmetric, eta).unwrap();
        let small = constrained_lstsq(
            &DenseMatrix::identity(2),
            &b.top_left(2, ns),
            &c.top_left(2, ns),
            SymmetryKind::Symmetric,
            eta,
        )
        .unwrap();
        assert!(big.top_left(2, 2).sub(&small).unwrap().max_abs() < 1e-10);
    }
}
