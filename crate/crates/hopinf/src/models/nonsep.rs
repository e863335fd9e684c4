use super::{HamiltonianModel, ModelError, ScalarFn, Structure};
use crate::matkit::DenseMatrix;

/// Nonseparable canonical model with pointwise energy H = 1 + sum q_i p_i.
/// `points` grid values on [0, length]; `alpha` steers the initial profile.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NonsepParams {
    pub alpha: f64,
    pub points: usize,
    pub length: f64,
}

impl Default for NonsepParams {
    fn default() -> Self {
        Self { alpha: 5.0, points: 500, length: 1.0 }
    }
}

/// Exact solution q(t) = e^t q0, p(t) = e^{-t} p0, stacked as one state.
pub fn nonsep_exact_state(x0: &[f64], t: f64) -> Vec<f64> {
    let m = x0.len() / 2;
    let mut x = vec![0.0; x0.len()];
    for i in 0..m {
        x[i] = t.exp() * x0[i];
        x[m + i] = (-t).exp() * x0[m + i];
    }
    x
}

/// Canonical model with A = [[0, I], [I, 0]], so the dynamics decouple into
/// exponential growth of q against decay of p. The constant 1 in H is kept
/// for reporting but has no dynamical effect.
pub fn build_nonseparable(p: &NonsepParams) -> Result<HamiltonianModel, ModelError> {
    if !(p.length > 0.0) {
        return Err(ModelError::BadParam {
            name: "length",
            msg: format!("need length > 0, got {}", p.length),
        });
    }
    if p.points < 8 {
        return Err(ModelError::BadParam {
            name: "points",
            msg: format!("need at least 8 points, got {}", p.points),
        });
    }
    let m = p.points;
    let ds = p.length / (m - 1) as f64;

    let mut a = DenseMatrix::zeros(2 * m, 2 * m);
    for i in 0..m {
        a.set(i, m + i, 1.0);
        a.set(m + i, i, 1.0);
    }

    let mut x0 = vec![0.0; 2 * m];
    for i in 0..m {
        let s = i as f64 * ds;
        x0[i] = (-p.alpha * (s + 1.0)).exp() * (p.alpha * s).sin();
        x0[m + i] = s;
    }

    let ham = |x: &[f64]| -> f64 {
        let m = x.len() / 2;
        1.0 + (0..m).map(|i| x[i] * x[m + i]).sum::<f64>()
    };
    let a_for_grad = a.clone();
    let conserved: Vec<(String, ScalarFn)> = vec![("H".into(), Box::new(ham))];

    let model = HamiltonianModel {
        name: "nonsep".into(),
        dim: 2 * m,
        structure: Structure::CanonicalJ,
        hamiltonian: Box::new(ham),
        grad_h: Box::new(move |x: &[f64]| a_for_grad.matvec(x)),
        linear: Some(a),
        grad_f: None,
        conserved,
        x0,
        ds,
        rhs_fast: None,
    };
    debug_assert!(model.validate().is_ok());
    Ok(model)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gradient_vanishes_at_origin_up_to_constant() {
        let model = build_nonseparable(&NonsepParams::default()).unwrap();
        let zero = vec![0.0; model.dim];
        assert!(model.grad_h(&zero).iter().all(|&g| g == 0.0));
        assert_eq!(model.hamiltonian(&zero), 1.0);
    }

    #[test]
    fn exact_solution_satisfies_ode() {
        let p = NonsepParams { alpha: 3.0, points: 20, length: 1.0 };
        let model = build_nonseparable(&p).unwrap();
        // Central difference of the exact flow vs the model right-hand side.
        let t = 0.37;
        let h = 1e-6;
        let x = nonsep_exact_state(&model.x0, t);
        let xp = nonsep_exact_state(&model.x0, t + h);
        let xm = nonsep_exact_state(&model.x0, t - h);
        let rhs = model.rhs(&x);
        for i in 0..model.dim {
            let fd = (xp[i] - xm[i]) / (2.0 * h);
            assert!((fd - rhs[i]).abs() < 1e-8 * (1.0 + rhs[i].abs()));
        }
    }

    #[test]
    fn a_is_symmetric_with_zero_diagonal_blocks() {
        let model = build_nonseparable(&NonsepParams { alpha: 5.0, points: 10, length: 1.0 })
            .unwrap();
        let a = model.linear.as_ref().unwrap();
        assert!(a.symmetry_defect(1.0) == 0.0);
        let m = model.dim / 2;
        for i in 0..m {
            for j in 0..m {
                assert_eq!(a.get(i, j), 0.0);
                assert_eq!(a.get(m + i, m + j), 0.0);
            }
        }
    }

    #[test]
    fn hamiltonian_constant_along_exact_flow() {
        let model = build_nonseparable(&NonsepParams { alpha: 4.0, points: 12, length: 1.0 })
            .unwrap();
        let h0 = model.hamiltonian(&model.x0);
        for t in [0.5, 1.0, 2.0] {
            let ht = model.hamiltonian(&nonsep_exact_state(&model.x0, t));
            assert!((ht - h0).abs() < 1e-10 * h0.abs());
        }
    }

    #[test]
    fn momentum_block_is_grid() {
        let p = NonsepParams { alpha: 5.0, points: 11, length: 1.0 };
        let model = build_nonseparable(&p).unwrap();
        assert!((model.x0[11] - 0.0).abs() < 1e-15);
        assert!((model.x0[21] - 1.0).abs() < 1e-12);
    }
}
