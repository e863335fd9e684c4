//! Full-order Hamiltonian benchmark systems.
//!
//! Every model here evolves by `dx/dt = L(x) grad H(x)` for some constant or
//! state-dependent skew-symmetric operator L. Canonical systems use the
//! block form J(q, p) = (p, -q). Builders return a fully populated
//! [`HamiltonianModel`] whose initial state, conserved functionals, and
//! operator pieces are ready for time integration and reduction.

mod bbm;
mod external;
mod kdv;
mod nonsep;
pub mod spectral;
mod stencils;
mod wave;

pub use bbm::{build_bbm, BbmParams};
pub use external::{load_external, read_matrix_market};
pub use kdv::{build_kdv_v1, build_kdv_v2, kdv_fom_step_fns, kdv_v2_fom_step_fns, v2_operator, KdvParams};
pub use nonsep::{build_nonseparable, nonsep_exact_state, NonsepParams};
pub use stencils::CirculantStencils;
pub use wave::{build_wave, spline_bump, WaveParams};

use crate::matkit::{DenseMatrix, MatError};
use thiserror::Error;

pub type ScalarFn = Box<dyn Fn(&[f64]) -> f64 + Send + Sync>;
pub type StateFn = Box<dyn Fn(&[f64]) -> Vec<f64> + Send + Sync>;
pub type MatrixFn = Box<dyn Fn(&[f64]) -> DenseMatrix + Send + Sync>;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("invalid parameter {name}: {msg}")]
    BadParam { name: &'static str, msg: String },
    #[error("mass matrix is not symmetric positive definite: {0}")]
    MassNotSpd(String),
    #[error("stiffness matrix is not symmetric: relative defect {defect:.3e}")]
    StiffnessNotSymmetric { defect: f64 },
    #[error("snapshot dimension mismatch: expected {expected}, got {got}")]
    SnapshotDims { expected: usize, got: usize },
    #[error(transparent)]
    Mat(#[from] MatError),
}

/// Poisson structure of a model: canonical J, a constant skew matrix, or a
/// state-dependent skew matrix evaluated on demand.
pub enum Structure {
    CanonicalJ,
    ConstantL(DenseMatrix),
    StateDependentL(MatrixFn),
}

/// A finite-dimensional Hamiltonian system dx/dt = L(x) grad H(x).
///
/// `hamiltonian` and `grad_h` are kept gradient-consistent: `grad_h` is the
/// literal gradient of `hamiltonian`, so discrete conservation statements
/// hold without hidden scaling factors. Physically scaled quantities (with
/// the grid weight `ds`) live in `conserved`, which is what gets reported.
pub struct HamiltonianModel {
    pub name: String,
    pub dim: usize,
    pub structure: Structure,
    pub hamiltonian: ScalarFn,
    pub grad_h: StateFn,
    /// A with grad H(x) = A x + grad f(x) when the gradient has a linear part.
    pub linear: Option<DenseMatrix>,
    /// Gradient of the nonlinear part f, when one exists.
    pub grad_f: Option<StateFn>,
    pub conserved: Vec<(String, ScalarFn)>,
    pub x0: Vec<f64>,
    pub ds: f64,
    /// Optional fast right-hand side (spectral or stencil path); must agree
    /// with the assembled L grad H to roundoff.
    pub rhs_fast: Option<StateFn>,
}

/// Canonical J applied to a stacked gradient: J (g_q, g_p) = (g_p, -g_q).
pub fn j_apply(g: &[f64]) -> Vec<f64> {
    assert!(g.len() % 2 == 0, "canonical J needs even dimension");
    let m = g.len() / 2;
    let mut out = vec![0.0; g.len()];
    for i in 0..m {
        out[i] = g[m + i];
        out[m + i] = -g[i];
    }
    out
}

/// Dense canonical J of (even) dimension n, for projection and inference.
pub fn j_dense(n: usize) -> DenseMatrix {
    assert!(n % 2 == 0);
    let m = n / 2;
    let mut j = DenseMatrix::zeros(n, n);
    for i in 0..m {
        j.set(i, m + i, 1.0);
        j.set(m + i, i, -1.0);
    }
    j
}

impl HamiltonianModel {
    pub fn hamiltonian(&self, x: &[f64]) -> f64 {
        (self.hamiltonian)(x)
    }

    pub fn grad_h(&self, x: &[f64]) -> Vec<f64> {
        (self.grad_h)(x)
    }

    /// Apply the Poisson operator at state `x` to the vector `g`.
    pub fn apply_l(&self, x: &[f64], g: &[f64]) -> Vec<f64> {
        match &self.structure {
            Structure::CanonicalJ => j_apply(g),
            Structure::ConstantL(l) => l.matvec(g),
            Structure::StateDependentL(f) => f(x).matvec(g),
        }
    }

    /// Right-hand side L(x) grad H(x), using the fast path when available.
    pub fn rhs(&self, x: &[f64]) -> Vec<f64> {
        if let Some(f) = &self.rhs_fast {
            return f(x);
        }
        self.apply_l(x, &self.grad_h(x))
    }

    /// Dense Poisson operator at state `x` (J materialized for canonical models).
    pub fn structure_matrix(&self, x: &[f64]) -> DenseMatrix {
        match &self.structure {
            Structure::CanonicalJ => j_dense(self.dim),
            Structure::ConstantL(l) => l.clone(),
            Structure::StateDependentL(f) => f(x),
        }
    }

    /// Check structural invariants: skewness of constant L, even canonical
    /// dimension, and agreement grad_h = A x + grad f on probe states.
    pub fn validate(&self) -> Result<(), ModelError> {
        if self.x0.len() != self.dim {
            return Err(ModelError::SnapshotDims { expected: self.dim, got: self.x0.len() });
        }
        match &self.structure {
            Structure::CanonicalJ => {
                if self.dim % 2 != 0 {
                    return Err(ModelError::BadParam {
                        name: "dim",
                        msg: format!("canonical structure needs even dim, got {}", self.dim),
                    });
                }
            }
            Structure::ConstantL(l) => {
                let defect = l.symmetry_defect(-1.0);
                if defect > 1e-12 * l.frob_norm().max(1.0) {
                    return Err(MatError::StructureViolation {
                        property: "skew-symmetric constant L".into(),
                        defect,
                    }
                    .into());
                }
            }
            Structure::StateDependentL(_) => {}
        }
        if let (Some(a), Some(gf)) = (&self.linear, &self.grad_f) {
            for probe in [self.x0.clone(), probe_state(self.dim, 7)] {
                let mut want = a.matvec(&probe);
                for (w, f) in want.iter_mut().zip(gf(&probe)) {
                    *w += f;
                }
                let got = self.grad_h(&probe);
                let scale = want.iter().fold(1.0_f64, |m, v| m.max(v.abs()));
                let err = want
                    .iter()
                    .zip(&got)
                    .fold(0.0_f64, |m, (w, g)| m.max((w - g).abs()));
                if err > 1e-10 * scale {
                    return Err(MatError::StructureViolation {
                        property: "grad_h = A x + grad_f(x)".into(),
                        defect: err / scale,
                    }
                    .into());
                }
            }
        }
        Ok(())
    }
}

/// Deterministic smooth probe state used by validation checks.
fn probe_state(n: usize, seed: u64) -> Vec<f64> {
    (0..n)
        .map(|i| {
            let t = (i as f64 + seed as f64 * 0.7) * 0.37;
            0.5 * t.sin() + 0.3 * (2.0 * t).cos()
        })
        .collect()
}

pub(crate) fn sech(x: f64) -> f64 {
    1.0 / x.cosh()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_state(rng: &mut ChaCha8Rng, n: usize, scale: f64) -> Vec<f64> {
        (0..n).map(|_| scale * (rng.gen::<f64>() * 2.0 - 1.0)).collect()
    }

    /// grad_h must be the true gradient of hamiltonian on random states.
    fn check_gradient(model: &HamiltonianModel, states: usize) {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        for _ in 0..states {
            let x = random_state(&mut rng, model.dim, 1.0);
            let norm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
            let h = 1e-6 * (1.0 + norm);
            let g = model.grad_h(&x);
            let mut fd = vec![0.0; model.dim];
            let mut xp = x.clone();
            for i in 0..model.dim {
                xp[i] = x[i] + h;
                let hp = model.hamiltonian(&xp);
                xp[i] = x[i] - h;
                let hm = model.hamiltonian(&xp);
                xp[i] = x[i];
                fd[i] = (hp - hm) / (2.0 * h);
            }
            let scale = g.iter().fold(1.0_f64, |m, v| m.max(v.abs()));
            let err = g.iter().zip(&fd).fold(0.0_f64, |m, (a, b)| m.max((a - b).abs()));
            assert!(err / scale <= 1e-6, "gradient mismatch {} for {}", err / scale, model.name);
        }
    }

    fn all_small_models() -> Vec<HamiltonianModel> {
        vec![
            build_wave(&WaveParams { c: 0.1, l: 1.0, cells: 16, alpha: 5.0 }).unwrap(),
            build_nonseparable(&NonsepParams { alpha: 3.0, points: 16, length: 1.0 }).unwrap(),
            build_kdv_v1(&KdvParams { alpha: -6.0, rho: 0.0, nu: -1.0, l: 5.0, points: 24 })
                .unwrap(),
            build_kdv_v2(&KdvParams { alpha: -6.0, rho: 0.0, nu: -1.0, l: 5.0, points: 24 })
                .unwrap(),
            build_bbm(&BbmParams { alpha: 1.0, beta: 1.0, gamma: 1e-4, l: 1.0, points: 32 })
                .unwrap(),
        ]
    }

    #[test]
    fn gradients_match_hamiltonians() {
        for model in all_small_models() {
            check_gradient(&model, 10);
        }
    }

    #[test]
    fn structural_invariants_hold() {
        for model in all_small_models() {
            model.validate().unwrap();
        }
    }

    #[test]
    fn fast_rhs_agrees_with_operator_form() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for model in all_small_models() {
            if model.rhs_fast.is_none() {
                continue;
            }
            for _ in 0..5 {
                let x = random_state(&mut rng, model.dim, 1.0);
                let fast = model.rhs(&x);
                let slow = model.apply_l(&x, &model.grad_h(&x));
                let scale = slow.iter().fold(1.0_f64, |m, v| m.max(v.abs()));
                for (a, b) in fast.iter().zip(&slow) {
                    assert!((a - b).abs() <= 1e-9 * scale.max(1.0), "{}", model.name);
                }
            }
        }
    }

    #[test]
    fn canonical_j_rotates_blocks() {
        let g = vec![1.0, 2.0, 3.0, 4.0];
        assert_eq!(j_apply(&g), vec![3.0, 4.0, -1.0, -2.0]);
        let jd = j_dense(4);
        assert_eq!(jd.matvec(&g), j_apply(&g));
        assert!(jd.symmetry_defect(-1.0) == 0.0);
    }

    #[test]
    fn validate_rejects_nonskew_constant_operator() {
        let mut l = DenseMatrix::zeros(2, 2);
        l.set(0, 1, 1.0);
        l.set(1, 0, -0.9);
        let model = HamiltonianModel {
            name: "bad".into(),
            dim: 2,
            structure: Structure::ConstantL(l),
            hamiltonian: Box::new(|x: &[f64]| 0.5 * (x[0] * x[0] + x[1] * x[1])),
            grad_h: Box::new(|x: &[f64]| x.to_vec()),
            linear: None,
            grad_f: None,
            conserved: vec![],
            x0: vec![1.0, 0.0],
            ds: 1.0,
            rhs_fast: None,
        };
        assert!(model.validate().is_err());
    }
}
