use super::stencils::CirculantStencils;
use super::{HamiltonianModel, ModelError, ScalarFn, Structure};
use crate::matkit::DenseMatrix;

/// Linear wave equation on a periodic interval: speed c, length l, `cells`
/// grid intervals, and the initial-condition parameter `alpha` steering the
/// width of the spline bump.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WaveParams {
    pub c: f64,
    pub l: f64,
    pub cells: usize,
    pub alpha: f64,
}

impl Default for WaveParams {
    fn default() -> Self {
        Self { c: 0.1, l: 1.0, cells: 500, alpha: 5.0 }
    }
}

/// Compactly supported cubic bump: 1 at y=0, 1/4 at y=1, 0 from y=2 on.
pub fn spline_bump(y: f64) -> f64 {
    if y <= 1.0 {
        1.0 - 1.5 * y * y + 0.75 * y * y * y
    } else if y <= 2.0 {
        0.25 * (2.0 - y).powi(3)
    } else {
        0.0
    }
}

/// Canonical wave model with A = blockdiag(-c^2 D2, I) and
/// H(x) = (1/2) x' A x; the initial state is the spline bump at rest.
pub fn build_wave(p: &WaveParams) -> Result<HamiltonianModel, ModelError> {
    if !(p.c > 0.0) {
        return Err(ModelError::BadParam { name: "c", msg: format!("need c > 0, got {}", p.c) });
    }
    if !(p.l > 0.0) {
        return Err(ModelError::BadParam { name: "l", msg: format!("need l > 0, got {}", p.l) });
    }
    if p.cells < 8 {
        return Err(ModelError::BadParam {
            name: "cells",
            msg: format!("need at least 8 cells, got {}", p.cells),
        });
    }
    let m = p.cells;
    let ds = p.l / m as f64;
    let st = CirculantStencils::new(m, ds);

    let mut a = DenseMatrix::zeros(2 * m, 2 * m);
    for i in 0..m {
        for j in 0..m {
            a.set(i, j, -p.c * p.c * st.d2.get(i, j));
        }
        a.set(m + i, m + i, 1.0);
    }

    let mut x0 = vec![0.0; 2 * m];
    for (i, q) in x0.iter_mut().take(m).enumerate() {
        let s = i as f64 * ds;
        *q = spline_bump(p.alpha * (s - p.l / 2.0).abs());
    }

    let c2 = p.c * p.c;
    let ham = move |x: &[f64]| -> f64 {
        let m = x.len() / 2;
        let mut h = 0.0;
        for i in 0..m {
            let dq = (x[(i + 1) % m] - x[i]) / ds;
            h += 0.5 * x[m + i] * x[m + i] + 0.5 * c2 * dq * dq;
        }
        h
    };
    let a_for_grad = a.clone();
    let conserved: Vec<(String, ScalarFn)> = vec![("H".into(), Box::new(ham))];

    let model = HamiltonianModel {
        name: "wave".into(),
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
