use super::spectral::{dft, frequencies, idft};
use super::stencils::CirculantStencils;
use super::{sech, HamiltonianModel, ModelError, ScalarFn, Structure};
use crate::matkit::DenseMatrix;
use rustfft::num_complex::Complex;

/// Regularized long-wave parameters: dx/dt = alpha x_s + beta x x_s
/// - gamma dx_ss/dt on the periodic interval [0, l] with `points` values.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BbmParams {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub l: f64,
    pub points: usize,
}

impl Default for BbmParams {
    fn default() -> Self {
        Self { alpha: 1.0, beta: 1.0, gamma: 1e-4, l: 1.0, points: 1024 }
    }
}

/// Fourier multiplier of the governing operator -(1 - gamma d_ss)^{-1} d_s.
/// The Nyquist entry is zeroed so the operator maps real fields to real
/// fields exactly and its dense form is exactly skew.
fn bbm_multiplier(n: usize, l: f64, gamma: f64) -> Vec<Complex<f64>> {
    use std::f64::consts::PI;
    let mut m: Vec<Complex<f64>> = frequencies(n, l)
        .iter()
        .map(|&xi| {
            Complex::new(0.0, -2.0 * PI * xi / (1.0 + 4.0 * gamma * PI * PI * xi * xi))
        })
        .collect();
    if n % 2 == 0 {
        m[n / 2] = Complex::new(0.0, 0.0);
    }
    m
}

/// Pseudospectral model with constant skew L realized by Fourier
/// multiplication; the dense circulant form is materialized for projection
/// and inference, while the fast path transforms on demand.
pub fn build_bbm(p: &BbmParams) -> Result<HamiltonianModel, ModelError> {
    if !(p.gamma > 0.0) {
        return Err(ModelError::BadParam {
            name: "gamma",
            msg: format!("need gamma > 0, got {}", p.gamma),
        });
    }
    if !(p.l > 0.0) {
        return Err(ModelError::BadParam { name: "l", msg: format!("need l > 0, got {}", p.l) });
    }
    if p.points < 8 || !p.points.is_power_of_two() {
        return Err(ModelError::BadParam {
            name: "points",
            msg: format!("need a power of two >= 8 for the fast transform, got {}", p.points),
        });
    }
    let n = p.points;
    let ds = p.l / n as f64;
    let (alpha, beta, gamma) = (p.alpha, p.beta, p.gamma);
    let multiplier = bbm_multiplier(n, p.l, gamma);

    // First column of the circulant operator, then skew-symmetrized to kill
    // transform roundoff.
    let col: Vec<f64> = idft(&multiplier).iter().map(|c| c.re).collect();
    let mut l_dense = DenseMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            l_dense.set(i, j, col[(i + n - j) % n]);
        }
    }
    l_dense = l_dense.symmetrize(-1.0);

    let mult = multiplier.clone();
    let rhs_fast = move |x: &[f64]| -> Vec<f64> {
        let g: Vec<f64> = x.iter().map(|&v| alpha * v + beta / 2.0 * v * v).collect();
        let mut xi = dft(&g);
        for (c, m) in xi.iter_mut().zip(&mult) {
            *c *= m;
        }
        idft(&xi).iter().map(|c| c.re).collect()
    };

    let mut x0 = vec![0.0; n];
    for (j, v) in x0.iter_mut().enumerate() {
        let s = j as f64 * ds;
        let a = sech((1.0 / (5.0 * gamma)).sqrt() * (s - 0.25));
        let b = sech((1.0 / (6.0 * gamma)).sqrt() * (s - 0.35));
        *v = 7.0 * a * a + 3.0 * b * b;
    }

    let ham = move |x: &[f64]| -> f64 {
        x.iter().map(|&v| alpha / 2.0 * v * v + beta / 6.0 * v.powi(3)).sum()
    };
    let st = CirculantStencils::new(n, ds);
    let st_p = st.clone();
    let momentum = move |x: &[f64]| -> f64 {
        let d2x = st_p.apply_d2(x);
        x.iter().zip(&d2x).map(|(&v, &w)| v - gamma * w).sum::<f64>() * ds
    };
    let kinetic = move |x: &[f64]| -> f64 {
        let d1x = st.apply_d1(x);
        x.iter().zip(&d1x).map(|(&v, &w)| 0.5 * (v * v + gamma * w * w)).sum::<f64>() * ds
    };
    let conserved: Vec<(String, ScalarFn)> = vec![
        ("H".into(), Box::new(move |x: &[f64]| ds * ham(x))),
        ("P".into(), Box::new(momentum)),
        ("KE".into(), Box::new(kinetic)),
    ];

    let mut lin = DenseMatrix::zeros(n, n);
    for i in 0..n {
        lin.set(i, i, alpha);
    }

    let model = HamiltonianModel {
        name: "bbm".into(),
        dim: n,
        structure: Structure::ConstantL(l_dense),
        hamiltonian: Box::new(ham),
        grad_h: Box::new(move |x: &[f64]| {
            x.iter().map(|&v| alpha * v + beta / 2.0 * v * v).collect()
        }),
        linear: Some(lin),
        grad_f: Some(Box::new(move |x: &[f64]| {
            x.iter().map(|&v| beta / 2.0 * v * v).collect()
        })),
        conserved,
        x0,
        ds,
        rhs_fast: Some(Box::new(rhs_fast)),
    };
    debug_assert!(model.validate().is_ok());
    Ok(model)
}
