//! Time integrators: implicit midpoint for linear systems, the average
//! vector field scheme driven by Newton iteration for cubic Hamiltonians,
//! and explicit RK4 for reference solves. Also the finite-difference
//! derivative stencil applied to stored trajectories.

use crate::matkit::{read_hopm_with_header, write_hopm_with_header, DenseMatrix, MatError};
use std::path::Path;

#[derive(Debug, thiserror::Error)]
pub enum StepError {
    #[error("linear step operator is singular")]
    SingularOperator,
    #[error("Newton failed to converge at step {step}: residual {residual:.3e} after {iters} iterations")]
    NewtonDidNotConverge { step: usize, residual: f64, iters: usize },
    #[error("Newton jacobian is singular at step {step}")]
    SingularJacobian { step: usize },
    #[error("non-finite state at step {step}")]
    NonFinite { step: usize },
    #[error("{0}")]
    BadInput(String),
    #[error(transparent)]
    Mat(#[from] MatError),
}

/// Newton iteration controls. No line search: the integrators here take
/// steps small enough that the warm-started iteration contracts on its own.
#[derive(Debug, Clone, Copy)]
pub struct NewtonSettings {
    /// Convergence threshold on the residual infinity norm.
    pub tol: f64,
    pub max_iters: usize,
}

impl Default for NewtonSettings {
    fn default() -> Self {
        Self { tol: 1e-10, max_iters: 25 }
    }
}

/// Uniformly sampled trajectory. Column k of `states` is the state at
/// `times[k]`; spacing is constant and equal to `dt`.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: DenseMatrix,
    pub dt: f64,
}

impl Trajectory {
    pub fn from_columns(columns: &[Vec<f64>], t0: f64, dt: f64) -> Result<Self, StepError> {
        if columns.is_empty() {
            return Err(StepError::BadInput("trajectory needs at least one state".into()));
        }
        let dim = columns[0].len();
        if columns.iter().any(|c| c.len() != dim) {
            return Err(StepError::BadInput("all states must share a dimension".into()));
        }
        let states = DenseMatrix::from_fn(dim, columns.len(), |i, k| columns[k][i]);
        let times = (0..columns.len()).map(|k| t0 + dt * k as f64).collect();
        Ok(Self { times, states, dt })
    }

    pub fn dim(&self) -> usize {
        self.states.rows()
    }

    /// Number of stored states (steps + 1).
    pub fn len(&self) -> usize {
        self.states.cols()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn state(&self, k: usize) -> Vec<f64> {
        self.states.column(k)
    }

    pub fn t0(&self) -> f64 {
        self.times[0]
    }

    /// Serialize as HOPM1 with a metadata comment header.
    pub fn write_hopm(&self, path: &Path) -> Result<(), MatError> {
        let header =
            vec![format!("trajectory t0={:.16e} dt={:.16e} steps={}", self.t0(), self.dt, self.len() - 1)];
        write_hopm_with_header(path, &self.states, &header)
    }

    /// Read back a trajectory written by `write_hopm`.
    pub fn read_hopm(path: &Path) -> Result<Self, StepError> {
        let (states, header) = read_hopm_with_header(path)?;
        let line = header
            .iter()
            .find(|h| h.starts_with("trajectory "))
            .ok_or_else(|| StepError::BadInput(format!("{}: missing trajectory header", path.display())))?;
        let mut t0 = None;
        let mut dt = None;
        for tok in line.split_whitespace().skip(1) {
            if let Some(v) = tok.strip_prefix("t0=") {
                t0 = v.parse::<f64>().ok();
            } else if let Some(v) = tok.strip_prefix("dt=") {
                dt = v.parse::<f64>().ok();
            }
        }
        let (t0, dt) = match (t0, dt) {
            (Some(a), Some(b)) => (a, b),
            _ => return Err(StepError::BadInput(format!("{}: bad trajectory header", path.display()))),
        };
        let times = (0..states.cols()).map(|k| t0 + dt * k as f64).collect();
        Ok(Self { times, states, dt })
    }
}

fn check_finite(x: &[f64], step: usize) -> Result<(), StepError> {
    if x.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(StepError::NonFinite { step })
    }
}

fn inf_norm(x: &[f64]) -> f64 {
    x.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
}

/// Implicit midpoint rule for the affine system  x' = D x + offset:
///
///     (I - dt/2 D) (x_{k+1} - x_k) = dt (offset + D x_k).
///
/// The step operator is factored once and reused across all steps.
pub fn implicit_midpoint_linear(
    d: &DenseMatrix,
    offset: &[f64],
    x0: &[f64],
    dt: f64,
    steps: usize,
) -> Result<Trajectory, StepError> {
    let n = d.rows();
    if d.cols() != n || offset.len() != n || x0.len() != n {
        return Err(StepError::BadInput(format!(
            "operator {}x{}, offset {}, state {}",
            d.rows(),
            d.cols(),
            offset.len(),
            x0.len()
        )));
    }
    let mut lhs = d.scale(-dt / 2.0);
    for i in 0..n {
        lhs.set(i, i, lhs.get(i, i) + 1.0);
    }
    let lu = lhs.to_na().lu();
    let udiag = lu.u().diagonal();
    let umax = udiag.amax();
    if umax == 0.0 || udiag.iter().any(|v| v.abs() <= 1e-14 * umax) {
        return Err(StepError::SingularOperator);
    }
    let mut columns = Vec::with_capacity(steps + 1);
    let mut x = x0.to_vec();
    columns.push(x.clone());
    for step in 0..steps {
        let mut rhs = d.matvec(&x);
        for (r, o) in rhs.iter_mut().zip(offset) {
            *r = dt * (*r + o);
        }
        let delta = lu
            .solve(&nalgebra::DVector::from_column_slice(&rhs))
            .ok_or(StepError::SingularOperator)?;
        for (xi, di) in x.iter_mut().zip(delta.iter()) {
            *xi += di;
        }
        check_finite(&x, step + 1)?;
        columns.push(x.clone());
    }
    Trajectory::from_columns(&columns, 0.0, dt)
}

fn newton_update(
    jac: &DenseMatrix,
    v: &[f64],
    r: &[f64],
    step: usize,
) -> Result<Vec<f64>, StepError> {
    let lu = jac.to_na().lu();
    let delta = lu
        .solve(&nalgebra::DVector::from_column_slice(r))
        .ok_or(StepError::SingularJacobian { step })?;
    Ok(v.iter().zip(delta.iter()).map(|(vi, di)| vi - di).collect())
}

/// Newton-driven one-step implicit scheme. `residual(x_k, v)` and
/// `jacobian(x_k, v)` define the step equation R(v) = 0 whose root is the
/// next state; the iteration is warm-started at v = x_k.
///
/// After the tolerance is first met one extra Newton update is applied (and
/// kept only if it does not regress). This pushes the accepted residual to
/// the roundoff floor, which is what keeps conserved quantities flat over
/// long runs instead of drifting at tol per step.
pub fn avf_newton(
    mut residual: impl FnMut(&[f64], &[f64]) -> Vec<f64>,
    mut jacobian: impl FnMut(&[f64], &[f64]) -> DenseMatrix,
    x0: &[f64],
    dt: f64,
    steps: usize,
    settings: &NewtonSettings,
) -> Result<Trajectory, StepError> {
    if dt <= 0.0 {
        return Err(StepError::BadInput(format!("dt must be positive, got {dt}")));
    }
    let mut columns = Vec::with_capacity(steps + 1);
    let mut x = x0.to_vec();
    check_finite(&x, 0)?;
    columns.push(x.clone());
    for step in 0..steps {
        let mut v = x.clone();
        let mut r = residual(&x, &v);
        let mut rn = inf_norm(&r);
        let mut iters = 0usize;
        loop {
            if !rn.is_finite() {
                return Err(StepError::NonFinite { step: step + 1 });
            }
            if rn <= settings.tol {
                break;
            }
            if iters >= settings.max_iters {
                return Err(StepError::NewtonDidNotConverge { step: step + 1, residual: rn, iters });
            }
            v = newton_update(&jacobian(&x, &v), &v, &r, step + 1)?;
            r = residual(&x, &v);
            rn = inf_norm(&r);
            iters += 1;
        }
        if rn > 0.0 {
            if let Ok(polished) = newton_update(&jacobian(&x, &v), &v, &r, step + 1) {
                let rp = residual(&x, &polished);
                let rpn = inf_norm(&rp);
                if rpn.is_finite() && rpn <= rn {
                    v = polished;
                }
            }
        }
        check_finite(&v, step + 1)?;
        x = v;
        columns.push(x.clone());
    }
    Trajectory::from_columns(&columns, 0.0, dt)
}

/// Classical fourth-order Runge-Kutta for x' = f(x).
pub fn rk4(
    mut f: impl FnMut(&[f64]) -> Vec<f64>,
    x0: &[f64],
    dt: f64,
    steps: usize,
) -> Result<Trajectory, StepError> {
    let n = x0.len();
    let mut columns = Vec::with_capacity(steps + 1);
    let mut x = x0.to_vec();
    check_finite(&x, 0)?;
    columns.push(x.clone());
    let mut stage = vec![0.0; n];
    for step in 0..steps {
        let k1 = f(&x);
        for i in 0..n {
            stage[i] = x[i] + 0.5 * dt * k1[i];
        }
        let k2 = f(&stage);
        for i in 0..n {
            stage[i] = x[i] + 0.5 * dt * k2[i];
        }
        let k3 = f(&stage);
        for i in 0..n {
            stage[i] = x[i] + dt * k3[i];
        }
        let k4 = f(&stage);
        for i in 0..n {
            x[i] += dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
        check_finite(&x, step + 1)?;
        columns.push(x.clone());
    }
    Trajectory::from_columns(&columns, 0.0, dt)
}

/// Second-order finite-difference time derivatives of every stored state:
/// central differences inside, one-sided three-point stencils at both ends.
/// Exact for trajectories that are polynomials of degree <= 2 in time.
pub fn time_derivatives(traj: &Trajectory) -> Result<DenseMatrix, StepError> {
    let k = traj.len();
    if k < 3 {
        return Err(StepError::BadInput(format!("need at least 3 states, got {k}")));
    }
    let n = traj.dim();
    let s = &traj.states;
    let dt = traj.dt;
    let mut d = DenseMatrix::zeros(n, k);
    for i in 0..n {
        d.set(i, 0, (-3.0 * s.get(i, 0) + 4.0 * s.get(i, 1) - s.get(i, 2)) / (2.0 * dt));
        for j in 1..k - 1 {
            d.set(i, j, (s.get(i, j + 1) - s.get(i, j - 1)) / (2.0 * dt));
        }
        d.set(
            i,
            k - 1,
            (3.0 * s.get(i, k - 1) - 4.0 * s.get(i, k - 2) + s.get(i, k - 3)) / (2.0 * dt),
        );
    }
    Ok(d)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rotation2() -> DenseMatrix {
        DenseMatrix::new(2, 2, vec![0.0, 1.0, -1.0, 0.0]).unwrap()
    }

    #[test]
    fn midpoint_preserves_rotation_norm() {
        // x' = J x rotates; the midpoint map is a Cayley transform and thus
        // exactly norm-preserving up to roundoff accumulation.
        let traj = implicit_midpoint_linear(&rotation2(), &[0.0, 0.0], &[1.0, 0.0], 0.05, 10_000)
            .unwrap();
        let r0: f64 = traj.state(0).iter().map(|v| v * v).sum::<f64>().sqrt();
        for k in 0..traj.len() {
            let r: f64 = traj.state(k).iter().map(|v| v * v).sum::<f64>().sqrt();
            assert!((r - r0).abs() < 1e-13, "norm drift {} at {k}", (r - r0).abs());
        }
    }

    #[test]
    fn midpoint_second_order_in_angle() {
        // Global phase error of the midpoint rule on the harmonic oscillator
        // scales like dt^2: halving dt shrinks it by about 4.
        let err = |dt: f64| {
            let steps = (10.0 / dt).round() as usize;
            let traj =
                implicit_midpoint_linear(&rotation2(), &[0.0, 0.0], &[1.0, 0.0], dt, steps).unwrap();
            let x = traj.state(steps);
            let t = 10.0_f64;
            ((x[0] - t.cos()).powi(2) + (x[1] + t.sin()).powi(2)).sqrt()
        };
        let e1 = err(0.02);
        let e2 = err(0.01);
        let ratio = e1 / e2;
        assert!((ratio - 4.0).abs() < 0.3, "observed order ratio {ratio}");
    }

    #[test]
    fn midpoint_affine_offset_fixed_point() {
        // x' = -x + 1 has fixed point 1; starting there must stay there.
        let d = DenseMatrix::new(1, 1, vec![-1.0]).unwrap();
        let traj = implicit_midpoint_linear(&d, &[1.0], &[1.0], 0.1, 50).unwrap();
        for k in 0..traj.len() {
            assert!((traj.state(k)[0] - 1.0).abs() < 1e-14);
        }
    }

    #[test]
    fn midpoint_rejects_singular_step_operator() {
        // I - dt/2 D singular for D = (2/dt) I.
        let dt = 0.5;
        let d = DenseMatrix::identity(3).scale(2.0 / dt);
        let r = implicit_midpoint_linear(&d, &[0.0; 3], &[1.0, 0.0, 0.0], dt, 1);
        assert!(matches!(r, Err(StepError::SingularOperator)));
    }

    #[test]
    fn avf_newton_matches_midpoint_on_linear_problem() {
        // For linear dynamics the AVF step equation is the midpoint step, so
        // the two integrators must agree to solver tolerance.
        let d = rotation2();
        let dt = 0.05;
        let mid = implicit_midpoint_linear(&d, &[0.0, 0.0], &[0.3, -1.0], dt, 200).unwrap();
        let dref = d.clone();
        let residual = move |xk: &[f64], v: &[f64]| -> Vec<f64> {
            let mid: Vec<f64> = xk.iter().zip(v).map(|(a, b)| 0.5 * (a + b)).collect();
            let f = dref.matvec(&mid);
            (0..2).map(|i| v[i] - xk[i] - dt * f[i]).collect()
        };
        let dj = d.clone();
        let jacobian = move |_xk: &[f64], _v: &[f64]| -> DenseMatrix {
            let mut j = dj.scale(-dt / 2.0);
            for i in 0..2 {
                j.set(i, i, j.get(i, i) + 1.0);
            }
            j
        };
        let avf = avf_newton(residual, jacobian, &[0.3, -1.0], dt, 200, &NewtonSettings::default())
            .unwrap();
        let diff = avf.states.sub(&mid.states).unwrap().max_abs();
        assert!(diff < 1e-9, "avf vs midpoint diff {diff}");
    }

    #[test]
    fn avf_newton_reports_nonconvergence() {
        // Residual 1 with zero slope never converges; the jacobian is I so
        // Newton just wanders. max_iters must trip, not hang.
        let residual = |_: &[f64], _: &[f64]| vec![1.0];
        let jacobian = |_: &[f64], _: &[f64]| DenseMatrix::identity(1);
        let r = avf_newton(residual, jacobian, &[0.0], 0.1, 1, &NewtonSettings::default());
        match r {
            Err(StepError::NewtonDidNotConverge { step: 1, .. }) => {}
            other => panic!("expected NewtonDidNotConverge, got {other:?}"),
        }
    }

    #[test]
    fn rk4_order_and_accuracy_on_exponential() {
        let f = |x: &[f64]| vec![x[0]];
        let traj = rk4(f, &[1.0], 1e-3, 1000).unwrap();
        let err = (traj.state(1000)[0] - 1f64.exp()).abs();
        assert!(err <= 1e-8, "err {err}");
        // Order check at coarser resolution where truncation dominates.
        let e = |dt: f64| {
            let steps = (1.0 / dt).round() as usize;
            (rk4(f, &[1.0], dt, steps).unwrap().state(steps)[0] - 1f64.exp()).abs()
        };
        let ratio = e(0.05) / e(0.025);
        assert!((ratio - 16.0).abs() < 2.0, "observed RK4 ratio {ratio}");
    }

    #[test]
    fn rk4_flags_divergence_with_step_index() {
        // x' = x^2 from x(0)=1 blows up at t=1.
        let f = |x: &[f64]| vec![x[0] * x[0]];
        match rk4(f, &[1.0], 0.1, 100) {
            Err(StepError::NonFinite { step }) => assert!(step > 0),
            other => panic!("expected NonFinite, got {other:?}"),
        }
    }

    #[test]
    fn derivatives_exact_on_quadratic() {
        let dt = 0.1;
        let cols: Vec<Vec<f64>> = (0..6)
            .map(|k| {
                let t = dt * k as f64;
                vec![2.0 * t * t - 3.0 * t + 1.0, -t * t + 0.5]
            })
            .collect();
        let traj = Trajectory::from_columns(&cols, 0.0, dt).unwrap();
        let d = time_derivatives(&traj).unwrap();
        for k in 0..6 {
            let t = dt * k as f64;
            assert!((d.get(0, k) - (4.0 * t - 3.0)).abs() < 1e-12);
            assert!((d.get(1, k) - (-2.0 * t)).abs() < 1e-12);
        }
    }

    #[test]
    fn derivatives_second_order_on_sine() {
        let err = |dt: f64| {
            let k = (1.0 / dt).round() as usize + 1;
            let cols: Vec<Vec<f64>> = (0..k).map(|i| vec![(dt * i as f64).sin()]).collect();
            let traj = Trajectory::from_columns(&cols, 0.0, dt).unwrap();
            let d = time_derivatives(&traj).unwrap();
            (0..k)
                .map(|i| (d.get(0, i) - (dt * i as f64).cos()).abs())
                .fold(0.0_f64, f64::max)
        };
        let ratio = err(0.01) / err(0.005);
        assert!((ratio - 4.0).abs() < 0.4, "observed stencil ratio {ratio}");
    }

    #[test]
    fn derivatives_need_three_states() {
        let traj = Trajectory::from_columns(&[vec![0.0], vec![1.0]], 0.0, 0.1).unwrap();
        assert!(time_derivatives(&traj).is_err());
    }

    #[test]
    fn trajectory_hopm_roundtrip() {
        let cols: Vec<Vec<f64>> = (0..5).map(|k| vec![k as f64, -(k as f64) * 0.25]).collect();
        let traj = Trajectory::from_columns(&cols, 0.0, 0.02).unwrap();
        let dir = std::env::temp_dir().join("hopm_traj_tests");
        std::fs::create_dir_all(&dir).unwrap();
        let p = dir.join("traj.hopm");
        traj.write_hopm(&p).unwrap();
        let back = Trajectory::read_hopm(&p).unwrap();
        assert_eq!(back.states, traj.states);
        assert_eq!(back.dt, traj.dt);
        assert_eq!(back.times, traj.times);
    }
}
