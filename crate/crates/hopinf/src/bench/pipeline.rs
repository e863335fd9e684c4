//! One sweep cell end to end: build the full model, produce the reference
//! trajectory, assemble training data, fit or project a reduced operator,
//! and integrate the result.

use super::BenchError;
use crate::basis::PodBasis;
use crate::cli::{Method, ModelBlock, TimeBlock};
use crate::matkit::DenseMatrix;
use crate::models::{
    build_bbm, build_kdv_v1, build_kdv_v2, build_nonseparable, build_wave, kdv_fom_step_fns,
    kdv_v2_fom_step_fns, load_external, BbmParams, HamiltonianModel, KdvParams, NonsepParams,
    WaveParams,
};
use crate::reduce::{
    assemble_bbm_rom, assemble_kdv_rom, assemble_kdv_v2_rom, assemble_linear_rom,
    integrate_cubic_rom, integrate_linear_rom, intrusive_hamiltonian, opinf_canonical,
    opinf_generic, opinf_legacy_separable, opinf_noncanonical, CanonicalVariant, CubicMethod,
    InferenceInputs, LinearMethod, ReducedCubicModel, ReducedLinearModel,
};
use crate::timestep::{
    avf_newton, implicit_midpoint_linear, time_derivatives, NewtonSettings, StepError, Trajectory,
};

/// A full-order model ready to generate reference data, tagged by which
/// reduction family applies to it.
pub enum BuiltModel {
    /// Canonical linear systems: x' = J A x.
    Linear { model: HamiltonianModel },
    /// Canonical linear system loaded with an external reference trajectory;
    /// the stored snapshots are the ground truth, not a re-integration.
    External { model: HamiltonianModel, snapshots: DenseMatrix },
    /// Constant skew operator against a cubic energy.
    KdvV1 { model: HamiltonianModel, p: KdvParams },
    /// State-dependent skew operator against a quadratic energy.
    KdvV2 { model: HamiltonianModel, p: KdvParams },
    /// Dense spectral skew operator against a cubic energy; explicit
    /// reference integration.
    Bbm { model: HamiltonianModel, p: BbmParams },
}

impl BuiltModel {
    pub fn from_block(block: &ModelBlock) -> Result<BuiltModel, BenchError> {
        Ok(match block {
            ModelBlock::Wave(p) => BuiltModel::Linear { model: build_wave(p)? },
            ModelBlock::Nonsep(p) => BuiltModel::Linear { model: build_nonseparable(p)? },
            ModelBlock::KdvV1(p) => BuiltModel::KdvV1 { model: build_kdv_v1(p)?, p: *p },
            ModelBlock::KdvV2(p) => BuiltModel::KdvV2 { model: build_kdv_v2(p)?, p: *p },
            ModelBlock::Bbm(p) => BuiltModel::Bbm { model: build_bbm(p)?, p: *p },
            ModelBlock::External(f) => {
                let (model, snapshots) =
                    load_external(&f.mass, &f.stiffness, &f.q, &f.pv, f.momentum_form)?;
                BuiltModel::External { model, snapshots }
            }
        })
    }

    pub fn model(&self) -> &HamiltonianModel {
        match self {
            BuiltModel::Linear { model }
            | BuiltModel::External { model, .. }
            | BuiltModel::KdvV1 { model, .. }
            | BuiltModel::KdvV2 { model, .. }
            | BuiltModel::Bbm { model, .. } => model,
        }
    }

    pub fn name(&self) -> &str {
        &self.model().name
    }

    pub fn dim(&self) -> usize {
        self.model().dim
    }

    /// Whether the reduction family of this model can run the method at all.
    pub fn supports(&self, method: Method) -> bool {
        match self {
            BuiltModel::Linear { .. } | BuiltModel::External { .. } => true,
            BuiltModel::KdvV1 { .. } => matches!(
                method,
                Method::GRom | Method::HRom | Method::NcH | Method::Generic
            ),
            // A constant inferred operator cannot represent the
            // state-dependent structure, so only the state-space fits apply.
            BuiltModel::KdvV2 { .. } => {
                matches!(method, Method::GRom | Method::HRom | Method::Generic)
            }
            BuiltModel::Bbm { .. } => {
                matches!(method, Method::HRom | Method::NcH | Method::Generic)
            }
        }
    }

    /// Whether the method can honor a mean-centered basis. Intrusive
    /// projections carry the affine term exactly, and gradient-form fits
    /// never touch the reconstructed state; the state-space fits have no
    /// affine slot and must run uncentered.
    pub fn centered_fit(&self, method: Method) -> bool {
        match method {
            Method::GRom | Method::HRom | Method::NcH => true,
            Method::CH | Method::Separable => false,
            Method::Generic => matches!(self, BuiltModel::KdvV1 { .. } | BuiltModel::Bbm { .. }),
        }
    }

    /// Reference trajectory over `steps` steps of `time.dt`, starting from
    /// the model's own initial state. The external model returns its stored
    /// snapshot window instead of re-integrating.
    pub fn simulate(&self, time: &TimeBlock, steps: usize) -> Result<Trajectory, BenchError> {
        match self {
            BuiltModel::External { snapshots, .. } => {
                if steps + 1 > snapshots.cols() {
                    return Err(BenchError::Config(format!(
                        "stored snapshots cover {} steps, requested {steps}",
                        snapshots.cols() - 1
                    )));
                }
                let cols: Vec<Vec<f64>> = (0..=steps).map(|k| snapshots.column(k)).collect();
                Ok(Trajectory::from_columns(&cols, 0.0, time.dt)?)
            }
            _ => self.simulate_from(&self.model().x0, time, steps),
        }
    }

    /// Integrate the full-order model from an arbitrary initial state.
    pub fn simulate_from(
        &self,
        x0: &[f64],
        time: &TimeBlock,
        steps: usize,
    ) -> Result<Trajectory, BenchError> {
        let settings = NewtonSettings { tol: time.newton_tol, max_iters: 50 };
        match self {
            BuiltModel::Linear { model } | BuiltModel::External { model, .. } => {
                let a = model
                    .linear
                    .as_ref()
                    .ok_or_else(|| BenchError::Config(format!("{} has no linear part", model.name)))?;
                let d = model.structure_matrix(x0).matmul(a)?;
                Ok(implicit_midpoint_linear(&d, &vec![0.0; model.dim], x0, time.dt, steps)?)
            }
            BuiltModel::KdvV1 { p, .. } => {
                let (residual, jacobian) = kdv_fom_step_fns(p, time.dt);
                Ok(avf_newton(residual, jacobian, x0, time.dt, steps, &settings)?)
            }
            BuiltModel::KdvV2 { p, .. } => {
                let (residual, jacobian) = kdv_v2_fom_step_fns(p, time.dt);
                Ok(avf_newton(residual, jacobian, x0, time.dt, steps, &settings)?)
            }
            BuiltModel::Bbm { model, .. } => {
                let substeps = if time.substep > 0.0 {
                    (time.dt / time.substep).ceil().max(1.0) as usize
                } else {
                    1
                };
                Ok(rk4_strided(|x| model.rhs(x), x0, time.dt, steps, substeps)?)
            }
        }
    }
}

/// Classical RK4 taking `substeps` internal stages per recorded step, so
/// long stiff runs keep a fine integration step without storing it.
pub fn rk4_strided(
    mut f: impl FnMut(&[f64]) -> Vec<f64>,
    x0: &[f64],
    dt: f64,
    steps: usize,
    substeps: usize,
) -> Result<Trajectory, StepError> {
    if substeps == 0 {
        return Err(StepError::BadInput("substeps must be at least 1".into()));
    }
    let h = dt / substeps as f64;
    let n = x0.len();
    let mut columns = Vec::with_capacity(steps + 1);
    let mut x = x0.to_vec();
    columns.push(x.clone());
    let mut stage = vec![0.0; n];
    for step in 0..steps {
        for _ in 0..substeps {
            let k1 = f(&x);
            for i in 0..n {
                stage[i] = x[i] + 0.5 * h * k1[i];
            }
            let k2 = f(&stage);
            for i in 0..n {
                stage[i] = x[i] + 0.5 * h * k2[i];
            }
            let k3 = f(&stage);
            for i in 0..n {
                stage[i] = x[i] + h * k3[i];
            }
            let k4 = f(&stage);
            for i in 0..n {
                x[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
            }
        }
        if !x.iter().all(|v| v.is_finite()) {
            return Err(StepError::NonFinite { step: step + 1 });
        }
        columns.push(x.clone());
    }
    Trajectory::from_columns(&columns, 0.0, dt)
}

/// Snapshot matrices fed to the fits: full-order states thinned by the
/// stride, with matching time derivatives.
#[derive(Debug, Clone)]
pub struct TrainingData {
    pub states: DenseMatrix,
    pub rates: DenseMatrix,
    /// Precomputed gradient snapshots. The pooled parametric path sets these
    /// because its columns come from different parameter values, so a single
    /// model cannot re-evaluate them.
    pub grad_h: Option<DenseMatrix>,
    pub grad_f: Option<DenseMatrix>,
}

fn columns_map(x: &DenseMatrix, f: impl Fn(&[f64]) -> Vec<f64>) -> DenseMatrix {
    let cols: Vec<Vec<f64>> = (0..x.cols()).map(|k| f(&x.column(k))).collect();
    let rows = cols.first().map_or(x.rows(), Vec::len);
    DenseMatrix::from_fn(rows, cols.len(), |i, k| cols[k][i])
}

impl TrainingData {
    /// Thin the trajectory to every `stride`-th state. Derivatives come from
    /// the model right-hand side when `exact` is set, otherwise from the
    /// finite-difference stencil at the thinned spacing.
    pub fn new(
        model: &HamiltonianModel,
        traj: &Trajectory,
        stride: usize,
        exact: bool,
    ) -> Result<TrainingData, BenchError> {
        if stride == 0 {
            return Err(BenchError::Config("stride must be at least 1".into()));
        }
        let cols: Vec<Vec<f64>> = (0..traj.len()).step_by(stride).map(|k| traj.state(k)).collect();
        let thinned = Trajectory::from_columns(&cols, traj.t0(), traj.dt * stride as f64)?;
        let rates = if exact {
            columns_map(&thinned.states, |x| model.rhs(x))
        } else {
            time_derivatives(&thinned)?
        };
        Ok(TrainingData { states: thinned.states, rates, grad_h: None, grad_f: None })
    }

    /// Gradient snapshots of H at the (full, uncentered) training states.
    pub fn grad_h_columns(&self, model: &HamiltonianModel) -> DenseMatrix {
        match &self.grad_h {
            Some(g) => g.clone(),
            None => columns_map(&self.states, |x| model.grad_h(x)),
        }
    }

    /// Gradient snapshots of the nonlinear part, when the model has one.
    pub fn grad_f_columns(&self, model: &HamiltonianModel) -> Option<DenseMatrix> {
        match &self.grad_f {
            Some(g) => Some(g.clone()),
            None => model.grad_f.as_ref().map(|gf| columns_map(&self.states, |x| gf(x))),
        }
    }
}

/// The raw operator a data fit produces, before model assembly. Keeping it
/// separate from the assembled model is what lets one-shot sweeps slice a
/// large solve down to smaller mode sets.
#[derive(Debug, Clone)]
pub enum InferredOperator {
    /// Symmetric energy block (symmetric-constrained and separable fits).
    EnergyA(DenseMatrix),
    /// Structure matrix fit against gradient snapshots; skew for the
    /// constrained algorithm, unconstrained for the generic comparison.
    StructureL(DenseMatrix),
    /// Plain state-space flow matrix.
    FlowD(DenseMatrix),
}

fn take_square(m: &DenseMatrix, idx: &[usize]) -> DenseMatrix {
    DenseMatrix::from_fn(idx.len(), idx.len(), |i, j| m.get(idx[i], idx[j]))
}

impl InferredOperator {
    /// Keep the rows and columns of the given mode indices.
    pub fn slice(&self, idx: &[usize]) -> InferredOperator {
        match self {
            InferredOperator::EnergyA(a) => InferredOperator::EnergyA(take_square(a, idx)),
            InferredOperator::StructureL(l) => InferredOperator::StructureL(take_square(l, idx)),
            InferredOperator::FlowD(d) => InferredOperator::FlowD(take_square(d, idx)),
        }
    }
}

/// A reduced model of either family, ready to integrate.
#[derive(Debug, Clone)]
pub enum AssembledRom {
    Linear(ReducedLinearModel),
    Cubic(ReducedCubicModel),
}

impl AssembledRom {
    pub fn modes(&self) -> usize {
        match self {
            AssembledRom::Linear(r) => r.modes(),
            AssembledRom::Cubic(r) => r.modes(),
        }
    }
}

fn unsupported(built: &BuiltModel, method: Method) -> BenchError {
    BenchError::Config(format!("model {} does not support method {}", built.name(), method.label()))
}

/// Run the data fit of an inference method; intrusive methods return None.
pub fn infer_operator(
    built: &BuiltModel,
    basis: &PodBasis,
    method: Method,
    variant: CanonicalVariant,
    eta: f64,
    data: &TrainingData,
) -> Result<Option<InferredOperator>, BenchError> {
    if !built.supports(method) {
        return Err(unsupported(built, method));
    }
    if basis.shift.is_some() && !built.centered_fit(method) {
        return Err(BenchError::Config(format!(
            "method {} has no affine term; use an uncentered basis",
            method.label()
        )));
    }
    let model = built.model();
    Ok(match method {
        Method::GRom | Method::HRom => None,
        Method::CH => {
            let grad_f = data.grad_f_columns(model);
            let inputs =
                InferenceInputs::canonical(&data.states, &data.rates, grad_f.as_ref(), basis, eta)?;
            Some(InferredOperator::EnergyA(opinf_canonical(&inputs, variant)?))
        }
        Method::Separable => {
            let grad_f = data.grad_f_columns(model);
            let inputs =
                InferenceInputs::canonical(&data.states, &data.rates, grad_f.as_ref(), basis, eta)?;
            Some(InferredOperator::EnergyA(opinf_legacy_separable(&inputs, basis.kind)?))
        }
        Method::NcH => {
            let grad_h = data.grad_h_columns(model);
            let inputs =
                InferenceInputs::noncanonical(&data.states, &data.rates, &grad_h, basis, eta)?;
            Some(InferredOperator::StructureL(opinf_noncanonical(&inputs)?))
        }
        Method::Generic => match built {
            // Gradient-form comparison: the same normal equations as the
            // skew-constrained fit with the constraint dropped.
            BuiltModel::KdvV1 { .. } | BuiltModel::Bbm { .. } => {
                let ghat = basis.project_rates(&data.grad_h_columns(model))?;
                let xhat_t = basis.project_rates(&data.rates)?;
                Some(InferredOperator::StructureL(opinf_generic(&ghat, &xhat_t, eta)?))
            }
            _ => {
                let xhat = basis.project_states(&data.states)?;
                let xhat_t = basis.project_rates(&data.rates)?;
                Some(InferredOperator::FlowD(opinf_generic(&xhat, &xhat_t, eta)?))
            }
        },
    })
}

/// Assemble the reduced model for a method from its inferred operator (or
/// from the intrusive projections when there is none).
pub fn assemble_with(
    built: &BuiltModel,
    basis: &PodBasis,
    method: Method,
    op: Option<&InferredOperator>,
) -> Result<AssembledRom, BenchError> {
    let rom = match (built, method, op) {
        (BuiltModel::Linear { model } | BuiltModel::External { model, .. }, _, _) => {
            let linear_method = match (method, op) {
                (Method::GRom, None) => LinearMethod::Galerkin,
                (Method::HRom, None) => LinearMethod::Hamiltonian,
                (Method::CH | Method::Separable, Some(InferredOperator::EnergyA(a))) => {
                    LinearMethod::InferredA(a.clone())
                }
                (Method::NcH, Some(InferredOperator::StructureL(l))) => {
                    LinearMethod::InferredL(l.clone())
                }
                (Method::Generic, Some(InferredOperator::FlowD(d))) => {
                    return Ok(AssembledRom::Linear(ReducedLinearModel {
                        dhat: d.clone(),
                        lhat: None,
                        ahat: None,
                        chat: vec![0.0; d.rows()],
                    }))
                }
                _ => return Err(unsupported(built, method)),
            };
            AssembledRom::Linear(assemble_linear_rom(model, basis, linear_method)?)
        }
        (BuiltModel::KdvV1 { p, .. }, Method::GRom, None) => {
            AssembledRom::Cubic(assemble_kdv_rom(p, basis, CubicMethod::Galerkin)?)
        }
        (BuiltModel::KdvV1 { p, .. }, Method::HRom, None) => {
            AssembledRom::Cubic(assemble_kdv_rom(p, basis, CubicMethod::Hamiltonian)?)
        }
        (BuiltModel::KdvV1 { p, .. }, Method::NcH, Some(InferredOperator::StructureL(l))) => {
            AssembledRom::Cubic(assemble_kdv_rom(p, basis, CubicMethod::InferredL(l.clone()))?)
        }
        (BuiltModel::KdvV1 { p, .. }, Method::Generic, Some(InferredOperator::StructureL(l))) => {
            // Same gradient coefficients as the structured routes, but the
            // flow factor is the unconstrained fit (possibly non-skew).
            let mut rom = assemble_kdv_rom(p, basis, CubicMethod::Hamiltonian)?;
            rom.lhat = Some(l.clone());
            AssembledRom::Cubic(rom)
        }
        (BuiltModel::KdvV2 { p, .. }, Method::GRom, None) => {
            AssembledRom::Cubic(assemble_kdv_v2_rom(p, basis, CubicMethod::Galerkin)?)
        }
        (BuiltModel::KdvV2 { p, .. }, Method::HRom, None) => {
            AssembledRom::Cubic(assemble_kdv_v2_rom(p, basis, CubicMethod::Hamiltonian)?)
        }
        (BuiltModel::KdvV2 { .. }, Method::Generic, Some(InferredOperator::FlowD(d))) => {
            AssembledRom::Linear(ReducedLinearModel {
                dhat: d.clone(),
                lhat: None,
                ahat: None,
                chat: vec![0.0; d.rows()],
            })
        }
        (BuiltModel::Bbm { model, p }, Method::HRom, None) => {
            let l_full = model.structure_matrix(&model.x0);
            let lhat = intrusive_hamiltonian(&l_full, &basis.u)?;
            AssembledRom::Cubic(assemble_bbm_rom(p, basis, lhat)?)
        }
        (BuiltModel::Bbm { p, .. }, Method::NcH, Some(InferredOperator::StructureL(l))) => {
            AssembledRom::Cubic(assemble_bbm_rom(p, basis, l.clone())?)
        }
        (BuiltModel::Bbm { p, .. }, Method::Generic, Some(InferredOperator::StructureL(l))) => {
            let mut rom = assemble_bbm_rom(p, basis, DenseMatrix::zeros(basis.modes(), basis.modes()))?;
            rom.lhat = Some(l.clone());
            AssembledRom::Cubic(rom)
        }
        _ => return Err(unsupported(built, method)),
    };
    Ok(rom)
}

/// Fit (when the method infers) and assemble in one call.
pub fn build_rom(
    built: &BuiltModel,
    basis: &PodBasis,
    method: Method,
    variant: CanonicalVariant,
    eta: f64,
    data: &TrainingData,
) -> Result<AssembledRom, BenchError> {
    let op = infer_operator(built, basis, method, variant, eta, data)?;
    assemble_with(built, basis, method, op.as_ref())
}

/// Integrate a reduced model of either family from a full-order state.
pub fn integrate_rom(
    rom: &AssembledRom,
    basis: &PodBasis,
    x0: &[f64],
    dt: f64,
    steps: usize,
    newton_tol: f64,
) -> Result<Trajectory, StepError> {
    match rom {
        AssembledRom::Linear(r) => integrate_linear_rom(r, basis, x0, dt, steps),
        AssembledRom::Cubic(r) => {
            let settings = NewtonSettings { tol: newton_tol, max_iters: 50 };
            integrate_cubic_rom(r, basis, x0, dt, steps, &settings)
        }
    }
}

/// Replace the model's sweep parameter, keeping everything else.
pub fn with_alpha(block: &ModelBlock, alpha: f64) -> Result<ModelBlock, BenchError> {
    Ok(match block {
        ModelBlock::Wave(p) => ModelBlock::Wave(WaveParams { alpha, ..*p }),
        ModelBlock::Nonsep(p) => ModelBlock::Nonsep(NonsepParams { alpha, ..*p }),
        ModelBlock::KdvV1(p) => ModelBlock::KdvV1(KdvParams { alpha, ..*p }),
        ModelBlock::KdvV2(p) => ModelBlock::KdvV2(KdvParams { alpha, ..*p }),
        ModelBlock::Bbm(p) => ModelBlock::Bbm(BbmParams { alpha, ..*p }),
        ModelBlock::External(_) => {
            return Err(BenchError::Config("the external model has no alpha parameter".into()))
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::basis::{pod_block_qp, pod_cotangent_lift};
    use crate::bench::rel_l2;
    use crate::models::j_dense;
    use crate::reduce::lift_trajectory;
    use crate::timestep::rk4;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn wave_block(cells: usize) -> ModelBlock {
        ModelBlock::Wave(WaveParams { c: 0.1, l: 1.0, cells, alpha: 5.0 })
    }

    fn time_block(dt: f64) -> TimeBlock {
        TimeBlock {
            dt,
            t_end_train: 1.0,
            t_end_test: 1.0,
            stride: 1,
            substep: 0.0,
            newton_tol: 1e-12,
            exact_derivatives: false,
        }
    }

    fn rel_err(have: &DenseMatrix, want: &DenseMatrix) -> f64 {
        have.sub(want).unwrap().frob_norm() / want.frob_norm()
    }

    /// A seeded random start with the spatial mean removed from each half.
    /// The periodic wave conserves both block means, so a trajectory spans
    /// at most the 7 oscillatory directions per block; a mean-free start
    /// keeps the snapshot blocks exactly rank 7, centered or not.
    fn random_start(dim: usize, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut x: Vec<f64> = (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let half = dim / 2;
        for block in [0, half] {
            let mean = x[block..block + half].iter().sum::<f64>() / half as f64;
            for v in &mut x[block..block + half] {
                *v -= mean;
            }
        }
        x
    }

    #[test]
    fn saturated_basis_intrusive_roms_reproduce_the_reference() {
        // A basis spanning the entire invariant subspace the trajectory
        // explores leaves the projected dynamics conjugate to the full ones,
        // and the midpoint rule commutes with the conjugation.
        let built = BuiltModel::from_block(&wave_block(8)).unwrap();
        let time = time_block(0.05);
        let x0 = random_start(built.dim(), 7);
        let traj = built.simulate_from(&x0, &time, 40).unwrap();
        let basis = pod_block_qp(&traj.states, 7, true).unwrap();
        let data = TrainingData::new(built.model(), &traj, 1, true).unwrap();
        for method in [Method::GRom, Method::HRom] {
            let rom =
                build_rom(&built, &basis, method, CanonicalVariant::Exact, 0.0, &data).unwrap();
            let rt = integrate_rom(&rom, &basis, &x0, time.dt, 40, 1e-12).unwrap();
            let lifted = lift_trajectory(&basis, &rt).unwrap();
            let err = rel_l2(&traj.states, &lifted.states).unwrap();
            assert!(err < 1e-10, "{} err {err}", method.label());
        }
    }

    #[test]
    fn inferred_operators_match_intrusive_ones_at_full_basis() {
        // Exact derivatives and a saturated basis leave no residual, so
        // every fit lands on its intrusive counterpart. Two pooled starts
        // are needed: the periodic grid has degenerate frequency pairs, so
        // one trajectory cannot span the reduced space.
        let built = BuiltModel::from_block(&ModelBlock::Wave(WaveParams {
            c: 1.0,
            l: 1.0,
            cells: 8,
            alpha: 5.0,
        }))
        .unwrap();
        let model = built.model();
        let time = time_block(0.05);
        let one = built.simulate_from(&random_start(built.dim(), 11), &time, 40).unwrap();
        let two = built.simulate_from(&random_start(built.dim(), 12), &time, 40).unwrap();
        let d1 = TrainingData::new(model, &one, 1, true).unwrap();
        let d2 = TrainingData::new(model, &two, 1, true).unwrap();
        let data = TrainingData {
            states: d1.states.hstack(&d2.states).unwrap(),
            rates: d1.rates.hstack(&d2.rates).unwrap(),
            grad_h: None,
            grad_f: None,
        };
        let j = j_dense(model.dim);
        let a = model.linear.as_ref().unwrap();

        let centered = pod_block_qp(&data.states, 7, true).unwrap();
        let op = infer_operator(&built, &centered, Method::NcH, CanonicalVariant::Exact, 0.0, &data)
            .unwrap()
            .unwrap();
        let want = intrusive_hamiltonian(&j, &centered.u).unwrap();
        match &op {
            InferredOperator::StructureL(l) => {
                assert!(rel_err(l, &want) < 1e-7, "nc-h err {}", rel_err(l, &want))
            }
            other => panic!("wrong operator {other:?}"),
        }

        // The canonical fit assumes equal blocks, so compare on a lift basis.
        let lift = pod_cotangent_lift(&data.states, 7, false).unwrap();
        let op = infer_operator(&built, &lift, Method::CH, CanonicalVariant::Exact, 0.0, &data)
            .unwrap()
            .unwrap();
        let want = lift.u.transpose().matmul(&a.matmul(&lift.u).unwrap()).unwrap();
        match &op {
            InferredOperator::EnergyA(ahat) => {
                assert!(rel_err(ahat, &want) < 1e-7, "c-h err {}", rel_err(ahat, &want))
            }
            other => panic!("wrong operator {other:?}"),
        }

        let plain = pod_block_qp(&data.states, 7, false).unwrap();
        let op =
            infer_operator(&built, &plain, Method::Generic, CanonicalVariant::Exact, 0.0, &data)
                .unwrap()
                .unwrap();
        let want = plain.u.transpose().matmul(&j.matmul(a).unwrap().matmul(&plain.u).unwrap()).unwrap();
        match &op {
            InferredOperator::FlowD(d) => {
                assert!(rel_err(d, &want) < 1e-7, "generic err {}", rel_err(d, &want))
            }
            other => panic!("wrong operator {other:?}"),
        }
    }

    #[test]
    fn training_data_respects_stride_and_derivative_mode() {
        let built = BuiltModel::from_block(&wave_block(8)).unwrap();
        let model = built.model();
        let time = time_block(0.05);
        let traj = built.simulate(&time, 8).unwrap();

        let exact = TrainingData::new(model, &traj, 2, true).unwrap();
        assert_eq!(exact.states.cols(), 5);
        for (k, src) in [0usize, 2, 4, 6, 8].iter().enumerate() {
            let want_state = traj.state(*src);
            let want_rate = model.rhs(&want_state);
            for i in 0..model.dim {
                assert_eq!(exact.states.get(i, k), want_state[i]);
                assert!((exact.rates.get(i, k) - want_rate[i]).abs() < 1e-14);
            }
        }

        let fd = TrainingData::new(model, &traj, 2, false).unwrap();
        let thinned: Vec<Vec<f64>> = (0..traj.len()).step_by(2).map(|k| traj.state(k)).collect();
        let tt = Trajectory::from_columns(&thinned, 0.0, 0.1).unwrap();
        let want = time_derivatives(&tt).unwrap();
        assert_eq!(fd.rates, want);
    }

    #[test]
    fn external_model_windows_its_stored_snapshots() {
        let inner = BuiltModel::from_block(&wave_block(8)).unwrap();
        let model = match inner {
            BuiltModel::Linear { model } => model,
            _ => unreachable!(),
        };
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let snapshots = DenseMatrix::from_fn(model.dim, 10, |_, _| rng.gen_range(-1.0..1.0));
        let built = BuiltModel::External { model, snapshots: snapshots.clone() };
        let time = time_block(0.25);
        let traj = built.simulate(&time, 4).unwrap();
        assert_eq!(traj.len(), 5);
        assert_eq!(traj.dt, 0.25);
        for k in 0..5 {
            assert_eq!(traj.state(k), snapshots.column(k));
        }
        match built.simulate(&time, 10) {
            Err(BenchError::Config(msg)) => assert!(msg.contains("9 steps"), "{msg}"),
            other => panic!("expected a window error, got {other:?}"),
        }
    }

    #[test]
    fn strided_rk4_matches_a_flat_fine_run() {
        let f = |x: &[f64]| vec![x[1], -x[0]];
        let x0 = [1.0, 0.25];
        let coarse = rk4_strided(f, &x0, 0.1, 10, 5).unwrap();
        let fine = rk4(f, &x0, 0.02, 50).unwrap();
        for k in 0..=10 {
            let a = coarse.state(k);
            let b = fine.state(5 * k);
            for i in 0..2 {
                assert!((a[i] - b[i]).abs() < 1e-14, "step {k}");
            }
        }
    }

    #[test]
    fn state_space_fits_reject_centered_bases() {
        let built = BuiltModel::from_block(&wave_block(8)).unwrap();
        let time = time_block(0.05);
        let traj = built.simulate(&time, 20).unwrap();
        let data = TrainingData::new(built.model(), &traj, 1, true).unwrap();
        let centered = pod_block_qp(&traj.states, 4, true).unwrap();
        for method in [Method::CH, Method::Generic, Method::Separable] {
            let err =
                infer_operator(&built, &centered, method, CanonicalVariant::Exact, 0.0, &data)
                    .unwrap_err();
            assert!(
                format!("{err}").contains("uncentered"),
                "{} should need an uncentered basis: {err}",
                method.label()
            );
        }
    }

    #[test]
    fn unsupported_method_pairs_are_rejected() {
        let cases = [
            (ModelBlock::KdvV1(KdvParams { points: 24, ..KdvParams::default() }), Method::CH),
            (ModelBlock::KdvV2(KdvParams { points: 24, ..KdvParams::default() }), Method::NcH),
            (ModelBlock::Bbm(BbmParams { points: 32, ..BbmParams::default() }), Method::GRom),
        ];
        for (block, method) in cases {
            let built = BuiltModel::from_block(&block).unwrap();
            assert!(!built.supports(method));
            let time = time_block(0.01);
            let traj = built.simulate(&time, 4).unwrap();
            let data = TrainingData::new(built.model(), &traj, 1, true).unwrap();
            let basis = crate::basis::pod_ordinary(&traj.states, 2, false).unwrap();
            let err = infer_operator(&built, &basis, method, CanonicalVariant::Exact, 0.0, &data)
                .unwrap_err();
            assert!(format!("{err}").contains("does not support"), "{err}");
        }
    }

    #[test]
    fn alpha_swap_touches_only_alpha() {
        let block = wave_block(16);
        let swapped = with_alpha(&block, 9.5).unwrap();
        match (&block, &swapped) {
            (ModelBlock::Wave(a), ModelBlock::Wave(b)) => {
                assert_eq!(b.alpha, 9.5);
                assert_eq!(a.cells, b.cells);
                assert_eq!(a.c, b.c);
            }
            _ => unreachable!(),
        }
        let files = crate::cli::ExternalFiles {
            mass: "m.mtx".into(),
            stiffness: "k.mtx".into(),
            q: "q.hopm".into(),
            pv: "v.hopm".into(),
            momentum_form: false,
        };
        assert!(with_alpha(&ModelBlock::External(files), 1.0).is_err());
    }

    #[test]
    fn operator_slices_take_matching_mode_subsets() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let m = DenseMatrix::from_fn(6, 6, |_, _| rng.gen_range(-1.0..1.0));
        let op = InferredOperator::StructureL(m.clone());
        let idx = [0usize, 1, 3, 4];
        match op.slice(&idx) {
            InferredOperator::StructureL(s) => {
                assert_eq!(s.rows(), 4);
                for i in 0..4 {
                    for j in 0..4 {
                        assert_eq!(s.get(i, j), m.get(idx[i], idx[j]));
                    }
                }
            }
            other => panic!("slice changed the operator kind: {other:?}"),
        }
    }
}
