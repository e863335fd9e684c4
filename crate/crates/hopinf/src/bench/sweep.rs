//! Sweep drivers: the basis-size-by-method error grid, the parametric
//! train/test study, and the operator-convergence table.
//!
//! All three share one discipline: snapshots are generated once, bases are
//! built at the largest requested size and truncated per cell (the POD
//! families are nested), and every cell failure is recorded in its row
//! instead of aborting the grid.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::mpsc;
use std::time::Instant;

use rand::Rng as _;
use rand::SeedableRng as _;
use rand_chacha::ChaCha8Rng;

use super::pipeline::{
    assemble_with, infer_operator, integrate_rom, with_alpha, BuiltModel, InferredOperator,
    TrainingData,
};
use super::{
    conserved_series, csv_number, rel_l2, trajectory_diverged, BenchError, ErrorReport,
    SweepResult,
};
use crate::basis::{pod_block_qp, pod_cotangent_lift, pod_ordinary, PodBasis, PodKind};
use crate::cli::{ConvergeTarget, ExperimentConfig, Method, TimeBlock};
use crate::matkit::DenseMatrix;
use crate::models::Structure;
use crate::reduce::{
    intrusive_hamiltonian, lift_trajectory, opinf_canonical, opinf_noncanonical, InferenceInputs,
};
use crate::timestep::Trajectory;

fn build_basis(
    x: &DenseMatrix,
    kind: PodKind,
    n: usize,
    center: bool,
) -> Result<PodBasis, BenchError> {
    Ok(match kind {
        PodKind::Ordinary => pod_ordinary(x, n, center)?,
        PodKind::BlockQp => pod_block_qp(x, n / 2, center)?,
        PodKind::CotangentLift => pod_cotangent_lift(x, n / 2, center)?,
    })
}

/// First `steps + 1` states of a trajectory as a trajectory of its own.
fn leading_window(traj: &Trajectory, steps: usize) -> Result<Trajectory, BenchError> {
    if steps + 1 > traj.len() {
        return Err(BenchError::Config(format!(
            "training window of {steps} steps exceeds the {} available",
            traj.len() - 1
        )));
    }
    let cols: Vec<Vec<f64>> = (0..=steps).map(|k| traj.state(k)).collect();
    Ok(Trajectory::from_columns(&cols, traj.t0(), traj.dt)?)
}

/// Shared upfront checks: a usable schedule and model-supported methods.
fn validate_grid(cfg: &ExperimentConfig, built: &BuiltModel) -> Result<Vec<usize>, BenchError> {
    let schedule = cfg.basis.schedule.clone();
    if schedule.is_empty() {
        return Err(BenchError::Config("basis.schedule must list at least one size".into()));
    }
    if cfg.basis.kind != PodKind::Ordinary {
        if let Some(n) = schedule.iter().find(|n| *n % 2 != 0) {
            return Err(BenchError::Config(format!(
                "basis kind {} needs even sizes, got {n}",
                cfg.basis.kind.label()
            )));
        }
    }
    for &m in &cfg.infer.methods {
        if !built.supports(m) {
            return Err(BenchError::Config(format!(
                "model {} does not support method {}",
                built.name(),
                m.label()
            )));
        }
    }
    Ok(schedule)
}

/// Operator for one grid cell: slice the one-shot solve when present,
/// otherwise fit at this size. Errors become the cell's failure note.
fn operator_for_cell(
    built: &BuiltModel,
    parent: &PodBasis,
    basis: &PodBasis,
    method: Method,
    one_shot: Option<&Result<InferredOperator, String>>,
    cfg: &ExperimentConfig,
    data: &TrainingData,
) -> Result<Option<InferredOperator>, String> {
    if !method.is_inference() {
        return Ok(None);
    }
    match one_shot {
        Some(Ok(op)) => Ok(Some(op.slice(&basis.mode_indices_in(parent.modes())))),
        Some(Err(msg)) => Err(msg.clone()),
        None => infer_operator(built, basis, method, cfg.infer.variant, cfg.infer.eta, data)
            .map_err(|e| e.to_string()),
    }
}

/// Run the (method, size) jobs on a small worker pool and return the reports
/// in job order regardless of completion order.
fn run_jobs<F>(jobs: &[(Method, usize)], workers: usize, run: &F) -> Vec<ErrorReport>
where
    F: Fn(Method, usize) -> ErrorReport + Sync,
{
    if workers <= 1 || jobs.len() <= 1 {
        return jobs.iter().map(|&(m, n)| run(m, n)).collect();
    }
    let next = AtomicUsize::new(0);
    let (tx, rx) = mpsc::channel::<(usize, ErrorReport)>();
    let mut slots: Vec<Option<ErrorReport>> = vec![None; jobs.len()];
    std::thread::scope(|scope| {
        for _ in 0..workers.min(jobs.len()) {
            let tx = tx.clone();
            let next = &next;
            scope.spawn(move || loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= jobs.len() {
                    break;
                }
                let (m, n) = jobs[i];
                if tx.send((i, run(m, n))).is_err() {
                    break;
                }
            });
        }
        drop(tx);
        for (i, report) in rx {
            slots[i] = Some(report);
        }
    });
    slots.into_iter().map(|s| s.expect("every job reports")).collect()
}

fn finish_cell(
    started: Instant,
    method: Method,
    kind: PodKind,
    center: bool,
    n: usize,
    outcome: Result<(f64, Vec<(String, Vec<f64>)>, bool), String>,
) -> ErrorReport {
    match outcome {
        Ok((rel, drifts, diverged)) => ErrorReport {
            method: method.label().to_string(),
            basis_kind: kind,
            mean_centered: center,
            n,
            rel_l2: rel,
            drifts,
            diverged: diverged || !rel.is_finite(),
            wallclock: started.elapsed().as_secs_f64(),
            note: None,
        },
        Err(msg) => {
            let mut report = ErrorReport::failed(method.label(), kind, center, n, msg);
            report.wallclock = started.elapsed().as_secs_f64();
            report
        }
    }
}

/// One-shot pre-pass: solve each inference problem once at the largest size.
/// A failed solve marks every cell of that method instead of aborting.
fn one_shot_solves<'a>(
    cfg: &ExperimentConfig,
    built: &BuiltModel,
    data: &TrainingData,
    pick_parent: impl Fn(Method) -> &'a PodBasis,
) -> BTreeMap<Method, Result<InferredOperator, String>> {
    let mut solves = BTreeMap::new();
    if !cfg.infer.one_shot {
        return solves;
    }
    for &m in &cfg.infer.methods {
        if !m.is_inference() || solves.contains_key(&m) {
            continue;
        }
        let solved =
            infer_operator(built, pick_parent(m), m, cfg.infer.variant, cfg.infer.eta, data)
                .map_err(|e| e.to_string())
                .and_then(|op| {
                    op.ok_or_else(|| "inference produced no operator".to_string())
                });
        solves.insert(m, solved);
    }
    solves
}

/// Error grid over basis sizes and methods against one reference run.
///
/// The reference is integrated over the test window; training snapshots are
/// its leading window, thinned by the configured stride. Each cell builds a
/// basis, fits or projects its operators, integrates the reduced model over
/// the full test window, and reports the relative state error plus conserved
/// quantity drifts. Divergent or failed cells are flagged in place.
pub fn mode_sweep(cfg: &ExperimentConfig) -> Result<SweepResult, BenchError> {
    let built = BuiltModel::from_block(&cfg.model)?;
    let schedule = validate_grid(cfg, &built)?;
    let methods = &cfg.infer.methods;

    let test_steps = cfg.test_steps();
    let started = Instant::now();
    let fom = built.simulate(&cfg.time, test_steps)?;
    let fom_secs = started.elapsed().as_secs_f64();
    let train = leading_window(&fom, cfg.train_steps())?;
    let data =
        TrainingData::new(built.model(), &train, cfg.time.stride, cfg.time.exact_derivatives)?;

    let n_max = *schedule.iter().max().expect("schedule is nonempty");
    let want_centered = cfg.basis.center && methods.iter().any(|m| built.centered_fit(*m));
    let want_plain = !cfg.basis.center || methods.iter().any(|m| !built.centered_fit(*m));
    let parent_centered = match want_centered {
        true => Some(build_basis(&data.states, cfg.basis.kind, n_max, true)?),
        false => None,
    };
    let parent_plain = match want_plain {
        true => Some(build_basis(&data.states, cfg.basis.kind, n_max, false)?),
        false => None,
    };
    let pick_parent = |method: Method| -> &PodBasis {
        if cfg.basis.center && built.centered_fit(method) {
            parent_centered.as_ref().expect("centered parent was built")
        } else {
            parent_plain.as_ref().expect("plain parent was built")
        }
    };

    let one_shot = one_shot_solves(cfg, &built, &data, pick_parent);

    let run_cell = |method: Method, n: usize| -> ErrorReport {
        let cell_start = Instant::now();
        let center = cfg.basis.center && built.centered_fit(method);
        let outcome = (|| {
            let parent = pick_parent(method);
            let basis = parent.truncate(n).map_err(|e| e.to_string())?;
            let op = operator_for_cell(&built, parent, &basis, method, one_shot.get(&method), cfg, &data)?;
            let rom = assemble_with(&built, &basis, method, op.as_ref()).map_err(|e| e.to_string())?;
            let reduced = integrate_rom(
                &rom,
                &basis,
                &built.model().x0,
                cfg.time.dt,
                test_steps,
                cfg.time.newton_tol,
            )
            .map_err(|e| e.to_string())?;
            let lifted = lift_trajectory(&basis, &reduced).map_err(|e| e.to_string())?;
            let rel = rel_l2(&fom.states, &lifted.states).map_err(|e| e.to_string())?;
            let drifts = conserved_series(built.model(), &lifted);
            Ok((rel, drifts, trajectory_diverged(&lifted)))
        })();
        finish_cell(cell_start, method, cfg.basis.kind, center, n, outcome)
    };

    let jobs: Vec<(Method, usize)> =
        methods.iter().flat_map(|&m| schedule.iter().map(move |&n| (m, n))).collect();
    let cells = run_jobs(&jobs, cfg.workers, &run_cell);

    let fom_report = ErrorReport {
        method: "fom".to_string(),
        basis_kind: cfg.basis.kind,
        mean_centered: false,
        n: built.dim(),
        rel_l2: 0.0,
        drifts: conserved_series(built.model(), &fom),
        diverged: trajectory_diverged(&fom),
        wallclock: fom_secs,
        note: None,
    };
    Ok(SweepResult { model: built.name().to_string(), fom: fom_report, cells })
}

fn hstack_all(blocks: &[DenseMatrix]) -> Result<DenseMatrix, BenchError> {
    let mut iter = blocks.iter();
    let first = iter.next().ok_or_else(|| BenchError::Config("no snapshot blocks".into()))?;
    let mut pooled = first.clone();
    for block in iter {
        pooled = pooled.hstack(block)?;
    }
    Ok(pooled)
}

/// Keep, per conserved quantity, the drift series with the largest peak.
fn merge_worst_drifts(
    worst: &mut Vec<(String, Vec<f64>)>,
    incoming: Vec<(String, Vec<f64>)>,
) {
    let peak = |s: &[f64]| s.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    for (name, series) in incoming {
        match worst.iter_mut().find(|(k, _)| *k == name) {
            Some((_, held)) => {
                if peak(&series) > peak(held) {
                    *held = series;
                }
            }
            None => worst.push((name, series)),
        }
    }
}

/// Train on a set of parameter values, test on unseen ones.
///
/// One trajectory is integrated per training value; the pool centers each
/// trajectory by its own initial state (when centering is on) so a single
/// basis serves every parameter, and inference runs once per cell on the
/// pooled data. Each cell's error is the mean of the relative state errors
/// over the test values; drift columns keep the worst series seen.
pub fn parametric_sweep(cfg: &ExperimentConfig) -> Result<SweepResult, BenchError> {
    let par = cfg
        .parametric
        .as_ref()
        .ok_or_else(|| BenchError::Config("parametric sweep needs parametric.train and parametric.test".into()))?;
    let probe = BuiltModel::from_block(&cfg.model)?;
    let schedule = validate_grid(cfg, &probe)?;
    let methods = &cfg.infer.methods;
    let test_steps = cfg.test_steps();

    // Training pool across parameter values.
    let mut raw_blocks = Vec::new();
    let mut centered_blocks = Vec::new();
    let mut rate_blocks = Vec::new();
    let mut grad_h_blocks = Vec::new();
    let mut grad_f_blocks = Vec::new();
    for &alpha in &par.train {
        let built = BuiltModel::from_block(&with_alpha(&cfg.model, alpha)?)?;
        let traj = built.simulate(&cfg.time, cfg.train_steps())?;
        let data =
            TrainingData::new(built.model(), &traj, cfg.time.stride, cfg.time.exact_derivatives)?;
        let x0 = data.states.column(0);
        centered_blocks.push(DenseMatrix::from_fn(data.states.rows(), data.states.cols(), |i, k| {
            data.states.get(i, k) - x0[i]
        }));
        grad_h_blocks.push(data.grad_h_columns(built.model()));
        if let Some(gf) = data.grad_f_columns(built.model()) {
            grad_f_blocks.push(gf);
        }
        rate_blocks.push(data.rates.clone());
        raw_blocks.push(data.states);
    }
    let pool_centered = hstack_all(&centered_blocks)?;
    let grad_f = match grad_f_blocks.is_empty() {
        true => None,
        false => Some(hstack_all(&grad_f_blocks)?),
    };
    let data = TrainingData {
        states: hstack_all(&raw_blocks)?,
        rates: hstack_all(&rate_blocks)?,
        grad_h: Some(hstack_all(&grad_h_blocks)?),
        grad_f,
    };

    // Test-side references, shared by every cell.
    struct TestCase {
        built: BuiltModel,
        fom: Trajectory,
        x0: Vec<f64>,
        secs: f64,
    }
    let mut tests: Vec<TestCase> = Vec::new();
    for &alpha in &par.test {
        let built = BuiltModel::from_block(&with_alpha(&cfg.model, alpha)?)?;
        let started = Instant::now();
        let fom = built.simulate(&cfg.time, test_steps)?;
        let secs = started.elapsed().as_secs_f64();
        tests.push(TestCase { x0: built.model().x0.clone(), built, fom, secs });
    }
    if tests.is_empty() {
        return Err(BenchError::Config("parametric.test must list at least one value".into()));
    }

    // Both parents are built uncentered: the centered family pools
    // per-trajectory shifts, so its shift is installed per test value below.
    let n_max = *schedule.iter().max().expect("schedule is nonempty");
    let want_centered = cfg.basis.center && methods.iter().any(|m| probe.centered_fit(*m));
    let want_plain = !cfg.basis.center || methods.iter().any(|m| !probe.centered_fit(*m));
    let parent_centered = match want_centered {
        true => Some(build_basis(&pool_centered, cfg.basis.kind, n_max, false)?),
        false => None,
    };
    let parent_plain = match want_plain {
        true => Some(build_basis(&data.states, cfg.basis.kind, n_max, false)?),
        false => None,
    };
    let pick_parent = |method: Method| -> &PodBasis {
        if cfg.basis.center && probe.centered_fit(method) {
            parent_centered.as_ref().expect("centered parent was built")
        } else {
            parent_plain.as_ref().expect("plain parent was built")
        }
    };

    let one_shot = one_shot_solves(cfg, &probe, &data, pick_parent);

    let run_cell = |method: Method, n: usize| -> ErrorReport {
        let cell_start = Instant::now();
        let center = cfg.basis.center && probe.centered_fit(method);
        let outcome = (|| {
            let parent = pick_parent(method);
            let basis = parent.truncate(n).map_err(|e| e.to_string())?;
            let op = operator_for_cell(&probe, parent, &basis, method, one_shot.get(&method), cfg, &data)?;
            let mut sum = 0.0;
            let mut worst: Vec<(String, Vec<f64>)> = Vec::new();
            let mut diverged = false;
            for case in &tests {
                let mut shifted = basis.clone();
                if center {
                    shifted.shift = Some(case.x0.clone());
                }
                let rom = assemble_with(&case.built, &shifted, method, op.as_ref())
                    .map_err(|e| e.to_string())?;
                let reduced = integrate_rom(
                    &rom,
                    &shifted,
                    &case.x0,
                    cfg.time.dt,
                    test_steps,
                    cfg.time.newton_tol,
                )
                .map_err(|e| e.to_string())?;
                let lifted = lift_trajectory(&shifted, &reduced).map_err(|e| e.to_string())?;
                diverged |= trajectory_diverged(&lifted);
                sum += rel_l2(&case.fom.states, &lifted.states).map_err(|e| e.to_string())?;
                merge_worst_drifts(&mut worst, conserved_series(case.built.model(), &lifted));
            }
            Ok((sum / tests.len() as f64, worst, diverged))
        })();
        finish_cell(cell_start, method, cfg.basis.kind, center, n, outcome)
    };

    let jobs: Vec<(Method, usize)> =
        methods.iter().flat_map(|&m| schedule.iter().map(move |&n| (m, n))).collect();
    let cells = run_jobs(&jobs, cfg.workers, &run_cell);

    let first = &tests[0];
    let fom_report = ErrorReport {
        method: "fom".to_string(),
        basis_kind: cfg.basis.kind,
        mean_centered: false,
        n: probe.dim(),
        rel_l2: 0.0,
        drifts: conserved_series(first.built.model(), &first.fom),
        diverged: trajectory_diverged(&first.fom),
        wallclock: first.secs,
        note: None,
    };
    Ok(SweepResult { model: probe.name().to_string(), fom: fom_report, cells })
}

/// Operator errors on a (time step) x (basis size) grid.
///
/// `errors[i][j]` is the relative Frobenius distance between the inferred
/// operator at `dts[i]`, `ns[j]` and its intrusive reference. Steps are
/// sorted coarse to fine.
#[derive(Debug, Clone)]
pub struct ConvergenceTable {
    pub target: ConvergeTarget,
    pub dts: Vec<f64>,
    pub ns: Vec<usize>,
    pub errors: Vec<Vec<f64>>,
}

impl ConvergenceTable {
    /// Per-size flags: true when the error never grows as the step shrinks.
    pub fn monotone_in_dt(&self) -> Vec<bool> {
        (0..self.ns.len())
            .map(|j| self.errors.windows(2).all(|w| w[1][j] <= w[0][j] * (1.0 + 1e-12)))
            .collect()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("target,dt,n,rel_error\n");
        for (i, &dt) in self.dts.iter().enumerate() {
            for (j, &n) in self.ns.iter().enumerate() {
                // dt is an input parameter: shortest round-trip form reads
                // better than the fixed-width measurement format.
                writeln!(
                    out,
                    "{},{dt},{n},{}",
                    self.target.label(),
                    csv_number(self.errors[i][j])
                )
                .expect("string write cannot fail");
            }
        }
        out
    }
}

/// Inferred-versus-intrusive operator error as the sampling step shrinks.
///
/// For each step the reference model is re-integrated over the training
/// window from its own initial state plus the configured number of seeded
/// random starts, so the pooled snapshots reach the largest requested rank.
/// Bases are built uncentered: the comparison is against a fixed projected
/// operator and a shift would change the fit, not the reference.
pub fn operator_convergence_study(cfg: &ExperimentConfig) -> Result<ConvergenceTable, BenchError> {
    let built = BuiltModel::from_block(&cfg.model)?;
    let model = built.model();
    let schedule = cfg.basis.schedule.clone();
    if schedule.is_empty() {
        return Err(BenchError::Config("basis.schedule must list at least one size".into()));
    }
    if cfg.converge.dts.is_empty() {
        return Err(BenchError::Config("converge.dts must list at least one step".into()));
    }
    let mut dts = cfg.converge.dts.clone();
    dts.sort_by(|a, b| b.partial_cmp(a).expect("steps are finite"));

    let reference = match cfg.converge.target {
        ConvergeTarget::NoncanonicalL => match &model.structure {
            Structure::StateDependentL(_) => {
                return Err(BenchError::Config(
                    "a state-dependent structure matrix has no constant intrusive reference".into(),
                ))
            }
            _ => model.structure_matrix(&model.x0),
        },
        ConvergeTarget::CanonicalA => {
            if !matches!(model.structure, Structure::CanonicalJ) {
                return Err(BenchError::Config(
                    "the canonical-energy target needs a canonical model".into(),
                ));
            }
            model.linear.clone().ok_or_else(|| {
                BenchError::Config("the canonical-energy target needs a linear energy block".into())
            })?
        }
    };

    let n_max = *schedule.iter().max().expect("schedule is nonempty");
    let scale = model.x0.iter().fold(0.0_f64, |m, v| m.max(v.abs())).max(1e-2);
    let mut starts = vec![model.x0.clone()];
    for i in 0..cfg.converge.ics {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(i as u64 + 1));
        starts.push((0..model.dim).map(|_| scale * rng.gen_range(-1.0..1.0)).collect());
    }

    let mut errors = Vec::with_capacity(dts.len());
    for &dt in &dts {
        let steps = (cfg.time.t_end_train / dt).round() as usize;
        let time = TimeBlock { dt, ..cfg.time.clone() };
        let mut state_blocks = Vec::new();
        let mut rate_blocks = Vec::new();
        let mut grad_h_blocks = Vec::new();
        let mut grad_f_blocks = Vec::new();
        for ic in &starts {
            let traj = built.simulate_from(ic, &time, steps)?;
            let data = TrainingData::new(model, &traj, 1, cfg.time.exact_derivatives)?;
            grad_h_blocks.push(data.grad_h_columns(model));
            if let Some(gf) = data.grad_f_columns(model) {
                grad_f_blocks.push(gf);
            }
            rate_blocks.push(data.rates.clone());
            state_blocks.push(data.states);
        }
        let states = hstack_all(&state_blocks)?;
        let rates = hstack_all(&rate_blocks)?;
        let grad_h = hstack_all(&grad_h_blocks)?;
        let grad_f = match grad_f_blocks.is_empty() {
            true => None,
            false => Some(hstack_all(&grad_f_blocks)?),
        };

        let parent = build_basis(&states, cfg.basis.kind, n_max, false)?;
        let mut row = Vec::with_capacity(schedule.len());
        for &n in &schedule {
            let basis = parent.truncate(n)?;
            let (have, want) = match cfg.converge.target {
                ConvergeTarget::NoncanonicalL => {
                    let want = intrusive_hamiltonian(&reference, &basis.u)?;
                    let inputs = InferenceInputs::noncanonical(
                        &states,
                        &rates,
                        &grad_h,
                        &basis,
                        cfg.converge.eta,
                    )?;
                    (opinf_noncanonical(&inputs)?, want)
                }
                ConvergeTarget::CanonicalA => {
                    let projected = basis.u.transpose().matmul(&reference.matmul(&basis.u)?)?;
                    let want = projected.symmetrize(1.0);
                    let inputs = InferenceInputs::canonical(
                        &states,
                        &rates,
                        grad_f.as_ref(),
                        &basis,
                        cfg.converge.eta,
                    )?;
                    (opinf_canonical(&inputs, cfg.infer.variant)?, want)
                }
            };
            row.push(have.sub(&want)?.frob_norm() / want.frob_norm());
        }
        errors.push(row);
    }
    Ok(ConvergenceTable { target: cfg.converge.target, dts, ns: schedule, errors })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bench::{build_rom, CSV_HEADER};

    fn wave_cfg(schedule: &str, methods: &str) -> ExperimentConfig {
        let text = format!(
            "model.name = wave\n\
             model.cells = 8\n\
             time.dt = 0.05\n\
             time.t_end_train = 2\n\
             basis.schedule = {schedule}\n\
             infer.method = {methods}\n"
        );
        ExperimentConfig::parse(&text, "test").expect("config parses")
    }

    #[test]
    fn wave_sweep_improves_with_modes_and_emits_the_schema() {
        let cfg = wave_cfg("4, 8", "h-rom");
        let sweep = mode_sweep(&cfg).unwrap();
        assert_eq!(sweep.model, "wave");
        assert_eq!(sweep.cells.len(), 2);

        let err_of = |n: usize| sweep.cells.iter().find(|c| c.n == n).unwrap().rel_l2;
        assert!(err_of(8) < err_of(4), "more modes must help: {} vs {}", err_of(8), err_of(4));
        assert!(err_of(4).is_finite() && err_of(4) > 0.0);

        assert_eq!(sweep.fom.method, "fom");
        assert_eq!(sweep.fom.n, 16);
        assert_eq!(sweep.fom.rel_l2, 0.0);

        // The projected quadratic energy is a midpoint invariant, so the
        // reduced run's energy drift sits at roundoff.
        let drift = sweep.cells[0].max_abs_drift("H").unwrap();
        assert!(drift < 1e-9, "energy drift {drift}");

        let csv = sweep.to_csv(false);
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], CSV_HEADER);
        assert_eq!(lines.len(), 4);
        for line in &lines[1..] {
            assert_eq!(line.split(',').count(), 11);
            assert!(line.starts_with("wave,ordinary,"));
        }
    }

    #[test]
    fn single_cell_sweep_equals_the_direct_pipeline() {
        let mut cfg = wave_cfg("6", "nc-h");
        cfg.basis.center = false;
        let sweep = mode_sweep(&cfg).unwrap();
        let cell = &sweep.cells[0];
        assert!(!cell.mean_centered);

        let built = BuiltModel::from_block(&cfg.model).unwrap();
        let fom = built.simulate(&cfg.time, cfg.test_steps()).unwrap();
        let data = TrainingData::new(built.model(), &fom, 1, false).unwrap();
        let basis = pod_ordinary(&data.states, 6, false).unwrap();
        let rom =
            build_rom(&built, &basis, Method::NcH, cfg.infer.variant, cfg.infer.eta, &data)
                .unwrap();
        let reduced = integrate_rom(
            &rom,
            &basis,
            &built.model().x0,
            cfg.time.dt,
            cfg.test_steps(),
            cfg.time.newton_tol,
        )
        .unwrap();
        let lifted = lift_trajectory(&basis, &reduced).unwrap();
        let want = rel_l2(&fom.states, &lifted.states).unwrap();

        assert!(
            (cell.rel_l2 - want).abs() <= 1e-13 * want.max(1.0),
            "sweep cell {} vs direct {want}",
            cell.rel_l2
        );
    }

    #[test]
    fn failing_cells_are_flagged_while_the_sweep_continues() {
        // The separable fit needs a cotangent-lift basis; on the default
        // ordinary kind its cell must fail in place, not abort the grid.
        let mut cfg = wave_cfg("4", "h-rom, separable");
        cfg.workers = 2;
        let sweep = mode_sweep(&cfg).unwrap();
        assert_eq!(sweep.cells.len(), 2);

        let good = sweep.cells.iter().find(|c| c.method == "h-rom").unwrap();
        assert!(!good.diverged && good.rel_l2.is_finite());

        let bad = sweep.cells.iter().find(|c| c.method == "separable").unwrap();
        assert!(bad.diverged);
        assert_eq!(bad.rel_l2, f64::INFINITY);
        assert!(bad.note.as_ref().unwrap().contains("cotangent"));

        let csv = sweep.to_csv(false);
        assert!(csv.lines().any(|l| l.contains(",separable,") && l.contains("inf")));
    }

    #[test]
    fn one_shot_generic_matches_per_size_refits_on_an_ordinary_basis() {
        // Reduced coordinates of an uncentered ordinary basis have a diagonal
        // Gram matrix, so slicing the largest fit equals refitting small.
        let mut cfg = wave_cfg("4, 8", "generic");
        cfg.basis.center = false;
        let refit = mode_sweep(&cfg).unwrap();
        cfg.infer.one_shot = true;
        let sliced = mode_sweep(&cfg).unwrap();
        for (a, b) in refit.cells.iter().zip(&sliced.cells) {
            assert_eq!(a.n, b.n);
            assert!(
                (a.rel_l2 - b.rel_l2).abs() <= 1e-12 * a.rel_l2.max(1.0),
                "n={}: refit {} vs sliced {}",
                a.n,
                a.rel_l2,
                b.rel_l2
            );
        }
    }

    #[test]
    fn parametric_average_is_the_mean_of_per_parameter_errors() {
        let base = "model.name = wave\n\
                    model.cells = 8\n\
                    time.dt = 0.05\n\
                    time.t_end_train = 1\n\
                    basis.schedule = 6\n\
                    infer.method = h-rom\n\
                    parametric.train = 5, 7\n\
                    parametric.test = TEST\n";
        let run = |test: &str| {
            let cfg = ExperimentConfig::parse(&base.replace("TEST", test), "test").unwrap();
            let sweep = parametric_sweep(&cfg).unwrap();
            assert_eq!(sweep.cells.len(), 1);
            sweep.cells[0].rel_l2
        };
        let at_6 = run("6");
        let at_9 = run("9");
        let both = run("6, 9");
        assert!(at_6.is_finite() && at_6 > 0.0);
        assert!(
            (both - 0.5 * (at_6 + at_9)).abs() <= 1e-12 * both,
            "mean {both} vs halves {at_6}, {at_9}"
        );
    }

    #[test]
    fn operator_convergence_study_tracks_the_time_step() {
        let text = "model.name = wave\n\
                    model.cells = 8\n\
                    time.dt = 0.05\n\
                    time.t_end_train = 2\n\
                    basis.schedule = 8, 16\n\
                    basis.center = 0\n\
                    converge.dts = 0.05, 0.1\n\
                    converge.ics = 2\n\
                    converge.target = nc-h\n";
        let cfg = ExperimentConfig::parse(text, "test").unwrap();
        let table = operator_convergence_study(&cfg).unwrap();
        assert_eq!(table.dts, vec![0.1, 0.05], "steps sorted coarse to fine");
        assert_eq!(table.ns, vec![8, 16]);
        assert!(table.errors[0][1] > 0.0);
        // At n = 8 the closure error dominates and the step barely matters;
        // at the full size n = 16 only the sampling error is left, so that
        // column must shrink with the step.
        assert!(
            table.monotone_in_dt()[1],
            "sampling error should shrink with dt: {:?}",
            table.errors
        );
        assert!(table.errors[1][1] < 0.5 * table.errors[0][1]);

        let csv = table.to_csv();
        assert!(csv.starts_with("target,dt,n,rel_error\n"));
        assert_eq!(csv.lines().count(), 5);
        assert!(csv.contains("nc-h,0.1,8,"), "{csv}");
    }

    #[test]
    fn exact_derivatives_pin_the_inferred_operator_at_full_size() {
        for target in ["nc-h", "c-h"] {
            let text = format!(
                "model.name = wave\n\
                 model.cells = 8\n\
                 time.dt = 0.05\n\
                 time.t_end_train = 2\n\
                 time.exact_derivatives = 1\n\
                 basis.schedule = 16\n\
                 basis.center = 0\n\
                 converge.dts = 0.1\n\
                 converge.ics = 2\n\
                 converge.target = {target}\n"
            );
            let cfg = ExperimentConfig::parse(&text, "test").unwrap();
            let table = operator_convergence_study(&cfg).unwrap();
            assert!(
                table.errors[0][0] <= 1e-8,
                "{target} full-size error {} should be at the solver floor",
                table.errors[0][0]
            );
        }
    }
}
