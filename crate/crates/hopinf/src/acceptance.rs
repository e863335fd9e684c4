//! Acceptance battery: ten numbered end-to-end checks (AC-1 through AC-10)
//! with tolerances and wall-clock budgets pinned in code. The `check`
//! subcommand and the `acceptance` integration test target both drive these
//! runners; each returns a result instead of panicking so every criterion
//! gets reported even when one fails.

use std::any::Any;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::sync::OnceLock;
use std::time::Instant;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::basis::{pod_block_qp, pod_cotangent_lift, pod_ordinary, PodKind};
use crate::bench::{
    assemble_with, infer_operator, integrate_rom, operator_convergence_study, rel_l2,
    trajectory_diverged, AssembledRom, BuiltModel, TrainingData,
};
use crate::cli::{
    BasisBlock, ConvergeBlock, ConvergeTarget, ExperimentConfig, InferBlock, IoBlock, Method,
    ModelBlock, TimeBlock,
};
use crate::matkit::{
    commutation_matrix, constrained_lstsq, kron, lstsq_opinf, vec_mat, DenseMatrix, SymmetryKind,
};
use crate::models::{
    build_bbm, build_kdv_v1, build_kdv_v2, build_nonseparable, build_wave, j_dense,
    kdv_fom_step_fns, BbmParams, HamiltonianModel, KdvParams, NonsepParams, WaveParams,
};
use crate::reduce::{
    cubic_rom_step_functions, lift_trajectory, opinf_canonical, opinf_legacy_separable,
    CanonicalVariant, InferenceInputs, ReducedCubicModel,
};
use crate::timestep::{avf_newton, implicit_midpoint_linear, NewtonSettings, Trajectory};

/// Outcome of one acceptance criterion.
#[derive(Debug, Clone)]
pub struct CriterionResult {
    pub id: &'static str,
    pub pass: bool,
    pub detail: String,
    /// Measured wall time of the check.
    pub secs: f64,
    /// Pinned wall-time budget; exceeding it fails the criterion.
    pub budget: f64,
}

impl CriterionResult {
    /// One-line report: id, verdict, timing, and the measured numbers.
    pub fn line(&self) -> String {
        let verdict = if self.pass { "pass" } else { "FAIL" };
        format!("{} {verdict} ({:.1}s of {:.0}s): {}", self.id, self.secs, self.budget, self.detail)
    }
}

/// Run every criterion in order.
pub fn run_all() -> Vec<CriterionResult> {
    vec![
        check_constrained_solver_oracle(),
        check_vectorization_identities(),
        check_truncation_consistency(),
        check_wave_rom_energy(),
        check_operator_convergence(),
        check_kdv_reference_invariants(),
        check_kdv_rom_energy(),
        check_bbm_invariants(),
        check_nonseparable_energy_fit(),
        check_gradient_consistency(),
    ]
}

fn run(
    id: &'static str,
    budget: f64,
    body: impl FnOnce() -> Result<String, String>,
) -> CriterionResult {
    let start = Instant::now();
    let outcome = catch_unwind(AssertUnwindSafe(body));
    let secs = start.elapsed().as_secs_f64();
    let (mut pass, mut detail) = match outcome {
        Ok(Ok(d)) => (true, d),
        Ok(Err(d)) => (false, d),
        Err(payload) => (false, format!("panicked: {}", panic_text(payload.as_ref()))),
    };
    if pass && secs > budget {
        pass = false;
        detail = format!("over budget ({secs:.1}s > {budget:.0}s); {detail}");
    }
    CriterionResult { id, pass, detail, secs, budget }
}

fn panic_text(payload: &(dyn Any + Send)) -> String {
    payload
        .downcast_ref::<&str>()
        .map(|s| s.to_string())
        .or_else(|| payload.downcast_ref::<String>().cloned())
        .unwrap_or_else(|| "non-string panic payload".into())
}

fn err_str(e: impl std::fmt::Display) -> String {
    e.to_string()
}

/// Peak |f(x_k) - f(x_0)| / max(|f(x_0)|, eps) of a named conserved
/// quantity along a trajectory.
fn relative_peak_drift(model: &HamiltonianModel, traj: &Trajectory, name: &str) -> Option<f64> {
    let f = model.conserved.iter().find(|(n, _)| n == name).map(|(_, f)| f)?;
    let base = f(&traj.state(0));
    let peak =
        (0..traj.len()).map(|k| (f(&traj.state(k)) - base).abs()).fold(0.0_f64, f64::max);
    Some(peak / base.abs().max(1e-300))
}

fn hstack_all(blocks: &[DenseMatrix]) -> Result<DenseMatrix, String> {
    let mut out = blocks.first().ok_or("no snapshot blocks")?.clone();
    for b in &blocks[1..] {
        out = out.hstack(b).map_err(err_str)?;
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// AC-1: the symmetry-constrained solver against a free-parameter oracle.

/// Basis of the symmetric or skew n x n matrices, with the weight each
/// coordinate carries in ||D||_F^2 (off-diagonal pairs count twice).
fn symmetry_class_basis(n: usize, kind: SymmetryKind) -> (Vec<DenseMatrix>, Vec<f64>) {
    let mut basis = Vec::new();
    let mut weights = Vec::new();
    for i in 0..n {
        for j in i..n {
            let mut e = DenseMatrix::zeros(n, n);
            match kind {
                SymmetryKind::Symmetric if i == j => {
                    e.set(i, i, 1.0);
                    weights.push(1.0);
                }
                SymmetryKind::Symmetric => {
                    e.set(i, j, 1.0);
                    e.set(j, i, 1.0);
                    weights.push(2.0);
                }
                SymmetryKind::Skew => {
                    if i == j {
                        continue;
                    }
                    e.set(i, j, 1.0);
                    e.set(j, i, -1.0);
                    weights.push(2.0);
                }
            }
            basis.push(e);
        }
    }
    (basis, weights)
}

/// Brute-force reference for the constrained fit: expand D over the free
/// coordinates of its symmetry class and solve the explicit normal
/// equations of ||C - A D B||_F^2 + eta ||D||_F^2. Returns None when the
/// normal matrix is numerically singular.
fn oracle_constrained(
    a: &DenseMatrix,
    b: &DenseMatrix,
    c: &DenseMatrix,
    kind: SymmetryKind,
    eta: f64,
) -> Option<DenseMatrix> {
    let n = a.rows();
    let (basis, weights) = symmetry_class_basis(n, kind);
    let k = basis.len();
    let rows = c.rows() * c.cols();
    let mut g = nalgebra::DMatrix::<f64>::zeros(rows, k);
    for (col, e) in basis.iter().enumerate() {
        let aeb = a.matmul(e).ok()?.matmul(b).ok()?;
        for (r, v) in vec_mat(&aeb).into_iter().enumerate() {
            g[(r, col)] = v;
        }
    }
    let cv = nalgebra::DVector::from_vec(vec_mat(c));
    let mut normal = g.transpose() * &g;
    for (idx, w) in weights.iter().enumerate() {
        normal[(idx, idx)] += eta * w;
    }
    let rhs = g.transpose() * cv;
    let lu = normal.lu();
    let udiag = lu.u().diagonal();
    let umax = udiag.amax();
    if umax == 0.0 || udiag.iter().any(|v| v.abs() <= 1e-10 * umax) {
        return None;
    }
    let theta = lu.solve(&rhs)?;
    let mut d = DenseMatrix::zeros(n, n);
    for (coef, e) in theta.iter().zip(&basis) {
        d = d.add(&e.scale(*coef)).ok()?;
    }
    Some(d)
}

/// AC-1: on a grid of random instances covering both symmetry kinds,
/// n in {2, 3, 4}, n_s in {3, 8}, and eta in {0, 1e-6}, the constrained
/// solver must agree with the free-parameter oracle to 1e-9 relative
/// Frobenius error; combinations whose normal matrix is structurally
/// singular must be rejected by both sides.
pub fn check_constrained_solver_oracle() -> CriterionResult {
    run("AC-1", 5.0, || {
        let tol = 1e-9;
        let mut rng = ChaCha8Rng::seed_from_u64(41);
        let mut compared = 0usize;
        let mut worst = 0.0_f64;
        for (kind, label) in [(SymmetryKind::Symmetric, "symmetric"), (SymmetryKind::Skew, "skew")]
        {
            for n in [2usize, 3, 4] {
                for ns in [3usize, 8] {
                    for eta in [0.0, 1e-6] {
                        // Diagonal dominance keeps A invertible for every draw.
                        let a = DenseMatrix::from_fn(n, n, |i, j| {
                            rng.gen_range(-1.0..1.0) + if i == j { 2.0 } else { 0.0 }
                        });
                        let b = DenseMatrix::from_fn(n, ns, |_, _| rng.gen_range(-1.0..1.0));
                        let c = DenseMatrix::from_fn(n, ns, |_, _| rng.gen_range(-1.0..1.0));
                        let tag = format!("{label} n={n} n_s={ns} eta={eta}");
                        match (oracle_constrained(&a, &b, &c, kind, eta),
                               constrained_lstsq(&a, &b, &c, kind, eta)) {
                            (Some(want), Ok(got)) => {
                                let rel = got.sub(&want).map_err(err_str)?.frob_norm()
                                    / want.frob_norm().max(1e-300);
                                if rel > tol {
                                    return Err(format!("{tag}: rel error {rel:.3e} above {tol:.0e}"));
                                }
                                worst = worst.max(rel);
                                compared += 1;
                            }
                            // Both sides agree the instance is singular; with
                            // n_s < n and eta = 0 the symmetric class really
                            // contains a null direction of the design matrix.
                            (None, Err(_)) => {}
                            (None, Ok(_)) => {
                                return Err(format!(
                                    "{tag}: solver returned a solution on a singular instance"
                                ))
                            }
                            (Some(_), Err(e)) => {
                                return Err(format!("{tag}: solver failed on a well-posed instance: {e}"))
                            }
                        }
                    }
                }
            }
        }
        if compared < 20 {
            return Err(format!("only {compared} well-posed instances, need at least 20"));
        }
        Ok(format!("{compared} instances match the free-parameter oracle, worst rel error {worst:.2e}"))
    })
}

// ---------------------------------------------------------------------------
// AC-2: vectorization and commutation identities.

/// AC-2: 100 random-shape checks of vec(A X B) = (B' (x) A) vec(X) and
/// K vec(X) = vec(X'), each to 1e-12 max-abs error.
pub fn check_vectorization_identities() -> CriterionResult {
    run("AC-2", 1.0, || {
        let tol = 1e-12;
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let mut worst = 0.0_f64;
        for trial in 0..100 {
            let m = rng.gen_range(1..=5);
            let n = rng.gen_range(1..=5);
            let p = rng.gen_range(1..=5);
            let q = rng.gen_range(1..=5);
            let a = DenseMatrix::from_fn(p, m, |_, _| rng.gen_range(-1.0..1.0));
            let x = DenseMatrix::from_fn(m, n, |_, _| rng.gen_range(-1.0..1.0));
            let b = DenseMatrix::from_fn(n, q, |_, _| rng.gen_range(-1.0..1.0));

            let want = vec_mat(&a.matmul(&x).map_err(err_str)?.matmul(&b).map_err(err_str)?);
            let got = kron(&b.transpose(), &a).matvec(&vec_mat(&x));
            let d1 = want
                .iter()
                .zip(&got)
                .map(|(w, g)| (w - g).abs())
                .fold(0.0_f64, f64::max);

            let kmat = commutation_matrix(m, n);
            let wantt = vec_mat(&x.transpose());
            let gott = kmat.matvec(&vec_mat(&x));
            let d2 = wantt
                .iter()
                .zip(&gott)
                .map(|(w, g)| (w - g).abs())
                .fold(0.0_f64, f64::max);

            let d = d1.max(d2);
            if d > tol {
                return Err(format!("trial {trial} ({p}x{m} {m}x{n} {n}x{q}): error {d:.3e} above {tol:.0e}"));
            }
            worst = worst.max(d);
        }
        Ok(format!("100 identity checks, worst abs error {worst:.2e}"))
    })
}

// ---------------------------------------------------------------------------
// AC-3: solving large and truncating equals refitting small.

/// AC-3: with a diagonal reduced data Gram (plain POD), the leading block
/// of the unconstrained fit at n = 20 equals the refit at n = 5; with
/// diagonal weights and orthogonal data rows the same holds for the
/// constrained fit. Both to 1e-10 relative error.
pub fn check_truncation_consistency() -> CriterionResult {
    run("AC-3", 10.0, || {
        let tol = 1e-10;

        // Unconstrained fit on wave snapshots from a random start.
        let p = WaveParams { cells: 50, ..WaveParams::default() };
        let built = BuiltModel::from_block(&ModelBlock::Wave(p)).map_err(err_str)?;
        let model = built.model();
        let mut rng = ChaCha8Rng::seed_from_u64(43);
        let x0: Vec<f64> = (0..model.dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let time = TimeBlock {
            dt: 0.05,
            t_end_train: 3.0,
            t_end_test: 3.0,
            stride: 1,
            substep: 0.0,
            newton_tol: 1e-12,
            exact_derivatives: false,
        };
        let traj = built.simulate_from(&x0, &time, 60).map_err(err_str)?;
        let data = TrainingData::new(model, &traj, 1, false).map_err(err_str)?;
        let parent = pod_ordinary(&data.states, 20, false).map_err(err_str)?;
        let child = parent.truncate(5).map_err(err_str)?;
        let d20 = lstsq_opinf(
            &parent.project_states(&data.states).map_err(err_str)?,
            &parent.project_rates(&data.rates).map_err(err_str)?,
            0.0,
        )
        .map_err(err_str)?;
        let d5 = lstsq_opinf(
            &child.project_states(&data.states).map_err(err_str)?,
            &child.project_rates(&data.rates).map_err(err_str)?,
            0.0,
        )
        .map_err(err_str)?;
        let free_rel =
            d20.top_left(5, 5).sub(&d5).map_err(err_str)?.frob_norm() / d5.frob_norm().max(1e-300);
        if free_rel > tol {
            return Err(format!("unconstrained truncation mismatch {free_rel:.3e} above {tol:.0e}"));
        }

        // Constrained fit on synthetic data with exactly orthogonal rows.
        let (n, ns, keep) = (6usize, 8usize, 3usize);
        let raw = nalgebra::DMatrix::<f64>::from_fn(ns, n, |_, _| rng.gen_range(-1.0..1.0));
        let qmat = raw.qr().q();
        let sigma = [3.0, 2.2, 1.7, 1.1, 0.6, 0.3];
        let xhat = DenseMatrix::from_fn(n, ns, |i, j| sigma[i] * qmat[(j, i)]);
        let c = DenseMatrix::from_fn(n, ns, |_, _| rng.gen_range(-1.0..1.0));
        let diag = [1.5, 0.9, 2.2, 0.6, 1.1, 1.7];
        let a_diag = DenseMatrix::from_fn(n, n, |i, j| if i == j { diag[i] } else { 0.0 });
        let mut worst = free_rel;
        for kind in [SymmetryKind::Symmetric, SymmetryKind::Skew] {
            for eta in [0.0, 1e-6] {
                for a in [DenseMatrix::identity(n), a_diag.clone()] {
                    let full = constrained_lstsq(&a, &xhat, &c, kind, eta).map_err(err_str)?;
                    let sub = constrained_lstsq(
                        &a.top_left(keep, keep),
                        &xhat.row_block(0, keep),
                        &c.row_block(0, keep),
                        kind,
                        eta,
                    )
                    .map_err(err_str)?;
                    let rel = full.top_left(keep, keep).sub(&sub).map_err(err_str)?.frob_norm()
                        / sub.frob_norm().max(1e-300);
                    if rel > tol {
                        return Err(format!("constrained truncation mismatch {rel:.3e} above {tol:.0e}"));
                    }
                    worst = worst.max(rel);
                }
            }
        }
        Ok(format!("leading blocks match refits, worst rel error {worst:.2e}"))
    })
}

// ---------------------------------------------------------------------------
// AC-4: long-horizon energy conservation of the wave surrogates.

/// AC-4: wave defaults (1000 unknowns), 16-mode block basis trained on
/// [0, 20] at dt = 0.02, surrogates integrated to t = 100. Relative energy
/// drift must stay at 1e-10 for the structure-preserving routes whose
/// energy block is projected, and at 1e-6 for the fully inferred canonical
/// fit.
pub fn check_wave_rom_energy() -> CriterionResult {
    run("AC-4", 60.0, || {
        let p = WaveParams::default();
        let built = BuiltModel::from_block(&ModelBlock::Wave(p)).map_err(err_str)?;
        let model = built.model();
        let time = TimeBlock {
            dt: 0.02,
            t_end_train: 20.0,
            t_end_test: 100.0,
            stride: 1,
            substep: 0.0,
            newton_tol: 1e-12,
            exact_derivatives: true,
        };
        let train = built.simulate(&time, 1000).map_err(err_str)?;
        // Exact derivatives keep the canonical fit's error down to closure
        // level; differenced derivatives alone would eat the 1e-6 budget.
        let data = TrainingData::new(model, &train, 1, true).map_err(err_str)?;
        let basis = pod_block_qp(&data.states, 8, false).map_err(err_str)?;
        let mut details = Vec::new();
        // The uniform-displacement direction carries no energy gradient, so the
        // gradient snapshots are rank-deficient and the skew fit needs a tiny
        // ridge. Conservation is structural for any skew fit, so the ridge
        // cannot loosen the drift bounds below.
        let eta = 1e-6;
        for (method, tol) in [(Method::HRom, 1e-10), (Method::NcH, 1e-10), (Method::CH, 1e-6)] {
            let op = infer_operator(&built, &basis, method, CanonicalVariant::Exact, eta, &data)
                .map_err(err_str)?;
            let rom = assemble_with(&built, &basis, method, op.as_ref()).map_err(err_str)?;
            let reduced =
                integrate_rom(&rom, &basis, &model.x0, time.dt, 5000, 1e-12).map_err(err_str)?;
            let lifted = lift_trajectory(&basis, &reduced).map_err(err_str)?;
            let drift = relative_peak_drift(model, &lifted, "H")
                .ok_or("wave model reports no H series")?;
            if drift > tol {
                return Err(format!(
                    "{}: relative energy drift {drift:.3e} above {tol:.0e}",
                    method.label()
                ));
            }
            details.push(format!("{} {drift:.1e}", method.label()));
        }
        Ok(format!("relative energy drift over [0, 100]: {}", details.join(", ")))
    })
}

// ---------------------------------------------------------------------------
// AC-5: inferred operators converge to the projections as dt shrinks.

fn convergence_config(target: ConvergeTarget, kind: PodKind) -> ExperimentConfig {
    ExperimentConfig {
        model: ModelBlock::Wave(WaveParams { cells: 32, ..WaveParams::default() }),
        time: TimeBlock {
            dt: 1e-2,
            t_end_train: 2.0,
            t_end_test: 2.0,
            stride: 1,
            substep: 0.0,
            newton_tol: 1e-12,
            exact_derivatives: false,
        },
       basis: BasisBlock { kind, center: false, schedule: vec![64] },
        infer: InferBlock {
            methods: Vec::new(),
            variant: CanonicalVariant::Exact,
            eta: 0.0,
            one_shot: false,
        },
        parametric: None,
        // Three random starts: opposite-sign frequency pairs are degenerate, so
        // each trajectory only spans half of every eigenplane pair and pooled
        // starts are needed to reach the full rank of 64.
        converge: ConvergeBlock { dts: vec![1e-2, 5e-3, 2.5e-3], ics: 3, target, eta: 0.0 },
        io: IoBlock { out: PathBuf::from("."), emit_wallclock: false, write_drift_series: false },
        seed: 7,
        workers: 1,
    }
}

/// AC-5: on the 64-unknown wave problem with differenced derivatives and
/// pooled random starts, the full-size operator errors must decrease
/// strictly through dt in {1e-2, 5e-3, 2.5e-3} and end at or below 1e-4,
/// for both the skew structure fit and the symmetric energy fit.
pub fn check_operator_convergence() -> CriterionResult {
    run("AC-5", 120.0, || {
        let tol = 1e-4;
        let mut details = Vec::new();
        for (target, kind) in [
            (ConvergeTarget::NoncanonicalL, PodKind::Ordinary),
            (ConvergeTarget::CanonicalA, PodKind::CotangentLift),
        ] {
            let cfg = convergence_config(target, kind);
            let table = operator_convergence_study(&cfg).map_err(err_str)?;
            let col: Vec<f64> = table.errors.iter().map(|row| row[0]).collect();
            for w in col.windows(2) {
                if !(w[1] < w[0]) {
                    return Err(format!(
                        "{}: error did not strictly decrease with the step: {col:?}",
                        target.label()
                    ));
                }
            }
            let last = *col.last().ok_or("empty convergence table")?;
            if last > tol {
                return Err(format!(
                    "{}: finest-step error {last:.3e} above {tol:.0e}",
                    target.label()
                ));
            }
            let rendered: Vec<String> = col.iter().map(|e| format!("{e:.1e}")).collect();
            details.push(format!("{} [{}]", target.label(), rendered.join(" > ")));
        }
        Ok(format!("operator errors through the step grid: {}", details.join("; ")))
    })
}

// ---------------------------------------------------------------------------
// AC-6 and AC-7 share one reference solution.

static KDV_REFERENCE: OnceLock<Result<Trajectory, String>> = OnceLock::new();

/// Reference run shared by AC-6 and AC-7: the default soliton stepped by
/// the averaged-gradient rule at dt = 0.02 over [0, 20], Newton tolerance
/// 1e-10.
fn kdv_reference() -> &'static Result<Trajectory, String> {
    KDV_REFERENCE.get_or_init(|| {
        let p = KdvParams::default();
        let model = build_kdv_v1(&p).map_err(err_str)?;
        let (residual, jacobian) = kdv_fom_step_fns(&p, 0.02);
        let settings = NewtonSettings { tol: 1e-10, max_iters: 50 };
        avf_newton(residual, jacobian, &model.x0, 0.02, 1000, &settings).map_err(err_str)
    })
}

/// AC-6: the reference solution keeps the cubic energy and the mass within
/// 1e-9 relative drift across all 1000 steps.
pub fn check_kdv_reference_invariants() -> CriterionResult {
    run("AC-6", 120.0, || {
        let tol = 1e-9;
        let traj = kdv_reference().as_ref().map_err(Clone::clone)?;
        let model = build_kdv_v1(&KdvParams::default()).map_err(err_str)?;
        let h = relative_peak_drift(&model, traj, "H").ok_or("no H series")?;
        let mass = relative_peak_drift(&model, traj, "mass").ok_or("no mass series")?;
        if h > tol {
            return Err(format!("relative energy drift {h:.3e} above {tol:.0e}"));
        }
        if mass > tol {
            return Err(format!("relative mass drift {mass:.3e} above {tol:.0e}"));
        }
        Ok(format!("relative drift over [0, 20]: energy {h:.2e}, mass {mass:.2e}"))
    })
}

/// AC-7: a 48-mode mean-centered skew-structure surrogate trained on the
/// reference run conserves its reduced energy to 1e-9 over [0, 100], and
/// its full-space energy drift undercuts the unconstrained fit at the same
/// size by at least a factor of ten.
pub fn check_kdv_rom_energy() -> CriterionResult {
    run("AC-7", 300.0, || {
        let traj = kdv_reference().as_ref().map_err(Clone::clone)?;
        let p = KdvParams::default();
        let built = BuiltModel::from_block(&ModelBlock::KdvV1(p)).map_err(err_str)?;
        let model = built.model();
        let data = TrainingData::new(model, traj, 1, false).map_err(err_str)?;
        let basis = pod_ordinary(&data.states, 48, true).map_err(err_str)?;

        let op = infer_operator(&built, &basis, Method::NcH, CanonicalVariant::Exact, 0.0, &data)
            .map_err(err_str)?;
        let rom = assemble_with(&built, &basis, Method::NcH, op.as_ref()).map_err(err_str)?;
        let reduced =
            integrate_rom(&rom, &basis, &model.x0, 0.02, 5000, 1e-10).map_err(err_str)?;
        let AssembledRom::Cubic(cubic) = &rom else {
            return Err("the surrogate should carry a cubic reduced energy".into());
        };
        let hhat = reduced_energy_drift(cubic, &reduced);
        if hhat > 1e-9 {
            return Err(format!("relative reduced-energy drift {hhat:.3e} above 1e-9"));
        }

        let lifted = lift_trajectory(&basis, &reduced).map_err(err_str)?;
        let h_skew = relative_peak_drift(model, &lifted, "H").ok_or("no H series")?;
        let h_free = match generic_rom_energy_drift(&built, &basis, &data) {
            Ok(d) => d,
            // A blown-up or failed unconstrained run drifts unboundedly.
            Err(_) => f64::INFINITY,
        };
        if !(h_skew * 10.0 <= h_free) {
            return Err(format!(
                "full-space energy drift {h_skew:.3e} is not 10x below the unconstrained fit's {h_free:.3e}"
            ));
        }
        Ok(format!(
            "reduced-energy drift {hhat:.2e}; full energy drift {h_skew:.2e} vs {h_free:.2e} unconstrained"
        ))
    })
}

fn reduced_energy_drift(cubic: &ReducedCubicModel, reduced: &Trajectory) -> f64 {
    let base = cubic.hamiltonian(&reduced.state(0));
    let peak = (0..reduced.len())
        .map(|k| (cubic.hamiltonian(&reduced.state(k)) - base).abs())
        .fold(0.0_f64, f64::max);
    peak / base.abs().max(1e-300)
}

fn generic_rom_energy_drift(
    built: &BuiltModel,
    basis: &crate::basis::PodBasis,
    data: &TrainingData,
) -> Result<f64, String> {
    let model = built.model();
    let op = infer_operator(built, basis, Method::Generic, CanonicalVariant::Exact, 0.0, data)
        .map_err(err_str)?;
    let rom = assemble_with(built, basis, Method::Generic, op.as_ref()).map_err(err_str)?;
    let reduced = integrate_rom(&rom, basis, &model.x0, 0.02, 5000, 1e-10).map_err(err_str)?;
    let lifted = lift_trajectory(basis, &reduced).map_err(err_str)?;
    if trajectory_diverged(&lifted) {
        return Ok(f64::INFINITY);
    }
    relative_peak_drift(model, &lifted, "H").ok_or_else(|| "no H series".into())
}

// ---------------------------------------------------------------------------
// AC-8: the dispersive reference run and its skew-structure surrogate.

/// AC-8: the 1024-point dispersive model integrated with fine substeps over
/// [0, 0.5] keeps energy and momentum within 1e-8 relative drift, and the
/// 44-mode mean-centered skew-structure surrogate trained on that run
/// conserves its reduced energy to 1e-8.
pub fn check_bbm_invariants() -> CriterionResult {
    run("AC-8", 600.0, || {
        let tol = 1e-8;
        let p = BbmParams::default();
        let built = BuiltModel::from_block(&ModelBlock::Bbm(p)).map_err(err_str)?;
        let model = built.model();
        let time = TimeBlock {
            dt: 2.5e-4,
            t_end_train: 0.5,
            t_end_test: 0.5,
            stride: 1,
            substep: 2.5e-5,
            newton_tol: 1e-12,
            exact_derivatives: false,
        };
        let fom = built.simulate(&time, 2000).map_err(err_str)?;
        let h = relative_peak_drift(model, &fom, "H").ok_or("no H series")?;
        let mom = relative_peak_drift(model, &fom, "P").ok_or("no P series")?;
        if h > tol {
            return Err(format!("relative energy drift {h:.3e} above {tol:.0e}"));
        }
        if mom > tol {
            return Err(format!("relative momentum drift {mom:.3e} above {tol:.0e}"));
        }

        let data = TrainingData::new(model, &fom, 1, false).map_err(err_str)?;
        let basis = pod_ordinary(&data.states, 44, true).map_err(err_str)?;
        let op = infer_operator(&built, &basis, Method::NcH, CanonicalVariant::Exact, 0.0, &data)
            .map_err(err_str)?;
        let rom = assemble_with(&built, &basis, Method::NcH, op.as_ref()).map_err(err_str)?;
        let reduced =
            integrate_rom(&rom, &basis, &model.x0, time.dt, 2000, 1e-12).map_err(err_str)?;
        let AssembledRom::Cubic(cubic) = &rom else {
            return Err("the surrogate should carry a cubic reduced energy".into());
        };
        let hhat = reduced_energy_drift(cubic, &reduced);
        if hhat > tol {
            return Err(format!("relative reduced-energy drift {hhat:.3e} above {tol:.0e}"));
        }
        Ok(format!(
            "reference drift: energy {h:.2e}, momentum {mom:.2e}; surrogate reduced-energy drift {hhat:.2e}"
        ))
    })
}

// ---------------------------------------------------------------------------
// AC-9: the nonseparable energy block versus the separable baseline.

/// AC-9: on the 1000-unknown bilinear-energy model, a 10-mode lift basis
/// built from five starts that share one spatial profile per start recovers
/// the projected energy block to 1e-3, and the canonical surrogate beats
/// the block-diagonal separable baseline on a fresh start from the same
/// family. The true energy block is purely off-diagonal, so the separable
/// fit is structurally blind to it.
pub fn check_nonseparable_energy_fit() -> CriterionResult {
    run("AC-9", 60.0, || {
        let p = NonsepParams::default();
        let built = BuiltModel::from_block(&ModelBlock::Nonsep(p)).map_err(err_str)?;
        let model = built.model();
        let m = model.dim / 2;
        let time = TimeBlock {
            dt: 0.02,
            t_end_train: 1.0,
            t_end_test: 1.0,
            stride: 1,
            substep: 0.0,
            newton_tol: 1e-12,
            exact_derivatives: true,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(49);
        let profiles: Vec<Vec<f64>> =
            (0..5).map(|_| (0..m).map(|_| rng.gen_range(-1.0..1.0)).collect()).collect();

        let mut state_blocks = Vec::new();
        let mut rate_blocks = Vec::new();
        for r in &profiles {
            let mut x0 = vec![0.0; model.dim];
            x0[..m].copy_from_slice(r);
            x0[m..].copy_from_slice(r);
            let traj = built.simulate_from(&x0, &time, 50).map_err(err_str)?;
            let data = TrainingData::new(model, &traj, 1, true).map_err(err_str)?;
            rate_blocks.push(data.rates.clone());
            state_blocks.push(data.states);
        }
        let states = hstack_all(&state_blocks)?;
        let rates = hstack_all(&rate_blocks)?;
        let basis = pod_cotangent_lift(&states, 5, false).map_err(err_str)?;

        let inputs = InferenceInputs::canonical(&states, &rates, None, &basis, 0.0)
            .map_err(err_str)?;
        let ahat = opinf_canonical(&inputs, CanonicalVariant::Exact).map_err(err_str)?;
        let a_true = model.linear.as_ref().ok_or("model lacks a linear energy block")?;
        let uau = basis
            .u
            .transpose()
            .matmul(&a_true.matmul(&basis.u).map_err(err_str)?)
            .map_err(err_str)?
            .symmetrize(1.0);
        let op_rel = ahat.sub(&uau).map_err(err_str)?.frob_norm() / uau.frob_norm().max(1e-300);
        if op_rel > 1e-3 {
            return Err(format!("energy-block error {op_rel:.3e} above 1e-3"));
        }

        let a_sep = opinf_legacy_separable(&inputs, PodKind::CotangentLift).map_err(err_str)?;

        // Fresh start from the same family, compared over the test window.
        let (cq, dq): (Vec<f64>, Vec<f64>) = (
            (0..5).map(|_| rng.gen_range(-1.0..1.0)).collect(),
            (0..5).map(|_| rng.gen_range(-1.0..1.0)).collect(),
        );
        let mut x_test = vec![0.0; model.dim];
        for (k, r) in profiles.iter().enumerate() {
            for i in 0..m {
                x_test[i] += cq[k] * r[i];
                x_test[m + i] += dq[k] * r[i];
            }
        }
        let fom = built.simulate_from(&x_test, &time, 50).map_err(err_str)?;
        let jhat = j_dense(basis.modes());
        let zeros = vec![0.0; basis.modes()];
        let mut errs = Vec::new();
        for a in [&ahat, &a_sep] {
            let dhat = jhat.matmul(a).map_err(err_str)?;
            let reduced =
                implicit_midpoint_linear(&dhat, &zeros, &basis.project(&x_test), time.dt, 50)
                    .map_err(err_str)?;
            let lifted = lift_trajectory(&basis, &reduced).map_err(err_str)?;
            errs.push(rel_l2(&fom.states, &lifted.states).map_err(err_str)?);
        }
        if !(errs[0] < errs[1]) {
            return Err(format!(
                "canonical state error {:.3e} does not beat the separable baseline's {:.3e}",
                errs[0], errs[1]
            ));
        }
        Ok(format!(
            "energy-block error {op_rel:.2e}; state error {:.2e} vs separable {:.2e}",
            errs[0], errs[1]
        ))
    })
}

// ---------------------------------------------------------------------------
// AC-10: gradients, Jacobians, and full-basis surrogate right-hand sides.

fn fd_gradient_check(model: &HamiltonianModel, seed: u64) -> Result<f64, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x: Vec<f64> = model.x0.iter().map(|v| v + 0.1 * rng.gen_range(-1.0..1.0)).collect();
    let g = model.grad_h(&x);
    let gn = g.iter().fold(0.0_f64, |m, v| m.max(v.abs())).max(1e-300);
    let mut worst = 0.0_f64;
    for i in 0..model.dim {
        let h = 1e-6 * x[i].abs().max(1.0);
        let mut xp = x.clone();
        let mut xm = x.clone();
        xp[i] += h;
        xm[i] -= h;
        let fd = (model.hamiltonian(&xp) - model.hamiltonian(&xm)) / (2.0 * h);
        let rel = (fd - g[i]).abs() / gn;
        if rel > 1e-6 {
            return Err(format!(
                "{}: gradient component {i} differs from finite differences by {rel:.3e}",
                model.name
            ));
        }
        worst = worst.max(rel);
    }
    Ok(worst)
}

fn fd_jacobian_check(
    res: &dyn Fn(&[f64], &[f64]) -> Vec<f64>,
    jac: &dyn Fn(&[f64], &[f64]) -> DenseMatrix,
    xk: &[f64],
    v: &[f64],
) -> f64 {
    let n = v.len();
    let j = jac(xk, v);
    let scale = j.max_abs().max(1e-300);
    let mut worst = 0.0_f64;
    for c in 0..n {
        let h = 1e-6 * v[c].abs().max(1.0);
        let mut vp = v.to_vec();
        let mut vm = v.to_vec();
        vp[c] += h;
        vm[c] -= h;
        let rp = res(xk, &vp);
        let rm = res(xk, &vm);
        for r in 0..n {
            let fd = (rp[r] - rm[r]) / (2.0 * h);
            worst = worst.max((fd - j.get(r, c)).abs() / scale);
        }
    }
    worst
}

/// Cubic surrogate of a small model via the intrusive route, for Jacobian
/// and right-hand-side checks.
fn small_cubic_rom(
    block: &ModelBlock,
    modes: usize,
    steps: usize,
    dt: f64,
) -> Result<(BuiltModel, crate::basis::PodBasis, AssembledRom), String> {
    let built = BuiltModel::from_block(block).map_err(err_str)?;
    let model = built.model();
    let time = TimeBlock {
        dt,
        t_end_train: dt * steps as f64,
        t_end_test: dt * steps as f64,
        stride: 1,
        substep: dt / 10.0,
        newton_tol: 1e-12,
        exact_derivatives: false,
    };
    let traj = built.simulate(&time, steps).map_err(err_str)?;
    let data = TrainingData::new(model, &traj, 1, false).map_err(err_str)?;
    let basis = pod_ordinary(&data.states, modes, false).map_err(err_str)?;
    let rom = assemble_with(&built, &basis, Method::HRom, None).map_err(err_str)?;
    Ok((built, basis, rom))
}

/// AC-10: analytic gradients of every generated model match central
/// differences of the energy to 1e-6; the implicit-step Jacobians of the
/// cubic surrogates match differenced residuals to 1e-6; and at full basis
/// size the surrogate right-hand side reproduces the full model's to 1e-9.
pub fn check_gradient_consistency() -> CriterionResult {
    run("AC-10", 60.0, || {
        // Gradients of all five generated models.
        let models = vec![
            build_wave(&WaveParams { cells: 40, ..WaveParams::default() }).map_err(err_str)?,
            build_nonseparable(&NonsepParams { points: 30, ..NonsepParams::default() })
                .map_err(err_str)?,
            build_kdv_v1(&KdvParams { points: 48, l: 5.0, ..KdvParams::default() })
                .map_err(err_str)?,
            build_kdv_v2(&KdvParams { points: 48, l: 5.0, ..KdvParams::default() })
                .map_err(err_str)?,
            build_bbm(&BbmParams { points: 64, ..BbmParams::default() }).map_err(err_str)?,
        ];
        let mut worst_grad = 0.0_f64;
        for (k, model) in models.iter().enumerate() {
            worst_grad = worst_grad.max(fd_gradient_check(model, 50 + k as u64)?);
        }

        // Implicit-step Jacobians of cubic surrogates, one per quadrature
        // and nonlinearity: both cubic formulations and the dispersive one.
        let mut worst_jac = 0.0_f64;
        let cubic_cases = [
            (ModelBlock::KdvV1(KdvParams { points: 48, l: 5.0, ..KdvParams::default() }), 0.02),
            (ModelBlock::KdvV2(KdvParams { points: 48, l: 5.0, ..KdvParams::default() }), 0.02),
            (ModelBlock::Bbm(BbmParams { points: 64, ..BbmParams::default() }), 1e-3),
        ];
        let mut rng = ChaCha8Rng::seed_from_u64(60);
        for (block, dt) in &cubic_cases {
            let (built, basis, rom) = small_cubic_rom(block, 6, 40, *dt)?;
            let AssembledRom::Cubic(cubic) = &rom else {
                return Err("expected a cubic surrogate".into());
            };
            let (res, jac) = cubic_rom_step_functions(cubic, *dt);
            let xk = basis.project(&built.model().x0);
            let v: Vec<f64> = xk.iter().map(|x| x + 0.1 * rng.gen_range(-1.0..1.0)).collect();
            let worst = fd_jacobian_check(&res, &jac, &xk, &v);
            if worst > 1e-6 {
                return Err(format!(
                    "{}: step Jacobian differs from finite differences by {worst:.3e}",
                    block.name()
                ));
            }
            worst_jac = worst_jac.max(worst);
        }

        // Full-basis surrogates: one cubic, one linear.
        let mut worst_rhs = 0.0_f64;
        {
            let p = KdvParams { points: 24, l: 5.0, ..KdvParams::default() };
            let built = BuiltModel::from_block(&ModelBlock::KdvV1(p)).map_err(err_str)?;
            let model = built.model();
            let time = TimeBlock {
                dt: 0.02,
                t_end_train: 0.6,
                t_end_test: 0.6,
                stride: 1,
                substep: 0.0,
                newton_tol: 1e-12,
                exact_derivatives: false,
            };
            // Mass conservation flattens one direction per trajectory, so two
            // independent noisy starts are pooled to reach full rank.
            let mut pools = Vec::new();
            for _ in 0..2 {
                let x0: Vec<f64> =
                    model.x0.iter().map(|v| v + 0.5 * rng.gen_range(-1.0..1.0)).collect();
                let traj = built.simulate_from(&x0, &time, 30).map_err(err_str)?;
                pools.push(TrainingData::new(model, &traj, 1, false).map_err(err_str)?.states);
            }
            let states = hstack_all(&pools)?;
            let basis = pod_ordinary(&states, model.dim, false).map_err(err_str)?;
            let rom = assemble_with(&built, &basis, Method::HRom, None).map_err(err_str)?;
            let AssembledRom::Cubic(cubic) = &rom else {
                return Err("expected a cubic surrogate".into());
            };
            let probe: Vec<f64> =
                model.x0.iter().map(|v| v + 0.3 * rng.gen_range(-1.0..1.0)).collect();
            worst_rhs = worst_rhs.max(rhs_mismatch(
                model,
                &basis,
                &probe,
                &cubic.rhs(&basis.project(&probe)),
            ));
        }
        {
            let p = NonsepParams { points: 12, ..NonsepParams::default() };
            let built = BuiltModel::from_block(&ModelBlock::Nonsep(p)).map_err(err_str)?;
            let model = built.model();
            let m = model.dim / 2;
            let time = TimeBlock {
                dt: 0.02,
                t_end_train: 0.4,
                t_end_test: 0.4,
                stride: 1,
                substep: 0.0,
                newton_tol: 1e-12,
                exact_derivatives: false,
            };
            // One start per coordinate direction saturates the lift basis.
            let mut blocks = Vec::new();
            for k in 0..m {
                let mut x0 = vec![0.0; model.dim];
                x0[k] = 1.0;
                x0[m + k] = 1.0;
                let traj = built.simulate_from(&x0, &time, 20).map_err(err_str)?;
                blocks.push(TrainingData::new(model, &traj, 1, false).map_err(err_str)?.states);
            }
            let states = hstack_all(&blocks)?;
            let basis = pod_cotangent_lift(&states, m, false).map_err(err_str)?;
            let rom = assemble_with(&built, &basis, Method::HRom, None).map_err(err_str)?;
            let AssembledRom::Linear(linear) = &rom else {
                return Err("expected a linear surrogate".into());
            };
            let probe: Vec<f64> = (0..model.dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
            worst_rhs = worst_rhs.max(rhs_mismatch(
                model,
                &basis,
                &probe,
                &linear.rhs(&basis.project(&probe)),
            ));
        }
        if worst_rhs > 1e-9 {
            return Err(format!(
                "full-basis surrogate right-hand side differs from the model's by {worst_rhs:.3e}"
            ));
        }
        Ok(format!(
            "gradients within {worst_grad:.1e}, step Jacobians within {worst_jac:.1e}, full-basis right-hand sides within {worst_rhs:.1e}"
        ))
    })
}

/// Relative max-norm gap between the lifted surrogate right-hand side and
/// the full model's at the same state.
fn rhs_mismatch(
    model: &HamiltonianModel,
    basis: &crate::basis::PodBasis,
    probe: &[f64],
    reduced_rhs: &[f64],
) -> f64 {
    let want = model.rhs(probe);
    let got = basis.u.matvec(reduced_rhs);
    let scale = want.iter().fold(0.0_f64, |m, v| m.max(v.abs())).max(1e-300);
    want.iter()
        .zip(&got)
        .map(|(w, g)| (w - g).abs())
        .fold(0.0_f64, f64::max)
        / scale
}
