//! Error metrics, conserved-quantity tracking, and the sweep drivers that
//! grid reduced-model accuracy over basis size and method: reproductive and
//! predictive runs, parametric studies, and operator-convergence tables.

mod pipeline;
mod sweep;

pub use pipeline::{
    assemble_with, build_rom, infer_operator, integrate_rom, rk4_strided, with_alpha,
    AssembledRom, BuiltModel, InferredOperator, TrainingData,
};
pub use sweep::{mode_sweep, operator_convergence_study, parametric_sweep, ConvergenceTable};

use crate::basis::{BasisError, PodKind};
use crate::cli::ConfigError;
use crate::matkit::{DenseMatrix, MatError};
use crate::models::{HamiltonianModel, ModelError};
use crate::reduce::ReduceError;
use crate::timestep::{StepError, Trajectory};
use std::fmt::Write as _;

/// State norm beyond which a run is declared divergent (along with any
/// non-finite entry). Blow-ups are reported, not chased into overflow.
pub const DIVERGENCE_NORM: f64 = 1e12;

#[derive(Debug, thiserror::Error)]
pub enum BenchError {
    #[error("{0}")]
    Config(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Basis(#[from] BasisError),
    #[error(transparent)]
    Step(#[from] StepError),
    #[error(transparent)]
    Reduce(#[from] ReduceError),
    #[error(transparent)]
    Mat(#[from] MatError),
}

impl From<ConfigError> for BenchError {
    fn from(e: ConfigError) -> Self {
        BenchError::Config(e.to_string())
    }
}

/// Accuracy record for one (method, n) cell of a sweep.
#[derive(Debug, Clone)]
pub struct ErrorReport {
    pub method: String,
    pub basis_kind: PodKind,
    pub mean_centered: bool,
    pub n: usize,
    /// Relative Frobenius state error against the reference; +inf flags a
    /// divergent or failed run.
    pub rel_l2: f64,
    /// Signed per-step drift series, one per named conserved quantity, each
    /// as long as the trajectory.
    pub drifts: Vec<(String, Vec<f64>)>,
    pub diverged: bool,
    pub wallclock: f64,
    /// Failure description for cells that never produced a trajectory.
    pub note: Option<String>,
}

impl ErrorReport {
    /// Record for a cell whose pipeline failed outright: infinite error,
    /// divergence flag set, and the failure text kept for the log.
    pub fn failed(method: &str, basis_kind: PodKind, mean_centered: bool, n: usize, note: String) -> Self {
        ErrorReport {
            method: method.to_string(),
            basis_kind,
            mean_centered,
            n,
            rel_l2: f64::INFINITY,
            drifts: vec![],
            diverged: true,
            wallclock: 0.0,
            note: Some(note),
        }
    }

    /// Largest absolute drift of the named quantity, if tracked.
    pub fn max_abs_drift(&self, name: &str) -> Option<f64> {
        self.drifts
            .iter()
            .find(|(k, _)| k == name)
            .map(|(_, series)| series.iter().fold(0.0_f64, |m, v| m.max(v.abs())))
    }
}

/// Full sweep output: the reference row plus one report per grid cell.
#[derive(Debug, Clone)]
pub struct SweepResult {
    pub model: String,
    pub fom: ErrorReport,
    pub cells: Vec<ErrorReport>,
}

/// Column layout shared by every sweep CSV.
pub const CSV_HEADER: &str =
    "model,basis_kind,mean_centered,method,n,rel_l2,max_abs_dH,max_abs_dM,max_abs_dP,diverged,wallclock_s";

fn csv_number(v: f64) -> String {
    if v.is_infinite() {
        if v > 0.0 { "inf".into() } else { "-inf".into() }
    } else {
        format!("{v:.16e}")
    }
}

/// Map a conserved-quantity name onto its CSV drift column, if it has one.
fn drift_column(name: &str) -> Option<usize> {
    match name {
        "H" => Some(0),
        "mass" => Some(1),
        "momentum" | "P" => Some(2),
        _ => None,
    }
}

impl SweepResult {
    /// Render the sweep as CSV: reference row first, then cells ordered by
    /// (method, n). The wallclock column stays empty unless requested so
    /// reruns of the same experiment are byte-identical.
    pub fn to_csv(&self, emit_wallclock: bool) -> String {
        let mut out = String::new();
        out.push_str(CSV_HEADER);
        out.push('\n');
        let mut rows: Vec<&ErrorReport> = self.cells.iter().collect();
        rows.sort_by(|a, b| a.method.cmp(&b.method).then(a.n.cmp(&b.n)));
        for report in std::iter::once(&self.fom).chain(rows) {
            let mut drift_cols = [None::<f64>; 3];
            for (name, series) in &report.drifts {
                if let Some(slot) = drift_column(name) {
                    let peak = series.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
                    drift_cols[slot] = Some(peak);
                }
            }
            write!(
                out,
                "{},{},{},{},{},{}",
                self.model,
                report.basis_kind.label(),
                if report.mean_centered { 1 } else { 0 },
                report.method,
                report.n,
                csv_number(report.rel_l2),
            )
            .unwrap();
            for slot in drift_cols {
                match slot {
                    Some(v) => write!(out, ",{}", csv_number(v)).unwrap(),
                    None => out.push(','),
                }
            }
            write!(out, ",{}", if report.diverged { 1 } else { 0 }).unwrap();
            if emit_wallclock {
                write!(out, ",{}", csv_number(report.wallclock)).unwrap();
            } else {
                out.push(',');
            }
            out.push('\n');
        }
        out
    }
}

/// Relative Frobenius error of an approximate snapshot matrix. Divergent
/// approximations (any non-finite entry) map to +inf rather than NaN so the
/// caller can flag them.
pub fn rel_l2(x: &DenseMatrix, xtilde: &DenseMatrix) -> Result<f64, BenchError> {
    if x.rows() != xtilde.rows() || x.cols() != xtilde.cols() {
        return Err(BenchError::Mat(MatError::DimensionMismatch {
            expected: format!("{}x{}", x.rows(), x.cols()),
            got: format!("{}x{}", xtilde.rows(), xtilde.cols()),
        }));
    }
    let denom = x.frob_norm();
    if denom == 0.0 {
        return Err(BenchError::Config("reference trajectory is identically zero".into()));
    }
    let mut acc = 0.0_f64;
    for i in 0..x.rows() {
        for j in 0..x.cols() {
            let d = x.get(i, j) - xtilde.get(i, j);
            if !d.is_finite() {
                return Ok(f64::INFINITY);
            }
            acc += d * d;
        }
    }
    Ok(acc.sqrt() / denom)
}

/// Signed drift of every conserved functional along a trajectory:
/// series[k] = f(x_k) - f(x_0), one series per named quantity.
pub fn conserved_series(model: &HamiltonianModel, traj: &Trajectory) -> Vec<(String, Vec<f64>)> {
    model
        .conserved
        .iter()
        .map(|(name, f)| {
            let base = f(&traj.state(0));
            let series = (0..traj.len()).map(|k| f(&traj.state(k)) - base).collect();
            (name.clone(), series)
        })
        .collect()
}

/// A trajectory diverged if any state is non-finite or its norm passed the
/// blow-up threshold.
pub fn trajectory_diverged(traj: &Trajectory) -> bool {
    for k in 0..traj.len() {
        let mut norm2 = 0.0_f64;
        for v in traj.state(k) {
            if !v.is_finite() {
                return true;
            }
            norm2 += v * v;
        }
        if norm2.sqrt() > DIVERGENCE_NORM {
            return true;
        }
    }
    false
}
