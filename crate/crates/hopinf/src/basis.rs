//! POD bases in three flavors: ordinary, block (q, p), and cotangent lift,
//! plus snapshot-energy and projection-error diagnostics.
//!
//! Mean-centering always shifts by the initial state (the first snapshot
//! column), never the temporal mean. Columns are sign-fixed so the
//! largest-magnitude entry is positive, making bases deterministic across
//! runs and nested under truncation.

use std::path::Path;

use crate::matkit::{
    read_hopm, read_hopm_with_header, svd, write_hopm, write_hopm_with_header, DenseMatrix,
    MatError,
};

/// Which construction produced a basis.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PodKind {
    Ordinary,
    BlockQp,
    CotangentLift,
}

impl PodKind {
    pub fn label(self) -> &'static str {
        match self {
            PodKind::Ordinary => "ordinary",
            PodKind::BlockQp => "block-qp",
            PodKind::CotangentLift => "cotangent-lift",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "ordinary" => Some(PodKind::Ordinary),
            "block-qp" => Some(PodKind::BlockQp),
            "cotangent-lift" => Some(PodKind::CotangentLift),
            _ => None,
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum BasisError {
    #[error("requested {requested} modes but the {what} has numerical rank {rank}; use fewer modes")]
    TooManyModes { what: &'static str, requested: usize, rank: usize },
    #[error("state dimension {0} is odd; block bases need an even (q, p) split")]
    OddDimension(usize),
    #[error("snapshot matrix has no columns")]
    Empty,
    #[error(transparent)]
    Mat(#[from] MatError),
}

/// Orthonormal reduced basis with its centering shift and the singular
/// spectrum of the (centered) snapshot data it was built from.
#[derive(Debug, Clone)]
pub struct PodBasis {
    /// N x n with orthonormal columns; block kinds are block-diagonal.
    pub u: DenseMatrix,
    pub kind: PodKind,
    /// Centering state x0; `None` means the data was used as-is.
    pub shift: Option<Vec<f64>>,
    /// Full singular spectrum, descending. Block kinds merge both blocks.
    pub sigma: Vec<f64>,
}

impl PodBasis {
    /// Full-order dimension N.
    pub fn dim(&self) -> usize {
        self.u.rows()
    }

    /// Number of retained modes n.
    pub fn modes(&self) -> usize {
        self.u.cols()
    }

    /// Reduced coordinates of a full state: U^T (x - shift).
    pub fn project(&self, x: &[f64]) -> Vec<f64> {
        match &self.shift {
            Some(s) => {
                let centered: Vec<f64> = x.iter().zip(s).map(|(a, b)| a - b).collect();
                self.u.matvec_t(&centered)
            }
            None => self.u.matvec_t(x),
        }
    }

    /// Full-state reconstruction: shift + U xhat.
    pub fn lift(&self, xhat: &[f64]) -> Vec<f64> {
        let mut x = self.u.matvec(xhat);
        if let Some(s) = &self.shift {
            for (xi, si) in x.iter_mut().zip(s) {
                *xi += si;
            }
        }
        x
    }

    /// Column-wise `project` of a snapshot matrix.
    pub fn project_states(&self, x: &DenseMatrix) -> Result<DenseMatrix, MatError> {
        let y = center_columns(x, self.shift.as_deref());
        self.u.transpose().matmul(&y)
    }

    /// Column-wise `lift` of reduced snapshots.
    pub fn lift_states(&self, xhat: &DenseMatrix) -> Result<DenseMatrix, MatError> {
        let mut x = self.u.matmul(xhat)?;
        if let Some(s) = &self.shift {
            for j in 0..x.cols() {
                for i in 0..x.rows() {
                    x.set(i, j, x.get(i, j) + s[i]);
                }
            }
        }
        Ok(x)
    }

    /// Time derivatives project without the shift: d/dt (x - x0) = dx/dt.
    pub fn project_rates(&self, xt: &DenseMatrix) -> Result<DenseMatrix, MatError> {
        self.u.transpose().matmul(xt)
    }

    /// Keep the leading modes: the bases are nested, so this equals
    /// rebuilding at the smaller count. Block kinds truncate each block.
    pub fn truncate(&self, n: usize) -> Result<PodBasis, BasisError> {
        let have = self.modes();
        if n > have {
            return Err(BasisError::TooManyModes { what: "basis", requested: n, rank: have });
        }
        let u = match self.kind {
            PodKind::Ordinary => {
                DenseMatrix::from_fn(self.dim(), n, |i, j| self.u.get(i, j))
            }
            PodKind::BlockQp | PodKind::CotangentLift => {
                if n % 2 != 0 {
                    return Err(BasisError::OddDimension(n));
                }
                let m = have / 2;
                let m2 = n / 2;
                DenseMatrix::from_fn(self.dim(), n, |i, j| {
                    if j < m2 {
                        self.u.get(i, j)
                    } else {
                        self.u.get(i, m + (j - m2))
                    }
                })
            }
        };
        Ok(PodBasis { u, kind: self.kind, shift: self.shift.clone(), sigma: self.sigma.clone() })
    }

    /// Indices of this basis's modes inside the `parent` it was truncated
    /// from; used to slice operators solved at the larger size.
    pub fn mode_indices_in(&self, parent_modes: usize) -> Vec<usize> {
        let n = self.modes();
        match self.kind {
            PodKind::Ordinary => (0..n).collect(),
            PodKind::BlockQp | PodKind::CotangentLift => {
                let m = parent_modes / 2;
                let m2 = n / 2;
                (0..m2).chain(m..m + m2).collect()
            }
        }
    }
}

fn center_columns(x: &DenseMatrix, shift: Option<&[f64]>) -> DenseMatrix {
    match shift {
        Some(s) => DenseMatrix::from_fn(x.rows(), x.cols(), |i, j| x.get(i, j) - s[i]),
        None => x.clone(),
    }
}

/// Flip each column so its largest-magnitude entry is positive; ties keep
/// the first occurrence.
fn fix_signs(u: &mut DenseMatrix) {
    for j in 0..u.cols() {
        let mut best = 0usize;
        let mut best_abs = 0.0f64;
        for i in 0..u.rows() {
            let a = u.get(i, j).abs();
            if a > best_abs {
                best_abs = a;
                best = i;
            }
        }
        if u.get(best, j) < 0.0 {
            for i in 0..u.rows() {
                u.set(i, j, -u.get(i, j));
            }
        }
    }
}

/// Count of singular values above the numerical-rank cutoff.
fn numerical_rank(sigma: &[f64]) -> usize {
    let s1 = sigma.first().copied().unwrap_or(0.0);
    sigma.iter().filter(|&&s| s > 1e-13 * s1 && s > 0.0).count()
}

struct BlockSvd {
    u: DenseMatrix,
    sigma: Vec<f64>,
}

fn leading_modes(
    y: &DenseMatrix,
    n: usize,
    what: &'static str,
) -> Result<BlockSvd, BasisError> {
    let s = svd(y)?;
    let rank = numerical_rank(&s.sigma);
    if n == 0 || n > rank {
        return Err(BasisError::TooManyModes { what, requested: n, rank });
    }
    let mut u = s.u.top_left(s.u.rows(), n);
    fix_signs(&mut u);
    Ok(BlockSvd { u, sigma: s.sigma })
}

fn split_shift(x: &DenseMatrix, center: bool) -> Result<Option<Vec<f64>>, BasisError> {
    if x.cols() == 0 {
        return Err(BasisError::Empty);
    }
    Ok(if center { Some(x.column(0)) } else { None })
}

/// First n left singular vectors of the (optionally centered) snapshots.
pub fn pod_ordinary(x: &DenseMatrix, n: usize, center: bool) -> Result<PodBasis, BasisError> {
    let shift = split_shift(x, center)?;
    let y = center_columns(x, shift.as_deref());
    let b = leading_modes(&y, n, "snapshot matrix")?;
    Ok(PodBasis { u: b.u, kind: PodKind::Ordinary, shift, sigma: b.sigma })
}

/// Separate SVDs of the q-rows and p-rows; U = blockdiag(U_q, U_p) with
/// m modes per block (2m total).
pub fn pod_block_qp(x: &DenseMatrix, m: usize, center: bool) -> Result<PodBasis, BasisError> {
    if x.rows() % 2 != 0 {
        return Err(BasisError::OddDimension(x.rows()));
    }
    let half = x.rows() / 2;
    let shift = split_shift(x, center)?;
    let y = center_columns(x, shift.as_deref());
    let bq = leading_modes(&y.row_block(0, half), m, "position block")?;
    let bp = leading_modes(&y.row_block(half, half), m, "momentum block")?;
    let u = bq.u.block_diag(&bp.u);
    let mut sigma: Vec<f64> = bq.sigma.into_iter().chain(bp.sigma).collect();
    sigma.sort_by(|a, b| b.partial_cmp(a).unwrap());
    Ok(PodBasis { u, kind: PodKind::BlockQp, shift, sigma })
}

/// POD of the M x 2n_s concatenation [Y_q  Y_p]; U = blockdiag(Ubar, Ubar)
/// so that U^T J U is exactly the canonical J of dimension 2m.
pub fn pod_cotangent_lift(x: &DenseMatrix, m: usize, center: bool) -> Result<PodBasis, BasisError> {
    if x.rows() % 2 != 0 {
        return Err(BasisError::OddDimension(x.rows()));
    }
    let half = x.rows() / 2;
    let shift = split_shift(x, center)?;
    let y = center_columns(x, shift.as_deref());
    let concat = y.row_block(0, half).hstack(&y.row_block(half, half))?;
    let b = leading_modes(&concat, m, "stacked (q, p) data")?;
    let u = b.u.block_diag(&b.u);
    Ok(PodBasis { u, kind: PodKind::CotangentLift, shift, sigma: b.sigma })
}

/// Retained fraction of the singular spectrum, first powers:
/// sum of the first n values over the sum of all of them.
pub fn snapshot_energy(sigma: &[f64], n: usize) -> f64 {
    assert!(n >= 1 && n <= sigma.len(), "mode count out of range");
    let total: f64 = sigma.iter().sum();
    if total == 0.0 {
        return 1.0;
    }
    sigma[..n].iter().sum::<f64>() / total
}

/// Relative reconstruction error ||Y - U U^T Y||_F / ||Y||_F with Y
/// centered per the basis shift.
pub fn projection_error(x: &DenseMatrix, basis: &PodBasis) -> Result<f64, MatError> {
    let y = center_columns(x, basis.shift.as_deref());
    let coeffs = basis.u.transpose().matmul(&y)?;
    let recon = basis.u.matmul(&coeffs)?;
    let denom = y.frob_norm();
    if denom == 0.0 {
        return Ok(0.0);
    }
    Ok(y.sub(&recon)?.frob_norm() / denom)
}

fn sibling(path: &Path, suffix: &str) -> std::path::PathBuf {
    let mut name = path.file_name().map(|s| s.to_os_string()).unwrap_or_default();
    name.push(suffix);
    path.with_file_name(name)
}

/// Write a basis as HOPM1: the U matrix with a header recording kind,
/// centering, and the sibling shift/sigma file names.
pub fn write_basis(path: &Path, basis: &PodBasis) -> Result<(), MatError> {
    let shift_path = sibling(path, ".shift");
    let sigma_path = sibling(path, ".sigma");
    let shift_name = match &basis.shift {
        Some(_) => shift_path.file_name().unwrap().to_string_lossy().into_owned(),
        None => "none".to_string(),
    };
    let header = format!(
        "basis kind={} centered={} shift={} sigma={}",
        basis.kind.label(),
        if basis.shift.is_some() { 1 } else { 0 },
        shift_name,
        sigma_path.file_name().unwrap().to_string_lossy(),
    );
    write_hopm_with_header(path, &basis.u, &[header])?;
    if let Some(s) = &basis.shift {
        write_hopm(&shift_path, &DenseMatrix::from_column(s))?;
    }
    write_hopm(&sigma_path, &DenseMatrix::from_column(&basis.sigma))?;
    Ok(())
}

/// Read a basis written by `write_basis`.
pub fn read_basis(path: &Path) -> Result<PodBasis, MatError> {
    let (u, headers) = read_hopm_with_header(path)?;
    let parse = |msg: &str| MatError::Parse {
        path: path.display().to_string(),
        line: 2,
        msg: msg.to_string(),
    };
    let line = headers
        .iter()
        .find(|h| h.starts_with("basis "))
        .ok_or_else(|| parse("missing basis header"))?;
    let mut kind = None;
    let mut shift_name = None;
    let mut sigma_name = None;
    for tok in line.split_whitespace().skip(1) {
        match tok.split_once('=') {
            Some(("kind", v)) => kind = PodKind::parse(v),
            Some(("shift", v)) => shift_name = Some(v.to_string()),
            Some(("sigma", v)) => sigma_name = Some(v.to_string()),
            _ => {}
        }
    }
    let kind = kind.ok_or_else(|| parse("missing or unknown basis kind"))?;
    let dir = path.parent().unwrap_or_else(|| Path::new("."));
    let shift = match shift_name.as_deref() {
        Some("none") | None => None,
        Some(name) => Some(read_hopm(&dir.join(name))?.column(0)),
    };
    let sigma = match sigma_name {
        Some(name) => read_hopm(&dir.join(name))?.column(0),
        None => Vec::new(),
    };
    Ok(PodBasis { u, kind, shift, sigma })
}
