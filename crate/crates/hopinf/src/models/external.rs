use super::{HamiltonianModel, ModelError, ScalarFn, Structure};
use crate::matkit::{read_hopm, DenseMatrix, MatError};
use std::fs;
use std::path::Path;

/// Read a MatrixMarket coordinate file (real, general or symmetric) into a
/// dense matrix. Symmetric files mirror the lower/upper triangle.
pub fn read_matrix_market(path: &Path) -> Result<DenseMatrix, MatError> {
    let text = fs::read_to_string(path).map_err(|e| MatError::Io {
        path: path.display().to_string(),
        msg: e.to_string(),
    })?;
    let perr = |line: usize, msg: String| MatError::Parse {
        path: path.display().to_string(),
        line,
        msg,
    };
    let mut lines = text.lines().enumerate();
    let (_, header) = lines.next().ok_or_else(|| perr(1, "empty file".into()))?;
    let lower = header.to_ascii_lowercase();
    if !lower.starts_with("%%matrixmarket matrix coordinate real") {
        return Err(perr(1, format!("unsupported header: {header}")));
    }
    let symmetric = if lower.contains("general") {
        false
    } else if lower.contains("symmetric") {
        true
    } else {
        return Err(perr(1, "expected 'general' or 'symmetric' storage".into()));
    };

    let mut size: Option<(usize, usize, usize)> = None;
    let mut mat: Option<DenseMatrix> = None;
    let mut seen = 0usize;
    for (idx, raw) in lines {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('%') {
            continue;
        }
        let toks: Vec<&str> = line.split_whitespace().collect();
        match size {
            None => {
                if toks.len() != 3 {
                    return Err(perr(idx + 1, "size line needs: rows cols nnz".into()));
                }
                let rows = toks[0].parse().map_err(|_| perr(idx + 1, "bad row count".into()))?;
                let cols = toks[1].parse().map_err(|_| perr(idx + 1, "bad col count".into()))?;
                let nnz = toks[2].parse().map_err(|_| perr(idx + 1, "bad nnz count".into()))?;
                size = Some((rows, cols, nnz));
                mat = Some(DenseMatrix::zeros(rows, cols));
            }
            Some((rows, cols, _)) => {
                if toks.len() != 3 {
                    return Err(perr(idx + 1, "entry needs: i j value".into()));
                }
                let i: usize =
                    toks[0].parse().map_err(|_| perr(idx + 1, "bad row index".into()))?;
                let j: usize =
                    toks[1].parse().map_err(|_| perr(idx + 1, "bad col index".into()))?;
                let v: f64 = toks[2].parse().map_err(|_| perr(idx + 1, "bad value".into()))?;
                if i == 0 || j == 0 || i > rows || j > cols {
                    return Err(perr(idx + 1, format!("index ({i},{j}) out of bounds")));
                }
                let m = mat.as_mut().unwrap();
                m.set(i - 1, j - 1, v);
                if symmetric && i != j {
                    m.set(j - 1, i - 1, v);
                }
                seen += 1;
            }
        }
    }
    let (_, _, nnz) = size.ok_or_else(|| perr(1, "missing size line".into()))?;
    if seen != nnz {
        return Err(perr(0, format!("expected {nnz} entries, found {seen}")));
    }
    Ok(mat.unwrap())
}

/// Assemble a canonical model from mass/stiffness matrices and snapshot
/// files. Velocity snapshots are converted to momenta p = M qdot unless
/// `momentum_form` says they already are momenta. Returns the model and the
/// stacked (q, p) snapshot matrix.
pub fn load_external(
    mass_path: &Path,
    stiffness_path: &Path,
    q_path: &Path,
    pv_path: &Path,
    momentum_form: bool,
) -> Result<(HamiltonianModel, DenseMatrix), ModelError> {
    let m_mat = read_matrix_market(mass_path)?;
    let k_mat = read_matrix_market(stiffness_path)?;
    let dof = m_mat.rows();
    if m_mat.cols() != dof || k_mat.rows() != dof || k_mat.cols() != dof {
        return Err(ModelError::SnapshotDims { expected: dof, got: k_mat.rows() });
    }
    let k_defect = k_mat.symmetry_defect(1.0);
    if k_defect > 1e-10 * k_mat.frob_norm().max(1.0) {
        return Err(ModelError::StiffnessNotSymmetric {
            defect: k_defect / k_mat.frob_norm().max(1.0),
        });
    }
    if m_mat.symmetry_defect(1.0) > 1e-10 * m_mat.frob_norm().max(1.0) {
        return Err(ModelError::MassNotSpd("mass matrix is not symmetric".into()));
    }
    let m_na = m_mat.to_na();
    let chol = m_na
        .clone()
        .cholesky()
        .ok_or_else(|| ModelError::MassNotSpd("Cholesky factorization failed".into()))?;
    let m_inv = DenseMatrix::from_na(&chol.inverse());

    let q_snaps = read_hopm(q_path)?;
    let pv_snaps = read_hopm(pv_path)?;
    if q_snaps.rows() != dof {
        return Err(ModelError::SnapshotDims { expected: dof, got: q_snaps.rows() });
    }
    if pv_snaps.rows() != q_snaps.rows() || pv_snaps.cols() != q_snaps.cols() {
        return Err(ModelError::SnapshotDims { expected: q_snaps.cols(), got: pv_snaps.cols() });
    }
    let p_snaps = if momentum_form { pv_snaps } else { m_mat.matmul(&pv_snaps)? };
    let snapshots = q_snaps.vstack(&p_snaps)?;

    let a = k_mat.block_diag(&m_inv);
    let (k_h, minv_h) = (k_mat.clone(), m_inv.clone());
    let ham = move |x: &[f64]| -> f64 {
        let (q, p) = x.split_at(x.len() / 2);
        let kq = k_h.matvec(q);
        let mp = minv_h.matvec(p);
        0.5 * (q.iter().zip(&kq).map(|(a, b)| a * b).sum::<f64>()
            + p.iter().zip(&mp).map(|(a, b)| a * b).sum::<f64>())
    };
    let a_grad = a.clone();
    let conserved: Vec<(String, ScalarFn)> = vec![("H".into(), Box::new(ham.clone()))];

    let model = HamiltonianModel {
        name: "external".into(),
        dim: 2 * dof,
        structure: Structure::CanonicalJ,
        hamiltonian: Box::new(ham),
        grad_h: Box::new(move |x: &[f64]| a_grad.matvec(x)),
        linear: Some(a),
        grad_f: None,
        conserved,
        x0: snapshots.column(0),
        ds: 1.0,
        rhs_fast: None,
    };
    model.validate()?;
    Ok((model, snapshots))
}
