use super::{DenseMatrix, MatError};

/// Thin singular value decomposition X = U diag(sigma) V^T with sigma
/// nonincreasing. U is N x r and vt is r x n_s for r = min(N, n_s).
#[derive(Debug, Clone)]
pub struct SvdResult {
    pub u: DenseMatrix,
    pub sigma: Vec<f64>,
    pub vt: DenseMatrix,
}

/// Thin SVD. Singular values come back sorted nonincreasing; ties keep the
/// original order so repeated calls on identical bytes produce identical
/// output.
pub fn svd(x: &DenseMatrix) -> Result<SvdResult, MatError> {
    let na = x.to_na();
    let decomp = na.try_svd(true, true, f64::EPSILON, 0).ok_or(MatError::SvdFailed)?;
    let u = decomp.u.ok_or(MatError::SvdFailed)?;
    let vt = decomp.v_t.ok_or(MatError::SvdFailed)?;
    let sig = decomp.singular_values;

    let r = sig.len();
    let mut order: Vec<usize> = (0..r).collect();
    order.sort_by(|&a, &b| sig[b].partial_cmp(&sig[a]).unwrap().then(a.cmp(&b)));

    let sigma: Vec<f64> = order.iter().map(|&k| sig[k]).collect();
    let u_sorted = DenseMatrix::from_fn(u.nrows(), r, |i, j| u[(i, order[j])]);
    let vt_sorted = DenseMatrix::from_fn(r, vt.ncols(), |i, j| vt[(order[i], j)]);
    Ok(SvdResult { u: u_sorted, sigma, vt: vt_sorted })
}
