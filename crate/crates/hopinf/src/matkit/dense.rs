use super::MatError;
use nalgebra::DMatrix;

/// Dense real matrix, row-major.
///
/// `values.len() == rows * cols` always holds; entry (i, j) lives at
/// `values[i * cols + j]`.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseMatrix {
    rows: usize,
    cols: usize,
    values: Vec<f64>,
}

impl DenseMatrix {
    pub fn new(rows: usize, cols: usize, values: Vec<f64>) -> Result<Self, MatError> {
        if values.len() != rows * cols {
            return Err(MatError::BadLength { len: values.len(), expected: rows * cols });
        }
        Ok(Self { rows, cols, values })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, values: vec![0.0; rows * cols] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.values[i * n + i] = 1.0;
        }
        m
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut values = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                values.push(f(i, j));
            }
        }
        Self { rows, cols, values }
    }

    /// Column vector from a slice.
    pub fn from_column(v: &[f64]) -> Self {
        Self { rows: v.len(), cols: 1, values: v.to_vec() }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        debug_assert!(i < self.rows && j < self.cols);
        self.values[i * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        debug_assert!(i < self.rows && j < self.cols);
        self.values[i * self.cols + j] = v;
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.cols..(i + 1) * self.cols]
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.rows).map(|i| self.get(i, j)).collect()
    }

    pub fn set_column(&mut self, j: usize, v: &[f64]) {
        debug_assert_eq!(v.len(), self.rows);
        for i in 0..self.rows {
            self.set(i, j, v[i]);
        }
    }

    pub fn transpose(&self) -> Self {
        let mut t = Self::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                t.values[j * self.rows + i] = self.values[i * self.cols + j];
            }
        }
        t
    }

    pub fn matmul(&self, other: &Self) -> Result<Self, MatError> {
        if self.cols != other.rows {
            return Err(MatError::DimensionMismatch {
                expected: format!("inner dim {}", self.cols),
                got: format!("{}x{}", other.rows, other.cols),
            });
        }
        let c = self.to_na() * other.to_na();
        Ok(Self::from_na(&c))
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        debug_assert_eq!(x.len(), self.cols);
        let mut y = vec![0.0; self.rows];
        for i in 0..self.rows {
            let row = &self.values[i * self.cols..(i + 1) * self.cols];
            let mut acc = 0.0;
            for (a, b) in row.iter().zip(x) {
                acc += a * b;
            }
            y[i] = acc;
        }
        y
    }

    /// y = A^T x without forming the transpose.
    pub fn matvec_t(&self, x: &[f64]) -> Vec<f64> {
        debug_assert_eq!(x.len(), self.rows);
        let mut y = vec![0.0; self.cols];
        for i in 0..self.rows {
            let row = &self.values[i * self.cols..(i + 1) * self.cols];
            let xi = x[i];
            for (yj, a) in y.iter_mut().zip(row) {
                *yj += a * xi;
            }
        }
        y
    }

    pub fn add(&self, other: &Self) -> Result<Self, MatError> {
        self.zip_with(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Self) -> Result<Self, MatError> {
        self.zip_with(other, |a, b| a - b)
    }

    fn zip_with(&self, other: &Self, f: impl Fn(f64, f64) -> f64) -> Result<Self, MatError> {
        if self.rows != other.rows || self.cols != other.cols {
            return Err(MatError::DimensionMismatch {
                expected: format!("{}x{}", self.rows, self.cols),
                got: format!("{}x{}", other.rows, other.cols),
            });
        }
        let values = self.values.iter().zip(&other.values).map(|(&a, &b)| f(a, b)).collect();
        Ok(Self { rows: self.rows, cols: self.cols, values })
    }

    pub fn scale(&self, s: f64) -> Self {
        let values = self.values.iter().map(|&v| v * s).collect();
        Self { rows: self.rows, cols: self.cols, values }
    }

    pub fn frob_norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
    }

    /// Leading principal `k x k` block (square matrices) or general top-left block.
    pub fn top_left(&self, rows: usize, cols: usize) -> Self {
        debug_assert!(rows <= self.rows && cols <= self.cols);
        Self::from_fn(rows, cols, |i, j| self.get(i, j))
    }

    /// Rows `r0..r0+len` as a new matrix.
    pub fn row_block(&self, r0: usize, len: usize) -> Self {
        debug_assert!(r0 + len <= self.rows);
        let values = self.values[r0 * self.cols..(r0 + len) * self.cols].to_vec();
        Self { rows: len, cols: self.cols, values }
    }

    /// Stack two matrices vertically.
    pub fn vstack(&self, bottom: &Self) -> Result<Self, MatError> {
        if self.cols != bottom.cols {
            return Err(MatError::DimensionMismatch {
                expected: format!("{} cols", self.cols),
                got: format!("{} cols", bottom.cols),
            });
        }
        let mut values = self.values.clone();
        values.extend_from_slice(&bottom.values);
        Ok(Self { rows: self.rows + bottom.rows, cols: self.cols, values })
    }

    /// Stack two matrices horizontally.
    pub fn hstack(&self, right: &Self) -> Result<Self, MatError> {
        if self.rows != right.rows {
            return Err(MatError::DimensionMismatch {
                expected: format!("{} rows", self.rows),
                got: format!("{} rows", right.rows),
            });
        }
        let mut m = Self::zeros(self.rows, self.cols + right.cols);
        for i in 0..self.rows {
            m.values[i * m.cols..i * m.cols + self.cols]
                .copy_from_slice(&self.values[i * self.cols..(i + 1) * self.cols]);
            m.values[i * m.cols + self.cols..(i + 1) * m.cols]
                .copy_from_slice(&right.values[i * right.cols..(i + 1) * right.cols]);
        }
        Ok(m)
    }

    /// blockdiag(self, other).
    pub fn block_diag(&self, other: &Self) -> Self {
        let mut m = Self::zeros(self.rows + other.rows, self.cols + other.cols);
        for i in 0..self.rows {
            for j in 0..self.cols {
                m.set(i, j, self.get(i, j));
            }
        }
        for i in 0..other.rows {
            for j in 0..other.cols {
                m.set(self.rows + i, self.cols + j, other.get(i, j));
            }
        }
        m
    }

    /// ||A - sign*A^T||_F; 0 for exactly symmetric (sign=+1) / skew (sign=-1).
    pub fn symmetry_defect(&self, sign: f64) -> f64 {
        debug_assert_eq!(self.rows, self.cols);
        let mut acc = 0.0;
        for i in 0..self.rows {
            for j in 0..self.cols {
                let d = self.get(i, j) - sign * self.get(j, i);
                acc += d * d;
            }
        }
        acc.sqrt()
    }

    /// (A + sign*A^T)/2.
    pub fn symmetrize(&self, sign: f64) -> Self {
        debug_assert_eq!(self.rows, self.cols);
        Self::from_fn(self.rows, self.cols, |i, j| 0.5 * (self.get(i, j) + sign * self.get(j, i)))
    }

    pub fn is_identity(&self, tol: f64) -> bool {
        if self.rows != self.cols {
            return false;
        }
        for i in 0..self.rows {
            for j in 0..self.cols {
                let target = if i == j { 1.0 } else { 0.0 };
                if (self.get(i, j) - target).abs() > tol {
                    return false;
                }
            }
        }
        true
    }

    pub fn to_na(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.rows, self.cols, &self.values)
    }

    pub fn from_na(m: &DMatrix<f64>) -> Self {
        Self::from_fn(m.nrows(), m.ncols(), |i, j| m[(i, j)])
    }

    /// Solve self * x = b by LU with partial pivoting. Errors on (near-)singular input.
    pub fn lu_solve(&self, b: &[f64]) -> Result<Vec<f64>, MatError> {
        if self.rows != self.cols || b.len() != self.rows {
            return Err(MatError::DimensionMismatch {
                expected: format!("square {0}x{0} with rhs {0}", self.rows),
                got: format!("{}x{} rhs {}", self.rows, self.cols, b.len()),
            });
        }
        let lu = self.to_na().lu();
        let umax = lu.u().diagonal().amax();
        let umin = lu.u().diagonal().iter().fold(f64::INFINITY, |m, v| m.min(v.abs()));
        if umax == 0.0 || umin <= 1e-14 * umax {
            return Err(MatError::RankDeficient);
        }
        let rhs = nalgebra::DVector::from_column_slice(b);
        let x = lu.solve(&rhs).ok_or(MatError::RankDeficient)?;
        Ok(x.as_slice().to_vec())
    }
}
