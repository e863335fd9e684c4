use crate::matkit::DenseMatrix;

/// Periodic central-difference stencils on a uniform grid of n points with
/// spacing ds. D1 and D3 are skew-symmetric, D2 is symmetric, and every row
/// sums to zero, so constants are annihilated exactly.
#[derive(Debug, Clone)]
pub struct CirculantStencils {
    pub d1: DenseMatrix,
    pub d2: DenseMatrix,
    pub d3: DenseMatrix,
    pub n: usize,
    pub ds: f64,
}

impl CirculantStencils {
    pub fn new(n: usize, ds: f64) -> Self {
        assert!(n >= 5, "stencils need at least 5 points, got {n}");
        let c1 = 1.0 / (2.0 * ds);
        let c2 = 1.0 / (ds * ds);
        let c3 = 1.0 / (2.0 * ds * ds * ds);
        let mut d1 = DenseMatrix::zeros(n, n);
        let mut d2 = DenseMatrix::zeros(n, n);
        let mut d3 = DenseMatrix::zeros(n, n);
        for i in 0..n {
            let ip1 = (i + 1) % n;
            let im1 = (i + n - 1) % n;
            let ip2 = (i + 2) % n;
            let im2 = (i + n - 2) % n;
            d1.set(i, ip1, c1);
            d1.set(i, im1, -c1);
            d2.set(i, im1, c2);
            d2.set(i, i, -2.0 * c2);
            d2.set(i, ip1, c2);
            // Third derivative: (-x_{i-2} + 2x_{i-1} - 2x_{i+1} + x_{i+2}) / (2 ds^3).
            d3.set(i, im2, -c3);
            d3.set(i, im1, 2.0 * c3);
            d3.set(i, ip1, -2.0 * c3);
            d3.set(i, ip2, c3);
        }
        Self { d1, d2, d3, n, ds }
    }

    pub fn apply_d1(&self, x: &[f64]) -> Vec<f64> {
        let n = self.n;
        let c = 1.0 / (2.0 * self.ds);
        (0..n).map(|i| c * (x[(i + 1) % n] - x[(i + n - 1) % n])).collect()
    }

    pub fn apply_d2(&self, x: &[f64]) -> Vec<f64> {
        let n = self.n;
        let c = 1.0 / (self.ds * self.ds);
        (0..n)
            .map(|i| c * (x[(i + 1) % n] - 2.0 * x[i] + x[(i + n - 1) % n]))
            .collect()
    }

    pub fn apply_d3(&self, x: &[f64]) -> Vec<f64> {
        let n = self.n;
        let c = 1.0 / (2.0 * self.ds * self.ds * self.ds);
        (0..n)
            .map(|i| {
                c * (-x[(i + n - 2) % n] + 2.0 * x[(i + n - 1) % n] - 2.0 * x[(i + 1) % n]
                    + x[(i + 2) % n])
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn row_sums_vanish() {
        let st = CirculantStencils::new(16, 0.3);
        for m in [&st.d1, &st.d2, &st.d3] {
            for i in 0..16 {
                let s: f64 = m.row(i).iter().sum();
                assert!(s.abs() < 1e-12, "row sum {s}");
            }
        }
    }

    #[test]
    fn symmetry_classes() {
        let st = CirculantStencils::new(12, 0.1);
        assert!(st.d1.symmetry_defect(-1.0) < 1e-12 * st.d1.frob_norm());
        assert!(st.d3.symmetry_defect(-1.0) < 1e-12 * st.d3.frob_norm());
        assert!(st.d2.symmetry_defect(1.0) < 1e-12 * st.d2.frob_norm());
    }

    #[test]
    fn apply_matches_dense() {
        let st = CirculantStencils::new(17, 0.21);
        let x: Vec<f64> = (0..17).map(|i| ((i * i) as f64 * 0.13).sin()).collect();
        for (dense, fast) in [
            (&st.d1, st.apply_d1(&x)),
            (&st.d2, st.apply_d2(&x)),
            (&st.d3, st.apply_d3(&x)),
        ] {
            let want = dense.matvec(&x);
            for (a, b) in want.iter().zip(&fast) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn d1_times_d2_equals_d3() {
        // The pentadiagonal third-derivative stencil is exactly the product
        // of the first-derivative and Laplacian stencils.
        let st = CirculantStencils::new(10, 0.37);
        let prod = st.d1.matmul(&st.d2).unwrap();
        assert!(prod.sub(&st.d3).unwrap().max_abs() < 1e-10 * st.d3.max_abs());
    }

    #[test]
    fn second_order_convergence_on_smooth_mode() {
        // Relative stencil error on sin(2 pi s) shrinks by ~4 when n doubles.
        let err = |n: usize| {
            let ds = 1.0 / n as f64;
            let st = CirculantStencils::new(n, ds);
            let x: Vec<f64> = (0..n).map(|i| (2.0 * PI * i as f64 * ds).sin()).collect();
            let dx = st.apply_d1(&x);
            (0..n)
                .map(|i| (dx[i] - 2.0 * PI * (2.0 * PI * i as f64 * ds).cos()).abs())
                .fold(0.0_f64, f64::max)
        };
        let ratio = err(32) / err(64);
        assert!((ratio - 4.0).abs() < 0.2, "observed ratio {ratio}");
    }
}
