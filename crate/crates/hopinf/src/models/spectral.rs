use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

/// Forward discrete Fourier transform, X_k = sum_m x_m exp(-2 pi i k m / n),
/// for real input. No normalization on the forward pass.
pub fn dft(x: &[f64]) -> Vec<Complex<f64>> {
    let mut buf: Vec<Complex<f64>> = x.iter().map(|&v| Complex::new(v, 0.0)).collect();
    FftPlanner::new().plan_fft_forward(x.len()).process(&mut buf);
    buf
}

/// Inverse transform with the 1/n factor, x_m = (1/n) sum_k X_k exp(2 pi i k m / n).
pub fn idft(xi: &[Complex<f64>]) -> Vec<Complex<f64>> {
    let mut buf = xi.to_vec();
    FftPlanner::new().plan_fft_inverse(xi.len()).process(&mut buf);
    let scale = 1.0 / xi.len() as f64;
    for v in &mut buf {
        *v *= scale;
    }
    buf
}

/// Frequencies in transform order for a periodic domain of the given length:
/// 0, 1, ..., n/2 - 1, -n/2, ..., -1, each divided by the length.
pub fn frequencies(n: usize, length: f64) -> Vec<f64> {
    (0..n)
        .map(|k| {
            let k = if k < n.div_ceil(2) { k as isize } else { k as isize - n as isize };
            k as f64 / length
        })
        .collect()
}
