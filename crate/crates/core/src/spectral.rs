//! Orthonormal real DFT basis and single-bin DFT magnitudes.
//!
//! Basis index layout for length `k`: index 0 is the constant (DC) vector;
//! frequency `f` in `1..ceil(k/2)` owns the pair `2f-1` (cosine) and `2f`
//! (sine); for even `k` the last index `k-1` is the Nyquist cosine.

use std::f64::consts::PI;

use faer::Mat;

/// The `idx`-th orthonormal real DFT basis vector of length `k`.
pub fn basis_vector(k: usize, idx: usize) -> Vec<f64> {
    assert!(idx < k, "basis index {idx} out of range for length {k}");
    let kf = k as f64;
    if idx == 0 {
        return vec![1.0 / kf.sqrt(); k];
    }
    if k % 2 == 0 && idx == k - 1 {
        return (0..k)
            .map(|t| if t % 2 == 0 { 1.0 } else { -1.0 } / kf.sqrt())
            .collect();
    }
    let f = idx.div_ceil(2) as f64;
    let scale = (2.0 / kf).sqrt();
    if idx % 2 == 1 {
        (0..k).map(|t| scale * (2.0 * PI * f * t as f64 / kf).cos()).collect()
    } else {
        (0..k).map(|t| scale * (2.0 * PI * f * t as f64 / kf).sin()).collect()
    }
}

/// The full basis as the columns of a `k x k` orthogonal matrix.
pub fn basis(k: usize) -> Mat<f64> {
    let mut b = Mat::zeros(k, k);
    for j in 0..k {
        for (i, v) in basis_vector(k, j).into_iter().enumerate() {
            b[(i, j)] = v;
        }
    }
    b
}

/// Coefficients of `x` in the real DFT basis.
pub fn forward(x: &[f64]) -> Vec<f64> {
    let k = x.len();
    (0..k)
        .map(|j| basis_vector(k, j).iter().zip(x).map(|(b, v)| b * v).sum())
        .collect()
}

/// Signal with the given real DFT coefficients.
pub fn inverse(coeffs: &[f64]) -> Vec<f64> {
    let k = coeffs.len();
    let mut out = vec![0.0; k];
    for (j, &c) in coeffs.iter().enumerate() {
        if c == 0.0 {
            continue;
        }
        for (o, b) in out.iter_mut().zip(basis_vector(k, j)) {
            *o += c * b;
        }
    }
    out
}

/// Magnitude of the complex DFT coefficient `sum_t x_t exp(-2πi bin t / n)`.
pub fn dft_magnitude(x: &[f64], bin: usize) -> f64 {
    let n = x.len() as f64;
    let (mut re, mut im) = (0.0, 0.0);
    for (t, &v) in x.iter().enumerate() {
        let ang = 2.0 * PI * bin as f64 * t as f64 / n;
        re += v * ang.cos();
        im -= v * ang.sin();
    }
    re.hypot(im)
}

/// DFT bin nearest to a frequency in cycles per sample, folded into `[0, n/2]`.
pub fn nearest_bin(freq: f64, n: usize) -> usize {
    let f = freq.rem_euclid(1.0);
    let f = if f > 0.5 { 1.0 - f } else { f };
    ((f * n as f64).round() as usize).min(n / 2)
}
