//! Uniform grids on the circle and their Fourier coefficients.

use num_complex::Complex64;
use rustfft::FftPlanner;
use std::f64::consts::PI;

/// Frequency of slot `j` in an FFT of length `n`.
#[inline]
pub fn signed_index(j: usize, n: usize) -> i64 {
    if j <= n / 2 {
        j as i64
    } else {
        j as i64 - n as i64
    }
}

/// Coefficients `c_k = (1/n) sum_j f(j/n) e^{-2 pi i k j/n}` in FFT order.
pub fn to_fourier(values: &[f64]) -> Vec<Complex64> {
    let n = values.len();
    let mut buf: Vec<Complex64> = values.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    FftPlanner::new().plan_fft_forward(n).process(&mut buf);
    let s = 1.0 / n as f64;
    buf.iter_mut().for_each(|c| *c *= s);
    buf
}

/// Inverse of [`to_fourier`], keeping the real part.
pub fn from_fourier(coeffs: &[Complex64]) -> Vec<f64> {
    let n = coeffs.len();
    let mut buf = coeffs.to_vec();
    FftPlanner::new().plan_fft_inverse(n).process(&mut buf);
    buf.iter().map(|c| c.re).collect()
}

/// Samples of `x -> f(x + s)` from samples of `f`, by trigonometric
/// interpolation. The Nyquist mode is treated as a cosine.
pub fn shift(values: &[f64], s: f64) -> Vec<f64> {
    let n = values.len();
    let mut c = to_fourier(values);
    for (j, cj) in c.iter_mut().enumerate() {
        let k = signed_index(j, n);
        if n.is_multiple_of(2) && j == n / 2 {
            *cj *= (2.0 * PI * k as f64 * s).cos();
        } else {
            *cj *= Complex64::from_polar(1.0, 2.0 * PI * k as f64 * s);
        }
    }
    from_fourier(&c)
}

/// `sum_k w_k |c_k|` with `w_0 = 1` and `w_k = |k|^r` otherwise.
pub fn weighted_norm(coeffs: &[Complex64], r: f64) -> f64 {
    let n = coeffs.len();
    coeffs
        .iter()
        .enumerate()
        .map(|(j, c)| {
            let k = signed_index(j, n).unsigned_abs() as f64;
            let w = if k == 0.0 { 1.0 } else { k.powf(r) };
            w * c.norm()
        })
        .sum()
}

/// Weighted norm of grid samples.
pub fn grid_norm(values: &[f64], r: f64) -> f64 {
    weighted_norm(&to_fourier(values), r)
}

/// Zeroes every mode with `|k| > cutoff`.
pub fn truncate(coeffs: &mut [Complex64], cutoff: usize) {
    let n = coeffs.len();
    for (j, c) in coeffs.iter_mut().enumerate() {
        if signed_index(j, n).unsigned_abs() as usize > cutoff {
            *c = Complex64::new(0.0, 0.0);
        }
    }
}

/// `x_j = j/n`.
pub fn grid_points(n: usize) -> Vec<f64> {
    (0..n).map(|j| j as f64 / n as f64).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_harmonic() {
        let n = 64;
        let f: Vec<f64> = grid_points(n)
            .iter()
            .map(|x| (2.0 * PI * 3.0 * x).cos() + 0.5)
            .collect();
        let c = to_fourier(&f);
        assert!((c[0].re - 0.5).abs() < 1e-14);
        assert!((c[3].re - 0.5).abs() < 1e-14);
        assert!((c[n - 3].re - 0.5).abs() < 1e-14);
        assert!((weighted_norm(&c, 1.0) - (0.5 + 3.0)).abs() < 1e-12);
        let back = from_fourier(&c);
        assert!(back.iter().zip(&f).all(|(a, b)| (a - b).abs() < 1e-14));
    }

    #[test]
    fn shift_is_exact_for_trig_polynomials() {
        let n = 128;
        let f = |x: f64| (2.0 * PI * x).sin() + 0.3 * (2.0 * PI * 5.0 * x).cos();
        let v: Vec<f64> = grid_points(n).iter().map(|&x| f(x)).collect();
        let s = 0.618034;
        let w = shift(&v, s);
        for (j, x) in grid_points(n).iter().enumerate() {
            assert!((w[j] - f(x + s)).abs() < 1e-13);
        }
    }

    #[test]
    fn truncation() {
        let n = 32;
        let v: Vec<f64> = grid_points(n).iter().map(|x| (2.0 * PI * 7.0 * x).cos()).collect();
        let mut c = to_fourier(&v);
        truncate(&mut c, 6);
        assert!(from_fourier(&c).iter().all(|x| x.abs() < 1e-14));
        assert_eq!(signed_index(17, 32), -15);
        assert_eq!(signed_index(16, 32), 16);
    }
}
