use std::f64::consts::PI;

use num_complex::Complex64;
use rustfft::FftPlanner;

use super::{Spectrum, SpectrumSource, SpectralError};

/// DFT bins `X_k = Σ_j y_j e^{−2πi jk/N}` in natural order `k = 0..N`.
pub fn dft_bins(y: &[f64]) -> Result<Vec<Complex64>, SpectralError> {
    if y.len() < 2 {
        return Err(SpectralError::TooShort(y.len()));
    }
    let mut buf: Vec<Complex64> = y.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    FftPlanner::new().plan_fft_forward(buf.len()).process(&mut buf);
    Ok(buf)
}

/// Signed bin index of natural-order bin `k` (`k ≥ ⌈N/2⌉` maps to `k − N`).
fn signed_bin(k: usize, n: usize) -> i64 {
    if k < n.div_ceil(2) {
        k as i64
    } else {
        k as i64 - n as i64
    }
}

/// DFT of a series sampled with spacing `dt`; frequencies `k/(N·dt)` in ascending order.
pub fn dft_with_spacing(y: &[f64], dt: f64) -> Result<Spectrum, SpectralError> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(SpectralError::BadSpacing(dt));
    }
    let bins = dft_bins(y)?;
    let n = bins.len();
    let mut pairs: Vec<(i64, Complex64)> = bins.into_iter().enumerate().map(|(k, x)| (signed_bin(k, n), x)).collect();
    pairs.sort_by_key(|p| p.0);
    let scale = 1.0 / (n as f64 * dt);
    Spectrum::new(
        pairs.iter().map(|p| p.0 as f64 * scale).collect(),
        pairs.into_iter().map(|p| p.1).collect(),
        SpectrumSource::RawSeries,
    )
}

/// DFT with unit sample spacing (frequencies in cycles per sample).
pub fn dft(y: &[f64]) -> Result<Spectrum, SpectralError> {
    dft_with_spacing(y, 1.0)
}

/// `X(ω) = Σ_j y_j e^{−iωt_j}` by direct summation; `omega` in radians per unit.
pub fn nudft_complex(t: &[f64], y: &[Complex64], omega: &[f64]) -> Result<Spectrum, SpectralError> {
    if t.len() != y.len() {
        return Err(SpectralError::LengthMismatch {
            expected: t.len(),
            found: y.len(),
        });
    }
    if t.len() < 2 {
        return Err(SpectralError::TooShort(t.len()));
    }
    let amplitudes = omega
        .iter()
        .map(|&w| {
            t.iter()
                .zip(y)
                .map(|(&tj, &yj)| yj * Complex64::from_polar(1.0, -w * tj))
                .sum()
        })
        .collect();
    Spectrum::new(omega.iter().map(|w| w / (2.0 * PI)).collect(), amplitudes, SpectrumSource::RawSeries)
}

pub fn nudft(t: &[f64], y: &[f64], omega: &[f64]) -> Result<Spectrum, SpectralError> {
    let yc: Vec<Complex64> = y.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    nudft_complex(t, &yc, omega)
}

/// Angular frequencies matching `dft_with_spacing` for `n` samples spaced `dt`.
pub fn dft_angular_grid(n: usize, dt: f64) -> Vec<f64> {
    let mut k: Vec<i64> = (0..n).map(|k| signed_bin(k, n)).collect();
    k.sort_unstable();
    k.into_iter().map(|k| 2.0 * PI * k as f64 / (n as f64 * dt)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn naive(y: &[f64]) -> Vec<Complex64> {
        let n = y.len();
        (0..n)
            .map(|k| {
                (0..n)
                    .map(|j| y[j] * Complex64::from_polar(1.0, -2.0 * PI * ((j * k) % n) as f64 / n as f64))
                    .sum()
            })
            .collect()
    }

    #[test]
    fn matches_naive_sum() {
        for n in [2, 3, 7, 16, 33] {
            let y: Vec<f64> = (0..n).map(|j| ((j * j) as f64 * 0.71).sin()).collect();
            let fast = dft_bins(&y).unwrap();
            for (a, b) in fast.iter().zip(naive(&y)) {
                assert!((a - b).norm() <= 1e-12 * (1.0 + b.norm()));
            }
        }
    }

    #[test]
    fn constant_and_cosine() {
        let s = dft(&[2.0; 8]).unwrap();
        for (f, a) in s.frequencies.iter().zip(&s.amplitudes) {
            if *f == 0.0 {
                assert!((a.re - 16.0).abs() < 1e-12);
            } else {
                assert!(a.norm() < 1e-12);
            }
        }
        let n = 16;
        let y: Vec<f64> = (0..n).map(|j| (2.0 * PI * 3.0 * j as f64 / n as f64).cos()).collect();
        let s = dft(&y).unwrap();
        for (f, a) in s.frequencies.iter().zip(&s.amplitudes) {
            let bin = (f * n as f64).round() as i64;
            if bin.abs() == 3 {
                assert!((a.norm() - 8.0).abs() < 1e-10);
            } else {
                assert!(a.norm() < 1e-10);
            }
        }
    }

    #[test]
    fn frequencies_are_shifted_and_scaled() {
        let s = dft_with_spacing(&[0.0; 5], 0.5).unwrap();
        assert_eq!(s.frequencies, vec![-0.8, -0.4, 0.0, 0.4, 0.8]);
        let s = dft(&[0.0; 4]).unwrap();
        assert_eq!(s.frequencies, vec![-0.5, -0.25, 0.0, 0.25]);
    }

    #[test]
    fn nudft_on_uniform_grid_equals_dft() {
        let n = 12;
        let dt = 0.1;
        let t: Vec<f64> = (0..n).map(|j| j as f64 * dt).collect();
        let y: Vec<f64> = (0..n).map(|j| (j as f64 * 1.7).cos() - 0.2).collect();
        let a = dft_with_spacing(&y, dt).unwrap();
        let b = nudft(&t, &y, &dft_angular_grid(n, dt)).unwrap();
        for ((fa, xa), (fb, xb)) in a.frequencies.iter().zip(&a.amplitudes).zip(b.frequencies.iter().zip(&b.amplitudes)) {
            assert!((fa - fb).abs() < 1e-12);
            assert!((xa - xb).norm() < 1e-9 * (1.0 + xa.norm()));
        }
    }

    #[test]
    fn nudft_peaks_at_tone() {
        let t: Vec<f64> = (0..40).map(|j| (j as f64 * 0.37).sin() * 3.0).collect();
        let w0 = 2.3;
        let y: Vec<Complex64> = t.iter().map(|&tj| Complex64::from_polar(1.0, w0 * tj)).collect();
        let omega: Vec<f64> = (0..41).map(|k| -4.0 + 0.2 * k as f64).collect();
        let s = nudft_complex(&t, &y, &omega).unwrap();
        let best = (0..omega.len())
            .max_by(|&i, &j| s.amplitudes[i].norm().total_cmp(&s.amplitudes[j].norm()))
            .unwrap();
        let nearest = (0..omega.len())
            .min_by(|&i, &j| (omega[i] - w0).abs().total_cmp(&(omega[j] - w0).abs()))
            .unwrap();
        assert_eq!(best, nearest);
    }

    #[test]
    fn errors() {
        assert_eq!(dft(&[1.0]).unwrap_err(), SpectralError::TooShort(1));
        assert!(matches!(nudft(&[0.0, 1.0], &[1.0], &[0.0]), Err(SpectralError::LengthMismatch { .. })));
        assert!(nudft(&[0.0, 1.0], &[1.0, 2.0], &[1.0, 0.0]).is_err());
    }
}
