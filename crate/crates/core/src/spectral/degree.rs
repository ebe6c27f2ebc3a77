use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;

use super::SpectralError;
use crate::report::num;
use crate::seed::rng_from;

/// Share of points held out in each cross-validation split.
pub const HOLDOUT_FRACTION: f64 = 0.2;

/// Degrees whose error is within this fraction of the data's mean square
/// (above the minimum) count as tied with the minimum.
pub const TIE_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct DegreeSelectionResult {
    pub k_star: usize,
    /// Mean held-out squared error, indexed by degree.
    pub cv_error_per_degree: Vec<f64>,
    pub splits: usize,
    pub seed: u64,
}

impl DegreeSelectionResult {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("degree,mean_cv_mse\n");
        for (k, e) in self.cv_error_per_degree.iter().enumerate() {
            out.push_str(&format!("{k},{}\n", num(*e)));
        }
        out
    }
}

/// Chebyshev design `T_0..T_k` at points already scaled to `[−1, 1]`.
fn chebyshev_design(u: &[f64], k: usize) -> DMatrix<f64> {
    let mut a = DMatrix::zeros(u.len(), k + 1);
    for (i, &x) in u.iter().enumerate() {
        a[(i, 0)] = 1.0;
        if k >= 1 {
            a[(i, 1)] = x;
        }
        for j in 2..=k {
            a[(i, j)] = 2.0 * x * a[(i, j - 1)] - a[(i, j - 2)];
        }
    }
    a
}

/// Least-squares coefficients through a thin QR factorisation.
fn least_squares(a: DMatrix<f64>, b: &DVector<f64>) -> Result<DVector<f64>, SpectralError> {
    let cols = a.ncols();
    let qr = a.qr();
    let r = qr.r();
    let diag_max = (0..cols).map(|i| r[(i, i)].abs()).fold(0.0, f64::max);
    if (0..cols).any(|i| r[(i, i)].abs() <= 1e-12 * diag_max) || diag_max == 0.0 {
        return Err(SpectralError::DegenerateDesign);
    }
    let qtb = qr.q().transpose() * b;
    r.solve_upper_triangular(&qtb).ok_or(SpectralError::DegenerateDesign)
}

/// Least-squares polynomial fit of degree `k`; returns the fitted values at `t`.
pub fn poly_fit(t: &[f64], y: &[f64], k: usize) -> Result<Vec<f64>, SpectralError> {
    let (lo, hi) = bounds(t)?;
    let u: Vec<f64> = t.iter().map(|&x| scale(x, lo, hi)).collect();
    let a = chebyshev_design(&u, k);
    let c = least_squares(a.clone(), &DVector::from_column_slice(y))?;
    Ok((a * c).iter().copied().collect())
}

fn bounds(t: &[f64]) -> Result<(f64, f64), SpectralError> {
    let lo = t.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = t.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !(hi > lo) || !lo.is_finite() || !hi.is_finite() {
        return Err(SpectralError::DegenerateDesign);
    }
    Ok((lo, hi))
}

fn scale(x: f64, lo: f64, hi: f64) -> f64 {
    2.0 * (x - lo) / (hi - lo) - 1.0
}

/// Cross-validated choice of polynomial degree in `0..=k_max`.
///
/// Pairs are sorted by `(t, y)` before the seeded 80/20 splits are drawn, so
/// the result does not depend on the input order.
pub fn optimal_poly_degree(
    t: &[f64],
    y: &[f64],
    k_max: usize,
    n_splits: usize,
    seed: u64,
) -> Result<DegreeSelectionResult, SpectralError> {
    if t.len() != y.len() {
        return Err(SpectralError::LengthMismatch {
            expected: t.len(),
            found: y.len(),
        });
    }
    if t.len() < 4 * (k_max + 1) {
        return Err(SpectralError::InsufficientData {
            needed: 4 * (k_max + 1),
            found: t.len(),
        });
    }
    if n_splits == 0 {
        return Err(SpectralError::InsufficientData { needed: 1, found: 0 });
    }
    let mut pairs: Vec<(f64, f64)> = t.iter().copied().zip(y.iter().copied()).collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
    let (lo, hi) = bounds(t)?;
    let u: Vec<f64> = pairs.iter().map(|p| scale(p.0, lo, hi)).collect();
    let n = pairs.len();
    let n_test = ((n as f64 * HOLDOUT_FRACTION).round() as usize).max(1);

    let mut errors = vec![0.0; k_max + 1];
    for split in 0..n_splits {
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut rng_from(seed, &[split as u64]));
        let (test, train) = order.split_at(n_test);
        let u_train: Vec<f64> = train.iter().map(|&i| u[i]).collect();
        let u_test: Vec<f64> = test.iter().map(|&i| u[i]).collect();
        let y_train = DVector::from_iterator(train.len(), train.iter().map(|&i| pairs[i].1));
        for (k, err) in errors.iter_mut().enumerate() {
            let c = least_squares(chebyshev_design(&u_train, k), &y_train)?;
            let pred = chebyshev_design(&u_test, k) * c;
            let mse = test
                .iter()
                .zip(pred.iter())
                .map(|(&i, p)| (pairs[i].1 - p).powi(2))
                .sum::<f64>()
                / test.len() as f64;
            *err += mse / n_splits as f64;
        }
    }
    let best = errors.iter().copied().fold(f64::INFINITY, f64::min);
    let mean_sq = pairs.iter().map(|p| p.1 * p.1).sum::<f64>() / n as f64;
    let threshold = best + TIE_TOLERANCE * mean_sq;
    let k_star = errors.iter().position(|&e| e <= threshold).expect("minimum exists");
    Ok(DegreeSelectionResult {
        k_star,
        cv_error_per_degree: errors,
        splits: n_splits,
        seed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid(n: usize) -> Vec<f64> {
        (0..n).map(|i| -1.0 + 2.0 * i as f64 / (n - 1) as f64).collect()
    }

    #[test]
    fn recovers_cubic_and_linear() {
        let t = grid(60);
        let cubic: Vec<f64> = t.iter().map(|x| 0.5 * x * x * x - x * x + 0.25).collect();
        assert_eq!(optimal_poly_degree(&t, &cubic, 10, 10, 1).unwrap().k_star, 3);
        let line: Vec<f64> = t.iter().map(|x| 2.0 * x - 0.3).collect();
        let r = optimal_poly_degree(&t, &line, 10, 10, 1).unwrap();
        assert_eq!(r.k_star, 1);
        assert_eq!(r.cv_error_per_degree.len(), 11);
    }

    #[test]
    fn exact_fit_residual() {
        let t: Vec<f64> = grid(30).iter().map(|x| 3.0 * x + 7.0).collect();
        let y: Vec<f64> = t.iter().map(|x| x * x - 4.0 * x + 1.0).collect();
        let fit = poly_fit(&t, &y, 2).unwrap();
        for (a, b) in fit.iter().zip(&y) {
            assert!((a - b).abs() <= 1e-8);
        }
    }

    #[test]
    fn order_invariant() {
        let t = grid(48);
        let y: Vec<f64> = t.iter().map(|x| (4.0 * x).sin()).collect();
        let a = optimal_poly_degree(&t, &y, 8, 10, 5).unwrap();
        let (tr, yr): (Vec<f64>, Vec<f64>) = t.iter().rev().zip(y.iter().rev()).map(|(a, b)| (*a, *b)).unzip();
        assert_eq!(optimal_poly_degree(&tr, &yr, 8, 10, 5).unwrap(), a);
    }

    #[test]
    fn errors() {
        let t = grid(10);
        assert!(matches!(optimal_poly_degree(&t, &t, 3, 10, 0), Err(SpectralError::InsufficientData { .. })));
        let same = vec![0.5; 40];
        assert_eq!(optimal_poly_degree(&same, &same, 3, 10, 0).unwrap_err(), SpectralError::DegenerateDesign);
        // Two distinct locations cannot support a quadratic.
        let two: Vec<f64> = (0..40).map(|i| (i % 2) as f64).collect();
        assert_eq!(optimal_poly_degree(&two, &two, 2, 3, 0).unwrap_err(), SpectralError::DegenerateDesign);
    }

    #[test]
    fn csv_layout() {
        let t = grid(20);
        let r = optimal_poly_degree(&t, &t, 2, 2, 0).unwrap();
        let csv = r.to_csv();
        assert!(csv.starts_with("degree,mean_cv_mse\n0,"));
        assert_eq!(csv.lines().count(), 4);
    }
}
