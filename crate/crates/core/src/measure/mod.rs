//! Gaussian measures and their Hermite analysis.
//!
//! A measure `N(μ, S²)` standardises points to `x̂ = (x − μ)S⁻¹`; the tensorised
//! probabilists' Hermite polynomials `H_α(x̂)` are then orthogonal with
//! `E[H_α H_β] = α!·1{α = β}`, and the variance of a square-integrable function
//! splits as `Σ_{|α|≥1} f̂(α)²/α!`.

mod coefficients;
mod hermite;
mod multi_index;

pub use coefficients::{
    hermite_coefficient, variance_decomposition, variance_decompositions, CoefficientEstimate,
    Estimator, EstimatorKind, Term, VarianceDecomposition,
};
pub use hermite::{hermite, hermite_all, hermite_general, GaussHermiteRule};
pub use multi_index::{enumerate_multi_indices, multi_index_count, MultiIndex, MAX_EXACT_DEGREE};

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MeasureError {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("a measure needs at least one dimension")]
    Empty,
    #[error("scale entries must be strictly positive")]
    NonPositiveScale,
    #[error("covariance is not symmetric (max asymmetry {0:e})")]
    NotSymmetric(f64),
    #[error("covariance is not positive definite (smallest eigenvalue {0:e})")]
    NotPositiveDefinite(f64),
    #[error("total degree {0} exceeds the exact-factorial limit of {MAX_EXACT_DEGREE}")]
    DegreeTooLarge(usize),
    #[error("invalid estimator configuration: {0}")]
    InvalidEstimator(&'static str),
    #[error("tensor quadrature limited to 4 dimensions, measure has {0}")]
    QuadratureDimension(usize),
    #[error("function returned {found} outputs for {expected} points")]
    BadEvaluation { expected: usize, found: usize },
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
}

/// Eigen-decomposition `O·C·Oᵀ = D` of a covariance matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Whitening {
    /// Rows are eigenvectors; the largest-magnitude entry of each row is positive.
    pub rotation: DMatrix<f64>,
    /// Eigenvalues in descending order.
    pub eigenvalues: Vec<f64>,
}

/// Diagonalises a symmetric positive-definite matrix.
pub fn whiten(c: &DMatrix<f64>) -> Result<Whitening, MeasureError> {
    let n = c.nrows();
    if n == 0 {
        return Err(MeasureError::Empty);
    }
    if c.ncols() != n {
        return Err(MeasureError::DimensionMismatch {
            expected: n,
            found: c.ncols(),
        });
    }
    if c.iter().any(|v| !v.is_finite()) {
        return Err(MeasureError::NonFinite("covariance"));
    }
    let asym = (0..n)
        .flat_map(|i| (0..n).map(move |j| (i, j)))
        .map(|(i, j)| (c[(i, j)] - c[(j, i)]).abs())
        .fold(0.0, f64::max);
    if asym > 1e-12 {
        return Err(MeasureError::NotSymmetric(asym));
    }
    let eig = SymmetricEigen::new(c.clone());
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let smallest = eig.eigenvalues[order[n - 1]];
    if !(smallest > 0.0) {
        return Err(MeasureError::NotPositiveDefinite(smallest));
    }
    let mut rotation = DMatrix::zeros(n, n);
    for (row, &k) in order.iter().enumerate() {
        let v = eig.eigenvectors.column(k);
        let pivot = v.iter().copied().fold(0.0f64, |m, x| if x.abs() > m.abs() { x } else { m });
        let sign = if pivot < 0.0 { -1.0 } else { 1.0 };
        for j in 0..n {
            rotation[(row, j)] = sign * v[j];
        }
    }
    Ok(Whitening {
        rotation,
        eigenvalues: order.iter().map(|&k| eig.eigenvalues[k]).collect(),
    })
}

/// `N(μ, S²)` with diagonal scale, or `N(μ, C)` when a full covariance is given.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianMeasure {
    mean: Vec<f64>,
    /// Marginal standard deviations.
    scale: Vec<f64>,
    full: Option<(DMatrix<f64>, Whitening)>,
}

impl GaussianMeasure {
    pub fn new(mean: Vec<f64>, scale: Vec<f64>) -> Result<Self, MeasureError> {
        if mean.is_empty() {
            return Err(MeasureError::Empty);
        }
        if mean.len() != scale.len() {
            return Err(MeasureError::DimensionMismatch {
                expected: mean.len(),
                found: scale.len(),
            });
        }
        if mean.iter().any(|v| !v.is_finite()) {
            return Err(MeasureError::NonFinite("mean"));
        }
        if scale.iter().any(|&s| !(s > 0.0 && s.is_finite())) {
            return Err(MeasureError::NonPositiveScale);
        }
        Ok(Self {
            mean,
            scale,
            full: None,
        })
    }

    pub fn standard(n: usize) -> Result<Self, MeasureError> {
        Self::new(vec![0.0; n], vec![1.0; n])
    }

    pub fn with_covariance(mean: Vec<f64>, covariance: DMatrix<f64>) -> Result<Self, MeasureError> {
        if covariance.nrows() != mean.len() {
            return Err(MeasureError::DimensionMismatch {
                expected: mean.len(),
                found: covariance.nrows(),
            });
        }
        let w = whiten(&covariance)?;
        let scale = (0..mean.len()).map(|i| covariance[(i, i)].sqrt()).collect();
        let mut m = Self::new(mean, scale)?;
        m.full = Some((covariance, w));
        Ok(m)
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    pub fn scale(&self) -> &[f64] {
        &self.scale
    }

    pub fn covariance(&self) -> Option<&DMatrix<f64>> {
        self.full.as_ref().map(|(c, _)| c)
    }

    /// Operator 2-norm of the scale matrix `S` (so `‖S‖₂² = λ_max(Cov)`).
    pub fn scale_norm(&self) -> f64 {
        match &self.full {
            Some((_, w)) => w.eigenvalues[0].sqrt(),
            None => self.scale.iter().copied().fold(0.0, f64::max),
        }
    }

    fn check_dim(&self, len: usize) -> Result<(), MeasureError> {
        if len != self.dim() {
            return Err(MeasureError::DimensionMismatch {
                expected: self.dim(),
                found: len,
            });
        }
        Ok(())
    }

    /// Maps `x` to standard coordinates `x̂`.
    pub fn standardize(&self, x: &[f64]) -> Result<Vec<f64>, MeasureError> {
        self.check_dim(x.len())?;
        let centered: Vec<f64> = x.iter().zip(&self.mean).map(|(a, m)| a - m).collect();
        Ok(match &self.full {
            None => centered.iter().zip(&self.scale).map(|(c, s)| c / s).collect(),
            Some((_, w)) => (0..self.dim())
                .map(|i| {
                    let proj: f64 = (0..self.dim()).map(|j| w.rotation[(i, j)] * centered[j]).sum();
                    proj / w.eigenvalues[i].sqrt()
                })
                .collect(),
        })
    }

    /// Inverse of [`GaussianMeasure::standardize`].
    pub fn destandardize(&self, xhat: &[f64]) -> Result<Vec<f64>, MeasureError> {
        self.check_dim(xhat.len())?;
        Ok(match &self.full {
            None => xhat
                .iter()
                .zip(&self.scale)
                .zip(&self.mean)
                .map(|((z, s), m)| m + s * z)
                .collect(),
            Some((_, w)) => (0..self.dim())
                .map(|j| {
                    self.mean[j]
                        + (0..self.dim())
                            .map(|i| w.rotation[(i, j)] * w.eigenvalues[i].sqrt() * xhat[i])
                            .sum::<f64>()
                })
                .collect(),
        })
    }

    /// Fourier transform of the measure in characteristic-function form,
    /// `exp(−i ω·μ) · exp(−½ ωᵀ Σ ω)`.
    pub fn fourier(&self, omega: &[f64]) -> Result<Complex64, MeasureError> {
        self.check_dim(omega.len())?;
        let phase: f64 = omega.iter().zip(&self.mean).map(|(w, m)| w * m).sum();
        let quad: f64 = match &self.full {
            None => omega.iter().zip(&self.scale).map(|(w, s)| (w * s).powi(2)).sum(),
            Some((c, _)) => (0..self.dim())
                .map(|i| (0..self.dim()).map(|j| omega[i] * c[(i, j)] * omega[j]).sum::<f64>())
                .sum(),
        };
        Ok(Complex64::from_polar((-0.5 * quad).exp(), -phase))
    }
}

/// Tensorised Hermite polynomial `Π H_{αᵢ}(x̂ᵢ)` at `x` under measure `m`.
pub fn hermite_multi(alpha: &MultiIndex, x: &[f64], m: &GaussianMeasure) -> Result<f64, MeasureError> {
    if alpha.dim() != m.dim() {
        return Err(MeasureError::DimensionMismatch {
            expected: m.dim(),
            found: alpha.dim(),
        });
    }
    let xhat = m.standardize(x)?;
    Ok(alpha
        .degrees()
        .iter()
        .zip(&xhat)
        .map(|(&k, &t)| hermite(k, t))
        .product())
}

/// Free-function form of [`GaussianMeasure::standardize`].
pub fn standardize(x: &[f64], m: &GaussianMeasure) -> Result<Vec<f64>, MeasureError> {
    m.standardize(x)
}

/// Free-function form of [`GaussianMeasure::fourier`].
pub fn gaussian_measure_fourier(m: &GaussianMeasure, omega: &[f64]) -> Result<Complex64, MeasureError> {
    m.fourier(omega)
}
