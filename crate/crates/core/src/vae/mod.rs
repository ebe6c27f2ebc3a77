//! Gaussian VAE with a standard-normal prior and fixed-variance Gaussian
//! likelihood.

mod analysis;
mod train;

pub use analysis::{
    bias_variance_likelihood, decoder_hermite_variance, BiasVariance, DecoderHermiteReport,
    HERMITE_ENUMERATION_BUDGET,
};
pub use train::{train, train_noising_from, EpochLog, TrainConfig};

use std::f64::consts::PI;

use ndarray::{Array2, ArrayView2, Zip};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use thiserror::Error;

use crate::autodiff::{row, Activation, AutodiffError, DenseNetwork, GradientTape};
use crate::measure::MeasureError;

/// Bounds of the encoder scale positivity map `σ = clamp(exp(s))`.
pub const SCALE_MIN: f64 = 1e-4;
pub const SCALE_MAX: f64 = 1e2;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum VaeError {
    #[error(transparent)]
    Autodiff(#[from] AutodiffError),
    #[error(transparent)]
    Measure(#[from] MeasureError),
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("scale values must be strictly positive")]
    NonPositiveScale,
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("training diverged at epoch {epoch}")]
    Diverged { epoch: usize },
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("dataset values must lie in [-1, 1]; found {0}")]
    OutOfRange(f64),
    #[error("Hermite enumeration needs {count} multi-indices, budget is {budget}")]
    EnumerationBudget { count: u128, budget: u128 },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
}

/// Source of the posterior standard deviation `σφ`.
#[derive(Debug, Clone, PartialEq)]
pub enum EncoderScale {
    /// Network output `s(x)` mapped through `clamp(exp(s), 1e-4, 1e2)`.
    Learned(DenseNetwork),
    /// The same `σφ` for every input.
    Fixed(Vec<f64>),
}

/// Layer widths and activation shared by every network of a model.
#[derive(Debug, Clone, PartialEq)]
pub struct Architecture {
    pub data_dim: usize,
    pub latent_dim: usize,
    pub hidden: Vec<usize>,
    pub activation: Activation,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VaeModel {
    pub encoder_mean: DenseNetwork,
    pub encoder_scale: EncoderScale,
    pub decoder: DenseNetwork,
    likelihood_scale: f64,
}

/// Per-example (or averaged) ELBO terms.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ElboReport {
    pub reconstruction_term: f64,
    pub kl_term: f64,
    pub elbo: f64,
}

fn sizes(input: usize, hidden: &[usize], output: usize) -> Vec<usize> {
    let mut s = vec![input];
    s.extend_from_slice(hidden);
    s.push(output);
    s
}

impl VaeModel {
    /// Fresh model; `fixed_sigma_phi = Some(σ)` pins the encoder scale to `σ` in every latent dimension.
    pub fn new<R: Rng + ?Sized>(
        arch: &Architecture,
        fixed_sigma_phi: Option<f64>,
        likelihood_scale: f64,
        rng: &mut R,
    ) -> Result<Self, VaeError> {
        if arch.data_dim == 0 || arch.latent_dim == 0 {
            return Err(VaeError::InvalidConfig("data and latent dimensions must be positive".into()));
        }
        let enc = sizes(arch.data_dim, &arch.hidden, arch.latent_dim);
        let dec = sizes(arch.latent_dim, &arch.hidden, arch.data_dim);
        let encoder_mean = DenseNetwork::mlp(&enc, arch.activation, Activation::Identity, rng)?;
        let encoder_scale = match fixed_sigma_phi {
            Some(s) => EncoderScale::Fixed(vec![s; arch.latent_dim]),
            None => EncoderScale::Learned(DenseNetwork::mlp(&enc, arch.activation, Activation::Identity, rng)?),
        };
        let decoder = DenseNetwork::mlp(&dec, arch.activation, Activation::Identity, rng)?;
        Self::from_parts(encoder_mean, encoder_scale, decoder, likelihood_scale)
    }

    pub fn from_parts(
        encoder_mean: DenseNetwork,
        encoder_scale: EncoderScale,
        decoder: DenseNetwork,
        likelihood_scale: f64,
    ) -> Result<Self, VaeError> {
        let latent = encoder_mean.output_dim();
        let data = encoder_mean.input_dim();
        let check = |expected: usize, found: usize| {
            if expected == found {
                Ok(())
            } else {
                Err(VaeError::DimensionMismatch { expected, found })
            }
        };
        check(latent, decoder.input_dim())?;
        check(data, decoder.output_dim())?;
        match &encoder_scale {
            EncoderScale::Learned(net) => {
                check(data, net.input_dim())?;
                check(latent, net.output_dim())?;
            }
            EncoderScale::Fixed(s) => {
                check(latent, s.len())?;
                if s.iter().any(|&v| !(v > 0.0 && v.is_finite())) {
                    return Err(VaeError::NonPositiveScale);
                }
            }
        }
        if !(likelihood_scale > 0.0 && likelihood_scale.is_finite()) {
            return Err(VaeError::NonPositiveScale);
        }
        Ok(Self {
            encoder_mean,
            encoder_scale,
            decoder,
            likelihood_scale,
        })
    }

    pub fn latent_dim(&self) -> usize {
        self.encoder_mean.output_dim()
    }

    pub fn data_dim(&self) -> usize {
        self.encoder_mean.input_dim()
    }

    /// σθ, the likelihood standard deviation.
    pub fn likelihood_scale(&self) -> f64 {
        self.likelihood_scale
    }

    pub fn fixed_sigma_phi(&self) -> Option<&[f64]> {
        match &self.encoder_scale {
            EncoderScale::Fixed(s) => Some(s),
            EncoderScale::Learned(_) => None,
        }
    }

    fn check_data(&self, x: &ArrayView2<'_, f64>) -> Result<(), VaeError> {
        if x.ncols() != self.data_dim() {
            return Err(VaeError::DimensionMismatch {
                expected: self.data_dim(),
                found: x.ncols(),
            });
        }
        Ok(())
    }

    /// Posterior means and scales for a batch (rows = examples).
    pub fn encode_batch(&self, x: ArrayView2<'_, f64>) -> Result<(Array2<f64>, Array2<f64>), VaeError> {
        self.check_data(&x)?;
        let mu = self.encoder_mean.predict(x)?;
        let sigma = match &self.encoder_scale {
            EncoderScale::Fixed(s) => Array2::from_shape_fn(mu.raw_dim(), |(_, j)| s[j]),
            EncoderScale::Learned(net) => net.predict(x)?.mapv(positive_scale),
        };
        if mu.iter().chain(sigma.iter()).any(|v| !v.is_finite()) {
            return Err(VaeError::NonFinite("encoder output"));
        }
        Ok((mu, sigma))
    }

    pub fn encode(&self, x: &[f64]) -> Result<(Vec<f64>, Vec<f64>), VaeError> {
        let (mu, sigma) = self.encode_batch(row(x))?;
        Ok((mu.into_raw_vec_and_offset().0, sigma.into_raw_vec_and_offset().0))
    }

    /// `gθ(μφ(x))` for a batch.
    pub fn reconstruct_batch(&self, x: ArrayView2<'_, f64>) -> Result<Array2<f64>, VaeError> {
        self.check_data(&x)?;
        let mu = self.encoder_mean.predict(x)?;
        Ok(self.decoder.predict(mu.view())?)
    }

    /// Deterministic reconstruction through the posterior mean.
    pub fn reconstruct(&self, x: &[f64]) -> Result<Vec<f64>, VaeError> {
        Ok(self.reconstruct_batch(row(x))?.into_raw_vec_and_offset().0)
    }

    /// `log N(x | gθ(z), σθ² I)`.
    pub fn log_likelihood(&self, x: &[f64], z: &[f64]) -> Result<f64, VaeError> {
        let g = self.decoder.predict_one(z)?;
        if g.len() != x.len() {
            return Err(VaeError::DimensionMismatch {
                expected: g.len(),
                found: x.len(),
            });
        }
        let sq: f64 = x.iter().zip(&g).map(|(a, b)| (a - b).powi(2)).sum();
        Ok(gaussian_log_likelihood(sq, x.len(), self.likelihood_scale))
    }

    /// Forward pass of the encoder scale for training; returns `σ` and, for
    /// learned scales, the tape and the `dσ/ds` factors.
    pub(crate) fn scale_forward(
        &self,
        x: ArrayView2<'_, f64>,
        rows: usize,
    ) -> Result<(Array2<f64>, Option<(GradientTape, Array2<f64>)>), VaeError> {
        match &self.encoder_scale {
            EncoderScale::Fixed(s) => Ok((
                Array2::from_shape_fn((rows, s.len()), |(_, j)| s[j]),
                None,
            )),
            EncoderScale::Learned(net) => {
                let (raw, tape) = net.forward(x)?;
                let sigma = raw.mapv(positive_scale);
                let mut dsig = sigma.clone();
                Zip::from(&mut dsig).and(&raw).for_each(|d, &s| {
                    let e = s.exp();
                    if !(SCALE_MIN..=SCALE_MAX).contains(&e) {
                        *d = 0.0;
                    }
                });
                Ok((sigma, Some((tape, dsig))))
            }
        }
    }
}

pub(crate) fn positive_scale(s: f64) -> f64 {
    s.exp().clamp(SCALE_MIN, SCALE_MAX)
}

/// `log N(x | g, scale² I)` for `‖x − g‖² = squared_error` in `dim` dimensions.
pub fn gaussian_log_likelihood(squared_error: f64, dim: usize, scale: f64) -> f64 {
    -squared_error / (2.0 * scale * scale) - 0.5 * dim as f64 * (2.0 * PI * scale * scale).ln()
}

/// `z = μ + σ ∘ ε`.
pub fn reparameterize(mu: &[f64], sigma: &[f64], epsilon: &[f64]) -> Result<Vec<f64>, VaeError> {
    if mu.len() != sigma.len() || mu.len() != epsilon.len() {
        return Err(VaeError::DimensionMismatch {
            expected: mu.len(),
            found: if sigma.len() != mu.len() { sigma.len() } else { epsilon.len() },
        });
    }
    Ok(mu
        .iter()
        .zip(sigma)
        .zip(epsilon)
        .map(|((m, s), e)| m + s * e)
        .collect())
}

/// `KL(N(μ, diag σ²) ‖ N(0, I)) = ½ Σ (σ² + μ² − 1 − log σ²)`.
pub fn kl_diag_gaussian(mu: &[f64], sigma: &[f64]) -> Result<f64, VaeError> {
    if mu.len() != sigma.len() {
        return Err(VaeError::DimensionMismatch {
            expected: mu.len(),
            found: sigma.len(),
        });
    }
    if sigma.iter().any(|&s| !(s > 0.0)) {
        return Err(VaeError::NonPositiveScale);
    }
    Ok(0.5
        * mu.iter()
            .zip(sigma)
            .map(|(m, s)| s * s + m * m - 1.0 - (s * s).ln())
            .sum::<f64>())
}

/// Single-sample ELBO of one example at a fixed `ε`.
pub fn elbo(model: &VaeModel, x: &[f64], beta: f64, epsilon: &[f64]) -> Result<ElboReport, VaeError> {
    let (mu, sigma) = model.encode(x)?;
    let z = reparameterize(&mu, &sigma, epsilon)?;
    let reconstruction_term = model.log_likelihood(x, &z)?;
    let kl_term = kl_diag_gaussian(&mu, &sigma)?;
    let elbo = reconstruction_term - beta * kl_term;
    if !elbo.is_finite() {
        return Err(VaeError::NonFinite("elbo"));
    }
    Ok(ElboReport {
        reconstruction_term,
        kl_term,
        elbo,
    })
}

/// `x̃ = x + σν`, `ν ~ N(0, I)`.
pub fn add_input_noise<R: Rng + ?Sized>(x: &[f64], sigma: f64, rng: &mut R) -> Vec<f64> {
    if sigma == 0.0 {
        return x.to_vec();
    }
    x.iter()
        .map(|v| {
            let nu: f64 = StandardNormal.sample(rng);
            v + sigma * nu
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::LayerShape;
    use crate::seed::rng_from;

    fn linear_1d(a: f64, b: f64, c: f64, d: f64, sigma_phi: f64, sigma_theta: f64) -> VaeModel {
        let lin = |w: f64, bias: f64| {
            DenseNetwork::from_parameters(
                vec![LayerShape { inputs: 1, outputs: 1, activation: Activation::Identity }],
                vec![w, bias],
            )
            .unwrap()
        };
        VaeModel::from_parts(lin(a, b), EncoderScale::Fixed(vec![sigma_phi]), lin(c, d), sigma_theta).unwrap()
    }

    fn small_arch(latent: usize) -> Architecture {
        Architecture { data_dim: 2, latent_dim: latent, hidden: vec![8], activation: Activation::Tanh }
    }

    #[test]
    fn fixed_mode_reports_constant_scale() {
        let m = VaeModel::new(&small_arch(3), Some(0.5), 0.3, &mut rng_from(1, &[])).unwrap();
        for x in [[0.1, 0.2], [-0.9, 0.7]] {
            let (_, s) = m.encode(&x).unwrap();
            assert_eq!(s, vec![0.5; 3]);
        }
    }

    #[test]
    fn learned_mode_positive_and_deterministic() {
        let m = VaeModel::new(&small_arch(2), None, 0.3, &mut rng_from(2, &[])).unwrap();
        let a = m.encode(&[0.4, -0.1]).unwrap();
        let b = m.encode(&[0.4, -0.1]).unwrap();
        assert_eq!(a, b);
        assert!(a.1.iter().all(|s| *s > 0.0));
    }

    #[test]
    fn reparameterize_examples() {
        assert_eq!(reparameterize(&[1.0, 2.0], &[3.0, 4.0], &[0.0, 0.0]).unwrap(), vec![1.0, 2.0]);
        assert_eq!(reparameterize(&[0.0], &[1.0], &[-0.7]).unwrap(), vec![-0.7]);
        assert!(reparameterize(&[0.0], &[1.0, 1.0], &[0.0]).is_err());
    }

    #[test]
    fn reparameterize_is_affine_in_epsilon() {
        let (mu, sigma) = ([0.25, -1.5], [0.5, 2.0]);
        let (e1, e2) = ([0.75, -0.5], [1.25, 0.125]);
        let sum = [e1[0] + e2[0], e1[1] + e2[1]];
        let z1 = reparameterize(&mu, &sigma, &e1).unwrap();
        let z2 = reparameterize(&mu, &sigma, &e2).unwrap();
        let z0 = reparameterize(&mu, &sigma, &[0.0, 0.0]).unwrap();
        let z12 = reparameterize(&mu, &sigma, &sum).unwrap();
        for i in 0..2 {
            assert_eq!(z1[i] + z2[i] - z0[i], z12[i]);
        }
    }

    #[test]
    fn kl_examples() {
        assert_eq!(kl_diag_gaussian(&[0.0, 0.0], &[1.0, 1.0]).unwrap(), 0.0);
        assert!((kl_diag_gaussian(&[1.0], &[1.0]).unwrap() - 0.5).abs() < 1e-15);
        assert_eq!(kl_diag_gaussian(&[0.0], &[0.0]).unwrap_err(), VaeError::NonPositiveScale);
    }

    #[test]
    fn elbo_examples() {
        // Encoder μ = 2x + 0.1, σφ = 0.5; decoder g = -0.5z + 0.3, σθ = 0.2.
        let m = linear_1d(2.0, 0.1, -0.5, 0.3, 0.5, 0.2);
        let (x, eps) = (0.4, 0.8);
        let mu = 2.0 * x + 0.1;
        let z = mu + 0.5 * eps;
        let g = -0.5 * z + 0.3;
        let rec = -(x - g) * (x - g) / (2.0 * 0.04) - 0.5 * (2.0 * PI * 0.04f64).ln();
        let kl = 0.5 * (0.25 + mu * mu - 1.0 - 0.25f64.ln());
        let r = elbo(&m, &[x], 3.0, &[eps]).unwrap();
        assert!((r.reconstruction_term - rec).abs() < 1e-10);
        assert!((r.kl_term - kl).abs() < 1e-10);
        assert!((r.elbo - (rec - 3.0 * kl)).abs() < 1e-10);
        let r0 = elbo(&m, &[x], 0.0, &[eps]).unwrap();
        assert_eq!(r0.elbo, r0.reconstruction_term);
    }

    #[test]
    fn perfect_reconstruction_standard_posterior() {
        // μ = 0, σφ = 1, decoder outputs x exactly at z = ε = 0.
        let x = 0.37;
        let m = linear_1d(0.0, 0.0, 1.0, x, 1.0, 0.1);
        let r = elbo(&m, &[x], 1.0, &[0.0]).unwrap();
        assert!((r.elbo + 0.5 * (2.0 * PI * 0.01f64).ln()).abs() < 1e-12);
    }

    #[test]
    fn input_noise() {
        let mut rng = rng_from(5, &[]);
        let x = [0.1, -0.4, 0.9];
        assert_eq!(add_input_noise(&x, 0.0, &mut rng), x.to_vec());
        assert_eq!(add_input_noise(&x, 2.0, &mut rng).len(), 3);
    }

    #[test]
    fn construction_checks() {
        let net = |i, o| DenseNetwork::zeros(vec![LayerShape { inputs: i, outputs: o, activation: Activation::Identity }]).unwrap();
        assert!(VaeModel::from_parts(net(2, 1), EncoderScale::Fixed(vec![1.0]), net(2, 2), 0.1).is_err());
        assert!(VaeModel::from_parts(net(2, 1), EncoderScale::Fixed(vec![0.0]), net(1, 2), 0.1).is_err());
        assert!(VaeModel::from_parts(net(2, 1), EncoderScale::Fixed(vec![1.0]), net(1, 2), 0.0).is_err());
        assert!(VaeModel::from_parts(net(2, 1), EncoderScale::Fixed(vec![1.0]), net(1, 2), 0.1).is_ok());
    }
}
