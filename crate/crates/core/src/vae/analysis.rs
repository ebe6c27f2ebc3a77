use ndarray::{Array2, ArrayView2, Axis};
use rand_distr::{Distribution, StandardNormal};

use super::{VaeError, VaeModel};
use crate::exec::Execution;
use crate::measure::{multi_index_count, variance_decompositions, Estimator, GaussianMeasure, VarianceDecomposition};
use crate::seed::rng_from;

/// Largest number of multi-indices `decoder_hermite_variance` will enumerate.
pub const HERMITE_ENUMERATION_BUDGET: u128 = 10_000;

/// Monte Carlo split of the expected squared reconstruction error under
/// `q(z|x)` into bias and variance.
#[derive(Debug, Clone, PartialEq)]
pub struct BiasVariance {
    /// Unbiased estimate of `‖E_q gθ(z) − x‖²`; may dip below zero by
    /// sampling noise when the bias is tiny.
    pub bias_sq: f64,
    pub bias_sq_std_error: f64,
    /// `E_q ‖gθ(z) − E_q gθ(z)‖²`.
    pub variance: f64,
    pub variance_std_error: f64,
    pub per_dim_variance: Vec<f64>,
    pub per_dim_std_error: Vec<f64>,
    /// Direct estimate of `E_q ‖gθ(z) − x‖²`; equals `bias_sq + variance`.
    pub mse: f64,
    pub mse_std_error: f64,
    pub samples: usize,
}

fn mean_and_se(values: impl Iterator<Item = f64> + Clone, n: usize) -> (f64, f64) {
    let nf = n as f64;
    let mean = values.clone().sum::<f64>() / nf;
    let var = values.map(|v| (v - mean).powi(2)).sum::<f64>() / (nf - 1.0);
    (mean, (var / nf).sqrt())
}

/// Draws `z ~ N(μφ(x), diag σφ(x)²)` and decodes; returns the decoded samples (rows).
pub(crate) fn posterior_decodes(
    model: &VaeModel,
    x: &[f64],
    n_samples: usize,
    seed: u64,
) -> Result<Array2<f64>, VaeError> {
    let (mu, sigma) = model.encode(x)?;
    let mut rng = rng_from(seed, &[]);
    let z = Array2::from_shape_fn((n_samples, mu.len()), |(_, j)| {
        let e: f64 = StandardNormal.sample(&mut rng);
        mu[j] + sigma[j] * e
    });
    Ok(model.decoder.predict(z.view())?)
}

pub fn bias_variance_likelihood(
    model: &VaeModel,
    x: &[f64],
    n_samples: usize,
    seed: u64,
) -> Result<BiasVariance, VaeError> {
    if n_samples < 2 {
        return Err(VaeError::InvalidConfig("n_samples must be at least 2".into()));
    }
    if x.len() != model.data_dim() {
        return Err(VaeError::DimensionMismatch {
            expected: model.data_dim(),
            found: x.len(),
        });
    }
    let g = posterior_decodes(model, x, n_samples, seed)?;
    let n = n_samples as f64;
    let mean = g.mean_axis(Axis(0)).expect("non-empty");
    let dev = &g - &mean;
    let sq_dev = dev.mapv(|v| v * v);

    let mut per_dim_variance = Vec::with_capacity(x.len());
    let mut per_dim_std_error = Vec::with_capacity(x.len());
    for col in sq_dev.axis_iter(Axis(1)) {
        let (m, se) = mean_and_se(col.iter().copied(), n_samples);
        // Rescale the plug-in mean to the unbiased sample variance.
        per_dim_variance.push(m * n / (n - 1.0));
        per_dim_std_error.push(se * n / (n - 1.0));
    }
    let row_sq = sq_dev.sum_axis(Axis(1));
    let (v, v_se) = mean_and_se(row_sq.iter().copied(), n_samples);
    let variance = v * n / (n - 1.0);
    let variance_std_error = v_se * n / (n - 1.0);

    let offset: Vec<f64> = mean.iter().zip(x).map(|(m, xi)| m - xi).collect();
    let bias_sq = offset.iter().map(|o| o * o).sum::<f64>() - variance / n;
    let bias_sq_std_error = offset
        .iter()
        .zip(&per_dim_variance)
        .map(|(o, var)| 4.0 * o * o * var / n)
        .sum::<f64>()
        .sqrt();

    let err_rows: Vec<f64> = g
        .outer_iter()
        .map(|r| r.iter().zip(x).map(|(a, b)| (a - b).powi(2)).sum())
        .collect();
    let (mse, mse_std_error) = mean_and_se(err_rows.iter().copied(), n_samples);
    Ok(BiasVariance {
        bias_sq,
        bias_sq_std_error,
        variance,
        variance_std_error,
        per_dim_variance,
        per_dim_std_error,
        mse,
        mse_std_error,
        samples: n_samples,
    })
}

/// Hermite variance decomposition of each decoder output under the posterior at `x`.
#[derive(Debug, Clone, PartialEq)]
pub struct DecoderHermiteReport {
    pub per_output: Vec<VarianceDecomposition>,
    /// Contributions summed over outputs, indexed by total degree.
    pub profile: Vec<f64>,
}

impl DecoderHermiteReport {
    pub fn total(&self) -> f64 {
        self.profile.iter().sum()
    }

    /// Share of the summed variance at degrees `≥ min_degree`; `None` when the variance is zero.
    pub fn fraction_at_or_above(&self, min_degree: usize) -> Option<f64> {
        let total = self.total();
        (total > 0.0).then(|| self.profile.iter().skip(min_degree).sum::<f64>() / total)
    }

    pub fn profile_csv(&self) -> String {
        let mut out = String::from("degree,contribution\n");
        for (k, c) in self.profile.iter().enumerate().skip(1) {
            out.push_str(&format!("{k},{}\n", crate::report::num(*c)));
        }
        out
    }
}

pub fn decoder_hermite_variance(
    model: &VaeModel,
    x: &[f64],
    max_degree: usize,
    est: Estimator,
    exec: Execution,
) -> Result<DecoderHermiteReport, VaeError> {
    let n = model.latent_dim();
    let count = multi_index_count(n, max_degree);
    if count > HERMITE_ENUMERATION_BUDGET {
        return Err(VaeError::EnumerationBudget {
            count,
            budget: HERMITE_ENUMERATION_BUDGET,
        });
    }
    let (mu, sigma) = model.encode(x)?;
    let measure = GaussianMeasure::new(mu, sigma)?;
    let decoder = &model.decoder;
    let per_output = variance_decompositions(
        |z: ArrayView2<'_, f64>| decoder.predict(z).unwrap_or_else(|_| Array2::from_elem((z.nrows(), decoder.output_dim()), f64::NAN)),
        &measure,
        max_degree,
        est,
        exec,
    )?;
    let mut profile = vec![0.0; max_degree + 1];
    for vd in &per_output {
        for (p, c) in profile.iter_mut().zip(vd.by_degree()) {
            *p += c;
        }
    }
    Ok(DecoderHermiteReport { per_output, profile })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::{Activation, DenseNetwork, LayerShape};
    use crate::measure::MultiIndex;
    use crate::vae::EncoderScale;

    fn identity(i: usize, o: usize, params: Vec<f64>) -> DenseNetwork {
        DenseNetwork::from_parameters(
            vec![LayerShape { inputs: i, outputs: o, activation: Activation::Identity }],
            params,
        )
        .unwrap()
    }

    // d = 2, n = 2; encoder μ(x) = x, decoder g(z) = A z.
    fn linear_model(a: [f64; 4], sigma_phi: [f64; 2]) -> VaeModel {
        VaeModel::from_parts(
            identity(2, 2, vec![1.0, 0.0, 0.0, 1.0, 0.0, 0.0]),
            EncoderScale::Fixed(sigma_phi.to_vec()),
            identity(2, 2, vec![a[0], a[1], a[2], a[3], 0.0, 0.0]),
            0.3,
        )
        .unwrap()
    }

    fn constant_model(c: [f64; 2]) -> VaeModel {
        VaeModel::from_parts(
            identity(2, 2, vec![1.0, 0.0, 0.0, 1.0, 0.0, 0.0]),
            EncoderScale::Fixed(vec![0.7, 0.2]),
            identity(2, 2, vec![0.0, 0.0, 0.0, 0.0, c[0], c[1]]),
            0.3,
        )
        .unwrap()
    }

    #[test]
    fn constant_decoder_has_pure_bias() {
        let m = constant_model([0.25, -0.5]);
        let x = [0.1, 0.3];
        let bv = bias_variance_likelihood(&m, &x, 100, 1).unwrap();
        assert_eq!(bv.variance, 0.0);
        let want = (0.25f64 - 0.1).powi(2) + (-0.5f64 - 0.3).powi(2);
        assert!((bv.bias_sq - want).abs() < 1e-14);
        let h = decoder_hermite_variance(&m, &x, 4, Estimator::Quadrature { nodes_per_dim: 16 }, Execution::Sequential).unwrap();
        assert!(h.profile.iter().all(|c| c.abs() < 1e-20));
    }

    #[test]
    fn linear_decoder_variance_closed_form() {
        let a = [0.5, -1.2, 2.0, 0.3];
        let s = [0.4, 0.9];
        let m = linear_model(a, s);
        let x = [0.2, -0.6];
        let want = a[0].powi(2) * s[0].powi(2) + a[1].powi(2) * s[1].powi(2) + a[2].powi(2) * s[0].powi(2)
            + a[3].powi(2) * s[1].powi(2);
        let bv = bias_variance_likelihood(&m, &x, 100_000, 7).unwrap();
        assert!((bv.variance - want).abs() < 4.0 * bv.variance_std_error, "{} vs {want}", bv.variance);
        assert!((bv.bias_sq + bv.variance - bv.mse).abs() < 1e-12);
        assert!((bv.bias_sq - bv.mse + bv.variance).abs() < 3.0 * bv.mse_std_error);

        let h = decoder_hermite_variance(&m, &x, 3, Estimator::Quadrature { nodes_per_dim: 16 }, Execution::Sequential).unwrap();
        assert!((h.total() - want).abs() < 1e-12);
        assert!((h.profile[1] - want).abs() < 1e-12);
        let first = &h.per_output[0];
        assert!((first.contribution(&MultiIndex::new(vec![1, 0])) - (a[0] * s[0]).powi(2)).abs() < 1e-12);
        for (o, vd) in h.per_output.iter().enumerate() {
            assert!((vd.total - bv.per_dim_variance[o]).abs() < 3.0 * bv.per_dim_std_error[o] + 1e-12);
        }
    }

    #[test]
    fn enumeration_budget() {
        let latent = 6;
        let m = VaeModel::from_parts(
            identity(1, latent, vec![0.0; 2 * latent]),
            EncoderScale::Fixed(vec![1.0; latent]),
            identity(latent, 1, vec![0.0; latent + 1]),
            0.3,
        )
        .unwrap();
        // C(6 + 10, 10) = 8008 fits, C(6 + 11, 11) = 12376 does not.
        let est = Estimator::MonteCarlo { samples: 16, seed: 1 };
        assert!(decoder_hermite_variance(&m, &[0.0], 10, est, Execution::Sequential).is_ok());
        assert!(matches!(
            decoder_hermite_variance(&m, &[0.0], 11, est, Execution::Sequential),
            Err(VaeError::EnumerationBudget { count: 12376, .. })
        ));
    }

    #[test]
    fn too_few_samples() {
        let m = constant_model([0.0, 0.0]);
        assert!(bias_variance_likelihood(&m, &[0.0, 0.0], 1, 1).is_err());
    }
}
