use ndarray::{s, Array2, ArrayView2, Axis, Zip};
use rand::seq::SliceRandom;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{gaussian_log_likelihood, ElboReport, EncoderScale, VaeError, VaeModel};
use crate::autodiff::{AdamConfig, AdamState};
use crate::report::num;
use crate::seed::rng_from;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    /// KL weight.
    pub beta: f64,
    pub input_noise_sigma: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub learning_rate: f64,
    /// Pins the encoder scale; one entry is broadcast over all latent dimensions.
    pub fixed_sigma_phi: Option<Vec<f64>>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            beta: 1.0,
            input_noise_sigma: 0.0,
            epochs: 2000,
            batch_size: 256,
            seed: 0,
            learning_rate: 1e-3,
            fixed_sigma_phi: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), VaeError> {
        let bad = |m: &str| Err(VaeError::InvalidConfig(m.to_string()));
        if !(self.beta >= 0.0 && self.beta.is_finite()) {
            return bad("beta must be a finite non-negative number");
        }
        if !(self.input_noise_sigma >= 0.0 && self.input_noise_sigma.is_finite()) {
            return bad("input_noise_sigma must be a finite non-negative number");
        }
        if self.batch_size == 0 {
            return bad("batch_size must be positive");
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate must be positive");
        }
        if let Some(s) = &self.fixed_sigma_phi {
            if s.is_empty() || s.iter().any(|v| !(*v > 0.0 && v.is_finite())) {
                return bad("fixed_sigma_phi entries must be positive");
            }
        }
        Ok(())
    }
}

/// Epoch-averaged ELBO terms on the presented (possibly noised) inputs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochLog {
    pub epoch: usize,
    pub report: ElboReport,
}

impl EpochLog {
    pub fn to_csv(logs: &[EpochLog]) -> String {
        let mut out = String::from("epoch,elbo,reconstruction_term,kl_term\n");
        for l in logs {
            out.push_str(&format!(
                "{},{},{},{}\n",
                l.epoch,
                num(l.report.elbo),
                num(l.report.reconstruction_term),
                num(l.report.kl_term)
            ));
        }
        out
    }
}

/// Parameter gradients of the batch loss `−(1/B) Σ ELBO`.
pub(crate) struct ModelGradients {
    pub encoder_mean: Vec<f64>,
    pub encoder_scale: Option<Vec<f64>>,
    pub decoder: Vec<f64>,
}

/// Summed ELBO terms over a batch and gradients of the mean negative ELBO,
/// for the noise draws `eps` (rows = examples).
pub(crate) fn batch_gradients(
    model: &VaeModel,
    x: ArrayView2<'_, f64>,
    eps: ArrayView2<'_, f64>,
    beta: f64,
) -> Result<(ElboReport, ModelGradients), VaeError> {
    let b = x.nrows();
    let bf = b as f64;
    let s2 = model.likelihood_scale * model.likelihood_scale;
    let (mu, mean_tape) = model.encoder_mean.forward(x)?;
    let (sigma, scale_tape) = model.scale_forward(x, b)?;
    let z = &mu + &(&sigma * &eps);
    let (g, dec_tape) = model.decoder.forward(z.view())?;
    let diff = &g - &x;

    let sq_rows = diff.mapv(|v| v * v).sum_axis(Axis(1));
    let reconstruction: f64 = sq_rows
        .iter()
        .map(|&sq| gaussian_log_likelihood(sq, x.ncols(), model.likelihood_scale))
        .sum();
    let mut kl = 0.0;
    Zip::from(&mu).and(&sigma).for_each(|&m, &s| kl += 0.5 * (s * s + m * m - 1.0 - (s * s).ln()));
    let report = ElboReport {
        reconstruction_term: reconstruction,
        kl_term: kl,
        elbo: reconstruction - beta * kl,
    };
    if !report.elbo.is_finite() {
        return Err(VaeError::NonFinite("loss"));
    }

    let dg = diff.mapv(|v| v / (s2 * bf));
    let dec = model.decoder.backward(&dec_tape, dg.view())?;
    let dz = dec.input;
    let dmu = &dz + &mu.mapv(|m| beta * m / bf);
    let mean_grads = model.encoder_mean.backward(&mean_tape, dmu.view())?;
    let scale_grads = match (&model.encoder_scale, scale_tape) {
        (EncoderScale::Learned(net), Some((tape, dsig))) => {
            let mut ds = &dz * &eps;
            Zip::from(&mut ds)
                .and(&sigma)
                .and(&dsig)
                .for_each(|d, &s, &f| *d = (*d + beta * (s - 1.0 / s) / bf) * f);
            Some(net.backward(&tape, ds.view())?.params)
        }
        _ => None,
    };
    Ok((
        report,
        ModelGradients {
            encoder_mean: mean_grads.params,
            encoder_scale: scale_grads,
            decoder: dec.params,
        },
    ))
}

struct Optimizers {
    encoder_mean: AdamState,
    encoder_scale: Option<AdamState>,
    decoder: AdamState,
}

impl Optimizers {
    fn new(model: &VaeModel, lr: f64) -> Self {
        let cfg = AdamConfig {
            learning_rate: lr,
            ..AdamConfig::default()
        };
        Self {
            encoder_mean: AdamState::new(model.encoder_mean.parameter_count(), cfg),
            encoder_scale: match &model.encoder_scale {
                EncoderScale::Learned(net) => Some(AdamState::new(net.parameter_count(), cfg)),
                EncoderScale::Fixed(_) => None,
            },
            decoder: AdamState::new(model.decoder.parameter_count(), cfg),
        }
    }

    fn apply(&mut self, model: &mut VaeModel, g: &ModelGradients) -> Result<(), VaeError> {
        self.encoder_mean.step(model.encoder_mean.parameters_mut(), &g.encoder_mean)?;
        self.decoder.step(model.decoder.parameters_mut(), &g.decoder)?;
        if let (EncoderScale::Learned(net), Some(opt), Some(grad)) =
            (&mut model.encoder_scale, &mut self.encoder_scale, &g.encoder_scale)
        {
            opt.step(net.parameters_mut(), grad)?;
        }
        Ok(())
    }
}

/// Maximises the single-sample Monte Carlo ELBO with Adam.
///
/// `data` holds one example per row, already scaled to `[-1, 1]`. Every epoch
/// reshuffles the examples and redraws input noise and `ε` from a generator
/// derived from `(seed, epoch)`, so runs are reproducible bit for bit.
pub fn train(
    model: VaeModel,
    data: ArrayView2<'_, f64>,
    cfg: &TrainConfig,
) -> Result<(VaeModel, Vec<EpochLog>), VaeError> {
    train_noising_from(model, data, cfg, 0)
}

/// [`train`], with input noise added only to columns `noise_from..` (leading
/// columns that index the example, such as a sampling coordinate, stay clean).
pub fn train_noising_from(
    mut model: VaeModel,
    data: ArrayView2<'_, f64>,
    cfg: &TrainConfig,
    noise_from: usize,
) -> Result<(VaeModel, Vec<EpochLog>), VaeError> {
    cfg.validate()?;
    if data.nrows() == 0 {
        return Err(VaeError::EmptyDataset);
    }
    if data.ncols() != model.data_dim() {
        return Err(VaeError::DimensionMismatch {
            expected: model.data_dim(),
            found: data.ncols(),
        });
    }
    if noise_from > data.ncols() {
        return Err(VaeError::InvalidConfig(format!(
            "noise offset {noise_from} exceeds input dimension {}",
            data.ncols()
        )));
    }
    if let Some(&v) = data.iter().find(|v| !(v.abs() <= 1.0)) {
        return Err(VaeError::OutOfRange(v));
    }
    if let Some(s) = &cfg.fixed_sigma_phi {
        let n = model.latent_dim();
        let s = match s.len() {
            1 => vec![s[0]; n],
            len if len == n => s.clone(),
            len => return Err(VaeError::DimensionMismatch { expected: n, found: len }),
        };
        model.encoder_scale = EncoderScale::Fixed(s);
    }

    let (rows, n) = (data.nrows(), model.latent_dim());
    let mut opt = Optimizers::new(&model, cfg.learning_rate);
    let mut order: Vec<usize> = (0..rows).collect();
    let mut logs = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        let mut rng = rng_from(cfg.seed, &[epoch as u64]);
        order.shuffle(&mut rng);
        let mut sums = ElboReport::default();
        for batch in order.chunks(cfg.batch_size) {
            let mut xb = data.select(Axis(0), batch);
            if cfg.input_noise_sigma > 0.0 {
                xb.slice_mut(s![.., noise_from..]).mapv_inplace(|v| {
                    let nu: f64 = StandardNormal.sample(&mut rng);
                    v + cfg.input_noise_sigma * nu
                });
            }
            let eps = Array2::from_shape_simple_fn((batch.len(), n), || StandardNormal.sample(&mut rng));
            let (report, grads) = batch_gradients(&model, xb.view(), eps.view(), cfg.beta)
                .map_err(|e| match e {
                    VaeError::NonFinite(_) => VaeError::Diverged { epoch },
                    other => other,
                })?;
            sums.reconstruction_term += report.reconstruction_term;
            sums.kl_term += report.kl_term;
            opt.apply(&mut model, &grads)?;
        }
        let r = sums.reconstruction_term / rows as f64;
        let k = sums.kl_term / rows as f64;
        logs.push(EpochLog {
            epoch,
            report: ElboReport {
                reconstruction_term: r,
                kl_term: k,
                elbo: r - cfg.beta * k,
            },
        });
    }
    Ok((model, logs))
}
