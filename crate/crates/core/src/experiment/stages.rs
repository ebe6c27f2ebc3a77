use std::path::Path;

use ndarray::{Array2, Axis};
use rand_distr::{Distribution, StandardNormal};

use super::config::{AttackSpec, DatasetSpec, ExperimentConfig, HermiteSpec, LipschitzSpec, SpectrumSpec};
use super::{Checkpoint, ExperimentError};
use crate::attack::{robustness_csv, robustness_curve};
use crate::dataset::{gen_dataset, Dataset, InputLayout};
use crate::exec::{try_map_indexed, Execution};
use crate::lipschitz::{decoder_poincare, lipschitz_estimate, lipschitz_report_csv, LipschitzReportRow};
use crate::measure::Estimator;
use crate::report::num;
use crate::seed::{derive_seed, rng_from};
use crate::spectral::{encoder_mean_spectrum, optimal_poly_degree, reconstructed_values, reconstruction_spectrum};
use crate::vae::{decoder_hermite_variance, train_noising_from, EpochLog, VaeModel};

/// Named scalar results, in insertion order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Metrics(pub Vec<(String, f64)>);

impl Metrics {
    pub fn push(&mut self, key: impl Into<String>, value: f64) {
        self.0.push((key.into(), value));
    }

    pub fn extend(&mut self, other: Metrics) {
        self.0.extend(other.0);
    }

    pub fn get(&self, key: &str) -> Option<f64> {
        self.0.iter().find(|(k, _)| k == key).map(|(_, v)| *v)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("metric,value\n");
        for (k, v) in &self.0 {
            out.push_str(&format!("{k},{}\n", num(*v)));
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Self, ExperimentError> {
        let mut m = Metrics::default();
        for (i, line) in text.lines().enumerate().skip(1) {
            let (k, v) = line
                .split_once(',')
                .ok_or_else(|| ExperimentError::Config(format!("summary line {} is malformed", i + 1)))?;
            let v = v
                .parse()
                .map_err(|_| ExperimentError::Config(format!("summary line {} has a bad value", i + 1)))?;
            m.push(k, v);
        }
        Ok(m)
    }
}

/// Files produced by a stage plus the scalars it contributes to the summary.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct StageOutput {
    pub files: Vec<(String, String)>,
    pub metrics: Metrics,
}

/// `count` indices spread evenly over `0..n` (all of them when `count ≥ n`).
pub fn evenly_spaced(n: usize, count: usize) -> Vec<usize> {
    if count >= n {
        return (0..n).collect();
    }
    if count == 1 {
        return vec![n / 2];
    }
    (0..count).map(|i| i * (n - 1) / (count - 1)).collect()
}

/// Reads a dataset CSV, or generates one from the spec.
pub fn load_or_generate(spec: &DatasetSpec, path: Option<&Path>) -> Result<Dataset, ExperimentError> {
    match path {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| ExperimentError::io(p, e))?;
            Dataset::from_csv(&text).map_err(|e| ExperimentError::Config(e.to_string()))
        }
        None => gen_dataset(spec.kind, spec.size, spec.convention, spec.seed)
            .map_err(|e| ExperimentError::Config(e.to_string())),
    }
}

pub fn train_stage(cfg: &ExperimentConfig, data: &Dataset) -> Result<(Checkpoint, StageOutput), ExperimentError> {
    let layout = cfg.dataset.layout();
    let arch = cfg.architecture();
    if arch.data_dim != layout.input_dim(data.dim()) {
        return Err(ExperimentError::Config(format!(
            "dataset has {} value columns, config expects {}",
            data.dim(),
            arch.data_dim - layout.value_offset()
        )));
    }
    let fixed = cfg.train.fixed_sigma_phi.as_ref().map(|s| s[0]);
    let mut init = rng_from(cfg.train.seed, &[0x1417]);
    let model = VaeModel::new(&arch, fixed, cfg.model.likelihood_scale, &mut init)
        .map_err(|e| ExperimentError::stage("train", e))?;
    let x = data.model_inputs(layout);
    let (model, logs) = train_noising_from(model, x.view(), &cfg.train, layout.value_offset()).map_err(|e| ExperimentError::stage("train", e))?;
    let rec = reconstructed_values(&model, data, layout).map_err(|e| ExperimentError::stage("train", e))?;
    let mse = (&rec - &data.values).mapv(|v| v * v).mean().unwrap_or(0.0);
    let mut metrics = Metrics::default();
    if let Some(last) = logs.last() {
        metrics.push("final_elbo", last.report.elbo);
    }
    metrics.push("reconstruction_mse", mse);
    let out = StageOutput {
        files: vec![("train_log.csv".into(), EpochLog::to_csv(&logs))],
        metrics,
    };
    Ok((Checkpoint::new(model, layout, Some(cfg.train.clone())), out))
}

pub fn spectrum_stage(
    model: &VaeModel,
    data: &Dataset,
    layout: InputLayout,
    spec: &SpectrumSpec,
) -> Result<StageOutput, ExperimentError> {
    let fail = |e: crate::spectral::SpectralError| ExperimentError::stage("spectrum", e);
    let rec = reconstruction_spectrum(model, data, layout).map_err(fail)?;
    let enc = encoder_mean_spectrum(model, data, layout).map_err(fail)?;
    let cutoff = spec.cutoff.unwrap_or_else(|| rec.default_cutoff());
    let mut metrics = Metrics::default();
    metrics.push("spectrum_cutoff", cutoff);
    metrics.push("reconstruction_hf_fraction", rec.high_frequency_fraction(cutoff).map_err(fail)?);
    metrics.push("encoder_hf_fraction", enc.high_frequency_fraction(cutoff).map_err(fail)?);
    let mut files = vec![
        ("spectrum_reconstruction.csv".to_string(), rec.to_csv()),
        ("spectrum_encoder_mean.csv".to_string(), enc.to_csv()),
    ];
    let values = reconstructed_values(model, data, layout).map_err(fail)?;
    for d in 0..values.ncols() {
        let y = values.column(d).to_vec();
        let sel = optimal_poly_degree(&data.coordinates, &y, spec.k_max, spec.cv_splits, spec.cv_seed).map_err(fail)?;
        let key = if values.ncols() == 1 { "k_star".to_string() } else { format!("k_star_{d}") };
        metrics.push(key, sel.k_star as f64);
        let file = if values.ncols() == 1 { "degree_selection.csv".to_string() } else { format!("degree_selection_{d}.csv") };
        files.push((file, sel.to_csv()));
    }
    Ok(StageOutput { files, metrics })
}

pub fn hermite_stage(
    model: &VaeModel,
    data: &Dataset,
    layout: InputLayout,
    spec: &HermiteSpec,
    exec: Execution,
) -> Result<StageOutput, ExperimentError> {
    let x = data.model_inputs(layout);
    let idx = evenly_spaced(data.len(), spec.points);
    let reports = try_map_indexed(exec, idx.len(), |k| {
        let est = Estimator::default_for(model.latent_dim(), derive_seed(spec.seed, &[idx[k] as u64]));
        decoder_hermite_variance(model, &x.row(idx[k]).to_vec(), spec.max_degree, est, Execution::Sequential)
    })
    .map_err(|e| ExperimentError::stage("hermite", e))?;
    let mut csv = String::from("point,t,degree,contribution\n");
    let mut fractions = Vec::new();
    for (k, r) in reports.iter().enumerate() {
        for (deg, c) in r.profile.iter().enumerate().skip(1) {
            csv.push_str(&format!("{},{},{deg},{}\n", idx[k], num(data.coordinates[idx[k]]), num(*c)));
        }
        if let Some(f) = r.fraction_at_or_above(2) {
            fractions.push(f);
        }
    }
    let mut metrics = Metrics::default();
    metrics.push("hermite_high_degree_fraction", super::median(&fractions).unwrap_or(0.0));
    metrics.push("hermite_total_variance", reports.iter().map(|r| r.total()).sum::<f64>() / reports.len() as f64);
    Ok(StageOutput {
        files: vec![("hermite_profile.csv".into(), csv)],
        metrics,
    })
}

/// Decoder inputs drawn from the aggregate posterior: `μφ(x_i) + σφ(x_i)∘ε`, cycling over the data.
fn posterior_samples(model: &VaeModel, x: &Array2<f64>, count: usize, seed: u64) -> Result<Array2<f64>, ExperimentError> {
    let (mu, sigma) = model.encode_batch(x.view()).map_err(|e| ExperimentError::stage("lipschitz", e))?;
    let mut rng = rng_from(seed, &[0x2a]);
    Ok(Array2::from_shape_fn((count, mu.ncols()), |(k, j)| {
        let i = k % mu.nrows();
        let e: f64 = StandardNormal.sample(&mut rng);
        mu[(i, j)] + sigma[(i, j)] * e
    }))
}

pub fn lipschitz_stage(
    model: &VaeModel,
    data: &Dataset,
    layout: InputLayout,
    spec: &LipschitzSpec,
    label: f64,
    exec: Execution,
) -> Result<StageOutput, ExperimentError> {
    let fail = |e: crate::lipschitz::LipschitzError| ExperimentError::stage("lipschitz", e);
    let x = data.model_inputs(layout);
    let enc_points = x.select(Axis(0), &evenly_spaced(x.nrows(), spec.samples));
    let dec_points = posterior_samples(model, &x, spec.samples, spec.seed)?;
    let enc = lipschitz_estimate(&model.encoder_mean, enc_points.view(), exec).map_err(fail)?;
    let dec = lipschitz_estimate(&model.decoder, dec_points.view(), exec).map_err(fail)?;
    let poincare = decoder_poincare(model, x.view(), spec.poincare_samples, spec.seed, exec).map_err(fail)?;
    let rows = [
        LipschitzReportRow {
            network_id: "decoder".into(),
            sigma_phi_or_sigma: label,
            upper_bound: dec.upper_bound,
            empirical_lower_bound: dec.empirical_lower_bound,
            var_max: poincare.var_max,
            poincare_slack_min: poincare.slack_min,
        },
        LipschitzReportRow {
            network_id: "encoder_mean".into(),
            sigma_phi_or_sigma: label,
            upper_bound: enc.upper_bound,
            empirical_lower_bound: enc.empirical_lower_bound,
            var_max: f64::NAN,
            poincare_slack_min: f64::NAN,
        },
    ];
    let mut metrics = Metrics::default();
    metrics.push("decoder_lipschitz_upper", dec.upper_bound);
    metrics.push("decoder_lipschitz_empirical", dec.empirical_lower_bound);
    metrics.push("encoder_lipschitz_upper", enc.upper_bound);
    metrics.push("encoder_lipschitz_empirical", enc.empirical_lower_bound);
    metrics.push("poincare_checks", poincare.checks as f64);
    metrics.push("poincare_violations", poincare.violations as f64);
    metrics.push("poincare_var_max", poincare.var_max);
    metrics.push("poincare_slack_min", poincare.slack_min);
    Ok(StageOutput {
        files: vec![("lipschitz.csv".into(), lipschitz_report_csv(&rows))],
        metrics,
    })
}

pub fn attack_stage(
    model: &VaeModel,
    data: &Dataset,
    layout: InputLayout,
    spec: &AttackSpec,
    input_noise_sigma: f64,
    exec: Execution,
) -> Result<StageOutput, ExperimentError> {
    let x = data.model_inputs(layout);
    let pts = x.select(Axis(0), &evenly_spaced(x.nrows(), spec.points));
    let curve = robustness_curve(model, pts.view(), &spec.c_grid, &spec.attack_config(), exec)
        .map_err(|e| ExperimentError::stage("attack", e))?;
    let mut metrics = Metrics::default();
    for p in &curve {
        metrics.push(format!("degradation_c{}", p.max_norm), p.mean_degradation);
    }
    let phi = model.fixed_sigma_phi().map(|s| s[0]);
    Ok(StageOutput {
        files: vec![("robustness.csv".into(), robustness_csv(&curve, phi, input_noise_sigma))],
        metrics,
    })
}


#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn evenly_spaced_indices() {
        assert_eq!(evenly_spaced(5, 10), vec![0, 1, 2, 3, 4]);
        assert_eq!(evenly_spaced(11, 3), vec![0, 5, 10]);
        assert_eq!(evenly_spaced(10, 1), vec![5]);
        assert_eq!(evenly_spaced(100, 25).len(), 25);
    }

    #[test]
    fn metrics_csv_round_trip() {
        let mut m = Metrics::default();
        m.push("a", 1.5);
        m.push("b", -0.25);
        let back = Metrics::from_csv(&m.to_csv()).unwrap();
        assert_eq!(back, m);
        assert_eq!(back.get("b"), Some(-0.25));
        assert_eq!(back.get("c"), None);
    }
}
