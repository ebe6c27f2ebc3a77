use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::attack::AttackConfig;
use crate::autodiff::Activation;
use crate::dataset::{DatasetKind, InputLayout, SincConvention};
use crate::vae::{Architecture, TrainConfig};

use super::ExperimentError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetSpec {
    pub kind: DatasetKind,
    pub size: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub convention: SincConvention,
    /// Defaults to `(t, y)` points for sinc and bare value vectors for multisine.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub layout: Option<InputLayout>,
}

impl DatasetSpec {
    pub fn layout(&self) -> InputLayout {
        self.layout.unwrap_or_else(|| InputLayout::default_for(self.kind))
    }
}

fn default_hidden() -> Vec<usize> {
    vec![256, 256, 256]
}

fn default_activation() -> Activation {
    Activation::Sigmoid
}

fn default_latent() -> usize {
    1
}

fn default_likelihood_scale() -> f64 {
    0.1f64.sqrt()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    #[serde(default = "default_hidden")]
    pub hidden: Vec<usize>,
    #[serde(default = "default_activation")]
    pub activation: Activation,
    #[serde(default = "default_latent")]
    pub latent_dim: usize,
    /// σθ; the default fixes the likelihood variance σθ² at 0.1.
    #[serde(default = "default_likelihood_scale")]
    pub likelihood_scale: f64,
}

impl Default for ModelSpec {
    fn default() -> Self {
        Self {
            hidden: default_hidden(),
            activation: default_activation(),
            latent_dim: default_latent(),
            likelihood_scale: default_likelihood_scale(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SpectrumSpec {
    pub enabled: bool,
    /// Cycles per unit of `t`; defaults to a quarter of the Nyquist frequency.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cutoff: Option<f64>,
    pub k_max: usize,
    pub cv_splits: usize,
    pub cv_seed: u64,
}

impl Default for SpectrumSpec {
    fn default() -> Self {
        Self {
            enabled: true,
            cutoff: None,
            k_max: 20,
            cv_splits: 10,
            cv_seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct HermiteSpec {
    pub enabled: bool,
    pub max_degree: usize,
    /// Number of evenly spaced dataset points analysed.
    pub points: usize,
    pub seed: u64,
}

impl Default for HermiteSpec {
    fn default() -> Self {
        Self {
            enabled: false,
            max_degree: 10,
            points: 16,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LipschitzSpec {
    pub enabled: bool,
    /// Gradient-sampling points for the empirical lower bounds.
    pub samples: usize,
    /// Monte Carlo draws per point for the decoder variance check.
    pub poincare_samples: usize,
    pub seed: u64,
}

impl Default for LipschitzSpec {
    fn default() -> Self {
        Self {
            enabled: true,
            samples: 1000,
            poincare_samples: 10_000,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AttackSpec {
    pub enabled: bool,
    pub c_grid: Vec<f64>,
    /// Number of evenly spaced dataset points attacked.
    pub points: usize,
    pub steps: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub step_size: Option<f64>,
    pub restarts: usize,
    pub seed: u64,
}

impl Default for AttackSpec {
    fn default() -> Self {
        let a = AttackConfig::default();
        Self {
            enabled: false,
            c_grid: vec![0.5, 1.0, 2.0],
            points: 25,
            steps: a.steps,
            step_size: a.step_size,
            restarts: a.restarts,
            seed: a.seed,
        }
    }
}

impl AttackSpec {
    pub fn attack_config(&self) -> AttackConfig {
        AttackConfig {
            max_norm: 0.0,
            steps: self.steps,
            step_size: self.step_size,
            restarts: self.restarts,
            seed: self.seed,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AnalysisSpec {
    pub spectrum: SpectrumSpec,
    pub hermite: HermiteSpec,
    pub lipschitz: LipschitzSpec,
    pub attack: AttackSpec,
}

/// Training hyperparameter varied by a sweep.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepParameter {
    SigmaPhi,
    InputNoiseSigma,
    Beta,
}

impl SweepParameter {
    pub fn name(self) -> &'static str {
        match self {
            SweepParameter::SigmaPhi => "sigma_phi",
            SweepParameter::InputNoiseSigma => "input_noise_sigma",
            SweepParameter::Beta => "beta",
        }
    }

    pub fn apply(self, train: &mut TrainConfig, value: f64) {
        match self {
            SweepParameter::SigmaPhi => train.fixed_sigma_phi = Some(vec![value]),
            SweepParameter::InputNoiseSigma => train.input_noise_sigma = value,
            SweepParameter::Beta => train.beta = value,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    pub parameter: SweepParameter,
    pub values: Vec<f64>,
    /// Training seeds; every value is trained once per seed.
    pub seeds: Vec<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out_dir: Option<String>,
    pub dataset: DatasetSpec,
    #[serde(default)]
    pub model: ModelSpec,
    #[serde(default)]
    pub train: TrainConfig,
    #[serde(default)]
    pub analysis: AnalysisSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepSpec>,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self, ExperimentError> {
        let cfg: Self = toml::from_str(text).map_err(|e| ExperimentError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config is always representable")
    }

    /// SHA-256 of the canonical TOML form.
    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(self.to_toml().as_bytes()))
    }

    pub fn architecture(&self) -> Architecture {
        Architecture {
            data_dim: self.dataset.layout().input_dim(match self.dataset.kind {
                DatasetKind::Sinc => 1,
                DatasetKind::Multisine => crate::dataset::MULTISINE_RATES.len(),
            }),
            latent_dim: self.model.latent_dim,
            hidden: self.model.hidden.clone(),
            activation: self.model.activation,
        }
    }

    pub fn validate(&self) -> Result<(), ExperimentError> {
        let bad = |m: String| Err(ExperimentError::Config(m));
        if self.name.is_empty() || self.name.contains(['/', '\\']) {
            return bad("name must be non-empty and contain no path separators".into());
        }
        if self.dataset.size < 2 {
            return bad("dataset.size must be at least 2".into());
        }
        if self.model.latent_dim == 0 || self.model.hidden.contains(&0) {
            return bad("model widths must be positive".into());
        }
        if !(self.model.likelihood_scale > 0.0 && self.model.likelihood_scale.is_finite()) {
            return bad("model.likelihood_scale must be positive".into());
        }
        self.train.validate().map_err(|e| ExperimentError::Config(e.to_string()))?;
        let a = &self.analysis;
        if a.spectrum.enabled && a.spectrum.cv_splits == 0 {
            return bad("analysis.spectrum.cv_splits must be positive".into());
        }
        if let Some(c) = a.spectrum.cutoff {
            if !(c >= 0.0 && c.is_finite()) {
                return bad("analysis.spectrum.cutoff must be non-negative".into());
            }
        }
        if a.hermite.enabled && (a.hermite.max_degree == 0 || a.hermite.points == 0) {
            return bad("analysis.hermite needs max_degree and points ≥ 1".into());
        }
        if a.lipschitz.enabled && (a.lipschitz.samples == 0 || a.lipschitz.poincare_samples < 2) {
            return bad("analysis.lipschitz needs samples ≥ 1 and poincare_samples ≥ 2".into());
        }
        if a.attack.enabled {
            if a.attack.points == 0 || a.attack.c_grid.is_empty() {
                return bad("analysis.attack needs points and a non-empty c_grid".into());
            }
            if a.attack.c_grid.iter().any(|c| !(*c >= 0.0 && c.is_finite())) {
                return bad("analysis.attack.c_grid entries must be non-negative".into());
            }
            let mut probe = a.attack.attack_config();
            probe.max_norm = 1.0;
            if probe.steps == 0 || probe.restarts == 0 || probe.step_size.is_some_and(|s| !(s > 0.0)) {
                return bad("analysis.attack steps, restarts and step_size must be positive".into());
            }
        }
        if let Some(s) = &self.sweep {
            if s.values.is_empty() || s.seeds.is_empty() {
                return bad("sweep needs at least one value and one seed".into());
            }
            let positive = match s.parameter {
                SweepParameter::SigmaPhi => s.values.iter().all(|v| *v > 0.0 && v.is_finite()),
                _ => s.values.iter().all(|v| *v >= 0.0 && v.is_finite()),
            };
            if !positive {
                return bad(format!("sweep values out of range for {}", s.parameter.name()));
            }
        }
        Ok(())
    }
}
