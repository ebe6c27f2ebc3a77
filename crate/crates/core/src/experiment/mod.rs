//! Config-driven experiments: dataset → training → analyses → CSV reports,
//! with a manifest recording every output and the config hash.

mod checkpoint;
mod config;
mod stages;
mod sweep;

pub use checkpoint::{Checkpoint, CheckpointMeta, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use config::{
    AnalysisSpec, AttackSpec, DatasetSpec, ExperimentConfig, HermiteSpec, LipschitzSpec, ModelSpec, SpectrumSpec,
    SweepParameter, SweepSpec,
};
pub use stages::{
    attack_stage, evenly_spaced, hermite_stage, lipschitz_stage, load_or_generate, spectrum_stage, train_stage, Metrics,
    StageOutput,
};
pub use sweep::{load_sweep, median, run_sweep, trend_reports, SweepEntry};

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::exec::Execution;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ExperimentError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("I/O error on {path}: {reason}")]
    Io { path: String, reason: String },
    #[error("corrupt checkpoint: {0}")]
    CorruptCheckpoint(String),
    #[error("checkpoint version {found} is not supported (expected {expected})")]
    CheckpointVersion { found: u32, expected: u32 },
    #[error("stage `{stage}` failed: {reason}")]
    Stage { stage: String, reason: String },
    #[error("sweep entries use different dataset seeds ({0} and {1})")]
    MixedDatasetSeeds(u64, u64),
}

impl ExperimentError {
    pub fn io(path: &Path, e: impl std::fmt::Display) -> Self {
        ExperimentError::Io {
            path: path.display().to_string(),
            reason: e.to_string(),
        }
    }

    pub(crate) fn stage(stage: &str, e: impl std::fmt::Display) -> Self {
        ExperimentError::Stage {
            stage: stage.to_string(),
            reason: e.to_string(),
        }
    }

    /// True for problems with the user's input rather than the computation.
    pub fn is_config_error(&self) -> bool {
        matches!(self, ExperimentError::Config(_) | ExperimentError::MixedDatasetSeeds(..))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub stage: String,
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageFailure {
    pub stage: String,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub name: String,
    pub config_hash: String,
    pub code_version: String,
    pub dataset_seed: u64,
    pub train_seed: u64,
    pub outputs: Vec<ManifestEntry>,
    pub failure: Option<StageFailure>,
}

impl Manifest {
    pub fn new(cfg: &ExperimentConfig) -> Self {
        Self {
            name: cfg.name.clone(),
            config_hash: cfg.hash(),
            code_version: env!("CARGO_PKG_VERSION").to_string(),
            dataset_seed: cfg.dataset.seed,
            train_seed: cfg.train.seed,
            outputs: Vec::new(),
            failure: None,
        }
    }

    pub fn load(path: &Path) -> Result<Self, ExperimentError> {
        let text = std::fs::read_to_string(path).map_err(|e| ExperimentError::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| ExperimentError::io(path, e))
    }
}

/// Writes files into a run directory and records them in the manifest.
pub struct RunDir {
    pub root: PathBuf,
    pub manifest: Manifest,
}

impl RunDir {
    pub fn create(root: &Path, cfg: &ExperimentConfig) -> Result<Self, ExperimentError> {
        std::fs::create_dir_all(root).map_err(|e| ExperimentError::io(root, e))?;
        Ok(Self {
            root: root.to_path_buf(),
            manifest: Manifest::new(cfg),
        })
    }

    /// Reopens a finished run directory so further stages can append to it.
    pub fn open(root: &Path) -> Result<Self, ExperimentError> {
        Ok(Self {
            root: root.to_path_buf(),
            manifest: Manifest::load(&root.join("manifest.json"))?,
        })
    }

    pub fn write(&mut self, stage: &str, file: &str, contents: &str) -> Result<(), ExperimentError> {
        self.manifest.outputs.retain(|o| o.path != file);
        self.write_new(stage, file, contents)
    }

    fn write_new(&mut self, stage: &str, file: &str, contents: &str) -> Result<(), ExperimentError> {
        let path = self.root.join(file);
        std::fs::write(&path, contents).map_err(|e| ExperimentError::io(&path, e))?;
        self.manifest.outputs.push(ManifestEntry {
            stage: stage.to_string(),
            path: file.to_string(),
            sha256: hex::encode(Sha256::digest(contents.as_bytes())),
        });
        Ok(())
    }

    pub fn write_all(&mut self, stage: &str, out: StageOutput) -> Result<Metrics, ExperimentError> {
        for (file, contents) in &out.files {
            self.write(stage, file, contents)?;
        }
        Ok(out.metrics)
    }

    /// Replaces or appends `metrics` in `summary.csv`.
    pub fn merge_summary(&mut self, metrics: &Metrics) -> Result<Metrics, ExperimentError> {
        let path = self.root.join("summary.csv");
        let mut all = match std::fs::read_to_string(&path) {
            Ok(text) => Metrics::from_csv(&text)?,
            Err(_) => Metrics::default(),
        };
        for (k, v) in &metrics.0 {
            match all.0.iter_mut().find(|(key, _)| key == k) {
                Some(slot) => slot.1 = *v,
                None => all.push(k.clone(), *v),
            }
        }
        self.write("summary", "summary.csv", &all.to_csv())?;
        Ok(all)
    }

    pub fn finish(&self) -> Result<(), ExperimentError> {
        let path = self.root.join("manifest.json");
        let text = serde_json::to_string_pretty(&self.manifest).expect("manifest serialises") + "\n";
        std::fs::write(&path, text).map_err(|e| ExperimentError::io(&path, e))
    }
}

/// Runs every enabled stage of a single (non-sweep) experiment into `root`.
///
/// A failing stage is recorded in the manifest and stops the run; files
/// written by earlier stages stay in place.
pub fn run_experiment(cfg: &ExperimentConfig, root: &Path, exec: Execution) -> Result<Metrics, ExperimentError> {
    cfg.validate()?;
    let mut dir = RunDir::create(root, cfg)?;
    dir.write("config", "config.toml", &cfg.to_toml())?;
    let result = run_stages(cfg, &mut dir, exec);
    if let Err(e) = &result {
        let (stage, error) = match e {
            ExperimentError::Stage { stage, reason } => (stage.clone(), reason.clone()),
            other => ("io".to_string(), other.to_string()),
        };
        dir.manifest.failure = Some(StageFailure { stage, error });
    }
    dir.finish()?;
    result
}

fn run_stages(cfg: &ExperimentConfig, dir: &mut RunDir, exec: Execution) -> Result<Metrics, ExperimentError> {
    let data = load_or_generate(&cfg.dataset, None)?;
    dir.write("dataset", "data.csv", &data.to_csv())?;
    let (ckpt, out) = train_stage(cfg, &data)?;
    let mut metrics = dir.write_all("train", out)?;
    dir.write("train", "model.ckpt", &ckpt.to_text())?;
    let layout = cfg.dataset.layout();
    let a = &cfg.analysis;
    if a.spectrum.enabled {
        metrics.extend(dir.write_all("spectrum", spectrum_stage(&ckpt.model, &data, layout, &a.spectrum)?)?);
    }
    if a.hermite.enabled {
        metrics.extend(dir.write_all("hermite", hermite_stage(&ckpt.model, &data, layout, &a.hermite, exec)?)?);
    }
    if a.lipschitz.enabled {
        let label = sweep_label(cfg);
        metrics.extend(dir.write_all("lipschitz", lipschitz_stage(&ckpt.model, &data, layout, &a.lipschitz, label, exec)?)?);
    }
    if a.attack.enabled {
        let out = attack_stage(&ckpt.model, &data, layout, &a.attack, cfg.train.input_noise_sigma, exec)?;
        metrics.extend(dir.write_all("attack", out)?);
    }
    dir.write("summary", "summary.csv", &metrics.to_csv())?;
    Ok(metrics)
}

/// The encoder scale (fixed runs) or input noise level used to label Lipschitz rows.
pub fn sweep_label(cfg: &ExperimentConfig) -> f64 {
    match (&cfg.sweep, &cfg.train.fixed_sigma_phi) {
        (Some(s), _) if s.parameter == SweepParameter::InputNoiseSigma => cfg.train.input_noise_sigma,
        (Some(s), _) if s.parameter == SweepParameter::Beta => cfg.train.beta,
        (_, Some(phi)) => phi[0],
        _ => cfg.train.input_noise_sigma,
    }
}
