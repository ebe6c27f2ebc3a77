use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use super::{run_experiment, ExperimentConfig, ExperimentError, Manifest, Metrics};
use crate::exec::{try_map_indexed, Execution};
use crate::report::num;

/// One trained model of a sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepEntry {
    pub value: f64,
    pub seed: u64,
    pub dataset_seed: u64,
    pub dir: PathBuf,
    pub metrics: Metrics,
}

/// Median of finite values; `None` when there are none.
pub fn median(values: &[f64]) -> Option<f64> {
    let mut v: Vec<f64> = values.iter().copied().filter(|x| x.is_finite()).collect();
    if v.is_empty() {
        return None;
    }
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    Some(if v.len() % 2 == 1 { v[m] } else { 0.5 * (v[m - 1] + v[m]) })
}

fn entry_dir(root: &Path, name: &str, value: f64, seed: u64) -> PathBuf {
    root.join(format!("{name}={value}")).join(format!("seed={seed}"))
}

/// Trains every (value, seed) pair of the sweep, each into its own run
/// directory, then writes `trend.csv` and `trend_summary.csv` under `root`.
///
/// Entries are independent and may run concurrently; results keep the
/// (value, seed) order of the config.
pub fn run_sweep(cfg: &ExperimentConfig, root: &Path, exec: Execution) -> Result<Vec<SweepEntry>, ExperimentError> {
    cfg.validate()?;
    let sweep = cfg
        .sweep
        .as_ref()
        .ok_or_else(|| ExperimentError::Config("config has no [sweep] section".into()))?;
    std::fs::create_dir_all(root).map_err(|e| ExperimentError::io(root, e))?;
    let cfg_path = root.join("config.toml");
    std::fs::write(&cfg_path, cfg.to_toml()).map_err(|e| ExperimentError::io(&cfg_path, e))?;
    let jobs: Vec<(f64, u64)> = sweep
        .values
        .iter()
        .flat_map(|&v| sweep.seeds.iter().map(move |&s| (v, s)))
        .collect();
    let entries = try_map_indexed(exec, jobs.len(), |k| {
        let (value, seed) = jobs[k];
        let mut sub = cfg.clone();
        sweep.parameter.apply(&mut sub.train, value);
        sub.train.seed = seed;
        let dir = entry_dir(root, sweep.parameter.name(), value, seed);
        let metrics = run_experiment(&sub, &dir, Execution::Sequential)?;
        Ok::<_, ExperimentError>(SweepEntry {
            value,
            seed,
            dataset_seed: sub.dataset.seed,
            dir,
            metrics,
        })
    })?;
    let (trend, summary) = trend_reports(sweep.parameter.name(), &entries)?;
    for (file, text) in [("trend.csv", trend), ("trend_summary.csv", summary)] {
        let path = root.join(file);
        std::fs::write(&path, text).map_err(|e| ExperimentError::io(&path, e))?;
    }
    Ok(entries)
}

/// Reloads finished sweep entries from their manifests and summaries.
pub fn load_sweep(cfg: &ExperimentConfig, root: &Path) -> Result<Vec<SweepEntry>, ExperimentError> {
    let sweep = cfg
        .sweep
        .as_ref()
        .ok_or_else(|| ExperimentError::Config("config has no [sweep] section".into()))?;
    let mut out = Vec::new();
    for &value in &sweep.values {
        for &seed in &sweep.seeds {
            let dir = entry_dir(root, sweep.parameter.name(), value, seed);
            let manifest = Manifest::load(&dir.join("manifest.json"))?;
            let path = dir.join("summary.csv");
            let text = std::fs::read_to_string(&path).map_err(|e| ExperimentError::io(&path, e))?;
            out.push(SweepEntry {
                value,
                seed,
                dataset_seed: manifest.dataset_seed,
                dir,
                metrics: Metrics::from_csv(&text)?,
            });
        }
    }
    Ok(out)
}

/// Long-form per-entry table and per-value medians.
///
/// Refuses entries trained on different dataset seeds.
pub fn trend_reports(parameter: &str, entries: &[SweepEntry]) -> Result<(String, String), ExperimentError> {
    if let Some(first) = entries.first() {
        if let Some(e) = entries.iter().find(|e| e.dataset_seed != first.dataset_seed) {
            return Err(ExperimentError::MixedDatasetSeeds(first.dataset_seed, e.dataset_seed));
        }
    }
    let mut trend = format!("{parameter},seed,metric,value\n");
    for e in entries {
        for (k, v) in &e.metrics.0 {
            trend.push_str(&format!("{},{},{k},{}\n", num(e.value), e.seed, num(*v)));
        }
    }
    let mut values: Vec<f64> = Vec::new();
    for e in entries {
        if !values.contains(&e.value) {
            values.push(e.value);
        }
    }
    values.sort_by(f64::total_cmp);
    let mut keys: Vec<&str> = Vec::new();
    let mut seen = BTreeSet::new();
    for e in entries {
        for (k, _) in &e.metrics.0 {
            if seen.insert(k.as_str()) {
                keys.push(k);
            }
        }
    }
    let mut summary = format!("{parameter},metric,median,n\n");
    for &v in &values {
        for &k in &keys {
            let xs: Vec<f64> = entries
                .iter()
                .filter(|e| e.value == v)
                .filter_map(|e| e.metrics.get(k))
                .collect();
            let m = median(&xs).unwrap_or(f64::NAN);
            summary.push_str(&format!("{},{k},{},{}\n", num(v), num(m), xs.len()));
        }
    }
    Ok((trend, summary))
}
