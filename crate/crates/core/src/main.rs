//! Command-line front end: dataset generation, training, analyses, sweeps.
//!
//! Exit codes: 0 success, 1 configuration/usage error, 2 runtime failure.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use harmonic_vae::dataset::{gen_dataset, Dataset, DatasetKind, SincConvention};
use harmonic_vae::experiment::{
    attack_stage, hermite_stage, lipschitz_stage, load_sweep, run_experiment, run_sweep, spectrum_stage, sweep_label,
    trend_reports, Checkpoint, ExperimentConfig, ExperimentError, Metrics, RunDir, StageOutput,
};
use harmonic_vae::Execution;

#[derive(Parser)]
#[command(name = "harmonic-vae", version, about = "Gaussian-space harmonic analysis of VAEs")]
struct Cli {
    /// Overrides dataset/training seeds (train, sweep) or analysis seeds (analysis commands).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output file (gen-data) or directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Experiment config (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Run everything on one thread.
    #[arg(long, global = true)]
    sequential: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a sinc or multisine dataset as CSV.
    GenData(GenData),
    /// Train the configured model and run its enabled analyses.
    Train,
    /// Recompute spectra and the CV polynomial degree for a run directory.
    Spectrum(RunArgs),
    /// Recompute the decoder Hermite variance profile for a run directory.
    Hermite(RunArgs),
    /// Recompute Lipschitz bounds and the Poincaré check for a run directory.
    Lipschitz(RunArgs),
    /// Recompute the robustness curve for a run directory.
    Attack(RunArgs),
    /// Train every entry of the configured sweep and write trend reports.
    Sweep,
    /// Print a run summary, or rebuild a sweep's trend reports.
    Report(RunArgs),
}

#[derive(Args)]
struct GenData {
    #[arg(long, default_value = "sinc")]
    kind: DatasetKind,
    /// Defaults to 1024 (sinc) or 2048 (multisine).
    #[arg(long)]
    size: Option<usize>,
    #[arg(long)]
    unnormalized_sinc: bool,
}

#[derive(Args)]
struct RunArgs {
    /// Run directory produced by `train` (or a sweep root for `report`).
    #[arg(long)]
    run: PathBuf,
}

enum Failure {
    Config(String),
    Runtime(String),
}

impl From<ExperimentError> for Failure {
    fn from(e: ExperimentError) -> Self {
        if e.is_config_error() {
            Failure::Config(e.to_string())
        } else {
            Failure::Runtime(e.to_string())
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(1)
        }
        Err(Failure::Runtime(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(2)
        }
    }
}

fn read_config(path: &Path) -> Result<ExperimentConfig, Failure> {
    let text = std::fs::read_to_string(path).map_err(|e| Failure::Config(format!("{}: {e}", path.display())))?;
    Ok(ExperimentConfig::from_toml(&text)?)
}

fn required<'a, T>(v: &'a Option<T>, flag: &str) -> Result<&'a T, Failure> {
    v.as_ref().ok_or_else(|| Failure::Config(format!("--{flag} is required for this command")))
}

fn run(cli: Cli) -> Result<(), Failure> {
    let exec = if cli.sequential { Execution::Sequential } else { Execution::default() };
    match &cli.command {
        Command::GenData(g) => gen_data(&cli, g),
        Command::Train => {
            let mut cfg = read_config(required(&cli.config, "config")?)?;
            if let Some(s) = cli.seed {
                cfg.dataset.seed = s;
                cfg.train.seed = s;
            }
            let out = output_dir(&cli, &cfg)?;
            let metrics = run_experiment(&cfg, &out, exec)?;
            print_metrics(&metrics);
            Ok(())
        }
        Command::Sweep => {
            let mut cfg = read_config(required(&cli.config, "config")?)?;
            if let Some(s) = cli.seed {
                cfg.dataset.seed = s;
            }
            let out = output_dir(&cli, &cfg)?;
            let entries = run_sweep(&cfg, &out, exec)?;
            let _ = writeln!(std::io::stdout(), "{} models written under {}", entries.len(), out.display());
            Ok(())
        }
        Command::Report(r) => report(&r.run),
        Command::Spectrum(r) | Command::Hermite(r) | Command::Lipschitz(r) | Command::Attack(r) => {
            analysis(&cli, &r.run, exec)
        }
    }
}

fn output_dir(cli: &Cli, cfg: &ExperimentConfig) -> Result<PathBuf, Failure> {
    match (&cli.out, &cfg.out_dir) {
        (Some(p), _) => Ok(p.clone()),
        (None, Some(d)) => Ok(PathBuf::from(d)),
        (None, None) => Err(Failure::Config("no output directory: pass --out or set out_dir".into())),
    }
}

fn gen_data(cli: &Cli, g: &GenData) -> Result<(), Failure> {
    let size = g.size.unwrap_or(match g.kind {
        DatasetKind::Sinc => 1024,
        DatasetKind::Multisine => 2048,
    });
    let convention = if g.unnormalized_sinc { SincConvention::Unnormalized } else { SincConvention::Normalized };
    let data = gen_dataset(g.kind, size, convention, cli.seed.unwrap_or(0)).map_err(|e| Failure::Config(e.to_string()))?;
    let csv = data.to_csv();
    match &cli.out {
        Some(p) => std::fs::write(p, csv).map_err(|e| Failure::Runtime(format!("{}: {e}", p.display()))),
        None => std::io::stdout()
            .write_all(csv.as_bytes())
            .map_err(|e| Failure::Runtime(e.to_string())),
    }
}

fn analysis(cli: &Cli, run: &Path, exec: Execution) -> Result<(), Failure> {
    let mut cfg = match &cli.config {
        Some(p) => read_config(p)?,
        None => read_config(&run.join("config.toml"))?,
    };
    let a = &mut cfg.analysis;
    if let Some(s) = cli.seed {
        a.spectrum.cv_seed = s;
        a.hermite.seed = s;
        a.lipschitz.seed = s;
        a.attack.seed = s;
    }
    let ckpt = Checkpoint::load(&run.join("model.ckpt"))?;
    let path = run.join("data.csv");
    let text = std::fs::read_to_string(&path).map_err(|e| Failure::Runtime(format!("{}: {e}", path.display())))?;
    let data = Dataset::from_csv(&text).map_err(|e| Failure::Config(e.to_string()))?;
    let layout = ckpt.meta.layout;
    let a = &cfg.analysis;
    let (stage, out): (&str, StageOutput) = match &cli.command {
        Command::Spectrum(_) => ("spectrum", spectrum_stage(&ckpt.model, &data, layout, &a.spectrum)?),
        Command::Hermite(_) => ("hermite", hermite_stage(&ckpt.model, &data, layout, &a.hermite, exec)?),
        Command::Lipschitz(_) => (
            "lipschitz",
            lipschitz_stage(&ckpt.model, &data, layout, &a.lipschitz, sweep_label(&cfg), exec)?,
        ),
        Command::Attack(_) => (
            "attack",
            attack_stage(&ckpt.model, &data, layout, &a.attack, cfg.train.input_noise_sigma, exec)?,
        ),
        _ => unreachable!("only analysis commands reach here"),
    };
    let target = cli.out.clone().unwrap_or_else(|| run.to_path_buf());
    let mut dir = if target == run {
        RunDir::open(run)?
    } else {
        RunDir::create(&target, &cfg)?
    };
    let metrics = dir.write_all(stage, out)?;
    dir.merge_summary(&metrics)?;
    dir.finish()?;
    print_metrics(&metrics);
    Ok(())
}

fn report(run: &Path) -> Result<(), Failure> {
    let cfg = read_config(&run.join("config.toml"))?;
    match &cfg.sweep {
        Some(s) => {
            let entries = load_sweep(&cfg, run)?;
            let (trend, summary) = trend_reports(s.parameter.name(), &entries)?;
            for (file, text) in [("trend.csv", &trend), ("trend_summary.csv", &summary)] {
                let path = run.join(file);
                std::fs::write(&path, text).map_err(|e| Failure::Runtime(format!("{}: {e}", path.display())))?;
            }
            let _ = std::io::stdout().write_all(summary.as_bytes());
        }
        None => {
            let path = run.join("summary.csv");
            let text = std::fs::read_to_string(&path).map_err(|e| Failure::Runtime(format!("{}: {e}", path.display())))?;
            print_metrics(&Metrics::from_csv(&text)?);
        }
    }
    Ok(())
}

/// Writes `name value` lines, ignoring a closed stdout.
fn print_metrics(m: &Metrics) {
    let mut out = std::io::stdout().lock();
    for (k, v) in &m.0 {
        if writeln!(out, "{k:<32} {v:.6e}").is_err() {
            return;
        }
    }
}
