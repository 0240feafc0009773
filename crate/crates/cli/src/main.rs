//! Batch CLI for the loadcast pipeline.
//!
//! Exit codes: 0 success, 2 configuration error, 3 data error, 4 numerical
//! failure.

mod commands;
mod config;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use loadcast::{Error, ErrorKind, Result};
use log::error;

use crate::config::PipelineConfig;
use crate::manifest::Recorder;

#[derive(Parser, Debug)]
#[command(name = "loadcast", version)]
#[command(
    about = "Predict morning congestion onset and duration from household electricity profiles"
)]
struct Cli {
    /// TOML pipeline configuration; defaults apply to every missing key.
    #[arg(short, long, global = true)]
    config: Option<PathBuf>,

    /// Output directory (overrides `paths.output`).
    #[arg(short, long, global = true)]
    out: Option<PathBuf>,

    /// Electricity CSV (overrides `paths.electricity`).
    #[arg(long, global = true)]
    electricity: Option<PathBuf>,

    /// Travel-time CSV (overrides `paths.travel`).
    #[arg(long, global = true)]
    travel: Option<PathBuf>,

    /// Seed for the analysis and the synthetic scenario (overrides `seed` and `synth.seed`).
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Override any config key, e.g. `--set clustering.k=8`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    overrides: Vec<String>,

    /// Cap on worker threads.
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug, Clone, Copy, PartialEq, Eq)]
enum Command {
    /// Generate a synthetic electricity/traffic scenario with ground truth.
    Synth,
    /// Load electricity readings, apply the calendar filter and write the panel.
    Ingest,
    /// Cluster normalized daily profiles into patterns.
    Cluster,
    /// Extract congestion starting times and durations from travel times.
    Extract,
    /// Build aggregate and disaggregate feature matrices.
    Features,
    /// Evaluate LASSO predictors per segment and target.
    Evaluate,
    /// Compare against ARMA and historical-mean baselines and mixed features.
    Compare,
    /// Similarity of LASSO-selected households across segments.
    Similarity,
    /// Re-evaluate over several electricity window end times.
    Sweep,
    /// Print the effective configuration as TOML.
    Config,
}

impl Command {
    fn name(self) -> &'static str {
        match self {
            Command::Synth => "synth",
            Command::Ingest => "ingest",
            Command::Cluster => "cluster",
            Command::Extract => "extract",
            Command::Features => "features",
            Command::Evaluate => "evaluate",
            Command::Compare => "compare",
            Command::Similarity => "similarity",
            Command::Sweep => "sweep",
            Command::Config => "config",
        }
    }
}

fn effective_config(cli: &Cli) -> Result<PipelineConfig> {
    let mut cfg = match &cli.config {
        Some(path) => PipelineConfig::load(path)?,
        None => PipelineConfig::default(),
    };
    cfg = cfg.with_overrides(&cli.overrides)?;
    if let Some(out) = &cli.out {
        cfg.paths.output = out.clone();
    }
    if let Some(p) = &cli.electricity {
        cfg.paths.electricity = Some(p.clone());
    }
    if let Some(p) = &cli.travel {
        cfg.paths.travel = Some(p.clone());
    }
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
        cfg.synth.seed = seed;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run(cli: &Cli) -> Result<()> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::Config(format!("cannot size the thread pool: {e}")))?;
    }
    let cfg = effective_config(cli)?;
    if cli.command == Command::Config {
        print!("{}", cfg.to_toml()?);
        return Ok(());
    }
    let dir = cfg.output_dir().to_path_buf();
    std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    let mut rec = Recorder::new(
        &dir,
        cli.command.name(),
        &cfg.hash()?,
        cfg.seed,
        cfg.synth.seed,
    );
    match cli.command {
        Command::Synth => commands::synth(&cfg, &mut rec)?,
        Command::Ingest => commands::ingest(&cfg, &mut rec)?,
        Command::Cluster => commands::cluster(&cfg, &mut rec)?,
        Command::Extract => commands::extract(&cfg, &mut rec)?,
        Command::Features => commands::features(&cfg, &mut rec)?,
        Command::Evaluate => commands::evaluate(&cfg, &mut rec)?,
        Command::Compare => commands::compare(&cfg, &mut rec)?,
        Command::Similarity => commands::similarity(&cfg, &mut rec)?,
        Command::Sweep => commands::sweep(&cfg, &mut rec)?,
        Command::Config => unreachable!("handled above"),
    }
    rec.finish()?;
    Ok(())
}

fn exit_code(e: &Error) -> u8 {
    match e.kind() {
        ErrorKind::Config => 2,
        ErrorKind::Data => 3,
        ErrorKind::Numerical => 4,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            error!("{} failed: {e}", cli.command.name());
            ExitCode::from(exit_code(&e))
        }
    }
}
