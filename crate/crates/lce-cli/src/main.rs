//! `lce`: train streaming recommenders offline, replay arriving graph
//! chunks through the fixed checkpoints, and summarize the results.

mod commands;
mod config;
mod error;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use crate::commands::Context;
use crate::config::ExperimentConfig;
use crate::error::{CliError, Result};

#[derive(Parser)]
#[command(
    name = "lce",
    version,
    about = "Streaming top-k recommendation benchmark: offline training, \
             incremental replay, skyline retraining, and reporting."
)]
struct Cli {
    /// Experiment configuration file (JSON).
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Replaces the config's experiment seed.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Output directory; overrides the config's `out`.
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Comma-separated model names to run (default: all configured).
    #[arg(long, global = true, value_delimiter = ',')]
    models: Option<Vec<String>>,

    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Grid-search and fit each model offline; write checkpoints and grid.csv.
    Train,
    /// Stream chunks through the fixed checkpoints; write metrics, curves, per-user values.
    Replay,
    /// Replay plus the retrain-at-every-step skyline reference.
    Skyline,
    /// Replay evaluated on streaming-cold items only.
    Coldstart,
    /// Chronological bucket refits with one embedding side frozen.
    Probe,
    /// Summarize a run directory: best models, significance, parameter counts.
    Report,
}

fn build_context(cli: &Cli) -> Result<Context> {
    let path = cli
        .config
        .as_ref()
        .ok_or_else(|| CliError::Usage("--config <path> is required".into()))?;
    let mut config = ExperimentConfig::load(path)?;
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    let out = cli
        .out
        .clone()
        .or_else(|| config.out.clone())
        .ok_or_else(|| CliError::Usage("no output directory: pass --out or set `out` in the config".into()))?;
    Ok(Context { config, out, models: cli.models.clone() })
}

fn run(cli: &Cli) -> Result<()> {
    match cli.command {
        Cmd::Train => commands::cmd_train(&build_context(cli)?),
        Cmd::Replay => commands::cmd_replay(&build_context(cli)?, false),
        Cmd::Skyline => commands::cmd_replay(&build_context(cli)?, true),
        Cmd::Coldstart => commands::cmd_coldstart(&build_context(cli)?),
        Cmd::Probe => commands::cmd_probe(&build_context(cli)?),
        Cmd::Report => {
            let out = match (&cli.out, &cli.config) {
                (Some(out), _) => out.clone(),
                (None, Some(path)) => ExperimentConfig::load(path)?.out.ok_or_else(|| {
                    CliError::Usage("config has no `out`; pass --out to report".into())
                })?,
                (None, None) => {
                    return Err(CliError::Usage("report needs --out or --config".into()))
                }
            };
            commands::cmd_report(&out)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
