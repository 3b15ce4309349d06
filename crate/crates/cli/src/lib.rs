//! Experiment driver for the `dualfuse` library.
//!
//! Every subcommand reads a TOML config (see [`config::Config`]), writes
//! only under `--out`, and echoes the resolved config there as
//! `config.toml`. Outputs depend on the config and seed only, never on the
//! number of worker threads.

pub mod commands;
pub mod config;
pub mod data;
pub mod error;

use std::fs;
use std::path::PathBuf;

use clap::{Parser, Subcommand};

pub use config::Config;
pub use error::{CliError, CliResult};

use data::OutDir;

#[derive(Debug, Parser)]
#[command(name = "dualfuse", version, about = "Manipulation ensembles and attention fusion for denoising")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,

    /// TOML run configuration; defaults apply to anything not set.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    /// Root seed, overriding `run.seed`.
    #[arg(long, global = true)]
    pub seed: Option<u64>,

    /// Worker threads (0 = one per core).
    #[arg(long, global = true, default_value_t = 0)]
    pub jobs: usize,

    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    pub out: PathBuf,

    /// Replace files in a non-empty output directory.
    #[arg(long, global = true)]
    pub overwrite: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// Write seeded noisy copies of the clean images.
    Synth,
    /// Denoise noisy images with the configured denoiser.
    Denoise,
    /// Build branch stacks and score every ensemble strategy.
    Pipeline,
    /// Train the tiny residual denoiser.
    TrainDenoiser,
    /// Train fusion models, one per variant and noise level.
    TrainFusion,
    /// Train denoisers with and without auxiliary losses.
    TrainAux,
    /// Score ensemble strategies on cached branch stacks.
    Eval,
    /// Radially averaged power spectra.
    Psd,
    /// Removed-noise heat maps per manipulation mode.
    Heatmap,
}

/// Reads the config file (if any) and applies command-line overrides.
pub fn resolve_config(cli: &Cli) -> CliResult<Config> {
    let mut cfg = match &cli.config {
        Some(path) => {
            let text = fs::read_to_string(path)
                .map_err(|e| CliError::invalid(format!("cannot read config {}: {e}", path.display())))?;
            Config::parse(&text)?
        }
        None => Config::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.run.seed = seed;
    }
    cfg.validate()?;
    Ok(cfg)
}

pub fn run(cli: &Cli) -> CliResult<()> {
    let cfg = resolve_config(cli)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cli.jobs)
        .build()
        .map_err(|e| CliError::invalid(format!("worker pool: {e}")))?;
    let out = OutDir::prepare(&cli.out, cli.overwrite)?;
    out.write("config.toml", cfg.to_toml())?;
    pool.install(|| match cli.command {
        Command::Synth => commands::synth(&cfg, &out),
        Command::Denoise => commands::denoise(&cfg, &out),
        Command::Pipeline => commands::pipeline(&cfg, &out),
        Command::TrainDenoiser => commands::train_denoiser_cmd(&cfg, &out),
        Command::TrainFusion => commands::train_fusion_cmd(&cfg, &out),
        Command::TrainAux => commands::train_aux_cmd(&cfg, &out),
        Command::Eval => commands::eval(&cfg, &out),
        Command::Psd => commands::psd_cmd(&cfg, &out),
        Command::Heatmap => commands::heatmap(&cfg, &out),
    })
}
