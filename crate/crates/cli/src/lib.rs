//! Command-line front end: configuration loading, dataset / checkpoint /
//! report formats, and the `pdae` subcommands.

pub mod checkpoint;
pub mod commands;
pub mod config;
pub mod data;
pub mod error;
pub mod manifest;
pub mod report;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use crate::commands::parse_list;
use crate::config::{load_config, Scale};
use crate::error::CliResult;

#[derive(Debug, Parser)]
#[command(name = "pdae", version, about = "Perturbation distribution autoencoder experiments")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct ConfigArgs {
    /// TOML file overriding the preset.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Preset to start from.
    #[arg(long, value_enum, default_value = "desk")]
    pub scale: Scale,
    /// Replaces the configured seed list with this single seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Suppress progress output.
    #[arg(long)]
    pub quiet: bool,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate the training domains.
    Generate {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train a model on a generated dataset.
    Train {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        data: PathBuf,
        /// Checkpoint path.
        #[arg(long)]
        out: PathBuf,
    },
    /// Sample the predicted distribution for a label.
    Predict {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        data: PathBuf,
        /// Comma-separated label, e.g. `1,0.5,0`.
        #[arg(long, allow_hyphen_values = true)]
        label: String,
        /// `uniform`, `control`, or comma-separated weights summing to 1.
        #[arg(long, default_value = "uniform")]
        weights: String,
        /// Output rows; defaults to the largest source domain size.
        #[arg(long)]
        samples: Option<usize>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Score all methods on the test suite with a trained checkpoint.
    Evaluate {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Generate, train and evaluate for every configured seed.
    ReproduceTable1 {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Repeat the ID evaluation across observation-noise levels.
    SweepNoise {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Numerical checks of the identifiability and extrapolation theory.
    VerifyTheory {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn config(args: &ConfigArgs) -> CliResult<pdae_core::harness::ExperimentConfig> {
    load_config(args.config.as_deref(), args.scale, args.seed)
}

pub fn execute(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::Generate { cfg, out } => {
            let files = commands::cmd_generate(&config(&cfg)?, &out)?;
            if !cfg.quiet {
                eprintln!("wrote {} files to {}", files.len(), out.display());
            }
        }
        Command::Train { cfg, data, out } => {
            commands::cmd_train(&config(&cfg)?, &data, &out, cfg.quiet)?;
        }
        Command::Predict {
            checkpoint,
            data,
            label,
            weights,
            samples,
            seed,
            out,
        } => {
            let label = parse_list(&label, "--label")?;
            commands::cmd_predict(&checkpoint, &data, &label, &weights, samples, seed, &out)?;
        }
        Command::Evaluate {
            cfg,
            checkpoint,
            data,
            out,
        } => {
            let report = commands::cmd_evaluate(&config(&cfg)?, &checkpoint, &data, &out)?;
            if !cfg.quiet {
                eprint!("{}", report::format_summary(&report));
            }
        }
        Command::ReproduceTable1 { cfg, out } => {
            commands::cmd_reproduce_table1(&config(&cfg)?, &out, cfg.quiet)?;
        }
        Command::SweepNoise { cfg, out } => {
            commands::cmd_sweep_noise(&config(&cfg)?, &out, cfg.quiet)?;
        }
        Command::VerifyTheory { seed, out } => {
            commands::cmd_verify_theory(seed, out.as_deref())?;
        }
    }
    Ok(())
}

/// Parses `args` (program name first) and runs the command. Returns the
/// process exit status.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match execute(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

