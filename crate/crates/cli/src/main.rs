use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use ssopd_cli::config::{ExperimentConfig, Overrides};
use ssopd_cli::{
    cmd_ablate_frontier, cmd_ablate_selectors, cmd_eval, cmd_train, cmd_verify_theorems,
    verify_exit_code, CliError,
};

/// Desk-scale laboratory for self-supervised on-policy distillation on
/// verifiable token tasks.
#[derive(Debug, Parser)]
#[command(name = "ssopd", version)]
struct Cli {
    /// Experiment file (TOML); every key is optional and defaults apply
    /// when the flag is omitted entirely.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,

    /// Master seed override: replaces the run seed and the sweep seed.
    #[arg(long, global = true, value_name = "N")]
    seed: Option<u64>,

    /// Output directory override.
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,

    /// Training method override: grpo, ssopd, sft_ref, or opsd_ref.
    #[arg(long, global = true, value_name = "NAME")]
    method: Option<String>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Train one method; writes task suites, metrics.csv, diagnostics.csv,
    /// and the checkpoint series.
    Train,
    /// Score a saved checkpoint on the held-out suite.
    Eval {
        /// Checkpoint to score; defaults to checkpoint_final.json in the
        /// output directory.
        #[arg(long, value_name = "PATH")]
        checkpoint: Option<PathBuf>,
    },
    /// Run the randomized analytical sweeps; writes theorems.jsonl and exits
    /// nonzero if any report fails.
    VerifyTheorems,
    /// Train every witness-selector pair over the seed list; writes
    /// selector_grid.csv.
    AblateSelectors,
    /// Train dynamic against fixed mixing at every base weight over the seed
    /// list; writes frontier_grid.csv.
    AblateFrontier,
}

fn run(cli: Cli) -> Result<u8, CliError> {
    let base = match &cli.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default(),
    };
    let overrides = Overrides {
        seed: cli.seed,
        method: cli.method.clone(),
        out: cli.out.as_ref().map(|p| p.display().to_string()),
    };
    let cfg = base.with_overrides(&overrides);
    match cli.command {
        Command::Train => {
            cmd_train(&cfg)?;
            Ok(0)
        }
        Command::Eval { checkpoint } => {
            cmd_eval(&cfg, checkpoint.as_deref())?;
            Ok(0)
        }
        Command::VerifyTheorems => {
            let outcome = cmd_verify_theorems(&cfg)?;
            Ok(verify_exit_code(&outcome))
        }
        Command::AblateSelectors => {
            cmd_ablate_selectors(&cfg)?;
            Ok(0)
        }
        Command::AblateFrontier => {
            cmd_ablate_frontier(&cfg)?;
            Ok(0)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
