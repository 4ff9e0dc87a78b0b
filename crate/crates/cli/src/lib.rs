//! Command-line driver for the distillation laboratory.
//!
//! One TOML experiment file plus a handful of override flags drive five
//! subcommands: `train` runs one method and writes its traces and
//! checkpoints, `eval` scores a saved checkpoint, `verify-theorems` runs the
//! randomized analytical sweeps and gates on their verdict, and the two
//! `ablate-*` commands produce the seed-matched comparison grids. Everything
//! a command writes is stamped with a digest of the effective configuration
//! and reproduces byte for byte under the same inputs.

pub mod commands;
pub mod config;
pub mod outputs;
pub mod suite;

pub use commands::{
    cmd_ablate_frontier, cmd_ablate_selectors, cmd_eval, cmd_train, cmd_verify_theorems,
    verify_exit_code, TrainedRun, FRONTIER_LAMBDAS,
};
pub use config::{EnvSection, ExperimentConfig, Overrides, RunSection, SuiteSection};
pub use outputs::{
    fmt_f64, mean_and_stderr, read_jsonl, CheckpointFile, EvalReport, FrontierCell, JsonlMeta,
    RunReport, SelectorCell,
};
pub use suite::{base_success, generate_suites, Suites};

use thiserror::Error;

/// Everything that can go wrong between a command line and its artifacts.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error("config file: {0}")]
    ConfigParse(String),
    #[error(
        "suite generation stalled: kept {kept} of {needed} tasks after inspecting \
         {inspected} candidates; widen the frontier band or change the environment shape"
    )]
    SuiteExhausted {
        kept: usize,
        needed: usize,
        inspected: usize,
    },
    #[error("artifact: {0}")]
    BadArtifact(String),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Env(#[from] ssopd_core::EnvError),
    #[error(transparent)]
    Grpo(#[from] ssopd_core::GrpoError),
    #[error(transparent)]
    Ssopd(#[from] ssopd_core::SsopdError),
    #[error(transparent)]
    Train(#[from] ssopd_core::TrainError),
    #[error(transparent)]
    Oracle(#[from] ssopd_core::OracleError),
}
