//! Experiment configuration.
//!
//! One TOML file drives every subcommand: flat key-value pairs grouped under
//! section headers, one section per module of the pipeline. Every key has a
//! default, so a partial file (or no file at all) is a valid experiment, and
//! the effective configuration — after command-line overrides are folded in —
//! is hashed into a digest that is stamped into every output file a command
//! writes. Two outputs carry the same digest if and only if they were produced
//! under the same effective configuration.

use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use ssopd_core::{
    CorrectRule, EnvSpec, GrpoConfig, Method, PolicyParams, SelectorRule, SsopdConfig,
    SweepConfig, TrainConfig, WrongRule,
};

use crate::CliError;

/// Environment shape: token alphabet and episode length.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EnvSection {
    /// Number of ordinary (content) tokens.
    pub vocab_size: u32,
    /// Maximum completion length in tokens.
    pub horizon: u32,
    /// Context window size of the policy featurizer.
    pub feature_order: usize,
}

impl Default for EnvSection {
    fn default() -> Self {
        Self {
            vocab_size: 3,
            horizon: 4,
            feature_order: 2,
        }
    }
}

impl EnvSection {
    pub fn spec(&self) -> Result<EnvSpec, CliError> {
        Ok(EnvSpec::new(self.vocab_size, self.horizon)?)
    }
}

/// Task suite shape. Tasks are kept only if the uniform policy's success
/// probability, computed by exact enumeration, lands inside the band
/// `[frontier_low, frontier_high]` — neither hopeless nor saturated.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SuiteSection {
    /// Number of training prompts.
    pub train_tasks: usize,
    /// Number of held-out evaluation prompts.
    pub eval_tasks: usize,
    /// Task family: "modular_sum", "subsequence_lock", or "mixed".
    pub family: String,
    /// Lower edge of the base-success band.
    pub frontier_low: f64,
    /// Upper edge of the base-success band.
    pub frontier_high: f64,
    /// Seed of the suite-generation stream, independent of the run seed so
    /// runs with different seeds still train on identical prompts.
    pub seed: u64,
}

impl Default for SuiteSection {
    fn default() -> Self {
        Self {
            train_tasks: 200,
            eval_tasks: 64,
            family: "modular_sum".into(),
            frontier_low: 0.2,
            frontier_high: 0.8,
            seed: 0,
        }
    }
}

/// Which experiment to run and how to aggregate it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunSection {
    /// Training method: "grpo", "ssopd", "sft_ref", or "opsd_ref".
    pub method: String,
    /// Output directory; `--out` overrides it.
    pub out_dir: String,
    /// Seed list the ablation grids aggregate over.
    pub seeds: Vec<u64>,
    /// Witness pick among correct completions: "len_min", "len_max",
    /// "avglogp_min", or "avglogp_max".
    pub correct_rule: String,
    /// Distillation-target pick among wrong completions: "len_max",
    /// "len_min", or "avglogp_max".
    pub wrong_rule: String,
    /// Policy initialization: "zeros", "random", or "hint_following".
    pub init: String,
    /// Weight placed on copying an aligned hint token (hint_following init).
    pub init_strength: f64,
    /// Standard deviation of the weights (random init).
    pub init_scale: f64,
}

impl Default for RunSection {
    fn default() -> Self {
        Self {
            method: "ssopd".into(),
            out_dir: "out".into(),
            seeds: (0..10).collect(),
            correct_rule: "len_min".into(),
            wrong_rule: "len_max".into(),
            init: "hint_following".into(),
            init_strength: 3.0,
            init_scale: 0.5,
        }
    }
}

/// The whole experiment file. Every section and every key is optional in the
/// TOML; missing pieces take these defaults.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub env: EnvSection,
    pub suite: SuiteSection,
    pub train: TrainConfig,
    pub grpo: GrpoConfig,
    pub ssopd: SsopdConfig,
    pub run: RunSection,
    pub verify: SweepConfig,
}

/// Command-line overrides folded into the file before hashing.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    /// Replaces the master run seed (`train.seed`) and the sweep seed
    /// (`verify.seed`).
    pub seed: Option<u64>,
    /// Replaces `run.method`.
    pub method: Option<String>,
    /// Replaces `run.out_dir`.
    pub out: Option<String>,
}

impl ExperimentConfig {
    /// Parses a TOML experiment file.
    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::ConfigParse(e.to_string()))
    }

    /// Reads and parses an experiment file from disk.
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| {
            CliError::ConfigParse(format!("cannot read {}: {e}", path.display()))
        })?;
        Self::from_toml(&text)
    }

    /// Folds command-line overrides in, producing the effective configuration
    /// every command actually runs under.
    pub fn with_overrides(mut self, ov: &Overrides) -> Self {
        if let Some(seed) = ov.seed {
            self.train.seed = seed;
            self.verify.seed = seed;
        }
        if let Some(method) = &ov.method {
            self.run.method = method.clone();
        }
        if let Some(out) = &ov.out {
            self.run.out_dir = out.clone();
        }
        self
    }

    /// Hex SHA-256 of the canonical serialization of the effective
    /// configuration. Stamped into every output file.
    ///
    /// The output directory names where artifacts land, not what they are,
    /// so it is excluded: training into one directory and evaluating from
    /// another still agree on the digest.
    pub fn digest(&self) -> String {
        let mut hashed = self.clone();
        hashed.run.out_dir = String::new();
        let canonical = toml::to_string(&hashed).expect("config serializes");
        let mut hasher = Sha256::new();
        hasher.update(canonical.as_bytes());
        let bytes = hasher.finalize();
        let mut hex = String::with_capacity(64);
        for b in bytes {
            hex.push_str(&format!("{b:02x}"));
        }
        hex
    }

    /// Cross-section sanity checks, run once by every command.
    pub fn validate(&self) -> Result<(), CliError> {
        self.env.spec()?;
        self.train.validate()?;
        self.grpo.validate()?;
        self.ssopd.validate()?;
        self.verify.validate()?;
        let s = &self.suite;
        if s.train_tasks == 0 || s.eval_tasks == 0 {
            return Err(CliError::InvalidConfig(
                "suite.train_tasks and suite.eval_tasks must be positive".into(),
            ));
        }
        if !(s.frontier_low >= 0.0 && s.frontier_low < s.frontier_high && s.frontier_high <= 1.0)
        {
            return Err(CliError::InvalidConfig(format!(
                "frontier band [{}, {}] must satisfy 0 <= low < high <= 1",
                s.frontier_low, s.frontier_high
            )));
        }
        if !matches!(s.family.as_str(), "modular_sum" | "subsequence_lock" | "mixed") {
            return Err(CliError::InvalidConfig(format!(
                "unknown suite.family {:?}; expected modular_sum, subsequence_lock, or mixed",
                s.family
            )));
        }
        self.method()?;
        self.selector_rule()?;
        if self.run.seeds.is_empty() {
            return Err(CliError::InvalidConfig(
                "run.seeds must list at least one seed".into(),
            ));
        }
        if !matches!(self.run.init.as_str(), "zeros" | "random" | "hint_following") {
            return Err(CliError::InvalidConfig(format!(
                "unknown run.init {:?}; expected zeros, random, or hint_following",
                self.run.init
            )));
        }
        if !self.run.init_strength.is_finite() || !self.run.init_scale.is_finite() {
            return Err(CliError::InvalidConfig(
                "run.init_strength and run.init_scale must be finite".into(),
            ));
        }
        Ok(())
    }

    /// Parses `run.method`.
    pub fn method(&self) -> Result<Method, CliError> {
        Ok(Method::from_str(&self.run.method)?)
    }

    /// Parses the `(correct_rule, wrong_rule)` pair.
    pub fn selector_rule(&self) -> Result<SelectorRule, CliError> {
        let correct = CorrectRule::ALL
            .into_iter()
            .find(|r| r.name() == self.run.correct_rule)
            .ok_or_else(|| {
                CliError::InvalidConfig(format!(
                    "unknown run.correct_rule {:?}; expected len_min, len_max, avglogp_min, or avglogp_max",
                    self.run.correct_rule
                ))
            })?;
        let wrong = WrongRule::ALL
            .into_iter()
            .find(|r| r.name() == self.run.wrong_rule)
            .ok_or_else(|| {
                CliError::InvalidConfig(format!(
                    "unknown run.wrong_rule {:?}; expected len_max, len_min, or avglogp_max",
                    self.run.wrong_rule
                ))
            })?;
        Ok(SelectorRule { correct, wrong })
    }

    /// Builds the initial policy for a run with master seed `master`.
    pub fn initial_policy(&self, master: u64) -> Result<PolicyParams, CliError> {
        let spec = self.env.spec()?;
        let order = self.env.feature_order;
        let seed = ssopd_core::derive_seed(master, &[ssopd_core::seeding::stream::INIT]);
        Ok(match self.run.init.as_str() {
            "zeros" => PolicyParams::zeros(&spec, order, seed),
            "random" => PolicyParams::random(&spec, order, self.run.init_scale, seed),
            "hint_following" => {
                PolicyParams::hint_following(&spec, order, self.run.init_strength, seed)
            }
            other => {
                return Err(CliError::InvalidConfig(format!(
                    "unknown run.init {other:?}"
                )))
            }
        })
    }
}
