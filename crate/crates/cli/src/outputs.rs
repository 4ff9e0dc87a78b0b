//! Output artifacts: CSV traces, JSONL logs, checkpoints, and grid tables.
//!
//! Every file starts with the effective-config digest — as a `#`-comment
//! line in CSVs, as a leading metadata record in JSONL files, and as a field
//! in JSON documents — so any artifact can be traced back to the exact
//! configuration that produced it. Nothing here writes timestamps, hostnames,
//! or absolute paths: rerunning a command with the same effective
//! configuration reproduces every artifact byte for byte.
//!
//! CSV columns are gated by training method. Methods that never compute a
//! quantity omit its column entirely (a `grpo` trace has no mixing-weight
//! column, for example); a populated method leaves a cell empty only when the
//! value is genuinely absent for that row, such as a selector pair on a step
//! where the group was pure.

use std::fs;
use std::io::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};
use ssopd_core::{
    feature_count, CorrectRule, DiagnosticsRow, EnvSpec, Method, MetricsRow, PolicyParams,
    TaskInstance, TheoremReport, WrongRule,
};

use crate::CliError;

/// Formats a float with Rust's shortest round-trip representation, which is
/// deterministic and parses back to the identical bit pattern.
pub fn fmt_f64(x: f64) -> String {
    format!("{x}")
}

fn opt_f64(x: Option<f64>) -> String {
    x.map(fmt_f64).unwrap_or_default()
}

fn opt_usize(x: Option<usize>) -> String {
    x.map(|v| v.to_string()).unwrap_or_default()
}

fn write_csv(
    path: &Path,
    digest: &str,
    header: &[&str],
    rows: impl IntoIterator<Item = Vec<String>>,
) -> Result<(), CliError> {
    let mut text = format!("# config_digest={digest}\n{}\n", header.join(","));
    for row in rows {
        debug_assert_eq!(row.len(), header.len());
        text.push_str(&row.join(","));
        text.push('\n');
    }
    atomic_write(path, text.as_bytes())
}

/// Writes through a sibling temp file and renames, so a crash mid-write
/// never leaves a truncated artifact behind.
fn atomic_write(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    let tmp = path.with_extension("tmp");
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

/// Which optional columns a method's trace carries.
struct ColumnGate {
    grpo: bool,
    ssopd: bool,
    lambda: bool,
    pair: bool,
}

fn gate(method: Method) -> ColumnGate {
    ColumnGate {
        grpo: matches!(method, Method::Grpo | Method::Ssopd),
        ssopd: matches!(method, Method::Ssopd | Method::OpsdRef),
        lambda: matches!(method, Method::Ssopd),
        pair: matches!(method, Method::Ssopd),
    }
}

/// Writes the per-step training trace.
pub fn write_metrics_csv(
    path: &Path,
    rows: &[MetricsRow],
    method: Method,
    digest: &str,
) -> Result<(), CliError> {
    let g = gate(method);
    let mut header = vec!["step", "mean_reward", "mean_loss"];
    if g.grpo {
        header.push("mean_grpo_loss");
    }
    if g.ssopd {
        header.push("mean_ssopd_loss");
    }
    if g.lambda {
        header.push("mean_lambda");
    }
    header.extend(["frac_mixed_groups", "avg_at_k", "grad_norm"]);
    let body = rows.iter().map(|r| {
        let mut cells = vec![r.step.to_string(), fmt_f64(r.mean_reward), fmt_f64(r.mean_loss)];
        if g.grpo {
            cells.push(opt_f64(r.mean_grpo_loss));
        }
        if g.ssopd {
            cells.push(opt_f64(r.mean_ssopd_loss));
        }
        if g.lambda {
            cells.push(opt_f64(r.mean_lambda));
        }
        cells.push(fmt_f64(r.frac_mixed_groups));
        cells.push(opt_f64(r.avg_at_k));
        cells.push(fmt_f64(r.grad_norm));
        cells
    });
    write_csv(path, digest, &header, body)
}

/// Writes the per-prompt training trace.
pub fn write_diagnostics_csv(
    path: &Path,
    rows: &[DiagnosticsRow],
    method: Method,
    digest: &str,
) -> Result<(), CliError> {
    let g = gate(method);
    let mut header = vec!["step", "prompt_index", "task_digest", "p_hat", "loss"];
    if g.grpo {
        header.push("grpo_loss");
    }
    if g.lambda {
        header.push("lambda");
    }
    if g.pair {
        header.extend(["len_plus", "len_minus", "k_minus"]);
    }
    if g.ssopd {
        header.extend(["ssopd_loss", "clip_rate"]);
    }
    let body = rows.iter().map(|r| {
        let mut cells = vec![
            r.step.to_string(),
            r.prompt_index.to_string(),
            r.task_digest.clone(),
            fmt_f64(r.p_hat),
            fmt_f64(r.loss),
        ];
        if g.grpo {
            cells.push(opt_f64(r.grpo_loss));
        }
        if g.lambda {
            cells.push(opt_f64(r.lambda));
        }
        if g.pair {
            cells.push(opt_usize(r.len_plus));
            cells.push(opt_usize(r.len_minus));
            cells.push(opt_usize(r.k_minus));
        }
        if g.ssopd {
            cells.push(opt_f64(r.ssopd_loss));
            cells.push(opt_f64(r.clip_rate));
        }
        cells
    });
    write_csv(path, digest, &header, body)
}

/// Leading metadata record of a JSONL artifact.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JsonlMeta {
    pub config_digest: String,
    /// Number of records that follow.
    pub records: usize,
    /// Zero-value states skipped during theorem sweeps; absent elsewhere.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub skipped_zero_value_states: Option<usize>,
}

fn write_jsonl<T: Serialize>(path: &Path, meta: &JsonlMeta, records: &[T]) -> Result<(), CliError> {
    let mut text = serde_json::to_string(meta)?;
    text.push('\n');
    for r in records {
        text.push_str(&serde_json::to_string(r)?);
        text.push('\n');
    }
    atomic_write(path, text.as_bytes())
}

/// Writes a task suite: a metadata line, then one task record per line with
/// fields `family`, `params`, `spec`, `prompt`, `seed`, and the reference
/// solution alongside.
pub fn write_tasks_jsonl(
    path: &Path,
    tasks: &[TaskInstance],
    digest: &str,
) -> Result<(), CliError> {
    let meta = JsonlMeta {
        config_digest: digest.into(),
        records: tasks.len(),
        skipped_zero_value_states: None,
    };
    write_jsonl(path, &meta, tasks)
}

/// Writes the theorem sweep log: a metadata line, then one report per line.
pub fn write_theorems_jsonl(
    path: &Path,
    reports: &[TheoremReport],
    skipped: usize,
    digest: &str,
) -> Result<(), CliError> {
    let meta = JsonlMeta {
        config_digest: digest.into(),
        records: reports.len(),
        skipped_zero_value_states: Some(skipped),
    };
    write_jsonl(path, &meta, reports)
}

/// Reads a JSONL artifact back: the metadata line and the typed records.
pub fn read_jsonl<T: for<'de> Deserialize<'de>>(
    path: &Path,
) -> Result<(JsonlMeta, Vec<T>), CliError> {
    let text = fs::read_to_string(path)?;
    let mut lines = text.lines();
    let meta: JsonlMeta = serde_json::from_str(lines.next().ok_or_else(|| {
        CliError::BadArtifact(format!("{}: empty JSONL file", path.display()))
    })?)?;
    let records = lines
        .map(serde_json::from_str)
        .collect::<Result<Vec<T>, _>>()?;
    if records.len() != meta.records {
        return Err(CliError::BadArtifact(format!(
            "{}: metadata claims {} records but {} follow",
            path.display(),
            meta.records,
            records.len()
        )));
    }
    Ok((meta, records))
}

/// A saved policy: flat weights plus the header needed to interpret them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointFile {
    /// Context window size of the featurizer.
    pub feature_order: usize,
    /// Ordinary-token count of the environment the weights are shaped for.
    pub vocab_size: u32,
    /// Master seed of the run that produced the checkpoint.
    pub seed: u64,
    /// Training step the snapshot was taken at.
    pub step: usize,
    /// Digest of the effective configuration of the producing run.
    pub config_digest: String,
    /// `feature_count * num_actions` weights, row-major by feature.
    pub weights: Vec<f64>,
}

impl CheckpointFile {
    pub fn from_params(params: &PolicyParams, step: usize, digest: &str) -> Self {
        Self {
            feature_order: params.feature_order,
            vocab_size: params.vocab_size,
            seed: params.seed,
            step,
            config_digest: digest.into(),
            weights: params.weights.clone(),
        }
    }

    pub fn save(&self, path: &Path) -> Result<(), CliError> {
        let mut text = serde_json::to_string(self)?;
        text.push('\n');
        atomic_write(path, text.as_bytes())
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = fs::read_to_string(path).map_err(|e| {
            CliError::BadArtifact(format!("cannot read checkpoint {}: {e}", path.display()))
        })?;
        Ok(serde_json::from_str(&text)?)
    }

    /// Rebuilds the policy, checking the header against the environment it
    /// is about to run in.
    pub fn into_params(self, spec: &EnvSpec) -> Result<PolicyParams, CliError> {
        if self.vocab_size != spec.vocab_size {
            return Err(CliError::BadArtifact(format!(
                "checkpoint was trained with vocab_size {} but the experiment uses {}",
                self.vocab_size, spec.vocab_size
            )));
        }
        let expected = feature_count(spec, self.feature_order) * spec.num_actions();
        if self.weights.len() != expected {
            return Err(CliError::BadArtifact(format!(
                "checkpoint holds {} weights but feature_order {} on this environment needs {}",
                self.weights.len(),
                self.feature_order,
                expected
            )));
        }
        Ok(PolicyParams {
            feature_order: self.feature_order,
            vocab_size: self.vocab_size,
            seed: self.seed,
            weights: self.weights,
        })
    }
}

/// One cell of the witness-selector ablation grid.
#[derive(Debug, Clone, PartialEq)]
pub struct SelectorCell {
    pub correct: CorrectRule,
    pub wrong: WrongRule,
    pub is_default: bool,
    pub seeds: usize,
    pub mean_best_avg_at_k: f64,
    pub stderr_best_avg_at_k: f64,
}

/// Writes the 4x3 selector grid in long format, one row per cell.
pub fn write_selector_grid_csv(
    path: &Path,
    cells: &[SelectorCell],
    digest: &str,
) -> Result<(), CliError> {
    let header = [
        "correct_rule",
        "wrong_rule",
        "is_default",
        "seeds",
        "mean_best_avg_at_k",
        "stderr_best_avg_at_k",
    ];
    let body = cells.iter().map(|c| {
        vec![
            c.correct.name().to_string(),
            c.wrong.name().to_string(),
            c.is_default.to_string(),
            c.seeds.to_string(),
            fmt_f64(c.mean_best_avg_at_k),
            fmt_f64(c.stderr_best_avg_at_k),
        ]
    });
    write_csv(path, digest, &header, body)
}

/// One cell of the mixing-weight ablation grid.
#[derive(Debug, Clone, PartialEq)]
pub struct FrontierCell {
    /// "dynamic" (frontier-scaled) or "fixed" (constant when a pair exists).
    pub weighting: String,
    pub lambda0: f64,
    pub seeds: usize,
    pub mean_best_avg_at_k: f64,
    pub stderr_best_avg_at_k: f64,
}

/// Writes the 2x4 mixing-weight grid in long format, one row per cell.
pub fn write_frontier_grid_csv(
    path: &Path,
    cells: &[FrontierCell],
    digest: &str,
) -> Result<(), CliError> {
    let header = [
        "weighting",
        "lambda0",
        "seeds",
        "mean_best_avg_at_k",
        "stderr_best_avg_at_k",
    ];
    let body = cells.iter().map(|c| {
        vec![
            c.weighting.clone(),
            fmt_f64(c.lambda0),
            c.seeds.to_string(),
            fmt_f64(c.mean_best_avg_at_k),
            fmt_f64(c.stderr_best_avg_at_k),
        ]
    });
    write_csv(path, digest, &header, body)
}

/// Scorecard written by the eval command.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub config_digest: String,
    /// Step of the evaluated checkpoint.
    pub checkpoint_step: usize,
    /// Completions sampled per task.
    pub k: usize,
    /// Master seed the evaluation stream was derived from.
    pub seed: u64,
    pub avg_at_k: f64,
}

impl EvalReport {
    pub fn save(&self, path: &Path) -> Result<(), CliError> {
        let mut text = serde_json::to_string(self)?;
        text.push('\n');
        atomic_write(path, text.as_bytes())
    }
}

/// Run header written by the train command.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub config_digest: String,
    pub method: String,
    pub seed: u64,
    pub steps: usize,
    /// Held-out score at the final step.
    pub final_avg_at_k: Option<f64>,
}

impl RunReport {
    pub fn save(&self, path: &Path) -> Result<(), CliError> {
        let mut text = serde_json::to_string(self)?;
        text.push('\n');
        atomic_write(path, text.as_bytes())
    }
}

/// Sample mean and standard error; the standard error of a single sample is
/// reported as zero.
pub fn mean_and_stderr(xs: &[f64]) -> (f64, f64) {
    assert!(!xs.is_empty(), "mean of an empty sample");
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() == 1 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}
