//! The five subcommands, exposed as library functions so integration tests
//! can drive them in-process. Each takes the effective configuration — file
//! plus command-line overrides, already folded together — and writes its
//! artifacts under `run.out_dir`.

use std::fs;
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use ssopd_core::seeding::stream;
use ssopd_core::{
    avg_at_k, derive_seed, run_all_sweeps, train, CorrectRule, Method, SelectorRule, SsopdConfig,
    SweepOutcome, TrainOutput, WrongRule,
};

use crate::config::ExperimentConfig;
use crate::outputs::{
    mean_and_stderr, write_diagnostics_csv, write_frontier_grid_csv, write_metrics_csv,
    write_selector_grid_csv, write_tasks_jsonl, write_theorems_jsonl, CheckpointFile, EvalReport,
    FrontierCell, RunReport, SelectorCell,
};
use crate::suite::{generate_suites, Suites};
use crate::CliError;

/// Base mixing weights swept by the frontier ablation.
pub const FRONTIER_LAMBDAS: [f64; 4] = [0.4, 0.5, 0.6, 0.7];

/// Everything the train command produced, for in-process callers.
#[derive(Debug, Clone)]
pub struct TrainedRun {
    pub digest: String,
    pub out_dir: PathBuf,
    pub output: TrainOutput,
}

fn out_dir(cfg: &ExperimentConfig) -> Result<PathBuf, CliError> {
    let out = PathBuf::from(&cfg.run.out_dir);
    fs::create_dir_all(&out)?;
    Ok(out)
}

/// Trains one policy and writes the task suites, per-step and per-prompt
/// traces, the checkpoint series, and a run header.
pub fn cmd_train(cfg: &ExperimentConfig) -> Result<TrainedRun, CliError> {
    cfg.validate()?;
    let digest = cfg.digest();
    let out = out_dir(cfg)?;
    let suites = generate_suites(&cfg.env, &cfg.suite)?;
    write_tasks_jsonl(&out.join("train_tasks.jsonl"), &suites.train, &digest)?;
    write_tasks_jsonl(&out.join("eval_tasks.jsonl"), &suites.eval, &digest)?;

    let method = cfg.method()?;
    let rule = cfg.selector_rule()?;
    let init = cfg.initial_policy(cfg.train.seed)?;
    let output = train(
        method,
        &suites.train,
        &suites.eval,
        &init,
        &cfg.train,
        &cfg.grpo,
        &cfg.ssopd,
        rule,
    )?;

    write_metrics_csv(&out.join("metrics.csv"), &output.metrics, method, &digest)?;
    write_diagnostics_csv(&out.join("diagnostics.csv"), &output.diagnostics, method, &digest)?;
    for ck in &output.checkpoints {
        CheckpointFile::from_params(&ck.params, ck.step, &digest)
            .save(&out.join(format!("checkpoint_{:06}.json", ck.step)))?;
    }
    CheckpointFile::from_params(&output.final_params, cfg.train.steps, &digest)
        .save(&out.join("checkpoint_final.json"))?;

    let final_avg = output.metrics.last().and_then(|m| m.avg_at_k);
    RunReport {
        config_digest: digest.clone(),
        method: method.name().into(),
        seed: cfg.train.seed,
        steps: cfg.train.steps,
        final_avg_at_k: final_avg,
    }
    .save(&out.join("run.json"))?;

    println!(
        "trained {} for {} steps on {} prompts (seed {}); artifacts in {}",
        method.name(),
        cfg.train.steps,
        suites.train.len(),
        cfg.train.seed,
        out.display()
    );
    if let Some(score) = final_avg {
        println!("final avg@{} on {} held-out tasks: {score}", cfg.train.eval_k, suites.eval.len());
    }
    Ok(TrainedRun {
        digest,
        out_dir: out,
        output,
    })
}

/// Loads a checkpoint and scores it on the held-out suite.
pub fn cmd_eval(
    cfg: &ExperimentConfig,
    checkpoint: Option<&Path>,
) -> Result<EvalReport, CliError> {
    cfg.validate()?;
    let digest = cfg.digest();
    let out = out_dir(cfg)?;
    let spec = cfg.env.spec()?;
    let path = checkpoint
        .map(Path::to_path_buf)
        .unwrap_or_else(|| out.join("checkpoint_final.json"));
    let file = CheckpointFile::load(&path)?;
    let checkpoint_step = file.step;
    let params = file.into_params(&spec)?;

    let suites = generate_suites(&cfg.env, &cfg.suite)?;
    // Step coordinate 0 is never used by in-training evaluations (steps are
    // 1-based), so a standalone evaluation gets its own stream.
    let mut rng =
        ChaCha8Rng::seed_from_u64(derive_seed(cfg.train.seed, &[stream::EVAL, 0]));
    let score = avg_at_k(&params, &suites.eval, cfg.train.eval_k, &mut rng);

    let report = EvalReport {
        config_digest: digest,
        checkpoint_step,
        k: cfg.train.eval_k,
        seed: cfg.train.seed,
        avg_at_k: score,
    };
    report.save(&out.join("eval.json"))?;
    println!(
        "avg@{} over {} held-out tasks at step {}: {score}",
        report.k,
        suites.eval.len(),
        checkpoint_step
    );
    Ok(report)
}

/// Exit code of the verification gate: zero only if every report passed,
/// meaning every identity residual stayed below tolerance and no bound
/// slack went negative beyond tolerance.
pub fn verify_exit_code(outcome: &SweepOutcome) -> u8 {
    if outcome.all_pass() {
        0
    } else {
        1
    }
}

/// Runs every randomized verification sweep and writes the report log.
/// The caller decides the exit code from [`verify_exit_code`].
pub fn cmd_verify_theorems(cfg: &ExperimentConfig) -> Result<SweepOutcome, CliError> {
    cfg.validate()?;
    let digest = cfg.digest();
    let out = out_dir(cfg)?;
    let outcome = run_all_sweeps(&cfg.verify)?;
    write_theorems_jsonl(&out.join("theorems.jsonl"), &outcome.reports, outcome.skipped, &digest)?;
    let failed = outcome.reports.iter().filter(|r| !r.pass).count();
    println!(
        "{} reports: {} passed, {} failed, {} zero-value states skipped",
        outcome.reports.len(),
        outcome.reports.len() - failed,
        failed,
        outcome.skipped
    );
    Ok(outcome)
}

/// Grids score the best checkpoint, which requires a periodic evaluation.
fn require_eval_cadence(cfg: &ExperimentConfig) -> Result<(), CliError> {
    if cfg.train.eval_every == 0 {
        return Err(CliError::InvalidConfig(
            "ablation grids score the best checkpoint, which needs train.eval_every > 0".into(),
        ));
    }
    Ok(())
}

/// Best held-out score over the run, per seed in `run.seeds`. Every arm of a
/// grid calls this with identical suites and identical seeds, and rollout
/// randomness is derived from (seed, step, prompt slot) alone, so arms are
/// compared on exactly the same prompts and the same sampling noise.
fn best_heldout_scores(
    cfg: &ExperimentConfig,
    suites: &Suites,
    ssopd_cfg: &SsopdConfig,
    rule: SelectorRule,
) -> Result<Vec<f64>, CliError> {
    let mut bests = Vec::with_capacity(cfg.run.seeds.len());
    for &seed in &cfg.run.seeds {
        let mut train_cfg = cfg.train.clone();
        train_cfg.seed = seed;
        let init = cfg.initial_policy(seed)?;
        let output = train(
            Method::Ssopd,
            &suites.train,
            &suites.eval,
            &init,
            &train_cfg,
            &cfg.grpo,
            ssopd_cfg,
            rule,
        )?;
        let best = output
            .metrics
            .iter()
            .filter_map(|m| m.avg_at_k)
            .fold(f64::NEG_INFINITY, f64::max);
        bests.push(best);
    }
    Ok(bests)
}

/// Trains every witness-selector pair over the seed list and writes the
/// 4x3 grid.
pub fn cmd_ablate_selectors(cfg: &ExperimentConfig) -> Result<Vec<SelectorCell>, CliError> {
    cfg.validate()?;
    require_eval_cadence(cfg)?;
    let digest = cfg.digest();
    let out = out_dir(cfg)?;
    let suites = generate_suites(&cfg.env, &cfg.suite)?;
    let mut cells = Vec::with_capacity(CorrectRule::ALL.len() * WrongRule::ALL.len());
    for correct in CorrectRule::ALL {
        for wrong in WrongRule::ALL {
            let rule = SelectorRule { correct, wrong };
            let scores = best_heldout_scores(cfg, &suites, &cfg.ssopd, rule)?;
            let (mean, stderr) = mean_and_stderr(&scores);
            println!(
                "selector ({}, {}): mean best avg@{} = {mean} (stderr {stderr}, {} seeds)",
                correct.name(),
                wrong.name(),
                cfg.train.eval_k,
                scores.len()
            );
            cells.push(SelectorCell {
                correct,
                wrong,
                is_default: rule == SelectorRule::default(),
                seeds: scores.len(),
                mean_best_avg_at_k: mean,
                stderr_best_avg_at_k: stderr,
            });
        }
    }
    write_selector_grid_csv(&out.join("selector_grid.csv"), &cells, &digest)?;
    Ok(cells)
}

/// Trains dynamic against fixed mixing at every base weight over the seed
/// list and writes the 2x4 grid.
pub fn cmd_ablate_frontier(cfg: &ExperimentConfig) -> Result<Vec<FrontierCell>, CliError> {
    cfg.validate()?;
    require_eval_cadence(cfg)?;
    let digest = cfg.digest();
    let out = out_dir(cfg)?;
    let suites = generate_suites(&cfg.env, &cfg.suite)?;
    let rule = cfg.selector_rule()?;
    let mut cells = Vec::with_capacity(2 * FRONTIER_LAMBDAS.len());
    for weighting in ["dynamic", "fixed"] {
        for &lambda0 in &FRONTIER_LAMBDAS {
            let mut ssopd_cfg = cfg.ssopd;
            ssopd_cfg.lambda0 = lambda0;
            ssopd_cfg.dynamic_weight = weighting == "dynamic";
            let scores = best_heldout_scores(cfg, &suites, &ssopd_cfg, rule)?;
            let (mean, stderr) = mean_and_stderr(&scores);
            println!(
                "{weighting} lambda0={lambda0}: mean best avg@{} = {mean} (stderr {stderr}, {} seeds)",
                cfg.train.eval_k,
                scores.len()
            );
            cells.push(FrontierCell {
                weighting: weighting.into(),
                lambda0,
                seeds: scores.len(),
                mean_best_avg_at_k: mean,
                stderr_best_avg_at_k: stderr,
            });
        }
    }
    write_frontier_grid_csv(&out.join("frontier_grid.csv"), &cells, &digest)?;
    Ok(cells)
}
