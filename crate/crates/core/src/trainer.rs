//! Minibatch optimization loop and evaluation.
//!
//! One training step snapshots the current parameters as the behavior
//! policy, samples a rollout group per prompt in a round-robin minibatch,
//! computes the method's per-prompt loss and gradient against the live
//! student, and applies the batch-mean gradient with SGD or Adam. Rollout
//! and evaluation randomness is derived from `(master seed, step, slot)`
//! only, so runs are bit-reproducible and different methods (or ablation
//! arms) sharing a seed sample identical rollouts.
//!
//! Methods:
//! - `grpo`: the group-surrogate objective alone.
//! - `ssopd`: group surrogate plus the frontier-weighted distillation term
//!   on mixed groups.
//! - `sft_ref`: length-normalized cross-entropy on each task's reference
//!   solution; rollouts are still sampled for reward monitoring.
//! - `opsd_ref`: pure distillation with the reference solution as the
//!   privileged hint, at prefixes of every sampled completion.

use crate::env::{Completion, EnvError, TaskInstance};
use crate::grpo::{grpo_loss, GrpoConfig, GrpoError, RolloutGroup};
use crate::policy::{logprob_gradient_with, sample_completion, Context, PolicyParams};
use crate::seeding::{derive_seed, stream};
use crate::ssopd::{
    combined_prompt_step, ssopd_prompt_loss, SelectorRule, SsopdConfig, SsopdError, WitnessPair,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("invalid training config: {0}")]
    InvalidConfig(String),
    #[error("training task suite is empty")]
    EmptySuite,
    #[error("non-finite loss at step {step} on task {digest}")]
    NonFiniteLoss { step: usize, digest: String },
    #[error("non-finite gradient at coordinate {coord}")]
    NonFiniteGradient { coord: usize },
    #[error(transparent)]
    Grpo(#[from] GrpoError),
    #[error(transparent)]
    Ssopd(#[from] SsopdError),
    #[error(transparent)]
    Env(#[from] EnvError),
}

/// Training objective selected on the command line.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Grpo,
    Ssopd,
    SftRef,
    OpsdRef,
}

impl Method {
    pub const ALL: [Method; 4] = [Method::Grpo, Method::Ssopd, Method::SftRef, Method::OpsdRef];

    pub fn name(&self) -> &'static str {
        match self {
            Method::Grpo => "grpo",
            Method::Ssopd => "ssopd",
            Method::SftRef => "sft_ref",
            Method::OpsdRef => "opsd_ref",
        }
    }
}

impl std::str::FromStr for Method {
    type Err = TrainError;

    fn from_str(s: &str) -> Result<Self, TrainError> {
        Method::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| {
                TrainError::InvalidConfig(format!(
                    "unknown method {s:?}; expected grpo, ssopd, sft_ref, or opsd_ref"
                ))
            })
    }
}

/// What the distillation teacher is anchored to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TeacherMode {
    /// Snapshot of the parameters at training start (the default).
    FixedInitial,
    /// Stop-gradient copy of the current parameters, refreshed each step.
    LiveStopGradient,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OptimizerKind {
    Sgd,
    Adam,
}

/// Optimizer loop hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    /// Optimization steps.
    pub steps: usize,
    /// Prompts per step.
    pub batch_size: usize,
    /// Step size. Zero is allowed as an explicit no-update diagnostic.
    pub learning_rate: f64,
    pub optimizer: OptimizerKind,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    /// Master seed; all run randomness is derived from it.
    pub seed: u64,
    pub teacher_mode: TeacherMode,
    /// Gradient passes per sampled batch. The ratio clip in the group
    /// surrogate only binds when this exceeds 1.
    pub inner_epochs: usize,
    /// Sampling temperature for training rollouts. Losses always use the
    /// untempered distributions.
    pub rollout_temperature: f64,
    /// Evaluate avg@k every this many steps (0 disables; the final step is
    /// always evaluated when enabled).
    pub eval_every: usize,
    /// Samples per task in periodic evaluation.
    pub eval_k: usize,
    /// Snapshot parameters every this many steps (0 disables; the final
    /// step is always kept when enabled).
    pub checkpoint_every: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            steps: 300,
            batch_size: 4,
            learning_rate: 1e-2,
            optimizer: OptimizerKind::Adam,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
            seed: 0,
            teacher_mode: TeacherMode::FixedInitial,
            inner_epochs: 1,
            rollout_temperature: 1.2,
            eval_every: 50,
            eval_k: 12,
            checkpoint_every: 50,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        let fail = |msg: &str| Err(TrainError::InvalidConfig(msg.into()));
        if self.steps < 1 {
            return fail("steps must be at least 1");
        }
        if self.batch_size < 1 {
            return fail("batch_size must be at least 1");
        }
        if !(self.learning_rate >= 0.0) || !self.learning_rate.is_finite() {
            return fail("learning_rate must be finite and nonnegative");
        }
        if !(0.0..1.0).contains(&self.adam_beta1) || !(0.0..1.0).contains(&self.adam_beta2) {
            return fail("adam betas must lie in [0, 1)");
        }
        if !(self.adam_eps > 0.0) {
            return fail("adam_eps must be positive");
        }
        if self.inner_epochs < 1 {
            return fail("inner_epochs must be at least 1");
        }
        if !(self.rollout_temperature > 0.0) {
            return fail("rollout_temperature must be positive");
        }
        if self.eval_k < 1 {
            return fail("eval_k must be at least 1");
        }
        Ok(())
    }
}

/// Per-step aggregate metrics. Method-gated columns are `None` where the
/// method has no such quantity (e.g. no distillation loss under `grpo`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub step: usize,
    /// Mean group success rate over the batch.
    pub mean_reward: f64,
    /// Mean total objective over the batch.
    pub mean_loss: f64,
    pub mean_grpo_loss: Option<f64>,
    /// Mean distillation loss over the prompts that distilled this step.
    pub mean_ssopd_loss: Option<f64>,
    /// Mean frontier weight over the whole batch (zeros included).
    pub mean_lambda: Option<f64>,
    pub frac_mixed_groups: f64,
    /// Periodic held-out avg@k; present on evaluation steps.
    pub avg_at_k: Option<f64>,
    /// L2 norm of the batch-mean gradient at the first inner epoch.
    pub grad_norm: f64,
}

/// Per-prompt record, one row per (step, batch slot) at gradient time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticsRow {
    pub step: usize,
    /// Index into the training suite.
    pub prompt_index: usize,
    pub task_digest: String,
    /// Group success rate for this prompt.
    pub p_hat: f64,
    /// Total per-prompt objective.
    pub loss: f64,
    pub grpo_loss: Option<f64>,
    /// Frontier weight; populated only by the `ssopd` method.
    pub lambda: Option<f64>,
    pub len_plus: Option<usize>,
    pub len_minus: Option<usize>,
    pub k_minus: Option<usize>,
    pub ssopd_loss: Option<f64>,
    pub clip_rate: Option<f64>,
}

/// Parameter snapshot taken on the checkpoint cadence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub step: usize,
    pub params: PolicyParams,
}

/// Everything a training run produces.
#[derive(Debug, Clone)]
pub struct TrainOutput {
    pub final_params: PolicyParams,
    pub metrics: Vec<MetricsRow>,
    pub diagnostics: Vec<DiagnosticsRow>,
    pub checkpoints: Vec<Checkpoint>,
}

/// First and second moment buffers for Adam; inert under SGD.
#[derive(Debug, Clone)]
pub struct OptimizerState {
    m: Vec<f64>,
    v: Vec<f64>,
    t: u64,
}

impl OptimizerState {
    pub fn new(num_weights: usize) -> Self {
        Self {
            m: vec![0.0; num_weights],
            v: vec![0.0; num_weights],
            t: 0,
        }
    }
}

/// One in-place parameter update. SGD subtracts `lr * g`; Adam applies the
/// standard bias-corrected moment update. Rejects non-finite gradients.
pub fn apply_update(
    params: &mut PolicyParams,
    grad: &[f64],
    cfg: &TrainConfig,
    state: &mut OptimizerState,
) -> Result<(), TrainError> {
    if grad.len() != params.weights.len() || state.m.len() != grad.len() {
        return Err(TrainError::InvalidConfig(
            "gradient, parameter, and optimizer-state lengths must match".into(),
        ));
    }
    if let Some(coord) = grad.iter().position(|g| !g.is_finite()) {
        return Err(TrainError::NonFiniteGradient { coord });
    }
    match cfg.optimizer {
        OptimizerKind::Sgd => {
            for (w, &g) in params.weights.iter_mut().zip(grad) {
                *w -= cfg.learning_rate * g;
            }
        }
        OptimizerKind::Adam => {
            state.t += 1;
            let (b1, b2) = (cfg.adam_beta1, cfg.adam_beta2);
            let bc1 = 1.0 - b1.powi(state.t as i32);
            let bc2 = 1.0 - b2.powi(state.t as i32);
            for (i, &g) in grad.iter().enumerate() {
                state.m[i] = b1 * state.m[i] + (1.0 - b1) * g;
                state.v[i] = b2 * state.v[i] + (1.0 - b2) * g * g;
                let m_hat = state.m[i] / bc1;
                let v_hat = state.v[i] / bc2;
                params.weights[i] -= cfg.learning_rate * m_hat / (v_hat.sqrt() + cfg.adam_eps);
            }
        }
    }
    Ok(())
}

/// Mean verified correctness of `k` temperature-1.0 samples per task,
/// averaged over tasks.
pub fn avg_at_k(
    policy: &PolicyParams,
    tasks: &[TaskInstance],
    k: usize,
    rng: &mut impl Rng,
) -> f64 {
    assert!(k >= 1, "avg@k needs k >= 1");
    assert!(!tasks.is_empty(), "avg@k needs a nonempty task suite");
    let per_task: f64 = tasks
        .iter()
        .map(|task| {
            (0..k)
                .map(|_| sample_completion(policy, task, 1.0, rng).reward)
                .sum::<f64>()
                / k as f64
        })
        .sum();
    per_task / tasks.len() as f64
}

/// Per-prompt loss, gradient, and row material for one method.
struct PromptOutcome {
    loss: f64,
    grad: Vec<f64>,
    grpo_loss: Option<f64>,
    ssopd_loss: Option<f64>,
    lambda: Option<f64>,
    len_plus: Option<usize>,
    len_minus: Option<usize>,
    k_minus: Option<usize>,
    clip_rate: Option<f64>,
}

impl PromptOutcome {
    fn bare(loss: f64, grad: Vec<f64>) -> Self {
        Self {
            loss,
            grad,
            grpo_loss: None,
            ssopd_loss: None,
            lambda: None,
            len_plus: None,
            len_minus: None,
            k_minus: None,
            clip_rate: None,
        }
    }
}

/// Length-normalized cross-entropy of the reference solution under the
/// student: `-(1/tau) sum_t log p(ref_t | prompt ++ ref_{<t})`.
fn sft_prompt_loss(task: &TaskInstance, student: &PolicyParams) -> (f64, Vec<f64>) {
    let spec = &task.spec;
    let reference = &task.reference_solution;
    let inv = 1.0 / reference.len() as f64;
    let mut loss = 0.0;
    let mut grad = vec![0.0; student.weights.len()];
    for (t, &tok) in reference.iter().enumerate() {
        let ctx = Context::unhinted(task.prompt.clone(), reference[..t].to_vec());
        let dist = student.distribution(spec, &ctx);
        let action = tok as usize;
        loss -= inv * dist.logprobs[action];
        logprob_gradient_with(student, spec, &ctx, action, &dist).add_into(&mut grad, -inv);
    }
    (loss, grad)
}

/// Pure distillation with the reference solution as the privileged hint:
/// every sampled completion contributes its first `min(K, tau)` prefixes,
/// prefix-averaged then completion-averaged.
fn opsd_ref_prompt_loss(
    task: &TaskInstance,
    group: &RolloutGroup,
    teacher: &PolicyParams,
    student: &PolicyParams,
    cfg: &SsopdConfig,
) -> Result<(f64, Vec<f64>, f64), TrainError> {
    let witness = Completion::from_tokens(task, task.reference_solution.clone())?;
    debug_assert!(witness.is_correct(), "reference solution must verify");
    let g = group.completions.len() as f64;
    let mut loss = 0.0;
    let mut grad = vec![0.0; student.weights.len()];
    let mut clip_rate = 0.0;
    for (i, comp) in group.completions.iter().enumerate() {
        let pair = WitnessPair {
            plus_index: i,
            minus_index: i,
            y_plus: witness.clone(),
            y_minus: comp.clone(),
        };
        let part = ssopd_prompt_loss(task, &pair, teacher, student, cfg)?;
        loss += part.loss / g;
        for (acc, d) in grad.iter_mut().zip(&part.grad) {
            *acc += d / g;
        }
        clip_rate += part.clip_rate / g;
    }
    Ok((loss, grad, clip_rate))
}

#[allow(clippy::too_many_arguments)]
fn prompt_objective(
    method: Method,
    task: &TaskInstance,
    group: &RolloutGroup,
    teacher: &PolicyParams,
    student: &PolicyParams,
    kl_reference: &PolicyParams,
    grpo_cfg: &GrpoConfig,
    ssopd_cfg: &SsopdConfig,
    rule: SelectorRule,
) -> Result<PromptOutcome, TrainError> {
    match method {
        Method::Grpo => {
            let (loss, grad) = grpo_loss(task, group, student, kl_reference, grpo_cfg)?;
            let mut out = PromptOutcome::bare(loss, grad);
            out.grpo_loss = Some(loss);
            Ok(out)
        }
        Method::Ssopd => {
            let step = combined_prompt_step(
                task, group, teacher, student, kl_reference, grpo_cfg, ssopd_cfg, rule,
            )?;
            let d = step.diagnostics;
            let mut out = PromptOutcome::bare(step.loss, step.grad);
            out.grpo_loss = Some(d.grpo_loss);
            out.ssopd_loss = d.ssopd_loss;
            out.lambda = Some(d.lambda);
            out.len_plus = d.len_plus;
            out.len_minus = d.len_minus;
            out.k_minus = d.k_minus;
            out.clip_rate = d.clip_rate;
            Ok(out)
        }
        Method::SftRef => {
            let (loss, grad) = sft_prompt_loss(task, student);
            Ok(PromptOutcome::bare(loss, grad))
        }
        Method::OpsdRef => {
            let (loss, grad, clip_rate) =
                opsd_ref_prompt_loss(task, group, teacher, student, ssopd_cfg)?;
            let mut out = PromptOutcome::bare(loss, grad);
            out.ssopd_loss = Some(loss);
            out.clip_rate = Some(clip_rate);
            Ok(out)
        }
    }
}

fn mean_of(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        None
    } else {
        Some(values.iter().sum::<f64>() / values.len() as f64)
    }
}

/// Runs the full optimization loop. Deterministic given the configs: two
/// calls with identical arguments produce identical outputs, and all
/// sampling seeds depend only on `(cfg.seed, step, batch slot)`, never on
/// the method.
#[allow(clippy::too_many_arguments)]
pub fn train(
    method: Method,
    tasks: &[TaskInstance],
    eval_tasks: &[TaskInstance],
    init: &PolicyParams,
    cfg: &TrainConfig,
    grpo_cfg: &GrpoConfig,
    ssopd_cfg: &SsopdConfig,
    rule: SelectorRule,
) -> Result<TrainOutput, TrainError> {
    cfg.validate()?;
    grpo_cfg.validate()?;
    ssopd_cfg.validate()?;
    if tasks.is_empty() {
        return Err(TrainError::EmptySuite);
    }
    if cfg.eval_every > 0 && eval_tasks.is_empty() {
        return Err(TrainError::InvalidConfig(
            "periodic evaluation needs a nonempty eval suite".into(),
        ));
    }

    let mut student = init.snapshot();
    let fixed_teacher = init.snapshot();
    let kl_reference = init.snapshot();
    let mut opt = OptimizerState::new(student.weights.len());
    let mut metrics = Vec::with_capacity(cfg.steps);
    let mut diagnostics = Vec::with_capacity(cfg.steps * cfg.batch_size);
    let mut checkpoints = Vec::new();

    for step in 1..=cfg.steps {
        let behavior = student.snapshot();
        let teacher = match cfg.teacher_mode {
            TeacherMode::FixedInitial => &fixed_teacher,
            TeacherMode::LiveStopGradient => &behavior,
        };

        let base = (step - 1) * cfg.batch_size;
        let batch: Vec<usize> = (0..cfg.batch_size)
            .map(|j| (base + j) % tasks.len())
            .collect();
        let groups: Vec<RolloutGroup> = batch
            .iter()
            .enumerate()
            .map(|(j, &ti)| {
                let seed = derive_seed(cfg.seed, &[stream::ROLLOUT, step as u64, j as u64]);
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                RolloutGroup::sample(
                    &behavior,
                    &tasks[ti],
                    grpo_cfg,
                    cfg.rollout_temperature,
                    &mut rng,
                )
            })
            .collect();

        let mut first_epoch_grad_norm = 0.0;
        let mut losses = Vec::with_capacity(batch.len());
        let mut grpo_losses = Vec::new();
        let mut ssopd_losses = Vec::new();
        let mut lambdas = Vec::new();

        for epoch in 0..cfg.inner_epochs {
            let mut batch_grad = vec![0.0; student.weights.len()];
            let inv_b = 1.0 / batch.len() as f64;
            for (j, &ti) in batch.iter().enumerate() {
                let task = &tasks[ti];
                let out = prompt_objective(
                    method, task, &groups[j], teacher, &student, &kl_reference, grpo_cfg,
                    ssopd_cfg, rule,
                )?;
                if !out.loss.is_finite() {
                    return Err(TrainError::NonFiniteLoss {
                        step,
                        digest: task.digest(),
                    });
                }
                for (acc, g) in batch_grad.iter_mut().zip(&out.grad) {
                    *acc += inv_b * g;
                }
                if epoch == 0 {
                    losses.push(out.loss);
                    if let Some(l) = out.grpo_loss {
                        grpo_losses.push(l);
                    }
                    if let Some(l) = out.ssopd_loss {
                        ssopd_losses.push(l);
                    }
                    if let Some(l) = out.lambda {
                        lambdas.push(l);
                    }
                    diagnostics.push(DiagnosticsRow {
                        step,
                        prompt_index: ti,
                        task_digest: task.digest(),
                        p_hat: groups[j].p_hat(),
                        loss: out.loss,
                        grpo_loss: out.grpo_loss,
                        lambda: out.lambda,
                        len_plus: out.len_plus,
                        len_minus: out.len_minus,
                        k_minus: out.k_minus,
                        ssopd_loss: out.ssopd_loss,
                        clip_rate: out.clip_rate,
                    });
                }
            }
            if epoch == 0 {
                first_epoch_grad_norm = batch_grad.iter().map(|g| g * g).sum::<f64>().sqrt();
            }
            apply_update(&mut student, &batch_grad, cfg, &mut opt)?;
        }

        let eval_now = cfg.eval_every > 0 && (step % cfg.eval_every == 0 || step == cfg.steps);
        let avg = if eval_now {
            let seed = derive_seed(cfg.seed, &[stream::EVAL, step as u64]);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            Some(avg_at_k(&student, eval_tasks, cfg.eval_k, &mut rng))
        } else {
            None
        };

        metrics.push(MetricsRow {
            step,
            mean_reward: groups.iter().map(|g| g.p_hat()).sum::<f64>() / groups.len() as f64,
            mean_loss: mean_of(&losses).expect("batch is nonempty"),
            mean_grpo_loss: mean_of(&grpo_losses),
            mean_ssopd_loss: mean_of(&ssopd_losses),
            mean_lambda: mean_of(&lambdas),
            frac_mixed_groups: groups.iter().filter(|g| g.is_mixed()).count() as f64
                / groups.len() as f64,
            avg_at_k: avg,
            grad_norm: first_epoch_grad_norm,
        });

        if cfg.checkpoint_every > 0 && (step % cfg.checkpoint_every == 0 || step == cfg.steps) {
            checkpoints.push(Checkpoint {
                step,
                params: student.snapshot(),
            });
        }
    }

    Ok(TrainOutput {
        final_params: student,
        metrics,
        diagnostics,
        checkpoints,
    })
}
