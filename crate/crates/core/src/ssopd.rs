//! Self-supervised on-policy distillation on top of the group surrogate.
//!
//! When a sampled group contains both successes and failures, the group
//! itself supplies privileged information: a correct completion (the
//! "witness") is packaged into a hint block and shown to a frozen teacher
//! copy of the policy, which is then distilled into the student at the
//! prefixes of a selected wrong completion:
//!
//! ```text
//! l(s, z)    = sum_a min( q_T(a|Hint(s,z)) * [log q_T(a|..) - log p(a|s)], tau_clip )
//! L_distill  = (1/K_minus) sum_{t < K_minus} l(s_t(y_minus), y_plus)
//! L          = L_group + lambda_x * L_distill
//! ```
//!
//! Summands at or above `tau_clip` contribute the constant `tau_clip` and a
//! flat (zero) gradient, capping the influence of very confident teacher
//! tokens. The mixing weight is gated by the group's empirical success rate
//! `p` as `lambda_x = lambda0 * 4p(1-p)` (or a fixed `lambda0` whenever a
//! witness pair exists), so distillation acts only at the frontier where
//! groups are mixed; pure groups reduce to the plain group surrogate
//! bit for bit. The teacher is always a stop-gradient snapshot: gradients
//! flow through the student's log-probabilities only.

use crate::env::{Completion, EnvSpec, TaskInstance, Token};
use crate::grpo::{grpo_loss, GrpoConfig, GrpoError, RolloutGroup};
use crate::policy::{featurize, ActionDistribution, Context, PolicyParams};
use serde::{Deserialize, Serialize};

/// Errors raised by witness handling and the combined step.
#[derive(Debug, thiserror::Error)]
pub enum SsopdError {
    #[error("invalid distillation config: {0}")]
    InvalidConfig(String),
    #[error("witness contains hint delimiter token {token}")]
    DelimiterInWitness { token: Token },
    #[error(transparent)]
    Grpo(#[from] GrpoError),
}

/// Distillation hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SsopdConfig {
    /// Base mixing weight `lambda0`.
    pub lambda0: f64,
    /// Maximum number of failure prefixes distilled per prompt (`K`).
    pub prefix_budget: usize,
    /// Pointwise clip threshold `tau_clip` on each distillation summand.
    pub tau_clip: f64,
    /// Frontier-scaled weight `lambda0 * 4p(1-p)` when true; the constant
    /// `lambda0` (gated only on a pair existing) when false.
    pub dynamic_weight: bool,
}

impl Default for SsopdConfig {
    fn default() -> Self {
        Self {
            lambda0: 0.5,
            prefix_budget: 8,
            tau_clip: 0.05,
            dynamic_weight: true,
        }
    }
}

impl SsopdConfig {
    pub fn validate(&self) -> Result<(), SsopdError> {
        if self.lambda0 < 0.0 {
            return Err(SsopdError::InvalidConfig(
                "lambda0 must be nonnegative".into(),
            ));
        }
        if self.prefix_budget < 1 {
            return Err(SsopdError::InvalidConfig(
                "prefix_budget must be at least 1".into(),
            ));
        }
        if !(self.tau_clip > 0.0) {
            return Err(SsopdError::InvalidConfig(
                "tau_clip must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// Rule for picking the witness among correct completions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CorrectRule {
    /// Shortest correct completion (the default).
    LenMin,
    LenMax,
    AvgLogPMin,
    AvgLogPMax,
}

/// Rule for picking the distillation target among wrong completions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WrongRule {
    /// Longest wrong completion (the default).
    LenMax,
    LenMin,
    AvgLogPMax,
}

/// A (correct-pick, wrong-pick) selector pair. Ties always break toward the
/// lowest group index.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SelectorRule {
    pub correct: CorrectRule,
    pub wrong: WrongRule,
}

impl Default for SelectorRule {
    fn default() -> Self {
        Self {
            correct: CorrectRule::LenMin,
            wrong: WrongRule::LenMax,
        }
    }
}

impl CorrectRule {
    pub const ALL: [CorrectRule; 4] = [
        CorrectRule::LenMax,
        CorrectRule::LenMin,
        CorrectRule::AvgLogPMax,
        CorrectRule::AvgLogPMin,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            CorrectRule::LenMax => "len_max",
            CorrectRule::LenMin => "len_min",
            CorrectRule::AvgLogPMax => "avglogp_max",
            CorrectRule::AvgLogPMin => "avglogp_min",
        }
    }
}

impl WrongRule {
    pub const ALL: [WrongRule; 3] = [WrongRule::LenMax, WrongRule::LenMin, WrongRule::AvgLogPMax];

    pub fn name(&self) -> &'static str {
        match self {
            WrongRule::LenMax => "len_max",
            WrongRule::LenMin => "len_min",
            WrongRule::AvgLogPMax => "avglogp_max",
        }
    }
}

/// Selected witness (correct) and distillation target (wrong), with their
/// group indices.
#[derive(Debug, Clone, PartialEq)]
pub struct WitnessPair {
    pub plus_index: usize,
    pub minus_index: usize,
    pub y_plus: Completion,
    pub y_minus: Completion,
}

impl WitnessPair {
    /// Number of failure prefixes distilled: `min(K, tau(y_minus))`.
    pub fn k_minus(&self, prefix_budget: usize) -> usize {
        prefix_budget.min(self.y_minus.stop_time())
    }
}

/// Partitions a group into correct and wrong completions, preserving group
/// order within each side.
pub fn split_group(group: &RolloutGroup) -> (Vec<usize>, Vec<usize>) {
    let mut correct = Vec::new();
    let mut wrong = Vec::new();
    for (i, comp) in group.completions.iter().enumerate() {
        if comp.is_correct() {
            correct.push(i);
        } else {
            wrong.push(i);
        }
    }
    (correct, wrong)
}

/// Applies a selector rule to a group. Returns `None` unless both sides are
/// nonempty. The `AvgLogP` rules read the recorded behavior
/// log-probabilities, so they only apply to sampled groups.
pub fn select_witness(group: &RolloutGroup, rule: SelectorRule) -> Option<WitnessPair> {
    let (correct, wrong) = split_group(group);
    if correct.is_empty() || wrong.is_empty() {
        return None;
    }
    let score_len = |i: &usize| group.completions[*i].stop_time() as f64;
    let score_lp = |i: &usize| {
        let lp = group.completions[*i].avg_logprob();
        debug_assert!(!lp.is_nan(), "AvgLogP selector on a completion without logprobs");
        lp
    };
    let plus_index = match rule.correct {
        CorrectRule::LenMin => pick_min(&correct, score_len),
        CorrectRule::LenMax => pick_max(&correct, score_len),
        CorrectRule::AvgLogPMin => pick_min(&correct, score_lp),
        CorrectRule::AvgLogPMax => pick_max(&correct, score_lp),
    };
    let minus_index = match rule.wrong {
        WrongRule::LenMax => pick_max(&wrong, score_len),
        WrongRule::LenMin => pick_min(&wrong, score_len),
        WrongRule::AvgLogPMax => pick_max(&wrong, score_lp),
    };
    Some(WitnessPair {
        plus_index,
        minus_index,
        y_plus: group.completions[plus_index].clone(),
        y_minus: group.completions[minus_index].clone(),
    })
}

/// Lowest index attaining the minimum score (strict comparison keeps the
/// earliest on ties).
fn pick_min(indices: &[usize], score: impl Fn(&usize) -> f64) -> usize {
    let mut best = indices[0];
    let mut best_score = score(&best);
    for &i in &indices[1..] {
        let s = score(&i);
        if s < best_score {
            best = i;
            best_score = s;
        }
    }
    best
}

fn pick_max(indices: &[usize], score: impl Fn(&usize) -> f64) -> usize {
    let mut best = indices[0];
    let mut best_score = score(&best);
    for &i in &indices[1..] {
        let s = score(&i);
        if s > best_score {
            best = i;
            best_score = s;
        }
    }
    best
}

/// Assembles the hinted context `prompt ++ [open] ++ witness ++ [close] ++
/// prefix` shown to the teacher. The prefix is expected to be a prefix of a
/// completion for this prompt; the witness is checked for delimiter leaks.
pub fn build_hint(
    spec: &EnvSpec,
    prompt: &[Token],
    prefix: &[Token],
    witness: &Completion,
) -> Result<Context, SsopdError> {
    if let Some(&tok) = witness
        .tokens
        .iter()
        .find(|&&t| spec.is_hint_delimiter(t))
    {
        return Err(SsopdError::DelimiterInWitness { token: tok });
    }
    Ok(Context::hinted(
        prompt.to_vec(),
        witness.tokens.clone(),
        prefix.to_vec(),
    ))
}

/// Teacher distribution in a hinted context. The teacher is a snapshot; no
/// gradient ever flows through this distribution.
pub fn teacher_distribution(
    teacher: &PolicyParams,
    spec: &EnvSpec,
    hint_ctx: &Context,
) -> ActionDistribution {
    debug_assert!(hint_ctx.is_hinted(), "teacher context must carry a hint");
    teacher.distribution(spec, hint_ctx)
}

/// Pointwise-clipped forward KL between a fixed teacher distribution and
/// the student distribution:
///
/// `sum_a min(q(a) * (log q(a) - log p(a)), tau_clip)`.
///
/// Returns the scalar and the loss derivative with respect to each student
/// log-probability: `-q(a)` where the summand is strictly below the
/// threshold, zero where it is clipped (zero-mass terms contribute zero).
pub fn opsd_pointwise_loss(
    q_teacher: &ActionDistribution,
    p_student: &ActionDistribution,
    tau_clip: f64,
) -> (f64, Vec<f64>) {
    let mut loss = 0.0;
    let mut dlogp = vec![0.0; p_student.probs.len()];
    for (a, &q) in q_teacher.probs.iter().enumerate() {
        if q <= 0.0 {
            continue;
        }
        let summand = q * (q_teacher.logprobs[a] - p_student.logprobs[a]);
        if summand < tau_clip {
            loss += summand;
            dlogp[a] = -q;
        } else {
            loss += tau_clip;
        }
    }
    (loss, dlogp)
}

/// Distillation loss for one prompt, with gradient and clip diagnostics.
#[derive(Debug, Clone)]
pub struct SsopdPromptLoss {
    pub loss: f64,
    pub grad: Vec<f64>,
    /// Fraction of positive-mass summands that hit the clip, across all
    /// distilled prefixes.
    pub clip_rate: f64,
    pub k_minus: usize,
}

/// Prefix-averaged distillation loss against the teacher at the failure
/// prefixes `y_minus[..t]`, `t < min(K, tau(y_minus))`, each hinted with
/// the witness `y_plus`. Gradients are taken with respect to the student
/// only.
pub fn ssopd_prompt_loss(
    task: &TaskInstance,
    pair: &WitnessPair,
    teacher: &PolicyParams,
    student: &PolicyParams,
    cfg: &SsopdConfig,
) -> Result<SsopdPromptLoss, SsopdError> {
    cfg.validate()?;
    let spec = &task.spec;
    let actions = student.num_actions();
    let k_minus = pair.k_minus(cfg.prefix_budget);
    let inv = 1.0 / k_minus as f64;
    let mut loss = 0.0;
    let mut grad = vec![0.0; student.weights.len()];
    let mut clipped = 0usize;
    let mut total = 0usize;

    for t in 0..k_minus {
        let prefix = &pair.y_minus.tokens[..t];
        let hint_ctx = build_hint(spec, &task.prompt, prefix, &pair.y_plus)?;
        let q_t = teacher_distribution(teacher, spec, &hint_ctx);
        let ctx = Context::unhinted(task.prompt.clone(), prefix.to_vec());
        let p = student.distribution(spec, &ctx);
        let (l, dlogp) = opsd_pointwise_loss(&q_t, &p, cfg.tau_clip);
        loss += inv * l;
        for (a, &q) in q_t.probs.iter().enumerate() {
            if q > 0.0 {
                total += 1;
                if dlogp[a] == 0.0 {
                    clipped += 1;
                }
            }
        }
        // Chain through the softmax: d loss / d w[f, b] =
        // phi_f * (dlogp[b] - p(b) * sum_a dlogp[a]).
        let dsum: f64 = dlogp.iter().sum();
        if dsum != 0.0 || dlogp.iter().any(|&d| d != 0.0) {
            let feats = featurize(spec, student.feature_order, &ctx);
            for &f in &feats.active {
                let row = f * actions;
                for (b, &pb) in p.probs.iter().enumerate() {
                    grad[row + b] += inv * (dlogp[b] - pb * dsum);
                }
            }
        }
    }
    let clip_rate = if total == 0 {
        0.0
    } else {
        clipped as f64 / total as f64
    };
    Ok(SsopdPromptLoss {
        loss,
        grad,
        clip_rate,
        k_minus,
    })
}

/// Frontier mixing weight from group rewards. Returns zero whenever the
/// group is pure (no witness pair can exist); otherwise `lambda0 * 4p(1-p)`
/// in dynamic mode or the constant `lambda0` in fixed mode. The weight is a
/// stop-gradient scalar.
pub fn frontier_weight(rewards: &[f64], lambda0: f64, dynamic: bool) -> f64 {
    let g = rewards.len() as f64;
    let p_hat = rewards.iter().sum::<f64>() / g;
    if !(p_hat > 0.0 && p_hat < 1.0) {
        return 0.0;
    }
    if dynamic {
        lambda0 * 4.0 * p_hat * (1.0 - p_hat)
    } else {
        lambda0
    }
}

/// Per-prompt record written to the diagnostics table.
#[derive(Debug, Clone, PartialEq)]
pub struct StepDiagnostics {
    pub p_hat: f64,
    pub lambda: f64,
    pub grpo_loss: f64,
    /// Present only when a witness pair was distilled this step.
    pub len_plus: Option<usize>,
    pub len_minus: Option<usize>,
    pub k_minus: Option<usize>,
    pub ssopd_loss: Option<f64>,
    pub clip_rate: Option<f64>,
}

/// Output of [`combined_prompt_step`].
#[derive(Debug, Clone)]
pub struct PromptStep {
    pub loss: f64,
    pub grad: Vec<f64>,
    pub diagnostics: StepDiagnostics,
}

/// One prompt's combined objective: the group surrogate plus
/// `lambda_x` times the distillation loss when a witness pair exists and
/// the weight is nonzero. Pure groups (or `lambda0 = 0`) return the group
/// surrogate's loss and gradient bit for bit.
#[allow(clippy::too_many_arguments)]
pub fn combined_prompt_step(
    task: &TaskInstance,
    group: &RolloutGroup,
    teacher: &PolicyParams,
    student: &PolicyParams,
    reference: &PolicyParams,
    grpo_cfg: &GrpoConfig,
    ssopd_cfg: &SsopdConfig,
    rule: SelectorRule,
) -> Result<PromptStep, SsopdError> {
    ssopd_cfg.validate()?;
    let (grpo_value, mut grad) = grpo_loss(task, group, student, reference, grpo_cfg)?;
    let pair = select_witness(group, rule);
    let lambda = frontier_weight(&group.rewards, ssopd_cfg.lambda0, ssopd_cfg.dynamic_weight);
    let mut diagnostics = StepDiagnostics {
        p_hat: group.p_hat(),
        lambda,
        grpo_loss: grpo_value,
        len_plus: None,
        len_minus: None,
        k_minus: None,
        ssopd_loss: None,
        clip_rate: None,
    };
    let mut loss = grpo_value;
    if let Some(pair) = pair {
        if lambda > 0.0 {
            let distill = ssopd_prompt_loss(task, &pair, teacher, student, ssopd_cfg)?;
            loss += lambda * distill.loss;
            for (g, d) in grad.iter_mut().zip(&distill.grad) {
                *g += lambda * d;
            }
            diagnostics.len_plus = Some(pair.y_plus.stop_time());
            diagnostics.len_minus = Some(pair.y_minus.stop_time());
            diagnostics.k_minus = Some(distill.k_minus);
            diagnostics.ssopd_loss = Some(distill.loss);
            diagnostics.clip_rate = Some(distill.clip_rate);
        }
    } else {
        debug_assert_eq!(lambda, 0.0, "pure group must have zero frontier weight");
    }
    Ok(PromptStep {
        loss,
        grad,
        diagnostics,
    })
}
