//! Group relative policy optimization.
//!
//! A group of G completions is sampled per prompt from a frozen behavior
//! snapshot. Rewards are normalized within the group,
//!
//! ```text
//! A_i = (r_i - mean(r)) / (std(r) + epsilon_r)
//! ```
//!
//! with population (1/G) variance, and the per-token clipped surrogate is
//! averaged first over tokens within a completion, then over the group:
//!
//! ```text
//! L = (1/G) sum_i (1/tau_i) sum_t [ -min(w A_i, clip(w, 1-e, 1+e) A_i)
//!                                   + beta * KL(p_theta || p_ref) ]
//! ```
//!
//! where `w` is the ratio of the student's temperature-1 probability to the
//! recorded behavior probability and the KL term is computed exactly over
//! the full action space. Gradients flow through `w` (zero on the clipped
//! branch) and through the KL term; advantages are treated as constants.

use crate::env::{Completion, TaskInstance, Token};
use crate::policy::{featurize, ActionDistribution, Context, PolicyParams};
use serde::{Deserialize, Serialize};

/// Errors raised by group construction and loss evaluation.
#[derive(Debug, thiserror::Error)]
pub enum GrpoError {
    #[error("invalid GRPO config: {0}")]
    InvalidConfig(String),
    #[error("rollout group is empty")]
    EmptyGroup,
    #[error("completion {index} has no recorded behavior log-probabilities")]
    MissingBehaviorLogProbs { index: usize },
    #[error("position {position} is outside completion of length {len}")]
    PositionOutOfRange { position: usize, len: usize },
}

/// Surrogate-loss hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GrpoConfig {
    /// Completions sampled per prompt.
    pub group_size: usize,
    /// Variance floor in the advantage denominator.
    pub epsilon_r: f64,
    /// Half-width of the ratio clip band `[1 - clip_eps, 1 + clip_eps]`.
    pub clip_eps: f64,
    /// Weight of the exact KL penalty against the reference policy.
    pub beta: f64,
}

impl Default for GrpoConfig {
    fn default() -> Self {
        Self {
            group_size: 8,
            epsilon_r: 1e-6,
            clip_eps: 0.2,
            beta: 0.0,
        }
    }
}

impl GrpoConfig {
    pub fn validate(&self) -> Result<(), GrpoError> {
        if self.group_size < 2 {
            return Err(GrpoError::InvalidConfig(
                "group_size must be at least 2".into(),
            ));
        }
        if !(self.epsilon_r > 0.0) {
            return Err(GrpoError::InvalidConfig(
                "epsilon_r must be positive".into(),
            ));
        }
        if !(self.clip_eps > 0.0 && self.clip_eps < 1.0) {
            return Err(GrpoError::InvalidConfig(
                "clip_eps must lie in (0, 1)".into(),
            ));
        }
        if self.beta < 0.0 {
            return Err(GrpoError::InvalidConfig("beta must be nonnegative".into()));
        }
        Ok(())
    }
}

/// Group-normalized advantages with a variance floor. Population (1/G)
/// variance; binary rewards are expected but any values work.
pub fn advantages(rewards: &[f64], epsilon_r: f64) -> Vec<f64> {
    let (mean, std) = reward_stats(rewards);
    rewards.iter().map(|&r| (r - mean) / (std + epsilon_r)).collect()
}

fn reward_stats(rewards: &[f64]) -> (f64, f64) {
    let g = rewards.len() as f64;
    let mean = rewards.iter().sum::<f64>() / g;
    let var = rewards.iter().map(|&r| (r - mean) * (r - mean)).sum::<f64>() / g;
    (mean, var.sqrt())
}

/// A prompt's sampled completions with group-normalized advantages.
#[derive(Debug, Clone)]
pub struct RolloutGroup {
    pub prompt: Vec<Token>,
    pub completions: Vec<Completion>,
    pub rewards: Vec<f64>,
    pub advantages: Vec<f64>,
    pub group_mean: f64,
    pub group_std: f64,
}

impl RolloutGroup {
    /// Wraps existing completions, computing rewards and advantages.
    pub fn new(
        prompt: Vec<Token>,
        completions: Vec<Completion>,
        epsilon_r: f64,
    ) -> Result<Self, GrpoError> {
        if completions.is_empty() {
            return Err(GrpoError::EmptyGroup);
        }
        let rewards: Vec<f64> = completions.iter().map(|c| c.reward).collect();
        let (group_mean, group_std) = reward_stats(&rewards);
        let advantages = advantages(&rewards, epsilon_r);
        Ok(Self {
            prompt,
            completions,
            rewards,
            advantages,
            group_mean,
            group_std,
        })
    }

    /// Samples a fresh group from the behavior policy.
    pub fn sample(
        behavior: &PolicyParams,
        task: &TaskInstance,
        cfg: &GrpoConfig,
        temperature: f64,
        rng: &mut impl rand::Rng,
    ) -> Self {
        let completions = (0..cfg.group_size)
            .map(|_| crate::policy::sample_completion(behavior, task, temperature, rng))
            .collect();
        Self::new(task.prompt.clone(), completions, cfg.epsilon_r)
            .expect("group_size >= 2 completions")
    }

    /// Empirical success rate of the group.
    pub fn p_hat(&self) -> f64 {
        self.group_mean
    }

    /// True when the group contains both correct and wrong completions.
    pub fn is_mixed(&self) -> bool {
        self.rewards.contains(&1.0) && self.rewards.contains(&0.0)
    }
}

/// Importance ratio of the student to the behavior snapshot at one position
/// of a completion, from recorded behavior log-probabilities.
pub fn policy_ratio(
    student: &PolicyParams,
    task: &TaskInstance,
    completion: &Completion,
    position: usize,
) -> Result<f64, GrpoError> {
    if position >= completion.tokens.len() {
        return Err(GrpoError::PositionOutOfRange {
            position,
            len: completion.tokens.len(),
        });
    }
    if completion.token_logprobs.len() != completion.tokens.len() {
        return Err(GrpoError::MissingBehaviorLogProbs { index: 0 });
    }
    let ctx = Context::unhinted(
        task.prompt.clone(),
        completion.tokens[..position].to_vec(),
    );
    let lp = student.distribution(&task.spec, &ctx).logprobs[completion.tokens[position] as usize];
    Ok((lp - completion.token_logprobs[position]).exp())
}

/// Token-averaged clipped surrogate over a group, with the optional exact
/// KL penalty. Returns the scalar loss and its dense gradient with respect
/// to the student weights.
pub fn grpo_loss(
    task: &TaskInstance,
    group: &RolloutGroup,
    student: &PolicyParams,
    reference: &PolicyParams,
    cfg: &GrpoConfig,
) -> Result<(f64, Vec<f64>), GrpoError> {
    cfg.validate()?;
    if group.completions.is_empty() {
        return Err(GrpoError::EmptyGroup);
    }
    debug_assert_eq!(group.prompt, task.prompt, "group sampled for another prompt");
    let spec = &task.spec;
    let actions = student.num_actions();
    let g = group.completions.len() as f64;
    let mut loss = 0.0;
    let mut grad = vec![0.0; student.weights.len()];

    for (i, comp) in group.completions.iter().enumerate() {
        if comp.token_logprobs.len() != comp.tokens.len() {
            return Err(GrpoError::MissingBehaviorLogProbs { index: i });
        }
        let adv = group.advantages[i];
        let inv = 1.0 / (g * comp.stop_time() as f64);
        for (t, &tok) in comp.tokens.iter().enumerate() {
            let ctx = Context::unhinted(task.prompt.clone(), comp.tokens[..t].to_vec());
            let feats = featurize(spec, student.feature_order, &ctx);
            let dist = ActionDistribution::from_logits(&student.logits(spec, &ctx));
            let action = tok as usize;
            let omega = (dist.logprobs[action] - comp.token_logprobs[t]).exp();
            let clipped = omega.clamp(1.0 - cfg.clip_eps, 1.0 + cfg.clip_eps);
            let unclipped_surr = omega * adv;
            let clipped_surr = clipped * adv;
            // min() selects the pessimistic surrogate; gradient only flows
            // when the unclipped branch is the minimum (flat when clipped).
            let (token_loss, score_coef) = if unclipped_surr <= clipped_surr {
                (-unclipped_surr, -adv * omega)
            } else {
                (-clipped_surr, 0.0)
            };
            loss += inv * token_loss;

            let (kl, kl_active) = if cfg.beta != 0.0 {
                let ref_dist = reference.distribution(spec, &ctx);
                let kl = dist.kl_to(&ref_dist);
                loss += inv * cfg.beta * kl;
                // d KL / d w[f, b] = phi_f * p(b) * (log p(b) - log q(b) - KL)
                let gaps: Vec<f64> = dist
                    .logprobs
                    .iter()
                    .zip(&ref_dist.logprobs)
                    .map(|(&lp, &lq)| lp - lq)
                    .collect();
                (gaps, true)
            } else {
                (Vec::new(), false)
            };

            if score_coef != 0.0 || kl_active {
                for &f in &feats.active {
                    let row = f * actions;
                    for (b, &p) in dist.probs.iter().enumerate() {
                        let mut d = 0.0;
                        if score_coef != 0.0 {
                            let indicator = if b == action { 1.0 } else { 0.0 };
                            d += score_coef * (indicator - p);
                        }
                        if kl_active {
                            let kl_total: f64 = dist.expectation(&kl);
                            d += cfg.beta * p * (kl[b] - kl_total);
                        }
                        grad[row + b] += inv * d;
                    }
                }
            }
        }
    }
    Ok((loss, grad))
}
