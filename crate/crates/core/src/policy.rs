//! Featurized softmax policies over sampleable tokens.
//!
//! A context is a prompt, an optional hint block (a witness completion
//! wrapped in delimiters), and the generated prefix. Contexts are featurized
//! into sparse indicator vectors:
//!
//! - a bias indicator,
//! - the identities of the last `k` tokens of prompt + prefix (the hint
//!   block is deliberately excluded from this window, so a hinted and an
//!   unhinted context differ only in hint-derived coordinates),
//! - a hinted-context flag,
//! - for hinted contexts, the identity of the witness token at the position
//!   aligned with the current prefix length, while one exists.
//!
//! Action logits are sums of per-feature weight rows; probabilities are the
//! softmax over ordinary tokens plus eos. Hint delimiters are simply not
//! part of the action space, so no policy can ever emit one. The score
//! function of the softmax is analytic: d log p(a) / d w[f, b] =
//! phi_f * (1{b = a} - p(b)), which is what every loss gradient in this
//! crate is assembled from.

use crate::env::{Completion, EnvSpec, TaskInstance, Token};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

/// Conditioning context for one generation step.
///
/// The flattened token view is `prompt ++ [hint_open] ++ hint ++
/// [hint_close] ++ prefix` when a hint is present, with exactly one hint
/// block by construction.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Context {
    pub prompt: Vec<Token>,
    /// Witness tokens shown to a teacher, without delimiters.
    pub hint: Option<Vec<Token>>,
    pub prefix: Vec<Token>,
}

impl Context {
    pub fn unhinted(prompt: Vec<Token>, prefix: Vec<Token>) -> Self {
        Self {
            prompt,
            hint: None,
            prefix,
        }
    }

    pub fn hinted(prompt: Vec<Token>, hint: Vec<Token>, prefix: Vec<Token>) -> Self {
        Self {
            prompt,
            hint: Some(hint),
            prefix,
        }
    }

    pub fn is_hinted(&self) -> bool {
        self.hint.is_some()
    }

    /// Length of the flattened token sequence, delimiters included.
    pub fn flat_len(&self) -> usize {
        self.prompt.len()
            + self.prefix.len()
            + self.hint.as_ref().map_or(0, |h| h.len() + 2)
    }

    /// Flattened token sequence with hint delimiters inserted.
    pub fn flat_tokens(&self, spec: &EnvSpec) -> Vec<Token> {
        let mut out = Vec::with_capacity(self.flat_len());
        out.extend_from_slice(&self.prompt);
        if let Some(hint) = &self.hint {
            out.push(spec.hint_open);
            out.extend_from_slice(hint);
            out.push(spec.hint_close);
        }
        out.extend_from_slice(&self.prefix);
        out
    }
}

/// Sparse indicator feature vector: the sorted indices of active features.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FeatureVector {
    pub active: Vec<usize>,
}

/// Total number of features for a given spec and window size `k`:
/// bias + k token-identity slots + hinted flag + witness-alignment slot.
pub fn feature_count(spec: &EnvSpec, feature_order: usize) -> usize {
    2 + (feature_order + 1) * spec.token_space()
}

/// Featurizes a context. See the module docs for the layout; indices are
/// `0` (bias), `1 + j*T + tok` (j-th token back in prompt + prefix),
/// `1 + k*T` (hinted flag), `2 + k*T + tok` (aligned witness token), with
/// `T` the full token id space.
pub fn featurize(spec: &EnvSpec, feature_order: usize, ctx: &Context) -> FeatureVector {
    let t_space = spec.token_space();
    let mut active = Vec::with_capacity(feature_order + 3);
    active.push(0);
    // The window runs over prompt + prefix only: hint blocks must not shift
    // what the policy sees, or hinted and unhinted contexts would stop being
    // comparable coordinate by coordinate.
    let window_len = self::window_len(ctx);
    for j in 0..feature_order.min(window_len) {
        let tok = window_token(ctx, window_len - 1 - j);
        active.push(1 + j * t_space + tok as usize);
    }
    if let Some(hint) = &ctx.hint {
        active.push(1 + feature_order * t_space);
        if let Some(&tok) = hint.get(ctx.prefix.len()) {
            active.push(2 + feature_order * t_space + tok as usize);
        }
    }
    active.sort_unstable();
    FeatureVector { active }
}

fn window_len(ctx: &Context) -> usize {
    ctx.prompt.len() + ctx.prefix.len()
}

fn window_token(ctx: &Context, pos: usize) -> Token {
    if pos < ctx.prompt.len() {
        ctx.prompt[pos]
    } else {
        ctx.prefix[pos - ctx.prompt.len()]
    }
}

/// Probabilities and log-probabilities over the sampleable actions
/// (ordinary tokens `0..vocab_size`, then eos), always at temperature 1.
#[derive(Debug, Clone, PartialEq)]
pub struct ActionDistribution {
    pub probs: Vec<f64>,
    pub logprobs: Vec<f64>,
}

impl ActionDistribution {
    /// Stable softmax of raw logits.
    pub fn from_logits(logits: &[f64]) -> Self {
        assert!(
            logits.iter().all(|l| l.is_finite()),
            "non-finite logits: {logits:?}"
        );
        let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let log_z = logits.iter().map(|l| (l - max).exp()).sum::<f64>().ln() + max;
        let logprobs: Vec<f64> = logits.iter().map(|l| l - log_z).collect();
        let probs = logprobs.iter().map(|lp| lp.exp()).collect();
        Self { probs, logprobs }
    }

    /// Wraps explicit probabilities (e.g. an exact posterior). Zero-mass
    /// entries get log-probability negative infinity.
    pub fn from_probs(probs: Vec<f64>) -> Self {
        debug_assert!(
            (probs.iter().sum::<f64>() - 1.0).abs() < 1e-9,
            "probabilities do not sum to 1"
        );
        let logprobs = probs.iter().map(|&p| p.ln()).collect();
        Self { probs, logprobs }
    }

    pub fn uniform(n: usize) -> Self {
        Self::from_probs(vec![1.0 / n as f64; n])
    }

    pub fn num_actions(&self) -> usize {
        self.probs.len()
    }

    /// Probability of an arbitrary token id; exactly zero for anything
    /// outside the action space, hint delimiters included.
    pub fn prob_of(&self, tok: Token) -> f64 {
        self.probs.get(tok as usize).copied().unwrap_or(0.0)
    }

    /// Inverse-CDF sample.
    pub fn sample(&self, rng: &mut impl Rng) -> usize {
        let u: f64 = rng.gen();
        let mut acc = 0.0;
        for (a, &p) in self.probs.iter().enumerate() {
            acc += p;
            if u < acc {
                return a;
            }
        }
        self.probs.len() - 1
    }

    /// Lowest-index action of maximal probability.
    pub fn argmax(&self) -> usize {
        let mut best = 0;
        for (a, &p) in self.probs.iter().enumerate() {
            if p > self.probs[best] {
                best = a;
            }
        }
        best
    }

    /// Expectation of a per-action value vector.
    pub fn expectation(&self, values: &[f64]) -> f64 {
        self.probs
            .iter()
            .zip(values)
            .map(|(&p, &v)| p * v)
            .sum()
    }

    /// Exact forward KL divergence to `other` over the full action space.
    /// Zero-mass terms contribute zero.
    pub fn kl_to(&self, other: &ActionDistribution) -> f64 {
        self.probs
            .iter()
            .zip(&self.logprobs)
            .zip(&other.logprobs)
            .filter(|((p, _), _)| **p > 0.0)
            .map(|((&p, &lp), &lq)| p * (lp - lq))
            .sum()
    }
}

/// Weights of a featurized softmax policy, stored as a flat row-major
/// `[feature][action]` array.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyParams {
    /// Context window size `k` of the featurizer.
    pub feature_order: usize,
    /// Ordinary-token count of the environment the policy is shaped for.
    pub vocab_size: u32,
    /// Seed recorded at initialization, for provenance.
    pub seed: u64,
    /// `feature_count * num_actions` weights, row-major by feature.
    pub weights: Vec<f64>,
}

impl PolicyParams {
    /// All-zero weights: the uniform policy in every context.
    pub fn zeros(spec: &EnvSpec, feature_order: usize, seed: u64) -> Self {
        let n = feature_count(spec, feature_order) * spec.num_actions();
        Self {
            feature_order,
            vocab_size: spec.vocab_size,
            seed,
            weights: vec![0.0; n],
        }
    }

    /// Gaussian-initialized weights with the given scale.
    pub fn random(spec: &EnvSpec, feature_order: usize, scale: f64, seed: u64) -> Self {
        let mut params = Self::zeros(spec, feature_order, seed);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for w in &mut params.weights {
            let z: f64 = StandardNormal.sample(&mut rng);
            *w = scale * z;
        }
        params
    }

    /// Zero weights except a diagonal block on the witness-alignment
    /// features: in a hinted context the logit of the witness's aligned
    /// token is raised by `strength`. Unhinted behavior stays uniform, so
    /// this is a policy that knows how to follow a hint and nothing else.
    pub fn hint_following(spec: &EnvSpec, feature_order: usize, strength: f64, seed: u64) -> Self {
        let mut params = Self::zeros(spec, feature_order, seed);
        let align_base = 2 + feature_order * spec.token_space();
        for a in 0..spec.num_actions() {
            let f = align_base + a;
            let idx = f * spec.num_actions() + a;
            params.weights[idx] = strength;
        }
        params
    }

    pub fn num_actions(&self) -> usize {
        self.vocab_size as usize + 1
    }

    pub fn num_features(&self) -> usize {
        self.weights.len() / self.num_actions()
    }

    pub fn weight(&self, feature: usize, action: usize) -> f64 {
        self.weights[feature * self.num_actions() + action]
    }

    pub fn set_weight(&mut self, feature: usize, action: usize, value: f64) {
        let a = self.num_actions();
        self.weights[feature * a + action] = value;
    }

    /// Raw action logits in a context.
    pub fn logits(&self, spec: &EnvSpec, ctx: &Context) -> Vec<f64> {
        debug_assert_eq!(spec.vocab_size, self.vocab_size, "policy/env shape mismatch");
        let actions = self.num_actions();
        let features = featurize(spec, self.feature_order, ctx);
        let mut logits = vec![0.0; actions];
        for &f in &features.active {
            let row = &self.weights[f * actions..(f + 1) * actions];
            for (l, w) in logits.iter_mut().zip(row) {
                *l += w;
            }
        }
        logits
    }

    /// Temperature-1 action distribution in a context. This is the
    /// distribution every loss in the crate is defined on; sampling
    /// temperature only ever applies inside [`sample_completion`].
    pub fn distribution(&self, spec: &EnvSpec, ctx: &Context) -> ActionDistribution {
        ActionDistribution::from_logits(&self.logits(spec, ctx))
    }

    /// Deep copy used for behavior and teacher snapshots: later updates to
    /// the live parameters never reach through.
    pub fn snapshot(&self) -> Self {
        self.clone()
    }
}

/// Gradient of a scalar with respect to policy weights, stored sparsely as
/// `(flat weight index, value)` pairs in deterministic order.
#[derive(Debug, Clone, Default)]
pub struct SparseGrad {
    pub entries: Vec<(usize, f64)>,
}

impl SparseGrad {
    /// Accumulates `scale * self` into a dense gradient buffer.
    pub fn add_into(&self, out: &mut [f64], scale: f64) {
        for &(idx, val) in &self.entries {
            out[idx] += scale * val;
        }
    }
}

/// Analytic score function: gradient of `log p(action | ctx)` with respect
/// to the weights. For every active feature `f` and action `b` the entry is
/// `1{b = action} - p(b)`.
pub fn logprob_gradient(
    params: &PolicyParams,
    spec: &EnvSpec,
    ctx: &Context,
    action: usize,
) -> SparseGrad {
    let dist = params.distribution(spec, ctx);
    logprob_gradient_with(params, spec, ctx, action, &dist)
}

/// [`logprob_gradient`] reusing an already computed distribution.
pub fn logprob_gradient_with(
    params: &PolicyParams,
    spec: &EnvSpec,
    ctx: &Context,
    action: usize,
    dist: &ActionDistribution,
) -> SparseGrad {
    let actions = params.num_actions();
    let features = featurize(spec, params.feature_order, ctx);
    let mut entries = Vec::with_capacity(features.active.len() * actions);
    for &f in &features.active {
        for (b, &p) in dist.probs.iter().enumerate() {
            let indicator = if b == action { 1.0 } else { 0.0 };
            entries.push((f * actions + b, indicator - p));
        }
    }
    SparseGrad { entries }
}

/// Samples one completion for a task: tokens are drawn from the tempered
/// softmax until eos or the horizon, and the *temperature-1*
/// log-probability of each chosen token is recorded as the behavior
/// log-probability (losses are defined on untempered distributions, so a
/// student equal to the behavior snapshot must reproduce ratio 1 exactly).
pub fn sample_completion(
    params: &PolicyParams,
    task: &TaskInstance,
    temperature: f64,
    rng: &mut impl Rng,
) -> Completion {
    let spec = &task.spec;
    let mut tokens: Vec<Token> = Vec::new();
    let mut token_logprobs = Vec::new();
    while (tokens.len() as u32) < spec.horizon {
        let ctx = Context::unhinted(task.prompt.clone(), tokens.clone());
        let logits = params.logits(spec, &ctx);
        let untempered = ActionDistribution::from_logits(&logits);
        let action = if (temperature - 1.0).abs() < 1e-12 {
            untempered.sample(rng)
        } else {
            let tempered: Vec<f64> = logits.iter().map(|l| l / temperature).collect();
            ActionDistribution::from_logits(&tempered).sample(rng)
        };
        tokens.push(action as Token);
        token_logprobs.push(untempered.logprobs[action]);
        if action as Token == spec.eos_token {
            break;
        }
    }
    let reward = if task
        .verify(&tokens)
        .expect("sampled tokens never contain hint delimiters")
    {
        1.0
    } else {
        0.0
    };
    Completion {
        tokens,
        reward,
        token_logprobs,
    }
}
