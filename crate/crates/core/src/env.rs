//! Finite token MDP with verifiable tasks.
//!
//! An episode starts from a task prompt and generates tokens one at a time
//! until the end-of-sequence token is emitted or the horizon is reached. A
//! binary verifier scores the finished sequence. Two task families are
//! provided:
//!
//! - `modular_sum`: the completion must terminate with eos before the
//!   horizon and the values of its ordinary tokens must sum to a target
//!   residue modulo `m`. Token values are the token identifiers themselves.
//! - `subsequence_lock`: a secret token sequence must appear, in order (not
//!   necessarily contiguously), anywhere in the completion.
//!
//! Hint delimiters live in the same token id space as ordinary tokens but
//! are never part of the sampling support; the verifier rejects sequences
//! containing them outright so a hint block can never leak into scoring.
//!
//! The whole completion space of a task is small enough to enumerate
//! exhaustively at this scale, which is what the exact oracles build on.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// Token identifier. Ordinary tokens occupy `0..vocab_size`; eos and the two
/// hint delimiters sit directly above them.
pub type Token = u32;

/// Default cap on `vocab_size^max_len` when enumerating a completion space.
pub const DEFAULT_ENUMERATION_BUDGET: u64 = 10_000_000;

/// Errors raised by task construction, verification, and enumeration.
#[derive(Debug, thiserror::Error)]
pub enum EnvError {
    /// Environment dimensions that do not describe a valid token MDP.
    #[error("invalid environment spec: {0}")]
    InvalidSpec(String),
    /// Family parameters outside their documented ranges.
    #[error("invalid task parameters: {0}")]
    InvalidParams(String),
    /// No completion within the horizon can satisfy the verifier.
    #[error("no solvable completion within horizon {horizon}: {reason}")]
    Unsolvable { horizon: u32, reason: String },
    /// A hint delimiter appeared in a sequence offered for verification.
    #[error("hint delimiter token {token} present in sequence offered to the verifier")]
    HintDelimiterInSequence { token: Token },
    /// The completion space is too large to enumerate.
    #[error("enumeration of {leaves} leaves exceeds budget {budget}")]
    EnumerationBudgetExceeded { leaves: u128, budget: u64 },
}

/// Dimensions and reserved token identifiers of a token MDP.
///
/// Construct with [`EnvSpec::new`], which lays the reserved tokens out
/// contiguously above the ordinary range: `eos = vocab_size`,
/// `hint_open = vocab_size + 1`, `hint_close = vocab_size + 2`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EnvSpec {
    /// Number of ordinary (content) tokens, with identifiers `0..vocab_size`.
    pub vocab_size: u32,
    /// Maximum generated length in tokens; episodes stop here without eos.
    pub horizon: u32,
    /// Token that ends generation. Sampleable, but not ordinary.
    pub eos_token: Token,
    /// Opening hint delimiter. Never sampleable.
    pub hint_open: Token,
    /// Closing hint delimiter. Never sampleable.
    pub hint_close: Token,
}

impl EnvSpec {
    /// Canonical layout: ordinary tokens `0..vocab_size`, then eos and the
    /// two hint delimiters. Requires at least one ordinary token (so the
    /// sampling support has at least two entries) and a positive horizon.
    pub fn new(vocab_size: u32, horizon: u32) -> Result<Self, EnvError> {
        if vocab_size < 1 {
            return Err(EnvError::InvalidSpec(
                "vocab_size must be at least 1".into(),
            ));
        }
        if horizon < 1 {
            return Err(EnvError::InvalidSpec("horizon must be at least 1".into()));
        }
        Ok(Self {
            vocab_size,
            horizon,
            eos_token: vocab_size,
            hint_open: vocab_size + 1,
            hint_close: vocab_size + 2,
        })
    }

    /// Number of sampleable actions: every ordinary token plus eos.
    pub fn num_actions(&self) -> usize {
        self.vocab_size as usize + 1
    }

    /// One past the largest reserved token id; the size of the full token
    /// id space used for feature indexing.
    pub fn token_space(&self) -> usize {
        self.hint_close as usize + 1
    }

    /// True for content tokens `0..vocab_size`.
    pub fn is_ordinary(&self, tok: Token) -> bool {
        tok < self.vocab_size
    }

    /// True for tokens the policy may emit: ordinary tokens and eos.
    pub fn is_sampleable(&self, tok: Token) -> bool {
        self.is_ordinary(tok) || tok == self.eos_token
    }

    /// True for the two hint delimiters.
    pub fn is_hint_delimiter(&self, tok: Token) -> bool {
        tok == self.hint_open || tok == self.hint_close
    }
}

/// Task family tag.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskFamily {
    ModularSum,
    SubsequenceLock,
}

impl std::fmt::Display for TaskFamily {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            TaskFamily::ModularSum => write!(f, "modular_sum"),
            TaskFamily::SubsequenceLock => write!(f, "subsequence_lock"),
        }
    }
}

/// Size parameters accepted by [`make_task`]. Optional fields are drawn
/// deterministically from the task seed when absent.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "family", content = "size", rename_all = "snake_case")]
pub enum SizeParams {
    /// `2 <= modulus <= vocab_size`; `target < modulus` when given.
    ModularSum { modulus: u32, target: Option<u32> },
    /// `1 <= secret_len <= horizon`; explicit secrets must be ordinary tokens.
    SubsequenceLock {
        secret_len: usize,
        secret: Option<Vec<Token>>,
    },
}

/// Resolved verifier parameters of a concrete task.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "family", content = "params", rename_all = "snake_case")]
pub enum VerifierParams {
    ModularSum { modulus: u32, target: u32 },
    SubsequenceLock { secret: Vec<Token> },
}

impl VerifierParams {
    pub fn family(&self) -> TaskFamily {
        match self {
            VerifierParams::ModularSum { .. } => TaskFamily::ModularSum,
            VerifierParams::SubsequenceLock { .. } => TaskFamily::SubsequenceLock,
        }
    }
}

/// A concrete prompt with its verifier and a known-good reference solution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskInstance {
    /// Environment the task lives in.
    pub spec: EnvSpec,
    /// Verifier parameters, tagged with the family name on the wire.
    #[serde(flatten)]
    pub params: VerifierParams,
    /// Prompt tokens encoding the task parameters.
    pub prompt: Vec<Token>,
    /// Seed the task was generated from.
    pub seed: u64,
    /// A completion that verifies to 1, used by reference-based baselines.
    pub reference_solution: Vec<Token>,
}

impl TaskInstance {
    pub fn family(&self) -> TaskFamily {
        self.params.family()
    }

    /// Short human-readable identity, used in diagnostics and error reports.
    /// Deliberately free of commas and whitespace so it can sit unquoted in a
    /// CSV field.
    pub fn digest(&self) -> String {
        let toks: Vec<String> = self.prompt.iter().map(|t| t.to_string()).collect();
        format!("{}-{}", self.family(), toks.join("."))
    }

    /// Binary verdict on a finished sequence.
    ///
    /// Errors if a hint delimiter is present: hint blocks are context for
    /// the teacher, never part of a scored completion.
    pub fn verify(&self, tokens: &[Token]) -> Result<bool, EnvError> {
        if let Some(&tok) = tokens.iter().find(|&&t| self.spec.is_hint_delimiter(t)) {
            return Err(EnvError::HintDelimiterInSequence { token: tok });
        }
        Ok(self.verify_raw(tokens))
    }

    /// Verifier core; assumes no hint delimiters are present.
    fn verify_raw(&self, tokens: &[Token]) -> bool {
        match &self.params {
            VerifierParams::ModularSum { modulus, target } => {
                // Must terminate with eos; everything before it must be
                // ordinary. Horizon-stopped sequences therefore score 0.
                match tokens.split_last() {
                    Some((&last, body)) if last == self.spec.eos_token => {
                        if !body.iter().all(|&t| self.spec.is_ordinary(t)) {
                            return false;
                        }
                        let sum: u64 = body.iter().map(|&t| t as u64).sum();
                        sum % (*modulus as u64) == *target as u64
                    }
                    _ => false,
                }
            }
            VerifierParams::SubsequenceLock { secret } => {
                let mut need = secret.iter();
                let mut next = need.next();
                for &tok in tokens {
                    match next {
                        Some(&want) if want == tok => next = need.next(),
                        Some(_) => {}
                        None => break,
                    }
                }
                next.is_none()
            }
        }
    }
}

/// A finished generated sequence with its reward and the behavior policy's
/// per-token log-probabilities recorded at sampling time.
///
/// The stopping time `tau` is the sequence length including the terminal
/// eos when present; sequences without eos stopped at the horizon.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Completion {
    pub tokens: Vec<Token>,
    /// Reward in {0, 1}, always equal to the verifier's verdict.
    pub reward: f64,
    /// Temperature-1 log-probabilities of each token under the behavior
    /// policy at sampling time. Empty for hand-built completions.
    pub token_logprobs: Vec<f64>,
}

impl Completion {
    /// Builds a completion from raw tokens, scoring it with the task
    /// verifier. No behavior log-probabilities are recorded.
    pub fn from_tokens(task: &TaskInstance, tokens: Vec<Token>) -> Result<Self, EnvError> {
        let reward = if task.verify(&tokens)? { 1.0 } else { 0.0 };
        Ok(Self {
            tokens,
            reward,
            token_logprobs: Vec::new(),
        })
    }

    /// Stopping time: number of generated tokens including the terminal eos.
    pub fn stop_time(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_correct(&self) -> bool {
        self.reward == 1.0
    }

    /// Sequence-average behavior log-probability (total over tokens divided
    /// by the stopping time). Used by witness selection rules.
    pub fn avg_logprob(&self) -> f64 {
        if self.token_logprobs.is_empty() {
            return f64::NAN;
        }
        self.token_logprobs.iter().sum::<f64>() / self.token_logprobs.len() as f64
    }
}

/// Builds a task deterministically from `(size, seed)`: the same arguments
/// always produce the same instance, byte for byte.
pub fn make_task(spec: &EnvSpec, size: &SizeParams, seed: u64) -> Result<TaskInstance, EnvError> {
    match size {
        SizeParams::ModularSum { modulus, target } => {
            let m = *modulus;
            if m < 2 || m > spec.vocab_size {
                return Err(EnvError::InvalidParams(format!(
                    "modulus {m} outside 2..=vocab_size ({})",
                    spec.vocab_size
                )));
            }
            let t = match target {
                Some(t) if *t < m => *t,
                Some(t) => {
                    return Err(EnvError::InvalidParams(format!(
                        "target {t} not below modulus {m}"
                    )));
                }
                None => task_rng(seed, &[1, m as u8]).gen_range(0..m),
            };
            // Shortest solution: eos alone for target 0, else the single
            // token whose value is the target followed by eos.
            let reference_solution = if t == 0 {
                vec![spec.eos_token]
            } else {
                if spec.horizon < 2 {
                    return Err(EnvError::Unsolvable {
                        horizon: spec.horizon,
                        reason: format!("nonzero target {t} needs at least two tokens"),
                    });
                }
                vec![t, spec.eos_token]
            };
            Ok(TaskInstance {
                spec: *spec,
                params: VerifierParams::ModularSum {
                    modulus: m,
                    target: t,
                },
                prompt: vec![m - 1, t],
                seed,
                reference_solution,
            })
        }
        SizeParams::SubsequenceLock { secret_len, secret } => {
            let len = *secret_len;
            if len < 1 {
                return Err(EnvError::InvalidParams(
                    "secret_len must be at least 1".into(),
                ));
            }
            let secret = match secret {
                Some(s) => {
                    if s.len() != len {
                        return Err(EnvError::InvalidParams(format!(
                            "explicit secret length {} != secret_len {len}",
                            s.len()
                        )));
                    }
                    if let Some(&bad) = s.iter().find(|&&t| !spec.is_ordinary(t)) {
                        return Err(EnvError::InvalidParams(format!(
                            "secret token {bad} is not ordinary"
                        )));
                    }
                    s.clone()
                }
                None => {
                    let mut rng = task_rng(seed, &[2, len as u8]);
                    (0..len).map(|_| rng.gen_range(0..spec.vocab_size)).collect()
                }
            };
            // The verifier does not require eos, so a secret exactly filling
            // the horizon is still solvable by a horizon-stopped sequence.
            let reference_solution = if (len as u32) < spec.horizon {
                let mut r = secret.clone();
                r.push(spec.eos_token);
                r
            } else if len as u32 == spec.horizon {
                secret.clone()
            } else {
                return Err(EnvError::Unsolvable {
                    horizon: spec.horizon,
                    reason: format!("secret of length {len} cannot fit"),
                });
            };
            Ok(TaskInstance {
                spec: *spec,
                params: VerifierParams::SubsequenceLock {
                    secret: secret.clone(),
                },
                prompt: secret,
                seed,
                reference_solution,
            })
        }
    }
}

/// Seeded RNG whose stream depends on both the seed and a family tag, so
/// different parameter draws never share a stream.
fn task_rng(seed: u64, tag: &[u8]) -> ChaCha8Rng {
    let mut key = [0u8; 32];
    key[..8].copy_from_slice(&seed.to_le_bytes());
    for (i, &b) in tag.iter().enumerate().take(24) {
        key[8 + i] ^= b;
    }
    ChaCha8Rng::from_seed(key)
}

/// Exhaustive enumeration of every completion of length at most `max_len`:
/// sequences of ordinary tokens terminated by eos, plus all-ordinary
/// sequences of exactly `max_len` (forced stops). Each completion is yielded
/// exactly once, depth first, with eos explored before ordinary tokens.
pub fn enumerate_completions(
    task: &TaskInstance,
    max_len: usize,
) -> Result<CompletionEnumerator<'_>, EnvError> {
    enumerate_completions_budgeted(task, max_len, DEFAULT_ENUMERATION_BUDGET)
}

/// [`enumerate_completions`] with an explicit leaf budget on
/// `vocab_size^max_len`.
pub fn enumerate_completions_budgeted(
    task: &TaskInstance,
    max_len: usize,
    budget: u64,
) -> Result<CompletionEnumerator<'_>, EnvError> {
    if max_len < 1 {
        return Err(EnvError::InvalidParams("max_len must be at least 1".into()));
    }
    let leaves = (task.spec.vocab_size as u128)
        .checked_pow(max_len as u32)
        .unwrap_or(u128::MAX);
    if leaves > budget as u128 {
        return Err(EnvError::EnumerationBudgetExceeded { leaves, budget });
    }
    Ok(CompletionEnumerator {
        task,
        max_len,
        prefix: Vec::new(),
        cursors: vec![0],
        done: false,
    })
}

/// Single-pass iterator over a task's completion space. See
/// [`enumerate_completions`].
#[derive(Debug)]
pub struct CompletionEnumerator<'a> {
    task: &'a TaskInstance,
    max_len: usize,
    prefix: Vec<Token>,
    /// Per-depth child cursor: 0 is the eos child, `1..=vocab_size` are the
    /// ordinary tokens shifted by one, larger values mean exhausted.
    cursors: Vec<u32>,
    done: bool,
}

impl Iterator for CompletionEnumerator<'_> {
    /// Completion tokens paired with the verifier's verdict.
    type Item = (Vec<Token>, bool);

    fn next(&mut self) -> Option<Self::Item> {
        if self.done {
            return None;
        }
        let spec = &self.task.spec;
        loop {
            let depth = self.prefix.len();
            let cursor = self.cursors[depth];
            if cursor == 0 {
                self.cursors[depth] = 1;
                let mut tokens = self.prefix.clone();
                tokens.push(spec.eos_token);
                let reward = self.task.verify_raw(&tokens);
                return Some((tokens, reward));
            } else if cursor <= spec.vocab_size {
                self.cursors[depth] = cursor + 1;
                let tok = cursor - 1;
                if depth + 1 == self.max_len {
                    let mut tokens = self.prefix.clone();
                    tokens.push(tok);
                    let reward = self.task.verify_raw(&tokens);
                    return Some((tokens, reward));
                }
                self.prefix.push(tok);
                self.cursors.push(0);
            } else if depth == 0 {
                self.done = true;
                return None;
            } else {
                self.prefix.pop();
                self.cursors.pop();
            }
        }
    }
}
