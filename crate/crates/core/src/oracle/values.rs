//! Exact values and desirability posteriors by backward induction.
//!
//! Scores live on terminal sequences. Values propagate up the complete
//! prefix tree:
//!
//! ```text
//! V(s)    = sum_a pi(a|s) * Q(s, a)
//! Q(s, a) = d * (terminal(s + a) ? score(s + a) : V(s + a))
//! ```
//!
//! The per-step discount `d` folds the fast-success deadline `gamma^L`
//! into the recursion one level at a time (`d = 1` for undiscounted
//! scores). Value tables are keyed by decision states: prefixes of
//! ordinary tokens strictly shorter than the horizon.

use super::OracleError;
use crate::env::{Completion, TaskInstance, Token, DEFAULT_ENUMERATION_BUDGET};
use crate::policy::{ActionDistribution, Context, PolicyParams};
use std::collections::BTreeMap;

/// Terminal scoring function for value enumeration.
#[derive(Debug, Clone, PartialEq)]
pub enum DesirabilitySpec {
    /// 1 when the completion verifies, 0 otherwise.
    BinaryReward,
    /// `1{R=1} * gamma^L` for a correct completion stopping after `L`
    /// tokens: success is worth more the sooner it arrives.
    FastSuccess { gamma: f64 },
    /// Arbitrary nonnegative scores per terminal sequence; missing entries
    /// score 0.
    CustomTable { table: BTreeMap<Vec<Token>, f64> },
}

impl DesirabilitySpec {
    pub fn validate(&self) -> Result<(), OracleError> {
        match self {
            DesirabilitySpec::BinaryReward => Ok(()),
            DesirabilitySpec::FastSuccess { gamma } => {
                if *gamma > 0.0 && *gamma < 1.0 {
                    Ok(())
                } else {
                    Err(OracleError::InvalidSpec(format!(
                        "fast-success gamma must lie in (0,1), got {gamma}"
                    )))
                }
            }
            DesirabilitySpec::CustomTable { table } => {
                for (seq, &score) in table {
                    if !score.is_finite() || score < 0.0 {
                        return Err(OracleError::InvalidSpec(format!(
                            "custom score for {seq:?} must be finite and nonnegative, got {score}"
                        )));
                    }
                }
                Ok(())
            }
        }
    }

    /// Discount applied once per tree level so that a terminal at depth `L`
    /// accumulates exactly `gamma^L`.
    fn per_step_discount(&self) -> f64 {
        match self {
            DesirabilitySpec::FastSuccess { gamma } => *gamma,
            _ => 1.0,
        }
    }

    /// Undiscounted score of a finished sequence.
    fn terminal_score(&self, task: &TaskInstance, sequence: &[Token]) -> Result<f64, OracleError> {
        match self {
            DesirabilitySpec::BinaryReward | DesirabilitySpec::FastSuccess { .. } => {
                Ok(if task.verify(sequence)? { 1.0 } else { 0.0 })
            }
            DesirabilitySpec::CustomTable { table } => {
                Ok(table.get(sequence).copied().unwrap_or(0.0))
            }
        }
    }
}

/// Exact state values and action values under a fixed policy.
#[derive(Debug, Clone, PartialEq)]
pub struct ExactValues {
    /// `V(s)` per decision state.
    pub v: BTreeMap<Vec<Token>, f64>,
    /// `Q(s, a)` per decision state, indexed by action id (eos last).
    pub q: BTreeMap<Vec<Token>, Vec<f64>>,
}

impl ExactValues {
    pub fn value(&self, state: &[Token]) -> Result<f64, OracleError> {
        self.v
            .get(state)
            .copied()
            .ok_or_else(|| OracleError::UnknownState(state.to_vec()))
    }

    pub fn q_values(&self, state: &[Token]) -> Result<&[f64], OracleError> {
        self.q
            .get(state)
            .map(|q| q.as_slice())
            .ok_or_else(|| OracleError::UnknownState(state.to_vec()))
    }

    pub fn root_value(&self) -> f64 {
        *self.v.get([].as_slice()).expect("root state is always present")
    }
}

/// Backward induction over the complete prefix tree up to the horizon.
pub fn exact_values(
    task: &TaskInstance,
    policy: &PolicyParams,
    dspec: &DesirabilitySpec,
) -> Result<ExactValues, OracleError> {
    dspec.validate()?;
    let spec = &task.spec;
    let vocab = spec.vocab_size as u128;
    let mut states: u128 = 0;
    let mut level: u128 = 1;
    for _ in 0..spec.horizon {
        states = states
            .checked_add(level)
            .ok_or(OracleError::BudgetExceeded {
                states: u128::MAX,
                budget: DEFAULT_ENUMERATION_BUDGET,
            })?;
        level = level
            .checked_mul(vocab)
            .ok_or(OracleError::BudgetExceeded {
                states: u128::MAX,
                budget: DEFAULT_ENUMERATION_BUDGET,
            })?;
    }
    let visits = states.saturating_mul(spec.num_actions() as u128);
    if visits > DEFAULT_ENUMERATION_BUDGET as u128 {
        return Err(OracleError::BudgetExceeded {
            states: visits,
            budget: DEFAULT_ENUMERATION_BUDGET,
        });
    }
    let mut values = ExactValues {
        v: BTreeMap::new(),
        q: BTreeMap::new(),
    };
    let mut state = Vec::new();
    fill(task, policy, dspec, &mut state, &mut values)?;
    Ok(values)
}

fn fill(
    task: &TaskInstance,
    policy: &PolicyParams,
    dspec: &DesirabilitySpec,
    state: &mut Vec<Token>,
    out: &mut ExactValues,
) -> Result<f64, OracleError> {
    let spec = &task.spec;
    let d = dspec.per_step_discount();
    let ctx = Context::unhinted(task.prompt.clone(), state.clone());
    let dist = policy.distribution(spec, &ctx);
    let mut q = vec![0.0; dist.num_actions()];
    for (a, slot) in q.iter_mut().enumerate() {
        let tok = a as Token;
        state.push(tok);
        let inner = if tok == spec.eos_token || state.len() as u32 == spec.horizon {
            dspec.terminal_score(task, state)?
        } else {
            fill(task, policy, dspec, state, out)?
        };
        state.pop();
        *slot = d * inner;
    }
    let v = dist.expectation(&q);
    out.q.insert(state.clone(), q);
    out.v.insert(state.clone(), v);
    Ok(v)
}

/// The behavior policy reweighted by desirability:
/// `q_phi(a|s) = pi(a|s) * Q(s,a) / V(s)`. Defined only where `V(s) > 0`.
pub fn desirability_posterior(
    policy: &PolicyParams,
    task: &TaskInstance,
    state: &[Token],
    values: &ExactValues,
) -> Result<ActionDistribution, OracleError> {
    let v = values.value(state)?;
    if !(v > 0.0) {
        return Err(OracleError::ZeroValue(state.to_vec()));
    }
    let q = values.q_values(state)?;
    let ctx = Context::unhinted(task.prompt.clone(), state.to_vec());
    let pi = policy.distribution(&task.spec, &ctx);
    let probs = pi
        .probs
        .iter()
        .zip(q)
        .map(|(p, qa)| p * qa / v)
        .collect::<Vec<f64>>();
    Ok(ActionDistribution::from_probs(probs))
}

/// Selection weights of a completion: `w_F = 1{R=1} * gamma^tau` favors
/// short successes, `w_P = 1{R=0} * (1 - gamma^tau)` favors long failures.
pub fn witness_weights(completion: &Completion, gamma: f64) -> (f64, f64) {
    debug_assert!(gamma > 0.0 && gamma < 1.0, "gamma must lie in (0,1)");
    let decay = gamma.powi(completion.stop_time() as i32);
    if completion.is_correct() {
        (decay, 0.0)
    } else {
        (0.0, 1.0 - decay)
    }
}
