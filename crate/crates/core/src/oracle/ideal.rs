//! The idealized stopping-time objective the empirical distillation loss
//! approximates.
//!
//! Failure prefixes are drawn from `mu_P`: every wrong completion `y`
//! carries weight `psi_P(y) = 1{R=0} (1 - gamma^tau)`, spread evenly over
//! its first `min(K, tau)` prefixes and normalized by the total failure
//! weight. The ideal objective is the `mu_P`-expected forward KL from the
//! fast-success posterior to the student. Prefixes where the fast-success
//! value is zero have no defined posterior; they are skipped and counted,
//! never renormalized away.

use super::values::{desirability_posterior, exact_values, DesirabilitySpec};
use super::OracleError;
use crate::env::{enumerate_completions, TaskInstance, Token};
use crate::policy::{ActionDistribution, Context, PolicyParams};
use std::collections::BTreeMap;

/// Exact prefix distribution `mu_P` over failure prefixes.
pub fn ideal_prefix_distribution(
    task: &TaskInstance,
    policy: &PolicyParams,
    gamma: f64,
    prefix_budget: usize,
) -> Result<BTreeMap<Vec<Token>, f64>, OracleError> {
    if !(gamma > 0.0 && gamma < 1.0) {
        return Err(OracleError::InvalidParameter(format!(
            "gamma must lie in (0,1), got {gamma}"
        )));
    }
    if prefix_budget < 1 {
        return Err(OracleError::InvalidParameter(
            "prefix budget must be at least 1".into(),
        ));
    }
    let horizon = task.spec.horizon as usize;
    let mut mass: BTreeMap<Vec<Token>, f64> = BTreeMap::new();
    let mut normalizer = 0.0;
    for (tokens, correct) in enumerate_completions(task, horizon)? {
        if correct {
            continue;
        }
        let tau = tokens.len();
        let psi = 1.0 - gamma.powi(tau as i32);
        let weight = path_probability(policy, task, &tokens) * psi;
        normalizer += weight;
        let k_y = prefix_budget.min(tau);
        let share = weight / k_y as f64;
        for t in 0..k_y {
            *mass.entry(tokens[..t].to_vec()).or_insert(0.0) += share;
        }
    }
    if !(normalizer > 0.0) {
        return Err(OracleError::NoFailureMass);
    }
    for w in mass.values_mut() {
        *w /= normalizer;
    }
    Ok(mass)
}

fn path_probability(policy: &PolicyParams, task: &TaskInstance, tokens: &[Token]) -> f64 {
    let mut p = 1.0;
    for t in 0..tokens.len() {
        let ctx = Context::unhinted(task.prompt.clone(), tokens[..t].to_vec());
        let dist = policy.distribution(&task.spec, &ctx);
        p *= dist.prob_of(tokens[t]);
    }
    p
}

/// The ideal objective value plus bookkeeping for skipped prefixes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IdealObjective {
    /// `E_{mu_P}[KL(q_F || student)]` over usable prefixes.
    pub value: f64,
    /// Prefixes that entered the expectation.
    pub used: usize,
    /// Prefixes on `mu_P`'s support with zero fast-success value.
    pub skipped: usize,
    /// Total `mu_P` mass sitting on skipped prefixes.
    pub skipped_mass: f64,
}

/// Ideal objective with the student's per-prefix distribution supplied by
/// a closure, so exact posteriors can stand in for a parametric student.
pub fn ideal_opsd_objective_with<F>(
    task: &TaskInstance,
    policy: &PolicyParams,
    gamma: f64,
    prefix_budget: usize,
    student_at: F,
) -> Result<IdealObjective, OracleError>
where
    F: Fn(&[Token]) -> ActionDistribution,
{
    let mu = ideal_prefix_distribution(task, policy, gamma, prefix_budget)?;
    let values = exact_values(task, policy, &DesirabilitySpec::FastSuccess { gamma })?;
    let mut out = IdealObjective {
        value: 0.0,
        used: 0,
        skipped: 0,
        skipped_mass: 0.0,
    };
    for (state, &w) in &mu {
        let v = values.value(state)?;
        if !(v > 0.0) {
            out.skipped += 1;
            out.skipped_mass += w;
            continue;
        }
        let q_f = desirability_posterior(policy, task, state, &values)?;
        let p = student_at(state);
        out.value += w * q_f.kl_to(&p);
        out.used += 1;
    }
    if out.used == 0 {
        return Err(OracleError::EmptySupport);
    }
    Ok(out)
}

/// `E_{mu_P}[KL(q_F || p_student)]` for a parametric student policy.
pub fn ideal_opsd_objective(
    task: &TaskInstance,
    policy: &PolicyParams,
    student: &PolicyParams,
    gamma: f64,
    prefix_budget: usize,
) -> Result<IdealObjective, OracleError> {
    ideal_opsd_objective_with(task, policy, gamma, prefix_budget, |state| {
        let ctx = Context::unhinted(task.prompt.clone(), state.to_vec());
        student.distribution(&task.spec, &ctx)
    })
}
