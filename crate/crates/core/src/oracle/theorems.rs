//! Checked numeric statements of the edit identities and bounds.
//!
//! All checks share one mechanic: compute exact values on the full tree,
//! edit the policy at one state (or at the prefixes of one failure), and
//! compare the exact value change against the closed form. Identities
//! produce residuals, inequalities produce slacks; both are wrapped in a
//! [`TheoremReport`] with the tolerance baked into the pass flag.

use super::values::{desirability_posterior, exact_values, DesirabilitySpec, ExactValues};
use super::{names, OracleError, TheoremReport, IDENTITY_TOL, PAIR_COUNT_TOL};
use crate::env::{Completion, TaskInstance, Token};
use crate::policy::{ActionDistribution, Context, PolicyParams};
use crate::ssopd::{build_hint, teacher_distribution};

fn check_eta(eta: f64) -> Result<(), OracleError> {
    if (0.0..1.0).contains(&eta) {
        Ok(())
    } else {
        Err(OracleError::InvalidParameter(format!(
            "eta must lie in [0,1), got {eta}"
        )))
    }
}

fn policy_at(policy: &PolicyParams, task: &TaskInstance, state: &[Token]) -> ActionDistribution {
    let ctx = Context::unhinted(task.prompt.clone(), state.to_vec());
    policy.distribution(&task.spec, &ctx)
}

/// Variance of the action values under the policy at one state.
fn q_variance(pi: &ActionDistribution, q: &[f64], v: f64) -> f64 {
    let q_sq: Vec<f64> = q.iter().map(|x| x * x).collect();
    pi.expectation(&q_sq) - v * v
}

/// Value at `state` of the policy edited only there to
/// `(1 - eta) * pi + eta * target`, everything downstream unchanged.
pub fn local_edit_value(
    policy: &PolicyParams,
    task: &TaskInstance,
    state: &[Token],
    target: &ActionDistribution,
    eta: f64,
    values: &ExactValues,
) -> Result<f64, OracleError> {
    check_eta(eta)?;
    let q = values.q_values(state)?;
    let pi = policy_at(policy, task, state);
    if target.num_actions() != q.len() {
        return Err(OracleError::InvalidParameter(format!(
            "target has {} actions, state has {}",
            target.num_actions(),
            q.len()
        )));
    }
    Ok(q
        .iter()
        .enumerate()
        .map(|(a, qa)| ((1.0 - eta) * pi.probs[a] + eta * target.probs[a]) * qa)
        .sum())
}

/// Identity: editing one state toward the desirability posterior improves
/// the value there by exactly `eta * Var[Q] / V`.
pub fn check_theorem_local_edit(
    task: &TaskInstance,
    policy: &PolicyParams,
    dspec: &DesirabilitySpec,
    state: &[Token],
    eta: f64,
) -> Result<TheoremReport, OracleError> {
    check_eta(eta)?;
    let values = exact_values(task, policy, dspec)?;
    let v = values.value(state)?;
    if !(v > 0.0) {
        return Err(OracleError::ZeroValue(state.to_vec()));
    }
    let q_phi = desirability_posterior(policy, task, state, &values)?;
    let v_eta = local_edit_value(policy, task, state, &q_phi, eta, &values)?;
    let pi = policy_at(policy, task, state);
    let q = values.q_values(state)?;
    let var = q_variance(&pi, q, v);
    let residual = ((v_eta - v) - eta * var / v).abs();
    let digest = format!("{} s={:?} eta={eta}", task.digest(), state);
    Ok(TheoremReport::identity(
        names::LOCAL_EDIT,
        residual,
        IDENTITY_TOL,
        digest,
    ))
}

/// Teacher approximation error `eps = |E_{q_T}[Q] - E_{q_phi}[Q]|` at one
/// state.
pub fn teacher_error(
    q_teacher: &ActionDistribution,
    q_posterior: &ActionDistribution,
    values: &ExactValues,
    state: &[Token],
) -> Result<f64, OracleError> {
    let q = values.q_values(state)?;
    Ok((q_teacher.expectation(q) - q_posterior.expectation(q)).abs())
}

/// Bound: editing toward an arbitrary teacher gains at least
/// `eta * (Var/V - eps)`; tight when the teacher equals the posterior.
pub fn check_approx_edit(
    task: &TaskInstance,
    policy: &PolicyParams,
    dspec: &DesirabilitySpec,
    state: &[Token],
    q_teacher: &ActionDistribution,
    eta: f64,
) -> Result<TheoremReport, OracleError> {
    check_eta(eta)?;
    let values = exact_values(task, policy, dspec)?;
    let v = values.value(state)?;
    if !(v > 0.0) {
        return Err(OracleError::ZeroValue(state.to_vec()));
    }
    let q_phi = desirability_posterior(policy, task, state, &values)?;
    let eps = teacher_error(q_teacher, &q_phi, &values, state)?;
    let v_eta = local_edit_value(policy, task, state, q_teacher, eta, &values)?;
    let pi = policy_at(policy, task, state);
    let q = values.q_values(state)?;
    let var = q_variance(&pi, q, v);
    let slack = (v_eta - v) - eta * (var / v - eps);
    let digest = format!("{} s={:?} eta={eta}", task.digest(), state);
    Ok(TheoremReport::bound(names::APPROX_EDIT, slack, digest))
}

/// Result of a stopping-time bound check, with prefix bookkeeping.
#[derive(Debug, Clone)]
pub struct StoppingBoundCheck {
    pub report: TheoremReport,
    /// Prefixes that entered the average.
    pub used: usize,
    /// Prefixes excluded because their fast-success value was zero.
    pub skipped: usize,
    /// `min(K, tau(y_minus))` before exclusions.
    pub k_minus: usize,
}

/// Stopping-time bound with the hinted policy itself as teacher: at each
/// failure prefix the teacher sees `prompt ++ hint(y_plus) ++ prefix`.
#[allow(clippy::too_many_arguments)]
pub fn check_stopping_bound(
    task: &TaskInstance,
    policy: &PolicyParams,
    y_plus: &Completion,
    y_minus: &Completion,
    gamma: f64,
    eta: f64,
    prefix_budget: usize,
) -> Result<StoppingBoundCheck, OracleError> {
    let teacher = |state: &[Token]| -> Result<ActionDistribution, OracleError> {
        let ctx = build_hint(&task.spec, &task.prompt, state, y_plus)?;
        Ok(teacher_distribution(policy, &task.spec, &ctx))
    };
    check_stopping_bound_with_teacher(task, policy, y_minus, gamma, eta, prefix_budget, teacher)
}

/// Stopping-time bound averaged over the first `min(K, tau(y_minus))`
/// prefixes of a failure, with an arbitrary per-prefix teacher. Prefixes
/// with zero fast-success value are excluded from both sides and counted.
pub fn check_stopping_bound_with_teacher<F>(
    task: &TaskInstance,
    policy: &PolicyParams,
    y_minus: &Completion,
    gamma: f64,
    eta: f64,
    prefix_budget: usize,
    teacher_at: F,
) -> Result<StoppingBoundCheck, OracleError>
where
    F: Fn(&[Token]) -> Result<ActionDistribution, OracleError>,
{
    check_eta(eta)?;
    if prefix_budget < 1 {
        return Err(OracleError::InvalidParameter(
            "prefix budget must be at least 1".into(),
        ));
    }
    let dspec = DesirabilitySpec::FastSuccess { gamma };
    let values = exact_values(task, policy, &dspec)?;
    let k_minus = prefix_budget.min(y_minus.stop_time());
    let mut sum_gain = 0.0;
    let mut sum_bound = 0.0;
    let mut used = 0usize;
    let mut skipped = 0usize;
    for t in 0..k_minus {
        let state = &y_minus.tokens[..t];
        let v = values.value(state)?;
        if !(v > 0.0) {
            skipped += 1;
            continue;
        }
        let q_t = teacher_at(state)?;
        let q_phi = desirability_posterior(policy, task, state, &values)?;
        let eps = teacher_error(&q_t, &q_phi, &values, state)?;
        let v_eta = local_edit_value(policy, task, state, &q_t, eta, &values)?;
        let pi = policy_at(policy, task, state);
        let q = values.q_values(state)?;
        let var = q_variance(&pi, q, v);
        sum_gain += v_eta - v;
        sum_bound += eta * (var / v - eps);
        used += 1;
    }
    if used == 0 {
        return Err(OracleError::EmptySupport);
    }
    let slack = sum_gain / used as f64 - sum_bound / used as f64;
    let digest = format!(
        "{} y_minus={:?} gamma={gamma} eta={eta} K={prefix_budget}",
        task.digest(),
        y_minus.tokens
    );
    Ok(StoppingBoundCheck {
        report: TheoremReport::bound(names::STOPPING, slack, digest),
        used,
        skipped,
        k_minus,
    })
}

/// Identity: the success variance `p(1-p)` of a full rollout equals the
/// path-probability-weighted sum of per-state action-value variances, with
/// episodes padded past termination by an absorbing (zero-variance) state.
pub fn branching_variance_identity(
    task: &TaskInstance,
    policy: &PolicyParams,
) -> Result<TheoremReport, OracleError> {
    let values = exact_values(task, policy, &DesirabilitySpec::BinaryReward)?;
    let p = values.root_value();
    let mut rhs = 0.0;
    let mut state = Vec::new();
    accumulate_variances(task, policy, &values, &mut state, 1.0, &mut rhs)?;
    let residual = (p * (1.0 - p) - rhs).abs();
    Ok(TheoremReport::identity(
        names::BRANCHING,
        residual,
        IDENTITY_TOL,
        task.digest(),
    ))
}

fn accumulate_variances(
    task: &TaskInstance,
    policy: &PolicyParams,
    values: &ExactValues,
    state: &mut Vec<Token>,
    path_prob: f64,
    rhs: &mut f64,
) -> Result<(), OracleError> {
    let spec = &task.spec;
    let pi = policy_at(policy, task, state);
    let q = values.q_values(state)?;
    let v = values.value(state)?;
    *rhs += path_prob * q_variance(&pi, q, v);
    if (state.len() as u32) < spec.horizon - 1 {
        for tok in 0..spec.vocab_size {
            state.push(tok);
            accumulate_variances(task, policy, values, state, path_prob * pi.probs[tok as usize], rhs)?;
            state.pop();
        }
    }
    Ok(())
}

/// Identity: for `K_c ~ Binomial(G, p)`, the expected number of
/// correct-wrong pairs `E[K_c(G - K_c)]` equals `G(G-1)p(1-p)`, summed
/// exhaustively over the binomial support.
pub fn pair_count_identity(group_size: usize, p: f64) -> Result<TheoremReport, OracleError> {
    if group_size < 1 {
        return Err(OracleError::InvalidParameter(
            "group size must be at least 1".into(),
        ));
    }
    if !p.is_finite() || !(0.0..=1.0).contains(&p) {
        return Err(OracleError::InvalidParameter(format!(
            "p must lie in [0,1], got {p}"
        )));
    }
    let g = group_size;
    let mut lhs = 0.0;
    let mut binom: u128 = 1;
    for k in 0..=g {
        if k > 0 {
            // C(g, k) = C(g, k-1) * (g - k + 1) / k, exact in integers.
            binom = binom * (g - k + 1) as u128 / k as u128;
        }
        lhs += binom as f64
            * p.powi(k as i32)
            * (1.0 - p).powi((g - k) as i32)
            * (k * (g - k)) as f64;
    }
    let rhs = (g * (g - 1)) as f64 * p * (1.0 - p);
    let residual = (lhs - rhs).abs();
    let digest = format!("G={g} p={p}");
    Ok(TheoremReport::identity(
        names::PAIR_COUNT,
        residual,
        PAIR_COUNT_TOL,
        digest,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::{make_task, EnvSpec, SizeParams, VerifierParams};
    use crate::grpo::{GrpoConfig, RolloutGroup};
    use crate::ssopd::{select_witness, SelectorRule};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::collections::BTreeMap;

    fn modular_task(vocab: u32, horizon: u32, modulus: u32, target: u32) -> TaskInstance {
        let spec = EnvSpec::new(vocab, horizon).unwrap();
        make_task(
            &spec,
            &SizeParams::ModularSum {
                modulus,
                target: Some(target),
            },
            0,
        )
        .unwrap()
    }

    fn two_action_instance(score0: f64, score_eos: f64) -> (TaskInstance, DesirabilitySpec) {
        let spec = EnvSpec::new(1, 1).unwrap();
        let task = TaskInstance {
            spec,
            params: VerifierParams::ModularSum {
                modulus: 2,
                target: 1,
            },
            prompt: vec![0],
            seed: 0,
            reference_solution: vec![],
        };
        let table = BTreeMap::from([(vec![0], score0), (vec![spec.eos_token], score_eos)]);
        (task, DesirabilitySpec::CustomTable { table })
    }

    #[test]
    fn edited_value_hand_case() {
        // Uniform policy, Q = [1, 0]: V = 0.5, Var = 0.25, gain = 0.5 eta.
        let (task, dspec) = two_action_instance(1.0, 0.0);
        let policy = PolicyParams::zeros(&task.spec, 1, 0);
        let values = exact_values(&task, &policy, &dspec).unwrap();
        let q_phi = desirability_posterior(&policy, &task, &[], &values).unwrap();
        for eta in [0.0, 0.25, 0.5, 0.75] {
            let v_eta = local_edit_value(&policy, &task, &[], &q_phi, eta, &values).unwrap();
            assert_eq!(v_eta - 0.5, 0.5 * eta, "eta={eta}");
        }
    }

    #[test]
    fn zero_eta_returns_the_base_value_exactly() {
        let task = modular_task(3, 4, 3, 1);
        let policy = PolicyParams::random(&task.spec, 2, 0.9, 2);
        let values = exact_values(&task, &policy, &DesirabilitySpec::BinaryReward).unwrap();
        let q_phi = desirability_posterior(&policy, &task, &[], &values).unwrap();
        let v_eta = local_edit_value(&policy, &task, &[], &q_phi, 0.0, &values).unwrap();
        assert_eq!(v_eta, values.root_value());
    }

    #[test]
    fn editing_toward_the_policy_itself_changes_nothing() {
        let task = modular_task(3, 4, 2, 0);
        let policy = PolicyParams::random(&task.spec, 2, 0.9, 4);
        let values = exact_values(&task, &policy, &DesirabilitySpec::BinaryReward).unwrap();
        let pi = policy_at(&policy, &task, &[]);
        for eta in [0.1, 0.5, 0.9] {
            let v_eta = local_edit_value(&policy, &task, &[], &pi, eta, &values).unwrap();
            assert!((v_eta - values.root_value()).abs() < 1e-12);
        }
    }

    #[test]
    fn local_edit_identity_on_the_hand_case() {
        let (task, dspec) = two_action_instance(1.0, 0.0);
        let policy = PolicyParams::zeros(&task.spec, 1, 0);
        let report = check_theorem_local_edit(&task, &policy, &dspec, &[], 0.5).unwrap();
        assert!(report.pass, "residual {}", report.residual_or_slack);
        // Gain at eta = 0.5 is exactly 0.25.
        let values = exact_values(&task, &policy, &dspec).unwrap();
        let q_phi = desirability_posterior(&policy, &task, &[], &values).unwrap();
        let v_eta = local_edit_value(&policy, &task, &[], &q_phi, 0.5, &values).unwrap();
        assert_eq!(v_eta - values.root_value(), 0.25);
    }

    #[test]
    fn constant_q_states_have_zero_gain_and_zero_residual() {
        let (task, dspec) = two_action_instance(1.0, 1.0);
        let policy = PolicyParams::random(&task.spec, 1, 1.0, 6);
        let report = check_theorem_local_edit(&task, &policy, &dspec, &[], 0.7).unwrap();
        assert!(report.pass);
        assert!(report.residual_or_slack < 1e-12);
    }

    #[test]
    fn improvement_is_monotone_in_eta() {
        let task = modular_task(3, 5, 3, 2);
        let policy = PolicyParams::random(&task.spec, 2, 1.0, 8);
        let values = exact_values(&task, &policy, &DesirabilitySpec::BinaryReward).unwrap();
        let q_phi = desirability_posterior(&policy, &task, &[], &values).unwrap();
        let mut prev = values.root_value();
        for i in 1..10 {
            let eta = i as f64 / 10.0;
            let v_eta = local_edit_value(&policy, &task, &[], &q_phi, eta, &values).unwrap();
            assert!(v_eta >= prev - 1e-15, "eta={eta}");
            prev = v_eta;
        }
    }

    #[test]
    fn teacher_error_hand_values() {
        let (task, dspec) = two_action_instance(1.0, 0.0);
        let policy = PolicyParams::zeros(&task.spec, 1, 0);
        let values = exact_values(&task, &policy, &dspec).unwrap();
        let q_phi = desirability_posterior(&policy, &task, &[], &values).unwrap();
        assert_eq!(teacher_error(&q_phi, &q_phi, &values, &[]).unwrap(), 0.0);
        let pi = policy_at(&policy, &task, &[]);
        assert_eq!(teacher_error(&pi, &q_phi, &values, &[]).unwrap(), 0.5);
    }

    #[test]
    fn teacher_error_is_invariant_to_action_relabeling() {
        let (task_a, dspec_a) = two_action_instance(0.8, 0.3);
        let (task_b, dspec_b) = two_action_instance(0.3, 0.8);
        let policy = PolicyParams::zeros(&task_a.spec, 1, 0);
        let values_a = exact_values(&task_a, &policy, &dspec_a).unwrap();
        let values_b = exact_values(&task_b, &policy, &dspec_b).unwrap();
        let teacher_a = ActionDistribution::from_probs(vec![0.9, 0.1]);
        let teacher_b = ActionDistribution::from_probs(vec![0.1, 0.9]);
        let post_a = desirability_posterior(&policy, &task_a, &[], &values_a).unwrap();
        let post_b = desirability_posterior(&policy, &task_b, &[], &values_b).unwrap();
        let eps_a = teacher_error(&teacher_a, &post_a, &values_a, &[]).unwrap();
        let eps_b = teacher_error(&teacher_b, &post_b, &values_b, &[]).unwrap();
        assert!((eps_a - eps_b).abs() < 1e-15);
    }

    #[test]
    fn approx_edit_bound_is_tight_at_the_posterior() {
        let task = modular_task(3, 4, 3, 1);
        let policy = PolicyParams::random(&task.spec, 2, 0.8, 12);
        for gamma in [0.5, 0.9, 0.99] {
            let dspec = DesirabilitySpec::FastSuccess { gamma };
            let values = exact_values(&task, &policy, &dspec).unwrap();
            let q_phi = desirability_posterior(&policy, &task, &[], &values).unwrap();
            let report = check_approx_edit(&task, &policy, &dspec, &[], &q_phi, 0.5).unwrap();
            assert!(
                report.residual_or_slack.abs() < 1e-9,
                "gamma={gamma} slack={}",
                report.residual_or_slack
            );
        }
    }

    #[test]
    fn approx_edit_toward_the_policy_has_zero_slack() {
        // Teacher = pi: the gain is zero and eps exactly cancels Var/V.
        let task = modular_task(3, 4, 2, 1);
        let policy = PolicyParams::random(&task.spec, 2, 0.8, 13);
        let pi = policy_at(&policy, &task, &[]);
        let report = check_approx_edit(
            &task,
            &policy,
            &DesirabilitySpec::BinaryReward,
            &[],
            &pi,
            0.5,
        )
        .unwrap();
        assert!(report.pass);
        assert!(report.residual_or_slack.abs() < 1e-12);
    }

    #[test]
    fn stopping_bound_at_zero_eta_is_exactly_zero() {
        let task = modular_task(3, 4, 3, 1);
        let policy = PolicyParams::random(&task.spec, 2, 0.6, 3);
        let y_plus = Completion::from_tokens(&task, task.reference_solution.clone()).unwrap();
        let y_minus = Completion::from_tokens(&task, vec![0, 0, 0, 0]).unwrap();
        assert!(!y_minus.is_correct());
        let check =
            check_stopping_bound(&task, &policy, &y_plus, &y_minus, 0.9, 0.0, 8).unwrap();
        assert_eq!(check.report.residual_or_slack, 0.0);
        assert!(check.report.pass);
    }

    #[test]
    fn stopping_bound_is_tight_when_the_teacher_is_the_posterior() {
        let task = modular_task(3, 5, 3, 2);
        let policy = PolicyParams::random(&task.spec, 2, 0.7, 21);
        let gamma = 0.9;
        let values =
            exact_values(&task, &policy, &DesirabilitySpec::FastSuccess { gamma }).unwrap();
        let y_minus = Completion::from_tokens(&task, vec![0, 1, 0, 0, 0]).unwrap();
        assert!(!y_minus.is_correct());
        let check = check_stopping_bound_with_teacher(
            &task,
            &policy,
            &y_minus,
            gamma,
            0.5,
            8,
            |state| desirability_posterior(&policy, &task, state, &values),
        )
        .unwrap();
        assert!(
            check.report.residual_or_slack.abs() < 1e-9,
            "slack {}",
            check.report.residual_or_slack
        );
        assert_eq!(check.used + check.skipped, check.k_minus);
    }

    #[test]
    fn stopping_bound_holds_for_sampled_pairs_with_the_hinted_teacher() {
        let task = modular_task(3, 5, 3, 1);
        let policy = PolicyParams::random(&task.spec, 2, 0.6, 30);
        let mut checked = 0;
        for seed in 0..200 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let group =
                RolloutGroup::sample(&policy, &task, &GrpoConfig::default(), 1.2, &mut rng);
            let Some(pair) = select_witness(&group, SelectorRule::default()) else {
                continue;
            };
            for eta in [0.1, 0.5, 0.9] {
                let check = check_stopping_bound(
                    &task, &policy, &pair.y_plus, &pair.y_minus, 0.9, eta, 8,
                )
                .unwrap();
                assert!(check.report.pass, "slack {}", check.report.residual_or_slack);
            }
            checked += 1;
            if checked >= 20 {
                break;
            }
        }
        assert!(checked >= 20, "needed 20 mixed groups, found {checked}");
    }

    #[test]
    fn stopping_bound_counts_dead_prefixes() {
        // Secret [1, 1] with horizon 3: after [0, 0] only one step remains,
        // so the fast-success value at that prefix is zero.
        let spec = EnvSpec::new(2, 3).unwrap();
        let task = make_task(
            &spec,
            &SizeParams::SubsequenceLock {
                secret_len: 2,
                secret: Some(vec![1, 1]),
            },
            0,
        )
        .unwrap();
        let policy = PolicyParams::random(&spec, 2, 0.5, 5);
        let y_plus = Completion::from_tokens(&task, vec![1, 1, spec.eos_token]).unwrap();
        assert!(y_plus.is_correct());
        let y_minus = Completion::from_tokens(&task, vec![0, 0, 0]).unwrap();
        let check = check_stopping_bound(&task, &policy, &y_plus, &y_minus, 0.9, 0.5, 8).unwrap();
        assert_eq!(check.k_minus, 3);
        assert_eq!(check.skipped, 1);
        assert_eq!(check.used, 2);
        assert!(check.report.pass);
    }

    #[test]
    fn branching_identity_on_the_one_step_hand_case() {
        // One ordinary token, horizon 1: completions are [0] (correct) and
        // [eos] (wrong), each with probability 1/2 under the zero policy.
        let spec = EnvSpec::new(1, 1).unwrap();
        let task = make_task(
            &spec,
            &SizeParams::SubsequenceLock {
                secret_len: 1,
                secret: Some(vec![0]),
            },
            0,
        )
        .unwrap();
        let policy = PolicyParams::zeros(&spec, 1, 0);
        let values = exact_values(&task, &policy, &DesirabilitySpec::BinaryReward).unwrap();
        assert_eq!(values.root_value(), 0.5);
        let report = branching_variance_identity(&task, &policy).unwrap();
        assert!(report.residual_or_slack < 1e-15);
    }

    #[test]
    fn branching_identity_degenerates_cleanly_for_a_saturated_policy() {
        let task = modular_task(3, 4, 3, 1);
        let spec = task.spec;
        let t = spec.token_space();
        let mut policy = PolicyParams::zeros(&spec, 2, 0);
        policy.set_weight(1 + t + 2, 1, 60.0);
        policy.set_weight(1 + t + 1, spec.eos_token as usize, 60.0);
        let report = branching_variance_identity(&task, &policy).unwrap();
        assert!(report.residual_or_slack < 1e-12);
        assert!(report.pass);
    }

    #[test]
    fn branching_identity_on_random_instances() {
        for seed in 0..40 {
            let vocab = 2 + (seed % 2) as u32;
            let horizon = 3 + (seed % 3) as u32;
            let spec = EnvSpec::new(vocab, horizon).unwrap();
            let task = make_task(
                &spec,
                &SizeParams::ModularSum {
                    modulus: 2,
                    target: None,
                },
                seed,
            )
            .unwrap();
            let policy = PolicyParams::random(&spec, 2, 1.0, seed + 500);
            let report = branching_variance_identity(&task, &policy).unwrap();
            assert!(report.pass, "seed {seed}: {}", report.residual_or_slack);
        }
    }

    #[test]
    fn pair_count_hand_cases() {
        let report = pair_count_identity(8, 0.0).unwrap();
        assert_eq!(report.residual_or_slack, 0.0);
        // G=2, p=1/2: the exhaustive sum is 2 * (1/4) * 1 = 1/2.
        let report = pair_count_identity(2, 0.5).unwrap();
        assert!(report.pass);
        assert!(report.residual_or_slack < 1e-15);
    }

    #[test]
    fn pair_count_binomials_match_pascal() {
        // The multiplicative update inside pair_count_identity mirrors
        // Pascal's rule; spot-check C(8, k) by brute force.
        let expected = [1u128, 8, 28, 56, 70, 56, 28, 8, 1];
        let g = 8usize;
        let mut binom: u128 = 1;
        for (k, want) in expected.iter().enumerate() {
            if k > 0 {
                binom = binom * (g - k + 1) as u128 / k as u128;
            }
            assert_eq!(binom, *want, "C(8,{k})");
        }
    }

    #[test]
    fn pair_count_grid_is_exact() {
        for g in 2..=12 {
            for i in 1..=9 {
                let p = i as f64 / 10.0;
                let report = pair_count_identity(g, p).unwrap();
                assert!(report.pass, "G={g} p={p}: {}", report.residual_or_slack);
            }
        }
    }

    #[test]
    fn parameter_validation() {
        let (task, dspec) = two_action_instance(1.0, 0.0);
        let policy = PolicyParams::zeros(&task.spec, 1, 0);
        assert!(check_theorem_local_edit(&task, &policy, &dspec, &[], 1.0).is_err());
        assert!(check_theorem_local_edit(&task, &policy, &dspec, &[], -0.1).is_err());
        assert!(pair_count_identity(0, 0.5).is_err());
        assert!(pair_count_identity(4, 1.5).is_err());
        let (task0, dspec0) = two_action_instance(0.0, 0.0);
        assert!(matches!(
            check_theorem_local_edit(&task0, &policy, &dspec0, &[], 0.5),
            Err(OracleError::ZeroValue(_))
        ));
    }
}
