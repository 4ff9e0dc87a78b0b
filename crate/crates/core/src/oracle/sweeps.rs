//! Randomized sweeps that exercise every theorem check across many small
//! instances, emitting one [`TheoremReport`] per checked claim.
//!
//! Instance generation is deterministic: each report's seed is derived
//! from the sweep seed, the check kind, and the attempt index, so a single
//! failing report pins down its instance exactly.

use super::theorems::{
    branching_variance_identity, check_approx_edit, check_stopping_bound,
    check_stopping_bound_with_teacher, check_theorem_local_edit, pair_count_identity,
};
use super::values::{desirability_posterior, exact_values, DesirabilitySpec};
use super::{names, OracleError, TheoremReport};
use crate::env::{make_task, EnvSpec, SizeParams, TaskInstance, Token};
use crate::grpo::{GrpoConfig, RolloutGroup};
use crate::policy::{ActionDistribution, PolicyParams};
use crate::seeding::{derive_seed, stream};
use crate::ssopd::{select_witness, SelectorRule};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

const KIND_LOCAL: u64 = 0;
const KIND_APPROX: u64 = 1;
const KIND_STOPPING: u64 = 2;
const KIND_BRANCHING: u64 = 3;

/// Shape of a randomized verification sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepConfig {
    /// Instances per check kind.
    pub instances: usize,
    /// Largest ordinary vocabulary drawn (envs use 2..=vocab_max).
    pub vocab_max: u32,
    /// Largest horizon drawn (envs use 2..=horizon_max).
    pub horizon_max: u32,
    /// Deadline parameters sampled for fast-success checks.
    pub gammas: Vec<f64>,
    /// Edit strengths sampled for the identities and bounds.
    pub etas: Vec<f64>,
    /// Standard deviation of random policy weights.
    pub weight_scale: f64,
    /// Failure prefixes per stopping-bound check.
    pub prefix_budget: usize,
    /// Master seed; every instance derives its own stream from it.
    pub seed: u64,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            instances: 200,
            vocab_max: 3,
            horizon_max: 5,
            gammas: vec![0.5, 0.9, 0.99],
            etas: vec![0.1, 0.5, 0.9],
            weight_scale: 1.0,
            prefix_budget: 8,
            seed: 0,
        }
    }
}

impl SweepConfig {
    pub fn validate(&self) -> Result<(), OracleError> {
        if self.instances < 1 {
            return Err(OracleError::InvalidParameter(
                "sweep needs at least one instance".into(),
            ));
        }
        if self.vocab_max < 2 || self.horizon_max < 2 {
            return Err(OracleError::InvalidParameter(
                "sweeps need vocab_max >= 2 and horizon_max >= 2".into(),
            ));
        }
        if self.gammas.is_empty() || self.gammas.iter().any(|g| !(*g > 0.0 && *g < 1.0)) {
            return Err(OracleError::InvalidParameter(
                "gammas must be a nonempty list inside (0,1)".into(),
            ));
        }
        if self.etas.is_empty() || self.etas.iter().any(|e| !(0.0..1.0).contains(e)) {
            return Err(OracleError::InvalidParameter(
                "etas must be a nonempty list inside [0,1)".into(),
            ));
        }
        if self.prefix_budget < 1 {
            return Err(OracleError::InvalidParameter(
                "prefix_budget must be at least 1".into(),
            ));
        }
        Ok(())
    }

    fn attempt_limit(&self) -> u64 {
        (self.instances as u64).saturating_mul(200)
    }
}

/// Reports plus the count of states excluded for having zero value.
#[derive(Debug, Clone, Default)]
pub struct SweepOutcome {
    pub reports: Vec<TheoremReport>,
    pub skipped: usize,
}

impl SweepOutcome {
    pub fn all_pass(&self) -> bool {
        self.reports.iter().all(|r| r.pass)
    }

    pub fn extend(&mut self, other: SweepOutcome) {
        self.reports.extend(other.reports);
        self.skipped += other.skipped;
    }
}

struct Instance {
    task: TaskInstance,
    policy: PolicyParams,
}

fn random_instance(cfg: &SweepConfig, rng: &mut ChaCha8Rng) -> Instance {
    let vocab = rng.gen_range(2..=cfg.vocab_max);
    let horizon = rng.gen_range(2..=cfg.horizon_max);
    let spec = EnvSpec::new(vocab, horizon).expect("sweep env dimensions are valid");
    let task = if rng.gen_bool(0.5) {
        let modulus = rng.gen_range(2..=vocab);
        make_task(
            &spec,
            &SizeParams::ModularSum {
                modulus,
                target: None,
            },
            rng.gen(),
        )
    } else {
        let longest = ((horizon - 1) as usize).clamp(1, 2);
        let secret_len = rng.gen_range(1..=longest);
        make_task(
            &spec,
            &SizeParams::SubsequenceLock {
                secret_len,
                secret: None,
            },
            rng.gen(),
        )
    }
    .expect("sweep task parameters are solvable");
    let policy = PolicyParams::random(&spec, 2, cfg.weight_scale, rng.gen());
    Instance { task, policy }
}

fn random_state(task: &TaskInstance, rng: &mut ChaCha8Rng) -> Vec<Token> {
    let depth = rng.gen_range(0..task.spec.horizon);
    (0..depth)
        .map(|_| rng.gen_range(0..task.spec.vocab_size))
        .collect()
}

fn pick(xs: &[f64], rng: &mut ChaCha8Rng) -> f64 {
    xs[rng.gen_range(0..xs.len())]
}

fn random_dspec(cfg: &SweepConfig, rng: &mut ChaCha8Rng) -> DesirabilitySpec {
    if rng.gen_bool(0.5) {
        DesirabilitySpec::BinaryReward
    } else {
        DesirabilitySpec::FastSuccess {
            gamma: pick(&cfg.gammas, rng),
        }
    }
}

/// Draws a state with positive value, counting rejected dead states. The
/// root always qualifies: reference solutions exist and softmax policies
/// reach them with positive probability.
fn usable_state(
    inst: &Instance,
    dspec: &DesirabilitySpec,
    rng: &mut ChaCha8Rng,
    skipped: &mut usize,
) -> Result<Vec<Token>, OracleError> {
    let values = exact_values(&inst.task, &inst.policy, dspec)?;
    for _ in 0..16 {
        let state = random_state(&inst.task, rng);
        if values.value(&state)? > 0.0 {
            return Ok(state);
        }
        *skipped += 1;
    }
    Ok(Vec::new())
}

/// Local-edit identity over random (task, policy, state, eta) instances.
pub fn run_local_edit_sweep(cfg: &SweepConfig) -> Result<SweepOutcome, OracleError> {
    cfg.validate()?;
    let mut out = SweepOutcome::default();
    for i in 0..cfg.instances as u64 {
        let seed = derive_seed(cfg.seed, &[stream::SWEEP, KIND_LOCAL, i]);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let inst = random_instance(cfg, &mut rng);
        let dspec = random_dspec(cfg, &mut rng);
        let eta = pick(&cfg.etas, &mut rng);
        let state = usable_state(&inst, &dspec, &mut rng, &mut out.skipped)?;
        let report =
            check_theorem_local_edit(&inst.task, &inst.policy, &dspec, &state, eta)?.with_seed(seed);
        out.reports.push(report);
    }
    Ok(out)
}

/// Approximate-edit bound with random softmax teachers, plus a tight
/// companion check (teacher = exact posterior) on every instance.
pub fn run_approx_edit_sweep(cfg: &SweepConfig) -> Result<SweepOutcome, OracleError> {
    cfg.validate()?;
    let mut out = SweepOutcome::default();
    for i in 0..cfg.instances as u64 {
        let seed = derive_seed(cfg.seed, &[stream::SWEEP, KIND_APPROX, i]);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let inst = random_instance(cfg, &mut rng);
        let dspec = random_dspec(cfg, &mut rng);
        let eta = pick(&cfg.etas, &mut rng);
        let state = usable_state(&inst, &dspec, &mut rng, &mut out.skipped)?;
        let actions = inst.policy.num_actions();
        let logits: Vec<f64> = (0..actions).map(|_| rng.gen::<f64>() * 4.0 - 2.0).collect();
        let teacher = ActionDistribution::from_logits(&logits);
        let report =
            check_approx_edit(&inst.task, &inst.policy, &dspec, &state, &teacher, eta)?
                .with_seed(seed);
        out.reports.push(report);

        let values = exact_values(&inst.task, &inst.policy, &dspec)?;
        let posterior = desirability_posterior(&inst.policy, &inst.task, &state, &values)?;
        let tight =
            check_approx_edit(&inst.task, &inst.policy, &dspec, &state, &posterior, eta)?;
        out.reports.push(
            TheoremReport::tight(
                names::APPROX_TIGHT,
                tight.residual_or_slack,
                tight.instance_digest,
            )
            .with_seed(seed),
        );
    }
    Ok(out)
}

/// Stopping-time bound on sampled witness pairs, with the hinted policy as
/// teacher, plus a tight companion (teacher = fast-success posterior).
pub fn run_stopping_sweep(cfg: &SweepConfig) -> Result<SweepOutcome, OracleError> {
    cfg.validate()?;
    let mut out = SweepOutcome::default();
    let grpo_cfg = GrpoConfig::default();
    let mut produced = 0u64;
    let mut attempt = 0u64;
    while produced < cfg.instances as u64 {
        if attempt >= cfg.attempt_limit() {
            return Err(OracleError::SweepExhausted {
                needed: cfg.instances,
                attempts: attempt,
            });
        }
        let seed = derive_seed(cfg.seed, &[stream::SWEEP, KIND_STOPPING, attempt]);
        attempt += 1;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let inst = random_instance(cfg, &mut rng);
        let pair = (0..40)
            .map(|_| RolloutGroup::sample(&inst.policy, &inst.task, &grpo_cfg, 1.2, &mut rng))
            .find_map(|group| select_witness(&group, SelectorRule::default()));
        let Some(pair) = pair else {
            continue;
        };
        let gamma = pick(&cfg.gammas, &mut rng);
        let eta = pick(&cfg.etas, &mut rng);
        let check = check_stopping_bound(
            &inst.task,
            &inst.policy,
            &pair.y_plus,
            &pair.y_minus,
            gamma,
            eta,
            cfg.prefix_budget,
        )?;
        out.skipped += check.skipped;
        out.reports.push(check.report.with_seed(seed));

        let values = exact_values(
            &inst.task,
            &inst.policy,
            &DesirabilitySpec::FastSuccess { gamma },
        )?;
        let tight = check_stopping_bound_with_teacher(
            &inst.task,
            &inst.policy,
            &pair.y_minus,
            gamma,
            eta,
            cfg.prefix_budget,
            |state| desirability_posterior(&inst.policy, &inst.task, state, &values),
        )?;
        out.skipped += tight.skipped;
        out.reports.push(
            TheoremReport::tight(
                names::STOPPING_TIGHT,
                tight.report.residual_or_slack,
                tight.report.instance_digest,
            )
            .with_seed(seed),
        );
        produced += 1;
    }
    Ok(out)
}

/// Branching-variance identity over random (task, policy) pairs.
pub fn run_branching_sweep(cfg: &SweepConfig) -> Result<SweepOutcome, OracleError> {
    cfg.validate()?;
    let mut out = SweepOutcome::default();
    for i in 0..cfg.instances as u64 {
        let seed = derive_seed(cfg.seed, &[stream::SWEEP, KIND_BRANCHING, i]);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let inst = random_instance(cfg, &mut rng);
        let report = branching_variance_identity(&inst.task, &inst.policy)?.with_seed(seed);
        out.reports.push(report);
    }
    Ok(out)
}

/// Exhaustive binomial pair-count identity over G in 2..=12 and p in
/// 0.1..=0.9.
pub fn pair_count_grid() -> Result<SweepOutcome, OracleError> {
    let mut out = SweepOutcome::default();
    for g in 2..=12 {
        for i in 1..=9 {
            let p = i as f64 / 10.0;
            out.reports.push(pair_count_identity(g, p)?);
        }
    }
    Ok(out)
}

/// Everything the verifier runs: all four randomized sweeps plus the
/// binomial grid.
pub fn run_all_sweeps(cfg: &SweepConfig) -> Result<SweepOutcome, OracleError> {
    let mut out = SweepOutcome::default();
    out.extend(run_local_edit_sweep(cfg)?);
    out.extend(run_approx_edit_sweep(cfg)?);
    out.extend(run_stopping_sweep(cfg)?);
    out.extend(run_branching_sweep(cfg)?);
    out.extend(pair_count_grid()?);
    Ok(out)
}
