//! Frontier-band task suite generation.
//!
//! Candidate tasks are drawn from a dedicated seed stream and kept only if
//! the uniform policy's success probability — computed by exact enumeration
//! of the completion tree, no sampling — lies inside the configured band.
//! Prompts below the band are hopeless for a fresh policy; prompts above it
//! are already solved; both produce pure groups that carry no preference
//! signal. The band is where training methods can differ.
//!
//! Generation is a pure function of the environment shape and the suite
//! section: the candidate stream is indexed, each candidate's randomness is
//! derived from its index, and candidates are assigned to the training suite
//! first and the evaluation suite second. Two runs with the same suite
//! settings see byte-identical task files regardless of their run seeds.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use ssopd_core::seeding::stream;
use ssopd_core::{
    derive_seed, exact_values, make_task, DesirabilitySpec, PolicyParams, SizeParams,
    TaskInstance,
};

use crate::config::{EnvSection, SuiteSection};
use crate::CliError;

/// How many candidates may be inspected per task kept before generation is
/// declared stuck. The default band accepts most candidates, so hitting this
/// means the band and the environment shape are incompatible.
const ATTEMPTS_PER_TASK: usize = 1000;

/// Training and held-out evaluation prompts, disjoint by construction.
#[derive(Debug, Clone, PartialEq)]
pub struct Suites {
    pub train: Vec<TaskInstance>,
    pub eval: Vec<TaskInstance>,
}

/// Success probability of the uniform policy on `task`, by exact enumeration.
pub fn base_success(task: &TaskInstance) -> Result<f64, CliError> {
    let uniform = PolicyParams::zeros(&task.spec, 0, 0);
    let values = exact_values(task, &uniform, &DesirabilitySpec::BinaryReward)?;
    Ok(values.root_value())
}

/// Draws one candidate task from the suite stream at index `index`.
fn candidate(
    env: &EnvSection,
    suite: &SuiteSection,
    index: u64,
) -> Result<TaskInstance, CliError> {
    let spec = env.spec()?;
    let seed = derive_seed(suite.seed, &[stream::SUITE, index]);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pick_lock = match suite.family.as_str() {
        "modular_sum" => false,
        "subsequence_lock" => true,
        // Mixed suites alternate by coin flip so either family can dominate
        // a small suite only by chance, never by ordering.
        _ => rng.gen_bool(0.5),
    };
    let size = if pick_lock {
        let longest = (env.horizon as usize).saturating_sub(1).clamp(1, 2);
        SizeParams::SubsequenceLock {
            secret_len: rng.gen_range(1..=longest),
            secret: None,
        }
    } else {
        SizeParams::ModularSum {
            modulus: rng.gen_range(2..=spec.vocab_size.max(2)),
            target: None,
        }
    };
    Ok(make_task(&spec, &size, seed)?)
}

/// Generates the training and evaluation suites for an experiment.
pub fn generate_suites(env: &EnvSection, suite: &SuiteSection) -> Result<Suites, CliError> {
    if env.vocab_size < 2 {
        return Err(CliError::InvalidConfig(
            "suite generation needs vocab_size >= 2 so both task families are well formed".into(),
        ));
    }
    let needed = suite.train_tasks + suite.eval_tasks;
    let cap = needed.saturating_mul(ATTEMPTS_PER_TASK);
    let mut train = Vec::with_capacity(suite.train_tasks);
    let mut eval = Vec::with_capacity(suite.eval_tasks);
    let mut inspected = 0usize;
    for index in 0..cap as u64 {
        if train.len() + eval.len() == needed {
            break;
        }
        inspected += 1;
        let task = candidate(env, suite, index)?;
        let p = base_success(&task)?;
        if p < suite.frontier_low || p > suite.frontier_high {
            continue;
        }
        if train.len() < suite.train_tasks {
            train.push(task);
        } else {
            eval.push(task);
        }
    }
    if train.len() + eval.len() < needed {
        return Err(CliError::SuiteExhausted {
            kept: train.len() + eval.len(),
            needed,
            inspected,
        });
    }
    Ok(Suites { train, eval })
}
