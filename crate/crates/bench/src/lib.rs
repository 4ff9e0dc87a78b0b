//! Deterministic fixtures shared by the benchmarks: a small environment with
//! a fixed task, random-but-seeded policies, and a mixed rollout group, so
//! every benchmark measures the same work across runs.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use ssopd_core::{
    make_task, EnvSpec, GrpoConfig, PolicyParams, RolloutGroup, SizeParams, SsopdConfig,
    TaskInstance,
};

/// Everything the loss and sampling benchmarks operate on.
pub struct Fixture {
    pub spec: EnvSpec,
    pub task: TaskInstance,
    pub student: PolicyParams,
    pub reference: PolicyParams,
    pub teacher: PolicyParams,
    pub behavior: PolicyParams,
    /// A mixed group (both outcomes present), so the combined step always
    /// includes the distillation term.
    pub group: RolloutGroup,
    pub grpo_cfg: GrpoConfig,
    pub ssopd_cfg: SsopdConfig,
}

/// Builds the benchmark fixture on a vocabulary-3, horizon-4 environment
/// with an order-2 featurizer and a group of 8 rollouts.
pub fn fixture() -> Fixture {
    let spec = EnvSpec::new(3, 4).unwrap();
    let task = make_task(
        &spec,
        &SizeParams::ModularSum { modulus: 3, target: None },
        7,
    )
    .unwrap();
    let grpo_cfg = GrpoConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let student = PolicyParams::random(&spec, 2, 0.8, rng.gen());
    let reference = PolicyParams::random(&spec, 2, 0.8, rng.gen());
    let teacher = PolicyParams::random(&spec, 2, 0.8, rng.gen());
    let behavior = PolicyParams::random(&spec, 2, 0.8, rng.gen());
    let group = (0..)
        .map(|_| RolloutGroup::sample(&behavior, &task, &grpo_cfg, 1.2, &mut rng))
        .find(RolloutGroup::is_mixed)
        .unwrap();
    Fixture {
        spec,
        task,
        student,
        reference,
        teacher,
        behavior,
        group,
        grpo_cfg,
        ssopd_cfg: SsopdConfig::default(),
    }
}
