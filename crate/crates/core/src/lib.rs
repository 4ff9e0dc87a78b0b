//! Desk-scale laboratory for reward-free distillation on top of group
//! relative policy optimization.
//!
//! The crate is organized around a finite token MDP whose completion spaces
//! are small enough to enumerate exhaustively, so every quantity the training
//! algorithms estimate from rollouts also has an exact counterpart:
//!
//! - [`env`]: tasks, verifiers, and completion-space enumeration.
//! - [`policy`]: featurized softmax policies with analytic score functions.
//! - [`grpo`]: group-normalized advantages and the clipped surrogate loss.
//! - [`ssopd`]: witness selection, hinted teachers, and the pointwise-clipped
//!   distillation loss that is mixed into the surrogate at a frontier weight.
//! - [`oracle`]: exact value recursions, desirability posteriors, and the
//!   identity/bound checks run by the verification harness.
//! - [`trainer`]: the optimization loop, evaluation, and checkpoints.

// Config validation deliberately writes `!(x > 0.0)` instead of `x <= 0.0`:
// the negated form also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod env;
pub mod grpo;
pub mod oracle;
pub mod policy;
pub mod seeding;
pub mod ssopd;
pub mod trainer;

pub use env::{
    enumerate_completions, enumerate_completions_budgeted, make_task, Completion, EnvError,
    EnvSpec, SizeParams, TaskFamily, TaskInstance, Token, VerifierParams,
};
pub use grpo::{advantages, grpo_loss, policy_ratio, GrpoConfig, GrpoError, RolloutGroup};
pub use oracle::{
    branching_variance_identity, check_approx_edit, check_stopping_bound,
    check_stopping_bound_with_teacher, check_theorem_local_edit, desirability_posterior,
    exact_values, finite_difference_check, ideal_opsd_objective, ideal_opsd_objective_with,
    ideal_prefix_distribution, local_edit_value, pair_count_grid, pair_count_identity,
    run_all_sweeps, run_approx_edit_sweep, run_branching_sweep, run_local_edit_sweep,
    run_stopping_sweep, teacher_error, witness_weights, DesirabilitySpec, ExactValues,
    IdealObjective, OracleError, StoppingBoundCheck, SweepConfig, SweepOutcome, TheoremReport,
};
pub use policy::{
    feature_count, featurize, logprob_gradient, logprob_gradient_with, sample_completion,
    ActionDistribution, Context, FeatureVector, PolicyParams, SparseGrad,
};
pub use seeding::derive_seed;
pub use ssopd::{
    build_hint, combined_prompt_step, frontier_weight, opsd_pointwise_loss, select_witness,
    split_group, ssopd_prompt_loss, teacher_distribution, CorrectRule, PromptStep, SelectorRule,
    SsopdConfig, SsopdError, SsopdPromptLoss, StepDiagnostics, WitnessPair, WrongRule,
};
pub use trainer::{
    apply_update, avg_at_k, train, Checkpoint, DiagnosticsRow, MetricsRow, Method, OptimizerKind,
    OptimizerState, TeacherMode, TrainConfig, TrainError, TrainOutput,
};
