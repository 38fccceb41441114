//! Tabular distributionally robust MDPs: robust value iteration with exact
//! dual solvers for total-variation and chi-square uncertainty sets, plug-in
//! samplers, closed-form hard instances and a Monte-Carlo experiment harness.

// `!(x >= 0.0)` style checks are deliberate: they reject NaN too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod experiments;
pub mod golden;
pub mod instances;
pub mod mdp;
pub mod robust;
pub mod sampling;
pub mod solver;

pub use error::{Error, Result};
pub use experiments::{fit_loglog_slope, run_experiment, summarize, write_csv, ExperimentConfig, TrialRecord};
pub use mdp::{
    default_max_iters, random_mdp, standard_policy_eval, standard_value_iteration, validate_mdp, Policy, QFunction,
    TabularMdp, ValueFunction,
};
pub use robust::{
    chi2_dual, clip, robust_bellman_apply, tv_dual, tv_worst_kernel, variance, Divergence, DualSolution,
    UncertaintySpec,
};
pub use solver::{drvi, robust_policy_eval, suboptimality_gap, Drvi, SolveReport};
