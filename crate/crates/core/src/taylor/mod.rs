//! Second-order expansion of k unrolled gradient steps and the
//! gradient-alignment term it contains.
//!
//! The expected-update predictions assume i.i.d. (hence exchangeable) tasks;
//! the identity between `E[∇²L₁∇L₀]` and half the gradient of
//! `E[∇L₀·∇L₁]` fails otherwise.

pub mod expansion;
pub mod report;
pub mod tasks;

pub use expansion::{
    expected_lookahead_step, expected_unrolled, expected_update_prediction, footnote_identity_gap,
    gradient_alignment, lookahead_update_prediction, taylor_prediction, taylor_two_step_prediction, unrolled_gd,
    Estimate,
};
pub use report::{distance, ratio_test, zero_mean_check, ReportRow};
pub use tasks::{
    fd_hvp, gradient_check, hvp_check, sample_tasks, LogisticFamily, LogisticTask, QuadraticFamily, QuadraticTask,
    Task, TaskFamily,
};
