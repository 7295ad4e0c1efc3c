//! Noisy quadratic model: exact moment dynamics, fixed points, Monte-Carlo
//! validation and sweeps.

pub mod dynamics;
pub mod model;
pub mod monte_carlo;
pub mod sweep;

pub use dynamics::{
    expected_loss, iterate_to_fixed_point, lookahead_moment_step, lookahead_steady_state_loss,
    lookahead_variance_fixed_point, sgd_moment_step, sgd_steady_state_loss, sgd_variance_fixed_point,
    FixedPointIteration,
};
pub use model::{MomentState, NoisyQuadraticModel, Spectrum};
pub use monte_carlo::{monte_carlo_nqm, EmpiricalMoments, MonteCarloConfig, MonteCarloRun, NqmOptimizer};
pub use sweep::{
    write_comparison_csv, write_horizon_csv,
    convergence_comparison_sweep, finite_horizon_sweep, ComparisonRow, HorizonRow, OptimizerKind, SweepSpec,
};
