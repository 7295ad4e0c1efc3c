//! Deterministic quadratic convergence rates of Lookahead around classical
//! momentum.

pub mod simulate;
pub mod sweep;
pub mod system;

pub use simulate::fitted_log_decay;
pub use sweep::{rate_sweep, write_rate_csv, RateOptimizer, RateRow, RateSweepSpec};
pub use system::{
    build_transition, cm_rate_reference, convergence_rate, diagonal_rate, dump_matrix, spectral_radius,
    ScalarModeSystem,
};
