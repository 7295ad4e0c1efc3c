//! Lookahead optimizer toolkit.
//!
//! * [`optim`] holds the inner optimizers (SGD, classical momentum, Adam), the
//!   [`optim::LookaheadState`] wrapper and the optimal / adaptive slow-weights
//!   step size.
//! * [`nqm`] computes exact moment dynamics of SGD and Lookahead on the noisy
//!   quadratic model, their steady-state fixed points, Monte-Carlo validation
//!   and the figure-style sweeps.
//! * [`quad`] models Lookahead around classical momentum on a deterministic
//!   quadratic as a linear dynamical system and extracts convergence rates.
//! * [`taylor`] checks the second-order expansion of k unrolled gradient steps
//!   and the gradient-alignment term it produces.
//! * [`harness`] trains toy models on synthetic data and runs robustness
//!   sweeps.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod grid;
pub mod harness;
pub mod nqm;
pub mod optim;
pub mod params;
pub mod quad;
pub mod stats;
pub mod table;
pub mod taylor;

pub use error::{Error, Result};
pub use params::ParamVector;
