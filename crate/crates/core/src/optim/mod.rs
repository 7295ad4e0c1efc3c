//! Inner optimizers, the Lookahead wrapper and the slow-weights step size.

mod alpha;
mod inner;
mod lookahead;

pub use alpha::{
    adaptive_alpha, adaptive_alpha_unclipped, exact_alpha_star, QuadraticProblem, SquaredGradMean,
    FISHER_FLOOR,
};
pub use inner::{sgd_step, Adam, InnerOptimizer, Momentum, Sgd};
pub use lookahead::{LookaheadState, MomentumMode, CHECKPOINT_VERSION};
