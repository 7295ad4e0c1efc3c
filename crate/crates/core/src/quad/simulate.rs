//! Measured decay of the actual Lookahead(CM) iteration on a diagonal
//! quadratic, for checking the eigenvalue-based rates.

use crate::error::{check_len, config, Error, Result};
use crate::optim::{InnerOptimizer, LookaheadState, MomentumMode};
use crate::params::ParamVector;
use crate::stats::ls_slope;

/// Runs Lookahead around classical momentum on `f(x) = ½ Σ λ_i x_i²` for
/// `inner_steps` gradient evaluations and returns the least-squares slope of
/// `log ‖state‖` per inner step, over the latter half of the outer-step
/// boundaries. The state is the slow weights together with the momentum
/// buffer; it is rescaled after every outer step so long runs do not
/// underflow, with the scale accumulated in log space.
#[allow(clippy::too_many_arguments)]
pub fn fitted_log_decay(
    lambdas: &[f64],
    eta: f64,
    beta: f64,
    k: usize,
    alpha: f64,
    inner_steps: usize,
    init: &[f64],
    init_velocity: &[f64],
) -> Result<f64> {
    let n = lambdas.len();
    check_len(n, init.len())?;
    check_len(n, init_velocity.len())?;
    let outer = inner_steps / k.max(1);
    if outer < 8 {
        return Err(config("need at least 8 outer steps to fit a decay"));
    }
    let mut inner = InnerOptimizer::momentum(eta, beta, n)?;
    if let InnerOptimizer::ClassicalMomentum(m) = &mut inner {
        m.velocity = init_velocity.to_vec();
    }
    let mut la = LookaheadState::new(ParamVector::new(init.to_vec())?, inner, k, alpha, MomentumMode::Maintain)?;

    let mut log_scale = 0.0;
    let mut xs = Vec::with_capacity(outer);
    let mut ys = Vec::with_capacity(outer);
    let mut grad = vec![0.0; n];
    for t in 1..=outer {
        for _ in 0..k {
            for i in 0..n {
                grad[i] = lambdas[i] * la.fast_weights[i];
            }
            la.inner_step(&grad)?;
        }
        la.outer_step()?;
        let InnerOptimizer::ClassicalMomentum(m) = &mut la.inner else { unreachable!() };
        let norm = la.slow_weights.iter().chain(&m.velocity).map(|v| v * v).sum::<f64>().sqrt();
        if norm == 0.0 || !norm.is_finite() {
            return Err(Error::NonFinite("decay simulation collapsed or diverged"));
        }
        log_scale += norm.ln();
        let scaled: Vec<f64> = la.slow_weights.iter().map(|v| v / norm).collect();
        la.slow_weights.assign(&scaled)?;
        la.fast_weights = la.slow_weights.clone();
        m.velocity.iter_mut().for_each(|v| *v /= norm);
        if t > outer / 2 {
            xs.push((t * k) as f64);
            ys.push(log_scale);
        }
    }
    Ok(ls_slope(&xs, &ys))
}
