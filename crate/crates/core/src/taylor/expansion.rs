//! k unrolled gradient steps versus their expansion around the starting
//! point.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{check_len, config, Error, Result};
use crate::optim::{InnerOptimizer, LookaheadState, MomentumMode};
use crate::params::ParamVector;
use crate::stats::MomentAccumulator;
use crate::taylor::tasks::{sample_tasks, Task, TaskFamily};

/// `φ_{i+1} = φ_i − η∇L_i(φ_i)` over the tasks in order.
pub fn unrolled_gd<T: Task>(phi0: &[f64], tasks: &[T], eta: f64) -> Result<Vec<f64>> {
    let mut phi = phi0.to_vec();
    for t in tasks {
        check_len(phi.len(), t.dim())?;
        let g = t.grad(&phi);
        for (p, g) in phi.iter_mut().zip(&g) {
            *p -= eta * g;
        }
        if phi.iter().any(|p| !p.is_finite()) {
            return Err(Error::NonFinite("unrolled gradient descent"));
        }
    }
    Ok(phi)
}

/// `φ₀ − η(∇L₀ + ∇L₁)(φ₀) + η²∇²L₁(φ₀)∇L₀(φ₀)`.
pub fn taylor_two_step_prediction<T: Task>(phi0: &[f64], l0: &T, l1: &T, eta: f64) -> Result<Vec<f64>> {
    check_len(phi0.len(), l0.dim())?;
    check_len(phi0.len(), l1.dim())?;
    let g0 = l0.grad(phi0);
    let g1 = l1.grad(phi0);
    let hg = l1.hvp(phi0, &g0);
    Ok((0..phi0.len()).map(|d| phi0[d] - eta * (g0[d] + g1[d]) + eta * eta * hg[d]).collect())
}

/// Expansion of k gradient steps around `φ₀` truncated after `order` powers
/// of η:
/// `φ₀ + Σ_{m=1}^{order} (−η)^m Σ_{i₁>…>i_m} ∇²L_{i₁}⋯∇²L_{i_{m−1}}∇L_{i_m}`,
/// all derivatives at `φ₀`. `order = 2` is the usual second-order
/// prediction; for quadratic tasks `order = k` reproduces the unrolled
/// iterate exactly.
pub fn taylor_prediction<T: Task>(phi0: &[f64], tasks: &[T], eta: f64, order: usize) -> Result<Vec<f64>> {
    let n = phi0.len();
    for t in tasks {
        check_len(n, t.dim())?;
    }
    let mut out = phi0.to_vec();
    // chains[i]: sum over chains of the current length whose top index is i
    let mut chains: Vec<Vec<f64>> = tasks.iter().map(|t| t.grad(phi0)).collect();
    let mut coeff = -eta;
    let last = order.min(tasks.len());
    for m in 1..=last {
        let mut term = vec![0.0; n];
        for c in &chains {
            add_scaled(&mut term, c, 1.0);
        }
        add_scaled(&mut out, &term, coeff);
        if m == last {
            break;
        }
        let mut prefix = vec![0.0; n];
        let mut next = Vec::with_capacity(tasks.len());
        for (t, c) in tasks.iter().zip(&chains) {
            next.push(t.hvp(phi0, &prefix));
            add_scaled(&mut prefix, c, 1.0);
        }
        chains = next;
        coeff *= -eta;
    }
    Ok(out)
}

/// `Σ_{i>j} ∇L_i(φ)·∇L_j(φ)`.
pub fn gradient_alignment<T: Task>(phi: &[f64], tasks: &[T]) -> Result<f64> {
    if tasks.len() < 2 {
        return Err(config("gradient alignment needs at least two tasks"));
    }
    let grads: Vec<Vec<f64>> = tasks.iter().map(|t| t.grad(phi)).collect();
    let mut total = 0.0;
    for i in 1..grads.len() {
        for j in 0..i {
            total += dot(&grads[i], &grads[j]);
        }
    }
    Ok(total)
}

/// Sample mean and its standard error, per coordinate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub mean: Vec<f64>,
    pub se: Vec<f64>,
}

/// Second-order prediction of `E[φ_k]` for i.i.d. tasks:
/// `φ₀ − η Σ_i E∇L_i + (η²/2) Σ_{i>j} E[∇²L_i∇L_j + ∇²L_j∇L_i]`, where the
/// bracket is the gradient of `∇L_i·∇L_j`.
///
/// Each of the `samples` draws evaluates its k tasks in the drawn order and
/// in reverse and averages the two. The reversal is another draw from the
/// same i.i.d. distribution, and it cancels the per-sample antisymmetric part
/// `½(∇²L_i∇L_j − ∇²L_j∇L_i)` of the unrolled iterate's second-order term,
/// so [`expected_unrolled`] on the same seed differs from this by `O(η³)`
/// sample by sample.
pub fn expected_update_prediction<F: TaskFamily>(
    phi0: &[f64],
    family: &F,
    eta: f64,
    k: usize,
    samples: usize,
    seed: u64,
) -> Result<Estimate> {
    sampled(phi0, family, k, samples, seed, |tasks| symmetric_second_order(phi0, tasks, eta))
}

/// Predicted slow-weight displacement `α(E[φ_k] − φ₀)` with the prediction
/// above.
pub fn lookahead_update_prediction<F: TaskFamily>(
    phi0: &[f64],
    family: &F,
    eta: f64,
    k: usize,
    alpha: f64,
    samples: usize,
    seed: u64,
) -> Result<Estimate> {
    check_alpha(alpha)?;
    let e = expected_update_prediction(phi0, family, eta, k, samples, seed)?;
    Ok(Estimate {
        mean: e.mean.iter().zip(phi0).map(|(m, p)| alpha * (m - p)).collect(),
        se: e.se.iter().map(|s| alpha * s).collect(),
    })
}

/// Sample mean of [`unrolled_gd`] over the same draws (and reversals) as
/// [`expected_update_prediction`].
pub fn expected_unrolled<F: TaskFamily>(
    phi0: &[f64],
    family: &F,
    eta: f64,
    k: usize,
    samples: usize,
    seed: u64,
) -> Result<Estimate> {
    sampled(phi0, family, k, samples, seed, |tasks| unrolled_gd(phi0, tasks, eta))
}

/// Sample mean of the slow-weight displacement after one outer step of a
/// real Lookahead(SGD) optimizer, over the same draws and reversals.
pub fn expected_lookahead_step<F: TaskFamily>(
    phi0: &[f64],
    family: &F,
    eta: f64,
    k: usize,
    alpha: f64,
    samples: usize,
    seed: u64,
) -> Result<Estimate> {
    check_alpha(alpha)?;
    sampled(phi0, family, k, samples, seed, |tasks| {
        let inner = InnerOptimizer::sgd(eta)?;
        let mut la = LookaheadState::new(ParamVector::new(phi0.to_vec())?, inner, k, alpha, MomentumMode::Maintain)?;
        for t in tasks {
            let g = t.grad(&la.fast_weights);
            la.inner_step(&g)?;
        }
        Ok(la.outer_step()?.iter().zip(phi0).map(|(s, p)| s - p).collect())
    })
}

/// Checks `E[∇²L₁∇L₀] = ½ ∂/∂φ E[∇L₀·∇L₁]` by sampling task pairs. The right
/// side takes central differences of the sampled dot product with step `h`.
/// Returns the per-coordinate estimate of the difference, whose mean should
/// be zero.
pub fn footnote_identity_gap<F: TaskFamily>(
    phi0: &[f64],
    family: &F,
    samples: usize,
    seed: u64,
    h: f64,
) -> Result<Estimate> {
    if samples < 2 {
        return Err(config("need at least two samples"));
    }
    let values: Vec<Vec<f64>> = (0..samples)
        .into_par_iter()
        .map(|s| {
            let tasks = sample_tasks(family, 2, seed, s as u64);
            let g0 = tasks[0].grad(phi0);
            let lhs = tasks[1].hvp(phi0, &g0);
            let mut x = phi0.to_vec();
            (0..phi0.len())
                .map(|d| {
                    x[d] = phi0[d] + h;
                    let up = dot(&tasks[0].grad(&x), &tasks[1].grad(&x));
                    x[d] = phi0[d] - h;
                    let down = dot(&tasks[0].grad(&x), &tasks[1].grad(&x));
                    x[d] = phi0[d];
                    lhs[d] - 0.5 * (up - down) / (2.0 * h)
                })
                .collect()
        })
        .collect();
    Ok(summarize(phi0.len(), &values))
}

fn symmetric_second_order<T: Task>(phi0: &[f64], tasks: &[T], eta: f64) -> Result<Vec<f64>> {
    let n = phi0.len();
    let grads: Vec<Vec<f64>> = tasks.iter().map(|t| t.grad(phi0)).collect();
    let mut out = phi0.to_vec();
    for g in &grads {
        add_scaled(&mut out, g, -eta);
    }
    // Σ_{i>j} (H_i g_j + H_j g_i) = Σ_i H_i (Σ_{j≠i} g_j)
    let mut total = vec![0.0; n];
    for g in &grads {
        add_scaled(&mut total, g, 1.0);
    }
    for (t, g) in tasks.iter().zip(&grads) {
        let others: Vec<f64> = total.iter().zip(g).map(|(a, b)| a - b).collect();
        add_scaled(&mut out, &t.hvp(phi0, &others), 0.5 * eta * eta);
    }
    Ok(out)
}

/// Draws `samples` task sequences, applies `f` forward and reversed,
/// averages the pair and summarizes.
fn sampled<F, G>(phi0: &[f64], family: &F, k: usize, samples: usize, seed: u64, f: G) -> Result<Estimate>
where
    F: TaskFamily,
    G: Fn(&[F::Task]) -> Result<Vec<f64>> + Sync,
{
    check_len(family.dim(), phi0.len())?;
    if k == 0 || samples < 2 {
        return Err(config("need k >= 1 and at least two samples"));
    }
    let values: Vec<Vec<f64>> = (0..samples)
        .into_par_iter()
        .map(|s| {
            let mut tasks = sample_tasks(family, k, seed, s as u64);
            let forward = f(&tasks)?;
            tasks.reverse();
            let backward = f(&tasks)?;
            Ok(forward.iter().zip(&backward).map(|(a, b)| 0.5 * (a + b)).collect())
        })
        .collect::<Result<_>>()?;
    Ok(summarize(phi0.len(), &values))
}

fn summarize(n: usize, values: &[Vec<f64>]) -> Estimate {
    let mut acc = vec![MomentAccumulator::default(); n];
    for v in values {
        for (a, x) in acc.iter_mut().zip(v) {
            a.push(*x);
        }
    }
    Estimate {
        mean: acc.iter().map(MomentAccumulator::mean).collect(),
        se: acc.iter().map(MomentAccumulator::mean_se).collect(),
    }
}

fn check_alpha(alpha: f64) -> Result<()> {
    if alpha > 0.0 && alpha <= 1.0 {
        Ok(())
    } else {
        Err(config(format!("alpha must lie in (0, 1], got {alpha}")))
    }
}

fn add_scaled(acc: &mut [f64], v: &[f64], s: f64) {
    for (a, v) in acc.iter_mut().zip(v) {
        *a += s * v;
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}
