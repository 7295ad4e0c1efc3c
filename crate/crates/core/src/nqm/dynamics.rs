//! Exact first/second moment recursions of SGD and Lookahead(SGD) on the
//! noisy quadratic model, and their fixed points.

use crate::error::{check_len, config, Result};
use crate::nqm::model::{MomentState, NoisyQuadraticModel};

/// `½ Σ a_i (E[x_i]² + V[x_i] + σ_i²)`.
pub fn expected_loss(m: &MomentState, model: &NoisyQuadraticModel) -> Result<f64> {
    check_len(model.dim(), m.dim())?;
    Ok(expected_loss_unchecked(m, model))
}

pub(crate) fn expected_loss_unchecked(m: &MomentState, model: &NoisyQuadraticModel) -> f64 {
    let mut total = 0.0;
    for i in 0..model.dim() {
        let a = model.curvature()[i];
        total += a * (m.mean[i] * m.mean[i] + m.var[i] + model.noise()[i]);
    }
    0.5 * total
}

/// One SGD step: `E' = (1−γa)E`, `V' = (1−γa)²V + γ²a²σ²`.
pub fn sgd_moment_step(m: &MomentState, gamma: f64, model: &NoisyQuadraticModel) -> Result<MomentState> {
    check_len(model.dim(), m.dim())?;
    model.check_gamma(gamma)?;
    let mut next = m.clone();
    sgd_moment_step_in_place(&mut next, gamma, model);
    Ok(next)
}

fn sgd_moment_step_in_place(m: &mut MomentState, gamma: f64, model: &NoisyQuadraticModel) {
    for i in 0..model.dim() {
        let a = model.curvature()[i];
        let q = 1.0 - gamma * a;
        let g = gamma * a;
        m.mean[i] *= q;
        m.var[i] = q * q * m.var[i] + g * g * model.noise()[i];
    }
}

/// One outer step of the slow-weight moments.
///
/// The fast weights start at `φ` and take `k` SGD steps, so their moments
/// follow [`sgd_moment_step`] and `cov(φ, θ_k) = (1−γa)^k V[φ]`. The
/// interpolation `φ' = (1−α)φ + αθ_k` then gives
/// `V' = (1−α)²V + α²V[θ_k] + 2α(1−α)cov`, which expands to
/// `[1−α+α(1−γa)^k]² V + α² Σ_{i<k} (1−γa)^{2i} γ²a²σ²`. Evaluated this way
/// α = 1 reproduces k SGD steps bit for bit.
pub fn lookahead_moment_step(
    m: &MomentState,
    gamma: f64,
    alpha: f64,
    k: usize,
    model: &NoisyQuadraticModel,
) -> Result<MomentState> {
    check_len(model.dim(), m.dim())?;
    model.check_gamma(gamma)?;
    check_alpha_k(alpha, k)?;
    let mut next = m.clone();
    let mut fast = m.clone();
    lookahead_moment_step_in_place(&mut next, &mut fast, gamma, alpha, k, model);
    Ok(next)
}

/// `slow` is updated in place; `fast` is scratch space of the same size.
pub(crate) fn lookahead_moment_step_in_place(
    slow: &mut MomentState,
    fast: &mut MomentState,
    gamma: f64,
    alpha: f64,
    k: usize,
    model: &NoisyQuadraticModel,
) {
    fast.mean.copy_from_slice(&slow.mean);
    fast.var.copy_from_slice(&slow.var);
    for _ in 0..k {
        sgd_moment_step_in_place(fast, gamma, model);
    }
    let w_slow = 1.0 - alpha;
    for i in 0..model.dim() {
        let r = (1.0 - gamma * model.curvature()[i]).powi(k as i32);
        let cov = r * slow.var[i];
        slow.mean[i] = w_slow * slow.mean[i] + alpha * fast.mean[i];
        slow.var[i] = (w_slow * w_slow * slow.var[i] + alpha * alpha * fast.var[i]
            + 2.0 * alpha * w_slow * cov)
            .max(0.0);
    }
}

/// Fixed point of the SGD variance recursion, `γ²a²σ² / (1 − (1−γa)²)`,
/// evaluated as `γaσ² / (2 − γa)`.
pub fn sgd_variance_fixed_point(gamma: f64, model: &NoisyQuadraticModel) -> Result<Vec<f64>> {
    model.check_gamma(gamma)?;
    Ok(model
        .curvature()
        .iter()
        .zip(model.noise())
        .map(|(a, s)| gamma * a * s / (2.0 - gamma * a))
        .collect())
}

/// Fixed point of the Lookahead variance recursion:
/// `α²(1−r²) / (α²(1−r²) + 2α(1−α)(1−r)) · V*_SGD` with `r = (1−γa)^k`.
/// The prefactor is evaluated after cancelling `α(1−r)`:
/// `α(1+r) / (α(1+r) + 2(1−α))`.
pub fn lookahead_variance_fixed_point(
    gamma: f64,
    alpha: f64,
    k: usize,
    model: &NoisyQuadraticModel,
) -> Result<Vec<f64>> {
    check_alpha_k(alpha, k)?;
    let sgd = sgd_variance_fixed_point(gamma, model)?;
    Ok(model
        .curvature()
        .iter()
        .zip(sgd)
        .map(|(a, v)| {
            let r = (1.0 - gamma * a).powi(k as i32);
            let num = alpha * (1.0 + r);
            num / (num + 2.0 * (1.0 - alpha)) * v
        })
        .collect())
}

/// Expected loss at the SGD fixed point (mean zero, variance `V*_SGD`).
pub fn sgd_steady_state_loss(gamma: f64, model: &NoisyQuadraticModel) -> Result<f64> {
    let var = sgd_variance_fixed_point(gamma, model)?;
    Ok(expected_loss_unchecked(&MomentState { mean: vec![0.0; var.len()], var }, model))
}

pub fn lookahead_steady_state_loss(
    gamma: f64,
    alpha: f64,
    k: usize,
    model: &NoisyQuadraticModel,
) -> Result<f64> {
    let var = lookahead_variance_fixed_point(gamma, alpha, k, model)?;
    Ok(expected_loss_unchecked(&MomentState { mean: vec![0.0; var.len()], var }, model))
}

/// Result of iterating a moment map until it stops moving.
#[derive(Debug, Clone)]
pub struct FixedPointIteration {
    pub state: MomentState,
    pub iterations: usize,
    pub converged: bool,
}

/// Applies `step` until the largest relative change of the variance is below
/// `rel_tol` or `max_iter` iterations have run.
pub fn iterate_to_fixed_point<F>(
    start: MomentState,
    rel_tol: f64,
    max_iter: usize,
    mut step: F,
) -> Result<FixedPointIteration>
where
    F: FnMut(&MomentState) -> Result<MomentState>,
{
    let mut state = start;
    for it in 1..=max_iter {
        let next = step(&state)?;
        let change = next
            .var
            .iter()
            .zip(&state.var)
            .map(|(n, o)| {
                let scale = n.abs().max(o.abs());
                if scale == 0.0 {
                    0.0
                } else {
                    (n - o).abs() / scale
                }
            })
            .fold(0.0, f64::max);
        state = next;
        if change <= rel_tol {
            return Ok(FixedPointIteration { state, iterations: it, converged: true });
        }
    }
    Ok(FixedPointIteration { state, iterations: max_iter, converged: false })
}

fn check_alpha_k(alpha: f64, k: usize) -> Result<()> {
    if k == 0 {
        return Err(config("k must be at least 1"));
    }
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(config(format!("alpha must lie in (0, 1], got {alpha}")));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::error::Error;

    fn unit() -> NoisyQuadraticModel {
        NoisyQuadraticModel::scalar(1.0, 1.0).unwrap()
    }

    fn state(e: f64, v: f64) -> MomentState {
        MomentState::new(vec![e], vec![v]).unwrap()
    }

    /// The Lemma's closed form, kept separate from the implementation.
    fn lemma_step(m: &MomentState, gamma: f64, alpha: f64, k: usize, model: &NoisyQuadraticModel) -> MomentState {
        let mut out = m.clone();
        for i in 0..model.dim() {
            let a = model.curvature()[i];
            let q = 1.0 - gamma * a;
            let s = 1.0 - alpha + alpha * q.powi(k as i32);
            let noise: f64 = (0..k).map(|j| q.powi(2 * j as i32)).sum::<f64>()
                * gamma * gamma * a * a * model.noise()[i];
            out.mean[i] = s * m.mean[i];
            out.var[i] = s * s * m.var[i] + alpha * alpha * noise;
        }
        out
    }

    #[test]
    fn expected_loss_examples() {
        let zero = state(0.0, 0.0);
        assert_eq!(expected_loss(&zero, &unit()).unwrap(), 0.5);
        let det = NoisyQuadraticModel::scalar(2.0, 0.0).unwrap();
        assert_eq!(expected_loss(&state(1.0, 0.0), &det).unwrap(), 1.0);
        assert_eq!(expected_loss(&state(1.0, 0.25), &unit()).unwrap(), 1.125);
        let two = MomentState::deterministic(0.0, 2);
        assert!(matches!(expected_loss(&two, &unit()), Err(Error::Dimension { .. })));
    }

    #[test]
    fn sgd_step_examples() {
        let m = state(1.0, 0.0);
        assert_eq!(sgd_moment_step(&m, 0.0, &unit()).unwrap(), m);
        let next = sgd_moment_step(&m, 0.5, &unit()).unwrap();
        assert_eq!((next.mean[0], next.var[0]), (0.5, 0.25));
    }

    #[test]
    fn stability_errors() {
        let m = state(1.0, 0.0);
        assert!(matches!(sgd_moment_step(&m, 2.0, &unit()), Err(Error::Stability { .. })));
        assert!(matches!(sgd_moment_step(&m, -0.1, &unit()), Err(Error::Stability { .. })));
        assert!(lookahead_moment_step(&m, 2.5, 0.5, 5, &unit()).is_err());
        assert!(sgd_variance_fixed_point(2.0, &unit()).is_err());
        let err = sgd_moment_step(&m, 3.0, &NoisyQuadraticModel::scalar(1.0, 1.0).unwrap()).unwrap_err();
        assert!(err.to_string().contains("2/L = 2"));
    }

    #[test]
    fn lookahead_step_examples() {
        let m = state(1.0, 0.0);
        let k1 = lookahead_moment_step(&m, 0.5, 0.5, 1, &unit()).unwrap();
        assert_eq!((k1.mean[0], k1.var[0]), (0.75, 0.0625));
        let k2 = lookahead_moment_step(&m, 0.5, 0.5, 2, &unit()).unwrap();
        assert_eq!((k2.mean[0], k2.var[0]), (0.625, 0.078125));
    }

    #[test]
    fn alpha_one_is_sgd_bitwise() {
        let model = NoisyQuadraticModel::with_inverse_noise(vec![1.0, 0.3, 0.07]).unwrap();
        let m = MomentState::new(vec![1.0, -0.4, 2.0], vec![0.1, 0.0, 0.7]).unwrap();
        let la = lookahead_moment_step(&m, 0.37, 1.0, 1, &model).unwrap();
        assert_eq!(la, sgd_moment_step(&m, 0.37, &model).unwrap());
        let mut sgd = m.clone();
        for _ in 0..5 {
            sgd = sgd_moment_step(&sgd, 0.37, &model).unwrap();
        }
        assert_eq!(lookahead_moment_step(&m, 0.37, 1.0, 5, &model).unwrap(), sgd);
    }

    #[test]
    fn matches_lemma_closed_form() {
        let model = NoisyQuadraticModel::new(vec![1.0, 0.5, 0.01], vec![2.0, 1.0, 0.3]).unwrap();
        let m = MomentState::new(vec![1.0, -2.0, 0.5], vec![0.3, 0.0, 1.0]).unwrap();
        for &(gamma, alpha, k) in &[(0.5, 0.5, 1), (1.9, 0.3, 7), (0.01, 0.9, 20), (1.2, 1.0, 3)] {
            let ours = lookahead_moment_step(&m, gamma, alpha, k, &model).unwrap();
            let lemma = lemma_step(&m, gamma, alpha, k, &model);
            for i in 0..3 {
                assert!((ours.mean[i] - lemma.mean[i]).abs() <= 1e-14 * lemma.mean[i].abs().max(1.0));
                assert!((ours.var[i] - lemma.var[i]).abs() <= 1e-13 * lemma.var[i].abs().max(1e-300));
            }
        }
    }

    #[test]
    fn fixed_point_examples() {
        let v = sgd_variance_fixed_point(0.5, &unit()).unwrap()[0];
        assert!((v - 1.0 / 3.0).abs() < 1e-15);
        let it = iterate_to_fixed_point(state(0.0, 0.0), 1e-15, 1_000_000, |m| {
            sgd_moment_step(m, 0.5, &unit())
        })
        .unwrap();
        assert!((it.state.var[0] - v).abs() < 1e-10);

        let la = lookahead_variance_fixed_point(0.5, 0.5, 1, &unit()).unwrap()[0];
        assert!((la - 1.0 / 7.0).abs() < 1e-15);
        let it = iterate_to_fixed_point(state(0.0, 0.0), 1e-15, 1_000_000, |m| {
            lookahead_moment_step(m, 0.5, 0.5, 1, &unit())
        })
        .unwrap();
        assert!((it.state.var[0] - la).abs() < 1e-10);

        let quiet = NoisyQuadraticModel::scalar(1.0, 0.0).unwrap();
        assert_eq!(sgd_variance_fixed_point(0.5, &quiet).unwrap(), vec![0.0]);
    }

    #[test]
    fn small_gamma_asymptotic() {
        // V* = γσ²a/2 + O(γ²)
        let model = NoisyQuadraticModel::scalar(0.8, 1.7).unwrap();
        let gamma = 1e-4;
        let v = sgd_variance_fixed_point(gamma, &model).unwrap()[0];
        let approx = gamma * 1.7 * 0.8 / 2.0;
        assert!(((v - approx) / approx).abs() < 1e-3);
    }

    #[test]
    fn alpha_one_fixed_point_is_sgd() {
        let model = NoisyQuadraticModel::with_inverse_noise(vec![1.0, 0.2, 0.05]).unwrap();
        for k in [1, 2, 5, 13] {
            assert_eq!(
                lookahead_variance_fixed_point(0.9, 1.0, k, &model).unwrap(),
                sgd_variance_fixed_point(0.9, &model).unwrap()
            );
        }
    }
}
