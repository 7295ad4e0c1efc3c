//! Slow-weights step size: the exact line minimizer on a quadratic and the
//! clipped estimate built from a diagonal curvature approximation.

use serde::{Deserialize, Serialize};

use crate::error::{check_len, config, Error, Result};
use crate::optim::lookahead::LookaheadState;
use crate::params::ParamVector;

/// Floor applied to every entry of a diagonal Fisher estimate.
pub const FISHER_FLOOR: f64 = 1e-8;

/// `L(x) = ½ xᵀAx − bᵀx` with diagonal positive-definite `A`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuadraticProblem {
    curvature: Vec<f64>,
    linear: ParamVector,
}

impl QuadraticProblem {
    pub fn new(curvature: Vec<f64>, linear: ParamVector) -> Result<Self> {
        check_len(curvature.len(), linear.len())?;
        if curvature.iter().any(|a| !(*a > 0.0 && a.is_finite())) {
            return Err(config("quadratic curvature entries must be positive and finite"));
        }
        Ok(Self { curvature, linear })
    }

    pub fn dim(&self) -> usize {
        self.curvature.len()
    }

    pub fn curvature(&self) -> &[f64] {
        &self.curvature
    }

    pub fn linear(&self) -> &ParamVector {
        &self.linear
    }

    /// `θ* = A⁻¹b`.
    pub fn minimizer(&self) -> Vec<f64> {
        self.linear.iter().zip(&self.curvature).map(|(b, a)| b / a).collect()
    }

    pub fn loss(&self, x: &[f64]) -> f64 {
        x.iter()
            .zip(&self.curvature)
            .zip(self.linear.iter())
            .map(|((x, a), b)| 0.5 * a * x * x - b * x)
            .sum()
    }

    pub fn gradient(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(&self.curvature)
            .zip(self.linear.iter())
            .map(|((x, a), b)| a * x - b)
            .collect()
    }
}

/// Minimizer over α of `L(θ₀ + α(θ_k − θ₀))`, unclipped:
/// `(θ₀−θ*)ᵀA(θ₀−θ_k) / (θ₀−θ_k)ᵀA(θ₀−θ_k)`.
pub fn exact_alpha_star(problem: &QuadraticProblem, theta0: &[f64], theta_k: &[f64]) -> Result<f64> {
    check_len(problem.dim(), theta0.len())?;
    check_len(problem.dim(), theta_k.len())?;
    let optimum = problem.minimizer();
    line_minimizer(problem.curvature(), theta0, theta_k, &optimum)
}

/// Same ratio with `Â` and the estimated optimum `θ_k − Â⁻¹∇̂L(θ_k)`, before
/// clipping. `fisher_diag` is floored at [`FISHER_FLOOR`].
pub fn adaptive_alpha_unclipped(
    theta0: &[f64],
    theta_k: &[f64],
    fisher_diag: &[f64],
    grad_at_theta_k: &[f64],
) -> Result<f64> {
    let n = theta0.len();
    check_len(n, theta_k.len())?;
    check_len(n, fisher_diag.len())?;
    check_len(n, grad_at_theta_k.len())?;
    if fisher_diag.iter().chain(grad_at_theta_k).any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("adaptive alpha input"));
    }
    let curvature: Vec<f64> = fisher_diag.iter().map(|f| f.max(FISHER_FLOOR)).collect();
    let optimum: Vec<f64> = theta_k
        .iter()
        .zip(grad_at_theta_k)
        .zip(&curvature)
        .map(|((t, g), a)| t - g / a)
        .collect();
    line_minimizer(&curvature, theta0, theta_k, &optimum)
}

/// Clipped adaptive step size for the pending outer step of `state`
/// (`θ₀` = slow weights, `θ_k` = fast weights). A zero-length segment carries
/// no information, so the configured α is used instead.
pub fn adaptive_alpha(
    state: &LookaheadState,
    fisher_diag: &[f64],
    grad_at_theta_k: &[f64],
    alpha_low: f64,
) -> Result<f64> {
    if !(alpha_low > 0.0 && alpha_low < 1.0) {
        return Err(config(format!("alpha_low must lie in (0, 1), got {alpha_low}")));
    }
    let raw = match adaptive_alpha_unclipped(
        &state.slow_weights,
        &state.fast_weights,
        fisher_diag,
        grad_at_theta_k,
    ) {
        Ok(a) => a,
        Err(Error::DegenerateDirection) => state.alpha,
        Err(e) => return Err(e),
    };
    Ok(raw.clamp(alpha_low, 1.0))
}

fn line_minimizer(curvature: &[f64], theta0: &[f64], theta_k: &[f64], optimum: &[f64]) -> Result<f64> {
    let (mut num, mut den, mut norm0) = (0.0, 0.0, 0.0);
    let max_a = curvature.iter().cloned().fold(0.0, f64::max);
    for i in 0..curvature.len() {
        let d = theta0[i] - theta_k[i];
        num += curvature[i] * (theta0[i] - optimum[i]) * d;
        den += curvature[i] * d * d;
        norm0 += theta0[i] * theta0[i];
    }
    if den == 0.0 || den <= 1e-12 * norm0 * max_a {
        return Err(Error::DegenerateDirection);
    }
    Ok(num / den)
}

/// Running mean of squared gradients, the Fisher diagonal used with inner
/// optimizers that do not keep one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SquaredGradMean {
    mean: Vec<f64>,
    count: u64,
}

impl SquaredGradMean {
    pub fn new(dim: usize) -> Self {
        Self { mean: vec![0.0; dim], count: 0 }
    }

    pub fn update(&mut self, grad: &[f64]) -> Result<()> {
        check_len(self.mean.len(), grad.len())?;
        self.count += 1;
        let w = 1.0 / self.count as f64;
        for (m, g) in self.mean.iter_mut().zip(grad) {
            *m += w * (g * g - *m);
        }
        Ok(())
    }

    pub fn fisher_diag(&self) -> &[f64] {
        &self.mean
    }
}
