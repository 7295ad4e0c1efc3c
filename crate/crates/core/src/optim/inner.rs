//! Inner (fast-weight) optimizers.

use serde::{Deserialize, Serialize};

use crate::error::{check_len, config, Error, Result};
use crate::params::ParamVector;

/// Plain SGD update `params - lr * grad`.
pub fn sgd_step(params: &ParamVector, grad: &[f64], learning_rate: f64) -> Result<ParamVector> {
    check_len(params.len(), grad.len())?;
    if grad.iter().any(|g| !g.is_finite()) || !learning_rate.is_finite() {
        return Err(Error::NonFinite("sgd step input"));
    }
    let next: Vec<f64> = params
        .iter()
        .zip(grad)
        .map(|(p, g)| p - learning_rate * g)
        .collect();
    ParamVector::new(next).map_err(|_| Error::NonFinite("sgd step"))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sgd {
    pub learning_rate: f64,
}

/// Heavy-ball momentum, `θ_{t+1} = θ_t - η∇f(θ_t) + β(θ_t - θ_{t-1})`.
///
/// The previous iterate is held implicitly as the displacement
/// `velocity = θ_t - θ_{t-1}`, so `θ_{t-1} = θ_t - velocity`. A fresh
/// optimizer has zero velocity, i.e. `θ_{-1} = θ_0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Momentum {
    pub learning_rate: f64,
    pub momentum: f64,
    pub velocity: Vec<f64>,
}

impl Momentum {
    pub fn step(&mut self, params: &ParamVector, grad: &[f64]) -> Result<ParamVector> {
        check_len(params.len(), grad.len())?;
        check_len(params.len(), self.velocity.len())?;
        let mut next = Vec::with_capacity(params.len());
        let mut velocity = Vec::with_capacity(params.len());
        for ((p, g), v) in params.iter().zip(grad).zip(&self.velocity) {
            let d = self.momentum * v - self.learning_rate * g;
            next.push(p + d);
            velocity.push(d);
        }
        if velocity.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("momentum step"));
        }
        let next = ParamVector::new(next).map_err(|_| Error::NonFinite("momentum step"))?;
        self.velocity = velocity;
        Ok(next)
    }
}

/// Bias-corrected Adam.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Adam {
    pub learning_rate: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_epsilon: f64,
    pub first_moment: Vec<f64>,
    pub second_moment: Vec<f64>,
    pub step_count: u64,
}

impl Adam {
    pub const DEFAULT_BETA1: f64 = 0.9;
    pub const DEFAULT_BETA2: f64 = 0.999;
    pub const DEFAULT_EPSILON: f64 = 1e-8;

    pub fn step(&mut self, params: &ParamVector, grad: &[f64]) -> Result<ParamVector> {
        check_len(params.len(), grad.len())?;
        check_len(params.len(), self.first_moment.len())?;
        let t = self.step_count + 1;
        let c1 = 1.0 - self.adam_beta1.powf(t as f64);
        let c2 = 1.0 - self.adam_beta2.powf(t as f64);
        let mut m = self.first_moment.clone();
        let mut v = self.second_moment.clone();
        let mut next = Vec::with_capacity(params.len());
        for i in 0..params.len() {
            let g = grad[i];
            m[i] = self.adam_beta1 * m[i] + (1.0 - self.adam_beta1) * g;
            v[i] = self.adam_beta2 * v[i] + (1.0 - self.adam_beta2) * g * g;
            let m_hat = m[i] / c1;
            let v_hat = v[i] / c2;
            next.push(params[i] - self.learning_rate * m_hat / (v_hat.sqrt() + self.adam_epsilon));
        }
        let next = ParamVector::new(next).map_err(|_| Error::NonFinite("adam step"))?;
        self.first_moment = m;
        self.second_moment = v;
        self.step_count = t;
        Ok(next)
    }

    /// Bias-corrected second-moment estimate, the diagonal empirical Fisher
    /// Adam already maintains. `None` before the first step.
    pub fn fisher_diag(&self) -> Option<Vec<f64>> {
        if self.step_count == 0 {
            return None;
        }
        let c2 = 1.0 - self.adam_beta2.powf(self.step_count as f64);
        Some(self.second_moment.iter().map(|v| v / c2).collect())
    }
}

/// One of the supported inner optimizers together with its buffers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind")]
pub enum InnerOptimizer {
    #[serde(rename = "SGD")]
    Sgd(Sgd),
    ClassicalMomentum(Momentum),
    Adam(Adam),
}

impl InnerOptimizer {
    pub fn sgd(learning_rate: f64) -> Result<Self> {
        check_lr(learning_rate)?;
        Ok(Self::Sgd(Sgd { learning_rate }))
    }

    pub fn momentum(learning_rate: f64, momentum: f64, dim: usize) -> Result<Self> {
        check_lr(learning_rate)?;
        if !(0.0..1.0).contains(&momentum) {
            return Err(config(format!("momentum must lie in [0, 1), got {momentum}")));
        }
        Ok(Self::ClassicalMomentum(Momentum {
            learning_rate,
            momentum,
            velocity: vec![0.0; dim],
        }))
    }

    pub fn adam(learning_rate: f64, dim: usize) -> Result<Self> {
        Self::adam_with(
            learning_rate,
            Adam::DEFAULT_BETA1,
            Adam::DEFAULT_BETA2,
            Adam::DEFAULT_EPSILON,
            dim,
        )
    }

    pub fn adam_with(lr: f64, beta1: f64, beta2: f64, epsilon: f64, dim: usize) -> Result<Self> {
        check_lr(lr)?;
        if !(0.0..1.0).contains(&beta1) || !(0.0..1.0).contains(&beta2) {
            return Err(config("adam betas must lie in [0, 1)"));
        }
        if !(epsilon > 0.0) {
            return Err(config(format!("adam epsilon must be positive, got {epsilon}")));
        }
        Ok(Self::Adam(Adam {
            learning_rate: lr,
            adam_beta1: beta1,
            adam_beta2: beta2,
            adam_epsilon: epsilon,
            first_moment: vec![0.0; dim],
            second_moment: vec![0.0; dim],
            step_count: 0,
        }))
    }

    pub fn learning_rate(&self) -> f64 {
        match self {
            Self::Sgd(o) => o.learning_rate,
            Self::ClassicalMomentum(o) => o.learning_rate,
            Self::Adam(o) => o.learning_rate,
        }
    }

    pub fn step(&mut self, params: &ParamVector, grad: &[f64]) -> Result<ParamVector> {
        match self {
            Self::Sgd(o) => sgd_step(params, grad, o.learning_rate),
            Self::ClassicalMomentum(o) => o.step(params, grad),
            Self::Adam(o) => o.step(params, grad),
        }
    }

    /// Checks the buffer lengths and hyperparameters, e.g. after loading a
    /// checkpoint.
    pub fn validate(&self, dim: usize) -> Result<()> {
        check_lr(self.learning_rate())?;
        match self {
            Self::Sgd(_) => Ok(()),
            Self::ClassicalMomentum(o) => {
                if !(0.0..1.0).contains(&o.momentum) {
                    return Err(config("momentum must lie in [0, 1)"));
                }
                check_len(dim, o.velocity.len())
            }
            Self::Adam(o) => {
                if !(o.adam_epsilon > 0.0) {
                    return Err(config("adam epsilon must be positive"));
                }
                if o.second_moment.iter().any(|v| *v < 0.0) {
                    return Err(config("adam second moment must be nonnegative"));
                }
                check_len(dim, o.first_moment.len())?;
                check_len(dim, o.second_moment.len())
            }
        }
    }

    /// Zeroes every optimizer buffer (and Adam's step count).
    pub fn reset_state(&mut self) {
        match self {
            Self::Sgd(_) => {}
            Self::ClassicalMomentum(o) => o.velocity.iter_mut().for_each(|v| *v = 0.0),
            Self::Adam(o) => {
                o.first_moment.iter_mut().for_each(|v| *v = 0.0);
                o.second_moment.iter_mut().for_each(|v| *v = 0.0);
                o.step_count = 0;
            }
        }
    }

    /// `buffers <- start + alpha * (buffers - start)`, per buffer. Adam's
    /// second moment is floored at zero afterwards; its step count is kept.
    pub fn interpolate_state(&mut self, start: &InnerOptimizer, alpha: f64) -> Result<()> {
        match (self, start) {
            (Self::Sgd(_), Self::Sgd(_)) => Ok(()),
            (Self::ClassicalMomentum(now), Self::ClassicalMomentum(s)) => {
                lerp_into(&mut now.velocity, &s.velocity, alpha);
                Ok(())
            }
            (Self::Adam(now), Self::Adam(s)) => {
                lerp_into(&mut now.first_moment, &s.first_moment, alpha);
                lerp_into(&mut now.second_moment, &s.second_moment, alpha);
                now.second_moment.iter_mut().for_each(|v| *v = v.max(0.0));
                Ok(())
            }
            _ => Err(Error::Protocol("inner optimizer kind changed between snapshots")),
        }
    }

    /// Diagonal curvature estimate available from the optimizer itself.
    pub fn fisher_diag(&self) -> Option<Vec<f64>> {
        match self {
            Self::Adam(o) => o.fisher_diag(),
            _ => None,
        }
    }
}

/// `(1 - alpha) * from + alpha * to`, written into `to`. Exact at alpha = 1.
pub(crate) fn lerp(from: f64, to: f64, alpha: f64) -> f64 {
    (1.0 - alpha) * from + alpha * to
}

fn lerp_into(now: &mut [f64], start: &[f64], alpha: f64) {
    for (n, s) in now.iter_mut().zip(start) {
        *n = lerp(*s, *n, alpha);
    }
}

fn check_lr(lr: f64) -> Result<()> {
    if lr > 0.0 && lr.is_finite() {
        Ok(())
    } else {
        Err(config(format!("learning rate must be positive and finite, got {lr}")))
    }
}
