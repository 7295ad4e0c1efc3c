//! The Lookahead wrapper: k fast steps with the inner optimizer, then one
//! interpolation of the slow weights toward the fast weights.

use serde::{Deserialize, Serialize};

use crate::error::{check_len, config, Error, Result};
use crate::optim::inner::{lerp, InnerOptimizer};
use crate::params::ParamVector;

/// What happens to the inner optimizer's buffers at an outer step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MomentumMode {
    /// Keep the buffers untouched.
    #[default]
    Maintain,
    /// Interpolate the buffers between their value at the previous outer
    /// step and now, with the same α used for the weights.
    Interpolate,
    /// Zero the buffers.
    Reset,
}

impl std::str::FromStr for MomentumMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "maintain" => Ok(Self::Maintain),
            "interpolate" => Ok(Self::Interpolate),
            "reset" => Ok(Self::Reset),
            other => Err(config(format!("unknown momentum mode '{other}'"))),
        }
    }
}

pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LookaheadState {
    pub slow_weights: ParamVector,
    pub fast_weights: ParamVector,
    pub k: usize,
    pub alpha: f64,
    pub fast_step_counter: usize,
    pub momentum_mode: MomentumMode,
    pub inner: InnerOptimizer,
    /// Inner state captured at the last outer step; only kept for
    /// [`MomentumMode::Interpolate`].
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub inner_at_sync: Option<InnerOptimizer>,
}

#[derive(Serialize, Deserialize)]
struct CheckpointDocument {
    version: u32,
    state: LookaheadState,
}

impl LookaheadState {
    pub fn new(
        params: ParamVector,
        inner: InnerOptimizer,
        k: usize,
        alpha: f64,
        momentum_mode: MomentumMode,
    ) -> Result<Self> {
        validate_k_alpha(k, alpha)?;
        inner.validate(params.len())?;
        let inner_at_sync = (momentum_mode == MomentumMode::Interpolate).then(|| inner.clone());
        Ok(Self {
            fast_weights: params.clone(),
            slow_weights: params,
            k,
            alpha,
            fast_step_counter: 0,
            momentum_mode,
            inner,
            inner_at_sync,
        })
    }

    pub fn dim(&self) -> usize {
        self.slow_weights.len()
    }

    pub fn outer_step_due(&self) -> bool {
        self.fast_step_counter == self.k
    }

    /// One inner-optimizer step on the fast weights.
    pub fn inner_step(&mut self, grad: &[f64]) -> Result<&ParamVector> {
        if self.outer_step_due() {
            return Err(Error::Protocol("inner step called with k fast steps pending; outer step required first"));
        }
        check_len(self.dim(), grad.len())?;
        self.fast_weights = self.inner.step(&self.fast_weights, grad)?;
        self.fast_step_counter += 1;
        Ok(&self.fast_weights)
    }

    /// Interpolates the slow weights with the configured α.
    pub fn outer_step(&mut self) -> Result<&ParamVector> {
        self.outer_step_with_alpha(self.alpha)
    }

    /// Interpolates with an explicit α (used by the adaptive step size).
    /// The stored α is left unchanged.
    pub fn outer_step_with_alpha(&mut self, alpha: f64) -> Result<&ParamVector> {
        if !self.outer_step_due() {
            return Err(Error::Protocol("outer step called before k inner steps"));
        }
        if !(alpha > 0.0 && alpha.is_finite()) {
            return Err(config(format!("outer-step alpha must be positive, got {alpha}")));
        }
        let next: Vec<f64> = self
            .slow_weights
            .iter()
            .zip(self.fast_weights.iter())
            .map(|(s, f)| lerp(*s, *f, alpha))
            .collect();
        self.slow_weights.assign(&next)?;
        self.fast_weights = self.slow_weights.clone();
        self.fast_step_counter = 0;
        match self.momentum_mode {
            MomentumMode::Maintain => {}
            MomentumMode::Reset => self.inner.reset_state(),
            MomentumMode::Interpolate => {
                let start = self
                    .inner_at_sync
                    .as_ref()
                    .ok_or(Error::Protocol("interpolate mode without a buffer snapshot"))?;
                self.inner.interpolate_state(start, alpha)?;
                self.inner_at_sync = Some(self.inner.clone());
            }
        }
        Ok(&self.slow_weights)
    }

    /// Inner step followed by an outer step when one is due. Returns whether
    /// the slow weights were updated.
    pub fn step(&mut self, grad: &[f64]) -> Result<bool> {
        self.inner_step(grad)?;
        if self.outer_step_due() {
            self.outer_step()?;
            Ok(true)
        } else {
            Ok(false)
        }
    }

    pub fn to_checkpoint_json(&self) -> String {
        let doc = CheckpointDocument {
            version: CHECKPOINT_VERSION,
            state: self.clone(),
        };
        serde_json::to_string(&doc).expect("lookahead state is always serializable")
    }

    pub fn from_checkpoint_json(json: &str) -> Result<Self> {
        let doc: CheckpointDocument =
            serde_json::from_str(json).map_err(|e| Error::Checkpoint(e.to_string()))?;
        if doc.version != CHECKPOINT_VERSION {
            return Err(Error::Checkpoint(format!(
                "unsupported checkpoint version {} (expected {CHECKPOINT_VERSION})",
                doc.version
            )));
        }
        let state = doc.state;
        validate_k_alpha(state.k, state.alpha)?;
        check_len(state.dim(), state.fast_weights.len())?;
        state.inner.validate(state.dim())?;
        if state.fast_step_counter > state.k {
            return Err(Error::Checkpoint("fast_step_counter exceeds k".into()));
        }
        if state.momentum_mode == MomentumMode::Interpolate && state.inner_at_sync.is_none() {
            return Err(Error::Checkpoint("interpolate mode requires inner_at_sync".into()));
        }
        Ok(state)
    }
}

fn validate_k_alpha(k: usize, alpha: f64) -> Result<()> {
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

    fn scalar(x: f64, inner: InnerOptimizer, k: usize, alpha: f64) -> LookaheadState {
        LookaheadState::new(ParamVector::new(vec![x]).unwrap(), inner, k, alpha, MomentumMode::Maintain)
            .unwrap()
    }

    #[test]
    fn inner_step_leaves_slow_weights() {
        // a = 1, lr = 0.5, theta = phi = 1
        let mut la = scalar(1.0, InnerOptimizer::sgd(0.5).unwrap(), 2, 0.5);
        la.inner_step(&[1.0]).unwrap();
        assert_eq!(la.fast_weights.as_slice(), &[0.5]);
        assert_eq!(la.slow_weights.as_slice(), &[1.0]);
        assert_eq!(la.fast_step_counter, 1);
    }

    #[test]
    fn outer_step_scalar_example() {
        let mut la = scalar(1.0, InnerOptimizer::sgd(0.5).unwrap(), 1, 0.5);
        la.inner_step(&[1.0]).unwrap();
        la.outer_step().unwrap();
        assert_eq!(la.slow_weights.as_slice(), &[0.75]);
        assert_eq!(la.fast_weights.as_slice(), &[0.75]);
        assert_eq!(la.fast_step_counter, 0);
    }

    #[test]
    fn protocol_errors() {
        let mut la = scalar(1.0, InnerOptimizer::sgd(0.1).unwrap(), 1, 0.5);
        assert!(matches!(la.outer_step(), Err(Error::Protocol(_))));
        la.inner_step(&[1.0]).unwrap();
        assert!(matches!(la.inner_step(&[1.0]), Err(Error::Protocol(_))));
        la.outer_step().unwrap();
        assert!(la.inner_step(&[1.0]).is_ok());
    }

    #[test]
    fn invalid_construction() {
        let p = ParamVector::new(vec![1.0]).unwrap();
        let sgd = InnerOptimizer::sgd(0.1).unwrap();
        assert!(LookaheadState::new(p.clone(), sgd.clone(), 0, 0.5, MomentumMode::Maintain).is_err());
        assert!(LookaheadState::new(p.clone(), sgd.clone(), 5, 0.0, MomentumMode::Maintain).is_err());
        assert!(LookaheadState::new(p.clone(), sgd, 5, 1.5, MomentumMode::Maintain).is_err());
        let cm = InnerOptimizer::momentum(0.1, 0.9, 3).unwrap();
        assert!(matches!(
            LookaheadState::new(p, cm, 5, 0.5, MomentumMode::Maintain),
            Err(Error::Dimension { .. })
        ));
    }

    #[test]
    fn tiny_alpha_freezes_slow_weights() {
        let mut la = scalar(1.0, InnerOptimizer::momentum(0.3, 0.9, 1).unwrap(), 5, 1e-12);
        for _ in 0..200 {
            let g = la.fast_weights[0];
            la.step(&[g]).unwrap();
        }
        assert!((la.slow_weights[0] - 1.0).abs() < 1e-10);
    }

    #[test]
    fn reset_mode_zeroes_buffers() {
        let p = ParamVector::new(vec![1.0, -1.0]).unwrap();
        for inner in [
            InnerOptimizer::momentum(0.1, 0.9, 2).unwrap(),
            InnerOptimizer::adam(0.1, 2).unwrap(),
        ] {
            let mut la = LookaheadState::new(p.clone(), inner, 3, 0.5, MomentumMode::Reset).unwrap();
            for _ in 0..3 {
                let g: Vec<f64> = la.fast_weights.to_vec();
                la.step(&g).unwrap();
            }
            match &la.inner {
                InnerOptimizer::ClassicalMomentum(m) => assert!(m.velocity.iter().all(|v| *v == 0.0)),
                InnerOptimizer::Adam(a) => {
                    assert!(a.first_moment.iter().chain(&a.second_moment).all(|v| *v == 0.0))
                }
                InnerOptimizer::Sgd(_) => unreachable!(),
            }
        }
    }

    #[test]
    fn interpolate_mode_blends_velocity() {
        let p = ParamVector::new(vec![1.0]).unwrap();
        let inner = InnerOptimizer::momentum(0.5, 0.5, 1).unwrap();
        let mut la = LookaheadState::new(p, inner, 2, 0.5, MomentumMode::Interpolate).unwrap();
        la.inner_step(&[1.0]).unwrap(); // x = 0.5, v = -0.5
        la.inner_step(&[0.5]).unwrap(); // x = 0.0, v = -0.5
        la.outer_step().unwrap();
        let InnerOptimizer::ClassicalMomentum(m) = &la.inner else { unreachable!() };
        assert_eq!(m.velocity, vec![-0.25]);
        assert_eq!(la.slow_weights.as_slice(), &[0.5]);
    }

    #[test]
    fn checkpoint_round_trip_and_errors() {
        let p = ParamVector::new(vec![0.1, 0.2, 0.3]).unwrap();
        let mut la = LookaheadState::new(
            p,
            InnerOptimizer::adam(0.01, 3).unwrap(),
            4,
            0.7,
            MomentumMode::Interpolate,
        )
        .unwrap();
        for i in 0..6 {
            la.step(&[0.1 * i as f64, -0.3, 1.0 / 3.0]).unwrap();
        }
        let json = la.to_checkpoint_json();
        assert!(json.contains("\"version\":1"));
        assert!(json.contains("\"slow_weights\""));
        let back = LookaheadState::from_checkpoint_json(&json).unwrap();
        assert_eq!(back, la);

        let bumped = json.replace("\"version\":1", "\"version\":2");
        assert!(matches!(
            LookaheadState::from_checkpoint_json(&bumped),
            Err(Error::Checkpoint(_))
        ));
        assert!(LookaheadState::from_checkpoint_json("{").is_err());
    }
}
