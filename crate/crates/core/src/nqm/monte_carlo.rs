//! Monte-Carlo check of the analytic moment dynamics: run the real optimizers
//! on freshly sampled minima `c ~ N(0, Σ)` and collect per-step moments.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{check_len, config, Result};
use crate::nqm::model::{MomentState, NoisyQuadraticModel};
use crate::optim::{InnerOptimizer, LookaheadState, MomentumMode};
use crate::params::ParamVector;
use crate::stats::MomentAccumulator;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum NqmOptimizer {
    Sgd { gamma: f64 },
    /// Classical momentum; there is no analytic counterpart.
    Momentum { gamma: f64, beta: f64 },
    /// Lookahead around SGD. One recorded step is one outer step.
    Lookahead { gamma: f64, alpha: f64, k: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonteCarloConfig {
    pub optimizer: NqmOptimizer,
    pub steps: usize,
    pub trajectories: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmpiricalMoments {
    pub mean: Vec<f64>,
    pub var: Vec<f64>,
    pub mean_se: Vec<f64>,
    pub var_se: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonteCarloRun {
    pub config: MonteCarloConfig,
    /// Entry `t` holds the moments after `t` recorded steps; entry 0 is the
    /// sampled initial state.
    pub steps: Vec<EmpiricalMoments>,
}

/// Samples `x₀ ~ N(init.mean, init.var)` per trajectory and runs the
/// configured optimizer. Trajectory `j` draws from ChaCha8 stream `j` of
/// `config.seed`, so results do not depend on scheduling.
pub fn monte_carlo_nqm(
    model: &NoisyQuadraticModel,
    init: &MomentState,
    config: &MonteCarloConfig,
) -> Result<MonteCarloRun> {
    let n = model.dim();
    check_len(n, init.dim())?;
    if config.trajectories < 2 {
        return Err(self::config("monte carlo needs at least two trajectories"));
    }
    validate_optimizer(model, &config.optimizer)?;

    let mut acc = vec![vec![MomentAccumulator::default(); n]; config.steps + 1];
    let noise_sd: Vec<f64> = model.noise().iter().map(|s| s.sqrt()).collect();
    let init_sd: Vec<f64> = init.var.iter().map(|s| s.sqrt()).collect();

    for j in 0..config.trajectories {
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        rng.set_stream(j as u64);
        let x0: Vec<f64> = (0..n)
            .map(|i| init.mean[i] + init_sd[i] * rng.sample::<f64, _>(StandardNormal))
            .collect();
        record(&mut acc[0], &x0);
        let mut grad = vec![0.0; n];
        let mut noisy_grad = |x: &[f64], rng: &mut ChaCha8Rng| {
            for i in 0..n {
                let c = noise_sd[i] * rng.sample::<f64, _>(StandardNormal);
                grad[i] = model.curvature()[i] * (x[i] - c);
            }
            grad.clone()
        };
        let params = ParamVector::new(x0)?;
        match config.optimizer {
            NqmOptimizer::Sgd { gamma } => {
                let mut opt = InnerOptimizer::sgd(gamma)?;
                run_plain(&mut opt, params, config.steps, &mut acc, &mut rng, &mut noisy_grad)?;
            }
            NqmOptimizer::Momentum { gamma, beta } => {
                let mut opt = InnerOptimizer::momentum(gamma, beta, n)?;
                run_plain(&mut opt, params, config.steps, &mut acc, &mut rng, &mut noisy_grad)?;
            }
            NqmOptimizer::Lookahead { gamma, alpha, k } => {
                let inner = InnerOptimizer::sgd(gamma)?;
                let mut la = LookaheadState::new(params, inner, k, alpha, MomentumMode::Maintain)?;
                for slot in &mut acc[1..=config.steps] {
                    for _ in 0..k {
                        let g = noisy_grad(&la.fast_weights, &mut rng);
                        la.inner_step(&g)?;
                    }
                    la.outer_step()?;
                    record(slot, &la.slow_weights);
                }
            }
        }
    }

    let steps = acc
        .iter()
        .map(|per_dim| EmpiricalMoments {
            mean: per_dim.iter().map(MomentAccumulator::mean).collect(),
            var: per_dim.iter().map(MomentAccumulator::variance).collect(),
            mean_se: per_dim.iter().map(MomentAccumulator::mean_se).collect(),
            var_se: per_dim.iter().map(MomentAccumulator::variance_se).collect(),
        })
        .collect();
    Ok(MonteCarloRun { config: config.clone(), steps })
}

fn run_plain<F>(
    opt: &mut InnerOptimizer,
    mut params: ParamVector,
    steps: usize,
    acc: &mut [Vec<MomentAccumulator>],
    rng: &mut ChaCha8Rng,
    noisy_grad: &mut F,
) -> Result<()>
where
    F: FnMut(&[f64], &mut ChaCha8Rng) -> Vec<f64>,
{
    for slot in acc.iter_mut().take(steps + 1).skip(1) {
        let g = noisy_grad(&params, rng);
        params = opt.step(&params, &g)?;
        record(slot, &params);
    }
    Ok(())
}

fn record(acc: &mut [MomentAccumulator], x: &[f64]) {
    for (a, v) in acc.iter_mut().zip(x) {
        a.push(*v);
    }
}

fn validate_optimizer(model: &NoisyQuadraticModel, opt: &NqmOptimizer) -> Result<()> {
    match *opt {
        NqmOptimizer::Sgd { gamma } => model.check_gamma(gamma),
        NqmOptimizer::Lookahead { gamma, alpha, k } => {
            model.check_gamma(gamma)?;
            if k == 0 || !(alpha > 0.0 && alpha <= 1.0) {
                return Err(config("lookahead needs k >= 1 and alpha in (0, 1]"));
            }
            Ok(())
        }
        NqmOptimizer::Momentum { gamma, beta } => {
            if !(gamma > 0.0 && gamma.is_finite()) || !(0.0..1.0).contains(&beta) {
                return Err(config("momentum needs gamma > 0 and beta in [0, 1)"));
            }
            Ok(())
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nqm::dynamics::{lookahead_moment_step, sgd_moment_step};

    fn cfg(optimizer: NqmOptimizer, steps: usize, trajectories: usize) -> MonteCarloConfig {
        MonteCarloConfig { optimizer, steps, trajectories, seed: 11 }
    }

    #[test]
    fn noiseless_is_deterministic() {
        let model = NoisyQuadraticModel::new(vec![1.0, 0.5], vec![0.0, 0.0]).unwrap();
        let init = MomentState::deterministic(1.0, 2);
        let run = monte_carlo_nqm(&model, &init, &cfg(NqmOptimizer::Sgd { gamma: 0.5 }, 4, 50)).unwrap();
        let mut exact = init.clone();
        for t in 1..=4 {
            exact = sgd_moment_step(&exact, 0.5, &model).unwrap();
            assert_eq!(run.steps[t].mean, exact.mean);
            assert_eq!(run.steps[t].var, vec![0.0, 0.0]);
        }
    }

    #[test]
    fn scalar_sgd_and_lookahead_first_step() {
        let model = NoisyQuadraticModel::scalar(1.0, 1.0).unwrap();
        let init = MomentState::deterministic(1.0, 1);
        let sgd = monte_carlo_nqm(&model, &init, &cfg(NqmOptimizer::Sgd { gamma: 0.5 }, 1, 20_000)).unwrap();
        let s = &sgd.steps[1];
        assert!((s.mean[0] - 0.5).abs() < 3.0 * s.mean_se[0]);
        assert!((s.var[0] - 0.25).abs() < 3.0 * s.var_se[0]);

        let la_opt = NqmOptimizer::Lookahead { gamma: 0.5, alpha: 0.5, k: 1 };
        let la = monte_carlo_nqm(&model, &init, &cfg(la_opt, 1, 20_000)).unwrap();
        let exact = lookahead_moment_step(&init, 0.5, 0.5, 1, &model).unwrap();
        let s = &la.steps[1];
        assert!((s.var[0] - exact.var[0]).abs() < 3.0 * s.var_se[0]);
        assert!((s.mean[0] - exact.mean[0]).abs() < 3.0 * s.mean_se[0]);
    }

    #[test]
    fn reproducible_from_seed() {
        let model = NoisyQuadraticModel::scalar(1.0, 1.0).unwrap();
        let init = MomentState::deterministic(1.0, 1);
        let c = cfg(NqmOptimizer::Momentum { gamma: 0.1, beta: 0.9 }, 5, 100);
        assert_eq!(monte_carlo_nqm(&model, &init, &c).unwrap(), monte_carlo_nqm(&model, &init, &c).unwrap());
    }

    #[test]
    fn rejects_unstable_gamma() {
        let model = NoisyQuadraticModel::scalar(1.0, 1.0).unwrap();
        let init = MomentState::deterministic(1.0, 1);
        assert!(monte_carlo_nqm(&model, &init, &cfg(NqmOptimizer::Sgd { gamma: 2.0 }, 1, 10)).is_err());
    }
}
