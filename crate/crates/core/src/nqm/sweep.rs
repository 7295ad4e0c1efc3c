//! Grid sweeps over the analytic NQM dynamics.
//!
//! Horizons count gradient evaluations. Lookahead with `k` inner steps is
//! reported after `⌊T/k⌋` outer steps.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{config, Result};
use crate::grid::logspace;
use crate::nqm::dynamics::{
    expected_loss_unchecked, lookahead_moment_step_in_place, lookahead_steady_state_loss, sgd_moment_step,
    sgd_steady_state_loss,
};
use crate::nqm::model::{MomentState, NoisyQuadraticModel, Spectrum};
use crate::table::write_csv;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    pub learning_rates: Vec<f64>,
    pub alphas: Vec<f64>,
    pub k: usize,
    pub horizon: usize,
    pub spectrum: Spectrum,
    pub n: usize,
    /// Every dimension starts at this mean with zero variance.
    #[serde(default = "default_initial_mean")]
    pub initial_mean: f64,
}

fn default_initial_mean() -> f64 {
    1.0
}

impl SweepSpec {
    /// 100 learning rates in `[1e-3, 0.99]`, 50 α in `[1e-4, 1]`, k = 5,
    /// T = 1000, `a_i = 1/i` with n = 100.
    pub fn convergence_default() -> Self {
        Self {
            learning_rates: logspace(1e-3, 0.99, 100),
            alphas: logspace(1e-4, 1.0, 50),
            k: 5,
            horizon: 1000,
            spectrum: Spectrum::Inverse,
            n: 100,
            initial_mean: 1.0,
        }
    }

    /// Same as [`Self::convergence_default`] with learning rates in
    /// `[1e-4, 1e-1]`.
    pub fn finite_horizon_default() -> Self {
        Self { learning_rates: logspace(1e-4, 1e-1, 100), ..Self::convergence_default() }
    }

    pub fn validate(&self) -> Result<()> {
        if self.learning_rates.is_empty() || self.alphas.is_empty() {
            return Err(config("sweep grids must be nonempty"));
        }
        if self.learning_rates.iter().any(|g| !(*g > 0.0 && g.is_finite())) {
            return Err(config("learning rates must be positive and finite"));
        }
        if self.alphas.iter().any(|a| !(*a > 0.0 && *a <= 1.0)) {
            return Err(config("alphas must lie in (0, 1]"));
        }
        if self.k == 0 || self.horizon < self.k {
            return Err(config("need k >= 1 and horizon >= k"));
        }
        if self.n == 0 || !self.initial_mean.is_finite() {
            return Err(config("need n >= 1 and a finite initial mean"));
        }
        Ok(())
    }

    /// `Σ = A⁻¹` on the chosen spectrum.
    pub fn model(&self) -> Result<NoisyQuadraticModel> {
        NoisyQuadraticModel::with_inverse_noise(self.spectrum.eigenvalues(self.n))
    }

    pub fn initial_state(&self, dim: usize) -> MomentState {
        MomentState::deterministic(self.initial_mean, dim)
    }

    /// Horizons `k, 2k, …` up to T.
    pub fn horizons(&self) -> Vec<usize> {
        (1..=self.horizon / self.k).map(|j| j * self.k).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum OptimizerKind {
    #[serde(rename = "sgd")]
    Sgd,
    #[serde(rename = "lookahead")]
    Lookahead,
}

/// One row of the convergence comparison. Learning rates outside the
/// stability range are kept with empty losses.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub optimizer: OptimizerKind,
    pub gamma: f64,
    pub alpha: Option<f64>,
    pub k: Option<usize>,
    pub horizon: usize,
    pub loss: Option<f64>,
    pub steady_state_loss: Option<f64>,
}

impl ComparisonRow {
    pub fn stable(&self) -> bool {
        self.loss.is_some()
    }

    /// Loss at the horizon minus the steady-state loss.
    pub fn excess(&self) -> Option<f64> {
        Some(self.loss? - self.steady_state_loss?)
    }
}

/// Unrolls every configuration for T gradient evaluations. Rows are sorted by
/// steady-state loss; unstable rows come last in grid order.
pub fn convergence_comparison_sweep(spec: &SweepSpec) -> Result<Vec<ComparisonRow>> {
    spec.validate()?;
    let model = spec.model()?;
    let init = spec.initial_state(model.dim());
    let outer_steps = spec.horizon / spec.k;

    let per_gamma: Vec<Vec<ComparisonRow>> = spec
        .learning_rates
        .par_iter()
        .map(|&gamma| {
            let stable = model.check_gamma(gamma).is_ok();
            let mut rows = Vec::with_capacity(spec.alphas.len() + 1);
            let (loss, ss) = if stable {
                let mut m = init.clone();
                for _ in 0..spec.horizon {
                    m = sgd_moment_step(&m, gamma, &model)?;
                }
                (Some(expected_loss_unchecked(&m, &model)), Some(sgd_steady_state_loss(gamma, &model)?))
            } else {
                (None, None)
            };
            rows.push(ComparisonRow {
                optimizer: OptimizerKind::Sgd,
                gamma,
                alpha: None,
                k: None,
                horizon: spec.horizon,
                loss,
                steady_state_loss: ss,
            });
            for &alpha in &spec.alphas {
                let (loss, ss) = if stable {
                    let m = unroll_lookahead(&init, gamma, alpha, spec.k, outer_steps, &model, |_, _| {});
                    (
                        Some(expected_loss_unchecked(&m, &model)),
                        Some(lookahead_steady_state_loss(gamma, alpha, spec.k, &model)?),
                    )
                } else {
                    (None, None)
                };
                rows.push(ComparisonRow {
                    optimizer: OptimizerKind::Lookahead,
                    gamma,
                    alpha: Some(alpha),
                    k: Some(spec.k),
                    horizon: spec.horizon,
                    loss,
                    steady_state_loss: ss,
                });
            }
            Ok(rows)
        })
        .collect::<Result<_>>()?;

    let mut rows: Vec<ComparisonRow> = per_gamma.into_iter().flatten().collect();
    rows.sort_by(|a, b| match (a.steady_state_loss, b.steady_state_loss) {
        (Some(x), Some(y)) => x.total_cmp(&y),
        (Some(_), None) => std::cmp::Ordering::Less,
        (None, Some(_)) => std::cmp::Ordering::Greater,
        (None, None) => std::cmp::Ordering::Equal,
    });
    Ok(rows)
}

/// Best expected loss over the grid at one horizon.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HorizonRow {
    pub horizon: usize,
    pub sgd_loss: f64,
    pub sgd_gamma: f64,
    pub lookahead_loss: f64,
    pub lookahead_gamma: f64,
    pub lookahead_alpha: f64,
}

/// For each horizon `k, 2k, …, T` the minimum expected loss over the grid,
/// per optimizer. Unstable learning rates are skipped; ties keep the first
/// grid point.
pub fn finite_horizon_sweep(spec: &SweepSpec) -> Result<Vec<HorizonRow>> {
    spec.validate()?;
    let model = spec.model()?;
    let init = spec.initial_state(model.dim());
    let horizons = spec.horizons();
    let outer_steps = horizons.len();
    let stable: Vec<f64> =
        spec.learning_rates.iter().copied().filter(|g| model.check_gamma(*g).is_ok()).collect();
    if stable.is_empty() {
        return Err(config("no learning rate in the grid is inside the stability range"));
    }

    // per gamma: SGD curve, then (alpha index, curve) for Lookahead
    let curves: Vec<(Vec<f64>, Vec<Vec<f64>>)> = stable
        .par_iter()
        .map(|&gamma| {
            let mut sgd = Vec::with_capacity(outer_steps);
            let mut m = init.clone();
            for t in 1..=spec.horizon {
                m = sgd_moment_step(&m, gamma, &model)?;
                if t % spec.k == 0 {
                    sgd.push(expected_loss_unchecked(&m, &model));
                }
            }
            let la = spec
                .alphas
                .iter()
                .map(|&alpha| {
                    let mut curve = Vec::with_capacity(outer_steps);
                    unroll_lookahead(&init, gamma, alpha, spec.k, outer_steps, &model, |_, s| {
                        curve.push(expected_loss_unchecked(s, &model))
                    });
                    curve
                })
                .collect();
            Ok((sgd, la))
        })
        .collect::<Result<_>>()?;

    let mut rows = Vec::with_capacity(outer_steps);
    for (j, &horizon) in horizons.iter().enumerate() {
        let mut row = HorizonRow {
            horizon,
            sgd_loss: f64::INFINITY,
            sgd_gamma: f64::NAN,
            lookahead_loss: f64::INFINITY,
            lookahead_gamma: f64::NAN,
            lookahead_alpha: f64::NAN,
        };
        for (gi, (sgd, la)) in curves.iter().enumerate() {
            if sgd[j] < row.sgd_loss {
                row.sgd_loss = sgd[j];
                row.sgd_gamma = stable[gi];
            }
            for (ai, curve) in la.iter().enumerate() {
                if curve[j] < row.lookahead_loss {
                    row.lookahead_loss = curve[j];
                    row.lookahead_gamma = stable[gi];
                    row.lookahead_alpha = spec.alphas[ai];
                }
            }
        }
        rows.push(row);
    }
    Ok(rows)
}

/// Runs `outer_steps` Lookahead moment steps, calling `visit(t, state)` after
/// each. The caller guarantees `gamma` is stable.
fn unroll_lookahead<F>(
    init: &MomentState,
    gamma: f64,
    alpha: f64,
    k: usize,
    outer_steps: usize,
    model: &NoisyQuadraticModel,
    mut visit: F,
) -> MomentState
where
    F: FnMut(usize, &MomentState),
{
    let mut slow = init.clone();
    let mut fast = init.clone();
    for t in 1..=outer_steps {
        lookahead_moment_step_in_place(&mut slow, &mut fast, gamma, alpha, k, model);
        visit(t, &slow);
    }
    slow
}

/// Writes rows as CSV with the header
/// `optimizer,gamma,alpha,k,horizon,loss,steady_state_loss`, preceded by a
/// `# ` metadata line when one is given.
pub fn write_comparison_csv<W: Write>(out: W, rows: &[ComparisonRow], meta: Option<&str>) -> Result<()> {
    write_csv(out, rows, meta)
}

pub fn write_horizon_csv<W: Write>(out: W, rows: &[HorizonRow], meta: Option<&str>) -> Result<()> {
    write_csv(out, rows, meta)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_spec() -> SweepSpec {
        SweepSpec {
            learning_rates: vec![0.01, 0.1, 0.5, 2.5],
            alphas: vec![0.2, 0.5, 1.0],
            k: 5,
            horizon: 50,
            spectrum: Spectrum::Inverse,
            n: 10,
            initial_mean: 1.0,
        }
    }

    #[test]
    fn alpha_one_rows_duplicate_sgd() {
        let rows = convergence_comparison_sweep(&small_spec()).unwrap();
        for sgd in rows.iter().filter(|r| r.optimizer == OptimizerKind::Sgd && r.stable()) {
            let la = rows
                .iter()
                .find(|r| r.optimizer == OptimizerKind::Lookahead && r.gamma == sgd.gamma && r.alpha == Some(1.0))
                .unwrap();
            assert_eq!(la.loss, sgd.loss);
            assert_eq!(la.steady_state_loss, sgd.steady_state_loss);
        }
    }

    #[test]
    fn unstable_rows_flagged_and_last() {
        let rows = convergence_comparison_sweep(&small_spec()).unwrap();
        assert_eq!(rows.len(), 4 * 4);
        let unstable: Vec<_> = rows.iter().filter(|r| !r.stable()).collect();
        assert_eq!(unstable.len(), 4);
        assert!(unstable.iter().all(|r| r.gamma == 2.5));
        assert!(rows[12..].iter().all(|r| !r.stable()));
        let ss: Vec<f64> = rows[..12].iter().map(|r| r.steady_state_loss.unwrap()).collect();
        assert!(ss.windows(2).all(|w| w[0] <= w[1]));
        assert!(rows[..12].iter().all(|r| r.excess().unwrap() >= 0.0));
    }

    #[test]
    fn horizon_rows() {
        let rows = finite_horizon_sweep(&small_spec()).unwrap();
        assert_eq!(rows.iter().map(|r| r.horizon).collect::<Vec<_>>(), vec![5, 10, 15, 20, 25, 30, 35, 40, 45, 50]);
        for r in &rows {
            assert!(r.lookahead_loss <= r.sgd_loss);
        }
    }

    #[test]
    fn csv_header_and_empty_fields() {
        let rows = convergence_comparison_sweep(&small_spec()).unwrap();
        let mut buf = Vec::new();
        write_comparison_csv(&mut buf, &rows, Some("{\"seed\":0}")).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), "# {\"seed\":0}");
        assert_eq!(lines.next().unwrap(), "optimizer,gamma,alpha,k,horizon,loss,steady_state_loss");
        assert!(text.lines().last().unwrap().ends_with(",50,,"));
    }

    #[test]
    fn validation() {
        let mut s = small_spec();
        s.alphas.clear();
        assert!(s.validate().is_err());
        let mut s = small_spec();
        s.horizon = 3;
        assert!(s.validate().is_err());
        let mut s = small_spec();
        s.learning_rates = vec![5.0];
        assert!(finite_horizon_sweep(&s).is_err());
    }
}
