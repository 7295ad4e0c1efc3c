//! Best achievable rate per condition number for classical momentum and
//! Lookahead(CM).

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{config, Result};
use crate::grid::logspace;
use crate::table::write_csv;
use crate::quad::system::{cm_rate_reference, diagonal_rate};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RateSweepSpec {
    pub kappas: Vec<f64>,
    pub beta: f64,
    pub k: usize,
    pub alpha: f64,
    /// Log-spaced learning rates per κ, before the points `1/λ` are added.
    pub eta_points: usize,
}

impl Default for RateSweepSpec {
    /// β = 0.9, k = 20, α = 0.5, κ from 1 to 10⁴ in quarter decades, 400
    /// learning rates.
    fn default() -> Self {
        Self { kappas: logspace(1.0, 1e4, 17), beta: 0.9, k: 20, alpha: 0.5, eta_points: 400 }
    }
}

impl RateSweepSpec {
    pub fn validate(&self) -> Result<()> {
        if self.kappas.is_empty() || self.kappas.iter().any(|c| !(*c >= 1.0 && c.is_finite())) {
            return Err(config("condition numbers must be finite and at least 1"));
        }
        if !(0.0..1.0).contains(&self.beta) {
            return Err(config("beta must lie in [0, 1)"));
        }
        if self.k == 0 || !(self.alpha > 0.0 && self.alpha <= 1.0) {
            return Err(config("need k >= 1 and alpha in (0, 1]"));
        }
        if self.eta_points < 200 {
            return Err(config("use at least 200 learning rates per condition number"));
        }
        Ok(())
    }

    /// Eigenvalues `{1, 1/κ}`.
    pub fn eigenvalues(kappa: f64) -> Vec<f64> {
        if kappa == 1.0 {
            vec![1.0]
        } else {
            vec![1.0, 1.0 / kappa]
        }
    }

    /// Log-spaced grid on `(η_max·1e−4, η_max)` with `η_max = 2(1+β)/λ_max`
    /// (open at the top), plus each `1/λ_i` that falls inside.
    pub fn eta_grid(&self, lambdas: &[f64]) -> Vec<f64> {
        let lmax = lambdas.iter().cloned().fold(0.0, f64::max);
        let hi = 2.0 * (1.0 + self.beta) / lmax;
        let mut grid = logspace(hi * 1e-4, hi, self.eta_points + 1);
        grid.pop();
        grid.extend(lambdas.iter().map(|l| 1.0 / l).filter(|e| *e < hi));
        grid.sort_by(f64::total_cmp);
        grid.dedup();
        grid
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RateOptimizer {
    #[serde(rename = "cm")]
    ClassicalMomentum,
    #[serde(rename = "lookahead")]
    Lookahead,
}

/// `rate` is infinite and `eta_best` empty when no learning rate converges.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateRow {
    pub kappa: f64,
    pub optimizer: RateOptimizer,
    pub eta_best: Option<f64>,
    pub rate: f64,
}

impl RateRow {
    pub fn converges(&self) -> bool {
        self.rate < 1.0
    }
}

/// Minimum rate over the learning-rate grid, per κ and optimizer. Rows come
/// in κ order, CM before Lookahead.
pub fn rate_sweep(spec: &RateSweepSpec) -> Result<Vec<RateRow>> {
    spec.validate()?;
    let rows: Vec<[RateRow; 2]> = spec
        .kappas
        .par_iter()
        .map(|&kappa| {
            let lambdas = RateSweepSpec::eigenvalues(kappa);
            let etas = spec.eta_grid(&lambdas);
            let mut cm = (f64::INFINITY, None);
            let mut la = (f64::INFINITY, None);
            for &eta in &etas {
                let r_cm = lambdas.iter().map(|l| cm_rate_reference(*l, eta, spec.beta)).fold(0.0, f64::max);
                if r_cm < cm.0 {
                    cm = (r_cm, Some(eta));
                }
                let r_la = diagonal_rate(&lambdas, eta, spec.beta, spec.k, spec.alpha)?;
                if r_la < la.0 {
                    la = (r_la, Some(eta));
                }
            }
            let row = |optimizer, (rate, eta): (f64, Option<f64>)| {
                if rate < 1.0 {
                    RateRow { kappa, optimizer, eta_best: eta, rate }
                } else {
                    RateRow { kappa, optimizer, eta_best: None, rate: f64::INFINITY }
                }
            };
            Ok([row(RateOptimizer::ClassicalMomentum, cm), row(RateOptimizer::Lookahead, la)])
        })
        .collect::<Result<_>>()?;
    Ok(rows.into_iter().flatten().collect())
}

/// CSV with header `kappa,optimizer,eta_best,rate`.
pub fn write_rate_csv<W: Write>(out: W, rows: &[RateRow], meta: Option<&str>) -> Result<()> {
    write_csv(out, rows, meta)
}
