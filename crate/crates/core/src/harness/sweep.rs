//! Hyperparameter grids over the training harness.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{config, Result};
use crate::harness::train::{train, InnerConfig, OptimizerConfig, TrainConfig};

/// Grid of inner learning rate × inner momentum, each crossed with a plain
/// run and Lookahead runs over `ks × alphas`. A momentum of 0 means plain SGD.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RobustnessGrid {
    pub learning_rates: Vec<f64>,
    pub momenta: Vec<f64>,
    pub ks: Vec<usize>,
    pub alphas: Vec<f64>,
}

impl Default for RobustnessGrid {
    fn default() -> Self {
        Self {
            learning_rates: vec![0.01, 0.03, 0.1, 0.3],
            momenta: vec![0.0, 0.9, 0.99],
            ks: vec![5, 10],
            alphas: vec![0.5, 0.8],
        }
    }
}

impl RobustnessGrid {
    pub fn validate(&self) -> Result<()> {
        if self.learning_rates.is_empty() || self.momenta.is_empty() {
            return Err(config("grid needs at least one learning rate and one momentum"));
        }
        if self.ks.contains(&0) {
            return Err(config("k must be at least 1"));
        }
        if self.alphas.iter().any(|&a| !(a > 0.0 && a <= 1.0)) {
            return Err(config("alpha must lie in (0, 1]"));
        }
        Ok(())
    }

    /// Cell configurations in output order.
    pub fn cells(&self, base: &TrainConfig) -> Vec<TrainConfig> {
        let mut out = Vec::new();
        for &lr in &self.learning_rates {
            for &beta in &self.momenta {
                let inner = if beta == 0.0 { InnerConfig::Sgd } else { InnerConfig::Momentum { beta } };
                let plain = OptimizerConfig { inner, learning_rate: lr, lookahead: None };
                let mut cell = base.clone();
                cell.optimizer = plain;
                out.push(cell.clone());
                for &k in &self.ks {
                    for &alpha in &self.alphas {
                        let mut la = cell.clone();
                        la.optimizer = plain.with_lookahead(k, alpha);
                        out.push(la);
                    }
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RobustnessRow {
    pub learning_rate: f64,
    pub momentum: f64,
    pub k: Option<usize>,
    pub alpha: Option<f64>,
    pub final_train_loss: Option<f64>,
    pub final_held_out_loss: Option<f64>,
    pub diverged: bool,
}

/// Trains every cell of `grid` on `base` (its optimizer is replaced) in
/// parallel. Rows come back in grid order and do not depend on thread count.
pub fn robustness_sweep(base: &TrainConfig, grid: &RobustnessGrid) -> Result<Vec<RobustnessRow>> {
    grid.validate()?;
    base.validate()?;
    grid.cells(base)
        .par_iter()
        .map(|cell| {
            let rec = train(cell)?;
            let opt = cell.optimizer;
            Ok(RobustnessRow {
                learning_rate: opt.learning_rate,
                momentum: match opt.inner {
                    InnerConfig::Momentum { beta } => beta,
                    _ => 0.0,
                },
                k: opt.lookahead.map(|l| l.k),
                alpha: opt.lookahead.map(|l| l.alpha),
                final_train_loss: rec.final_train_loss,
                final_held_out_loss: rec.final_held_out_loss,
                diverged: rec.diverged,
            })
        })
        .collect()
}

pub fn write_robustness_csv<W: Write>(out: W, rows: &[RobustnessRow], meta: Option<&str>) -> Result<()> {
    crate::table::write_csv(out, rows, meta)
}
