//! Ratio tests and JSON report rows.

use serde::{Deserialize, Serialize};

use crate::error::{config, Result};
use crate::taylor::expansion::Estimate;

/// One report entry. `ratio` is `error(η)/error(η/2)` for ratio tests and
/// `|mean|/se` for statistical checks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub eta: Option<f64>,
    pub error: f64,
    pub ratio: Option<f64>,
    pub se: Option<f64>,
}

/// Evaluates `error_at` on `etas` and fills in the ratio between each entry
/// and the next one. Consecutive learning rates are expected to halve.
pub fn ratio_test<F>(etas: &[f64], mut error_at: F) -> Result<Vec<ReportRow>>
where
    F: FnMut(f64) -> Result<f64>,
{
    if etas.len() < 2 {
        return Err(config("ratio test needs at least two learning rates"));
    }
    let errors: Vec<f64> = etas.iter().map(|e| error_at(*e)).collect::<Result<_>>()?;
    Ok(etas
        .iter()
        .enumerate()
        .map(|(i, &eta)| ReportRow {
            eta: Some(eta),
            error: errors[i],
            ratio: errors.get(i + 1).map(|next| errors[i] / next),
            se: None,
        })
        .collect())
}

/// Largest `|mean|/se` over the coordinates of an estimate of something
/// whose expectation is zero.
pub fn zero_mean_check(est: &Estimate) -> ReportRow {
    let (mut error, mut se, mut ratio) = (0.0, 0.0, 0.0);
    for (m, s) in est.mean.iter().zip(&est.se) {
        let r = if *s > 0.0 { m.abs() / s } else if *m == 0.0 { 0.0 } else { f64::INFINITY };
        if r >= ratio {
            (error, se, ratio) = (m.abs(), *s, r);
        }
    }
    ReportRow { eta: None, error, ratio: Some(ratio), se: Some(se) }
}

/// Euclidean distance.
pub fn distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}
