use clap::Args;
use lookahead_core::taylor::{
    distance, expected_unrolled, expected_update_prediction, footnote_identity_gap, ratio_test, sample_tasks,
    taylor_prediction, unrolled_gd, zero_mean_check, LogisticFamily, QuadraticFamily, ReportRow,
};
use serde::{Deserialize, Serialize};

use crate::config::{resolve, CliError, CliResult, Common, Output, Status};

#[derive(Debug, Args)]
pub struct CheckArgs {
    #[command(flatten)]
    common: Common,
    /// Inner steps for the ratio test and the full-order check
    #[arg(long)]
    k: Option<usize>,
    /// Task draws per expectation
    #[arg(long)]
    samples: Option<usize>,
    /// Comma-separated step sizes, each half the previous for the ratio test
    #[arg(long, value_delimiter = ',')]
    etas: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CheckConfig {
    k: usize,
    samples: usize,
    etas: Vec<f64>,
    quadratic_n: usize,
    quadratic_jitter: f64,
    logistic_n: usize,
    logistic_rows: usize,
    ridge: f64,
    footnote_samples: usize,
    fd_step: f64,
    seed: u64,
}

impl Default for CheckConfig {
    fn default() -> Self {
        Self {
            k: 3,
            samples: 200,
            etas: vec![1e-2, 5e-3, 2.5e-3],
            quadratic_n: 4,
            quadratic_jitter: 0.3,
            logistic_n: 5,
            logistic_rows: 40,
            ridge: 0.1,
            footnote_samples: 20_000,
            fd_step: 1e-5,
            seed: 0,
        }
    }
}

#[derive(Serialize)]
struct QuadraticSection {
    /// Expected two-step prediction against the sampled unroll.
    two_step_max_error: f64,
    /// Order-k chain expansion against single unrolls.
    full_order_max_error: f64,
    pass: bool,
}

#[derive(Serialize)]
struct LogisticSection {
    rows: Vec<ReportRow>,
    pass: bool,
}

#[derive(Serialize)]
struct FootnoteSection {
    max_abs_z: f64,
    pass: bool,
}

#[derive(Serialize)]
struct Report {
    meta: serde_json::Value,
    quadratic: QuadraticSection,
    logistic: LogisticSection,
    footnote: FootnoteSection,
}

const EXACT_TOL: f64 = 1e-10;

fn start_point(n: usize) -> Vec<f64> {
    (0..n).map(|i| 0.3 * ((i + 1) as f64).sin()).collect()
}

/// Exactness on quadratics, the cubic ratio test on logistic tasks and the
/// footnote identity, written as a JSON report.
pub fn check(args: CheckArgs) -> CliResult<Status> {
    let mut cfg = resolve(&CheckConfig::default(), args.common.config.as_deref())?;
    cfg.k = args.k.unwrap_or(cfg.k);
    cfg.samples = args.samples.unwrap_or(cfg.samples);
    cfg.seed = args.common.seed.unwrap_or(cfg.seed);
    if let Some(e) = args.etas {
        cfg.etas = e;
    }
    if cfg.k == 0 || cfg.k > 5 {
        return Err(CliError::Usage("k must lie in 1..=5".into()));
    }
    let out = Output::prepare(&args.common.output)?;
    let seed = cfg.seed;

    let fam = QuadraticFamily::random(cfg.quadratic_n, cfg.quadratic_jitter, seed);
    let phi = start_point(cfg.quadratic_n);
    let eta = 0.5 / fam.max_curvature();
    let pred = expected_update_prediction(&phi, &fam, eta, 2, cfg.samples, seed)?;
    let real = expected_unrolled(&phi, &fam, eta, 2, cfg.samples, seed)?;
    let two_step = distance(&pred.mean, &real.mean);
    let mut full_order: f64 = 0.0;
    for index in 0..cfg.samples.min(50) as u64 {
        let tasks = sample_tasks(&fam, cfg.k, seed, index);
        let p = taylor_prediction(&phi, &tasks, eta, cfg.k)?;
        full_order = full_order.max(distance(&p, &unrolled_gd(&phi, &tasks, eta)?));
    }
    let quadratic = QuadraticSection {
        two_step_max_error: two_step,
        full_order_max_error: full_order,
        pass: two_step <= EXACT_TOL && full_order <= EXACT_TOL,
    };

    let fam = LogisticFamily::random(cfg.logistic_n, cfg.logistic_rows, cfg.ridge, seed)?;
    let phi = start_point(cfg.logistic_n);
    let rows = ratio_test(&cfg.etas, |eta| {
        let p = expected_update_prediction(&phi, &fam, eta, cfg.k, cfg.samples, seed)?;
        let u = expected_unrolled(&phi, &fam, eta, cfg.k, cfg.samples, seed)?;
        Ok(distance(&p.mean, &u.mean))
    })?;
    let pass = rows.iter().filter_map(|r| r.ratio).all(|r| (6.0..=10.0).contains(&r));
    let logistic = LogisticSection { rows, pass };

    let gap = footnote_identity_gap(&phi, &fam, cfg.footnote_samples, seed, cfg.fd_step)?;
    let z = zero_mean_check(&gap).ratio.unwrap_or(f64::INFINITY);
    let footnote = FootnoteSection { max_abs_z: z, pass: z <= 4.0 };

    let failed: Vec<&str> = [("quadratic", quadratic.pass), ("logistic", logistic.pass), ("footnote", footnote.pass)]
        .into_iter()
        .filter(|(_, p)| !p)
        .map(|(n, _)| n)
        .collect();
    let report = Report {
        meta: serde_json::json!({ "command": "taylor-check", "seed": seed, "config": cfg }),
        quadratic,
        logistic,
        footnote,
    };
    let mut text = serde_json::to_string_pretty(&report).expect("report serializes");
    text.push('\n');
    out.write("taylor_report.json", text.as_bytes())?;
    if failed.is_empty() {
        Ok(Status::Done)
    } else {
        Err(CliError::Check(failed.join(", ")))
    }
}
