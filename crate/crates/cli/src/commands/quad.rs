use clap::Args;
use lookahead_core::quad::{rate_sweep, write_rate_csv, RateSweepSpec};

use crate::config::{meta_line, resolve, CliResult, Common, Output, Status};

#[derive(Debug, Args)]
pub struct RateArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    beta: Option<f64>,
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    alpha: Option<f64>,
    /// Learning rates per condition number
    #[arg(long)]
    eta_points: Option<usize>,
    /// Comma-separated condition numbers
    #[arg(long, value_delimiter = ',')]
    kappas: Option<Vec<f64>>,
}

/// Best CM and Lookahead(CM) rate per condition number.
pub fn rate(args: RateArgs) -> CliResult<Status> {
    let mut spec = resolve(&RateSweepSpec::default(), args.common.config.as_deref())?;
    spec.beta = args.beta.unwrap_or(spec.beta);
    spec.k = args.k.unwrap_or(spec.k);
    spec.alpha = args.alpha.unwrap_or(spec.alpha);
    spec.eta_points = args.eta_points.unwrap_or(spec.eta_points);
    if let Some(k) = args.kappas {
        spec.kappas = k;
    }
    spec.validate()?;
    let seed = args.common.seed.unwrap_or(0);
    let out = Output::prepare(&args.common.output)?;
    eprintln!("quad-rate: {} condition numbers x {} learning rates", spec.kappas.len(), spec.eta_points);
    let rows = rate_sweep(&spec)?;
    let mut buf = Vec::new();
    write_rate_csv(&mut buf, &rows, Some(&meta_line("quad-rate", seed, &spec)))?;
    out.write("quad_rate.csv", &buf)?;
    Ok(Status::Done)
}
