use clap::{Args, ValueEnum};
use lookahead_core::nqm::{
    convergence_comparison_sweep, expected_loss, finite_horizon_sweep, lookahead_moment_step, sgd_moment_step,
    write_comparison_csv, write_horizon_csv, MomentState, NoisyQuadraticModel, Spectrum, SweepSpec,
};
use lookahead_core::table::write_csv;
use serde::{Deserialize, Serialize};

use crate::config::{meta_line, resolve, CliError, CliResult, Common, Output, Status};

#[derive(Debug, Args)]
pub struct DynamicsArgs {
    #[command(flatten)]
    common: Common,
    /// Learning rate (required, here or as "gamma" in the config)
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    k: Option<usize>,
    /// Number of gradient steps
    #[arg(long)]
    steps: Option<usize>,
    /// scalar, uniform, inverse, inverse-square or file:<path>
    #[arg(long)]
    spectrum: Option<String>,
    /// Dimension for the named spectra
    #[arg(long)]
    n: Option<usize>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct DynamicsConfig {
    gamma: Option<f64>,
    alpha: f64,
    k: usize,
    steps: usize,
    spectrum: Spectrum,
    n: usize,
    initial_mean: f64,
    initial_var: f64,
}

impl Default for DynamicsConfig {
    fn default() -> Self {
        Self { gamma: None, alpha: 0.5, k: 5, steps: 20, spectrum: Spectrum::Scalar, n: 1, initial_mean: 1.0, initial_var: 0.0 }
    }
}

#[derive(Serialize)]
struct DynamicsRow {
    t: usize,
    dim: usize,
    sgd_mean: f64,
    sgd_var: f64,
    sgd_loss: f64,
    lookahead_mean: f64,
    lookahead_var: f64,
    lookahead_loss: f64,
}

fn spectrum_flag(s: &Option<String>) -> CliResult<Option<Spectrum>> {
    s.as_deref().map(Spectrum::parse).transpose().map_err(CliError::from)
}

/// Per-step moments of SGD and Lookahead(SGD), one row per step and
/// dimension. The Lookahead columns follow the fast weights inside a cycle
/// and the slow weights at its end, where the two coincide.
pub fn dynamics(args: DynamicsArgs) -> CliResult<Status> {
    let mut cfg = resolve(&DynamicsConfig::default(), args.common.config.as_deref())?;
    cfg.gamma = args.gamma.or(cfg.gamma);
    cfg.alpha = args.alpha.unwrap_or(cfg.alpha);
    cfg.k = args.k.unwrap_or(cfg.k);
    cfg.steps = args.steps.unwrap_or(cfg.steps);
    cfg.n = args.n.unwrap_or(cfg.n);
    if let Some(s) = spectrum_flag(&args.spectrum)? {
        cfg.spectrum = s;
    }
    let gamma = cfg.gamma.ok_or_else(|| CliError::Usage("--gamma is required (flag or config key \"gamma\")".into()))?;
    let seed = args.common.seed.unwrap_or(0);
    let out = Output::prepare(&args.common.output)?;

    let model = NoisyQuadraticModel::with_inverse_noise(cfg.spectrum.eigenvalues(cfg.n))?;
    let n = model.dim();
    let init = MomentState::new(vec![cfg.initial_mean; n], vec![cfg.initial_var; n])?;
    // surface stability and α/k errors before any output
    sgd_moment_step(&init, gamma, &model)?;
    lookahead_moment_step(&init, gamma, cfg.alpha, cfg.k, &model)?;

    let mut rows = Vec::new();
    let (mut sgd, mut slow, mut fast) = (init.clone(), init.clone(), init);
    for t in 0..=cfg.steps {
        if t > 0 {
            sgd = sgd_moment_step(&sgd, gamma, &model)?;
            if t % cfg.k == 0 {
                slow = lookahead_moment_step(&slow, gamma, cfg.alpha, cfg.k, &model)?;
                fast = slow.clone();
            } else {
                fast = sgd_moment_step(&fast, gamma, &model)?;
            }
        }
        let (ls, ll) = (expected_loss(&sgd, &model)?, expected_loss(&fast, &model)?);
        for i in 0..n {
            rows.push(DynamicsRow {
                t,
                dim: i,
                sgd_mean: sgd.mean[i],
                sgd_var: sgd.var[i],
                sgd_loss: ls,
                lookahead_mean: fast.mean[i],
                lookahead_var: fast.var[i],
                lookahead_loss: ll,
            });
        }
    }
    let mut buf = Vec::new();
    write_csv(&mut buf, &rows, Some(&meta_line("nqm-dynamics", seed, &cfg)))?;
    out.write("nqm_dynamics.csv", &buf)?;
    Ok(Status::Done)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum SweepMode {
    Convergence,
    FiniteHorizon,
    Both,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long, value_enum)]
    mode: Option<SweepMode>,
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    horizon: Option<usize>,
    /// scalar, uniform, inverse, inverse-square or file:<path>
    #[arg(long)]
    spectrum: Option<String>,
    #[arg(long)]
    n: Option<usize>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SweepConfig {
    mode: SweepMode,
    convergence: SweepSpec,
    finite_horizon: SweepSpec,
}

/// Steady-state comparison and best-loss-per-horizon tables.
pub fn sweep(args: SweepArgs) -> CliResult<Status> {
    let defaults = SweepConfig {
        mode: SweepMode::Both,
        convergence: SweepSpec::convergence_default(),
        finite_horizon: SweepSpec::finite_horizon_default(),
    };
    let mut cfg = resolve(&defaults, args.common.config.as_deref())?;
    cfg.mode = args.mode.unwrap_or(cfg.mode);
    let spectrum = spectrum_flag(&args.spectrum)?;
    for spec in [&mut cfg.convergence, &mut cfg.finite_horizon] {
        spec.k = args.k.unwrap_or(spec.k);
        spec.horizon = args.horizon.unwrap_or(spec.horizon);
        spec.n = args.n.unwrap_or(spec.n);
        if let Some(s) = &spectrum {
            spec.spectrum = s.clone();
        }
    }
    let run_conv = cfg.mode != SweepMode::FiniteHorizon;
    let run_fh = cfg.mode != SweepMode::Convergence;
    if run_conv {
        cfg.convergence.validate()?;
    }
    if run_fh {
        cfg.finite_horizon.validate()?;
    }
    let seed = args.common.seed.unwrap_or(0);
    let out = Output::prepare(&args.common.output)?;
    let meta = meta_line("nqm-sweep", seed, &cfg);

    if run_conv {
        let spec = &cfg.convergence;
        eprintln!(
            "nqm-sweep: convergence, {} learning rates x (1 + {} alphas)",
            spec.learning_rates.len(),
            spec.alphas.len()
        );
        let rows = convergence_comparison_sweep(spec)?;
        let mut buf = Vec::new();
        write_comparison_csv(&mut buf, &rows, Some(&meta))?;
        out.write("nqm_convergence.csv", &buf)?;
    }
    if run_fh {
        let spec = &cfg.finite_horizon;
        eprintln!("nqm-sweep: finite horizon, {} horizons", spec.horizons().len());
        let rows = finite_horizon_sweep(spec)?;
        let mut buf = Vec::new();
        write_horizon_csv(&mut buf, &rows, Some(&meta))?;
        out.write("nqm_finite_horizon.csv", &buf)?;
    }
    Ok(Status::Done)
}
