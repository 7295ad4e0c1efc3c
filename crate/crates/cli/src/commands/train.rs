use clap::{Args, ValueEnum};
use lookahead_core::harness::{
    inner_loop_trace, robustness_sweep, train, write_robustness_csv, write_run_jsonl, AdaptiveAlphaConfig,
    DatasetSpec, InnerConfig, LookaheadConfig, ModelKind, OptimizerConfig, RobustnessGrid, RunRecord, Sampling,
    ToyModel, TrainConfig,
};
use lookahead_core::optim::MomentumMode;
use lookahead_core::table::write_csv;
use serde::{Deserialize, Serialize};

use crate::config::{meta_line, resolve, CliError, CliResult, Common, Output, Status};

#[derive(Debug, Clone, Copy, ValueEnum)]
enum InnerFlag {
    Sgd,
    Momentum,
    Adam,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ModeFlag {
    Maintain,
    Interpolate,
    Reset,
}

/// Flags shared by `train` and `adaptive-alpha-demo`.
#[derive(Debug, Args)]
struct RunFlags {
    #[arg(long)]
    learning_rate: Option<f64>,
    #[arg(long, value_enum)]
    inner: Option<InnerFlag>,
    /// Inner momentum; implies --inner momentum unless --inner is given
    #[arg(long)]
    beta: Option<f64>,
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long, value_enum)]
    momentum_mode: Option<ModeFlag>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
}

impl RunFlags {
    fn apply(&self, run: &mut TrainConfig, seed: Option<u64>) {
        let opt = &mut run.optimizer;
        opt.learning_rate = self.learning_rate.unwrap_or(opt.learning_rate);
        let beta = self.beta.or(match opt.inner {
            InnerConfig::Momentum { beta } => Some(beta),
            _ => None,
        });
        match (self.inner, self.beta) {
            (Some(InnerFlag::Sgd), _) => opt.inner = InnerConfig::Sgd,
            (Some(InnerFlag::Adam), _) => opt.inner = InnerConfig::Adam,
            (Some(InnerFlag::Momentum), _) | (None, Some(_)) => {
                opt.inner = InnerConfig::Momentum { beta: beta.unwrap_or(0.9) }
            }
            (None, None) => {}
        }
        if self.k.is_some() || self.alpha.is_some() || self.momentum_mode.is_some() {
            let la = opt.lookahead.get_or_insert(LookaheadConfig {
                k: 5,
                alpha: 0.5,
                momentum_mode: MomentumMode::Maintain,
                adaptive: None,
            });
            la.k = self.k.unwrap_or(la.k);
            la.alpha = self.alpha.unwrap_or(la.alpha);
            if let Some(m) = self.momentum_mode {
                la.momentum_mode = match m {
                    ModeFlag::Maintain => MomentumMode::Maintain,
                    ModeFlag::Interpolate => MomentumMode::Interpolate,
                    ModeFlag::Reset => MomentumMode::Reset,
                };
            }
        }
        run.epochs = self.epochs.unwrap_or(run.epochs);
        run.batch_size = self.batch_size.unwrap_or(run.batch_size);
        run.seed = seed.unwrap_or(run.seed);
    }
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    common: Common,
    #[command(flatten)]
    run: RunFlags,
    /// Train without the Lookahead wrapper
    #[arg(long, conflicts_with_all = ["k", "alpha", "momentum_mode"])]
    plain: bool,
    /// Expand the robustness grid, one summary row per cell
    #[arg(long, conflicts_with = "trace")]
    sweep: bool,
    /// Record held-out loss after every inner and outer step
    #[arg(long)]
    trace: bool,
    /// Check first that Lookahead with alpha = 1 reproduces the inner optimizer
    #[arg(long)]
    self_test: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TrainCommandConfig {
    run: TrainConfig,
    grid: RobustnessGrid,
}

fn default_run() -> TrainConfig {
    TrainConfig {
        model: ToyModel { kind: ModelKind::LinearRegression, d: 8, l2: 0.0 },
        dataset: DatasetSpec::regression(8, 512, 0.5, 7),
        held_out: 1024,
        optimizer: OptimizerConfig::sgd(0.05).with_lookahead(5, 0.5),
        epochs: 20,
        batch_size: 32,
        seed: 0,
        sampling: Sampling::WithoutReplacement,
    }
}

#[derive(Serialize)]
struct SummaryRow {
    learning_rate: f64,
    inner: &'static str,
    momentum: f64,
    k: Option<usize>,
    alpha: Option<f64>,
    seed: u64,
    steps: usize,
    diverged: bool,
    final_train_loss: Option<f64>,
    final_held_out_loss: Option<f64>,
}

fn summary(rec: &RunRecord) -> SummaryRow {
    let opt = rec.config.optimizer;
    let (inner, momentum) = match opt.inner {
        InnerConfig::Sgd => ("sgd", 0.0),
        InnerConfig::Momentum { beta } => ("momentum", beta),
        InnerConfig::Adam => ("adam", 0.0),
    };
    SummaryRow {
        learning_rate: opt.learning_rate,
        inner,
        momentum,
        k: opt.lookahead.map(|l| l.k),
        alpha: opt.lookahead.map(|l| l.alpha),
        seed: rec.config.seed,
        steps: rec.train_loss.len(),
        diverged: rec.diverged,
        final_train_loss: rec.final_train_loss,
        final_held_out_loss: rec.final_held_out_loss,
    }
}

fn self_test(run: &TrainConfig) -> CliResult<()> {
    let mut plain = run.clone();
    plain.optimizer.lookahead = None;
    let mut wrapped = plain.clone();
    let k = run.optimizer.lookahead.map_or(5, |l| l.k);
    wrapped.optimizer = wrapped.optimizer.with_lookahead(k, 1.0);
    let (a, b) = (train(&plain)?, train(&wrapped)?);
    if a.train_loss == b.train_loss {
        eprintln!("self-test: alpha = 1 reproduces the inner optimizer over {} steps", a.train_loss.len());
        Ok(())
    } else {
        Err(CliError::Check("alpha = 1 trajectory differs from the inner optimizer".into()))
    }
}

/// A single run (JSON lines plus summary), a robustness sweep, or an
/// inner-loop trace.
pub fn run(args: TrainArgs) -> CliResult<Status> {
    let defaults = TrainCommandConfig { run: default_run(), grid: RobustnessGrid::default() };
    let mut cfg = resolve(&defaults, args.common.config.as_deref())?;
    args.run.apply(&mut cfg.run, args.common.seed);
    if args.plain {
        cfg.run.optimizer.lookahead = None;
    }
    cfg.run.validate()?;
    if args.sweep {
        cfg.grid.validate()?;
    }
    let out = Output::prepare(&args.common.output)?;
    let meta = meta_line("train", cfg.run.seed, &cfg);

    if args.self_test {
        self_test(&cfg.run)?;
    }
    if args.sweep {
        eprintln!("train: sweeping {} cells", cfg.grid.cells(&cfg.run).len());
        let rows = robustness_sweep(&cfg.run, &cfg.grid)?;
        let mut buf = Vec::new();
        write_robustness_csv(&mut buf, &rows, Some(&meta))?;
        out.write("sweep.csv", &buf)?;
        let diverged = rows.iter().filter(|r| r.diverged).count();
        return Ok(if diverged > 0 {
            Status::Partial(format!("{diverged} of {} cells diverged", rows.len()))
        } else {
            Status::Done
        });
    }
    if args.trace {
        let trace = inner_loop_trace(&cfg.run)?;
        let mut buf = Vec::new();
        write_csv(&mut buf, &trace, Some(&meta))?;
        out.write("trace.csv", &buf)?;
        let expected = cfg.run.epochs * cfg.run.steps_per_epoch();
        let inner_entries = trace.iter().filter(|e| e.phase == lookahead_core::harness::TracePhase::Inner).count();
        return Ok(if inner_entries < expected {
            Status::Partial("the traced run diverged".into())
        } else {
            Status::Done
        });
    }
    let rec = train(&cfg.run)?;
    let mut buf = Vec::new();
    write_run_jsonl(&mut buf, &rec, Some(&meta))?;
    out.write("run.jsonl", &buf)?;
    let mut buf = Vec::new();
    write_csv(&mut buf, &[summary(&rec)], Some(&meta))?;
    out.write("summary.csv", &buf)?;
    Ok(if rec.diverged { Status::Partial("the run diverged".into()) } else { Status::Done })
}

#[derive(Debug, Args)]
pub struct DemoArgs {
    #[command(flatten)]
    common: Common,
    #[command(flatten)]
    run: RunFlags,
    /// Lower clip for the adaptive step size
    #[arg(long)]
    alpha_low: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct DemoConfig {
    run: TrainConfig,
    alpha_low: f64,
}

#[derive(Serialize)]
struct DemoRow {
    step: usize,
    fixed_loss: Option<f64>,
    adaptive_loss: Option<f64>,
    /// α used by the adaptive run, on steps that end a cycle.
    adaptive_alpha: Option<f64>,
}

/// Training loss with a fixed α next to the clipped adaptive α̂*.
pub fn adaptive_demo(args: DemoArgs) -> CliResult<Status> {
    let defaults = DemoConfig {
        run: TrainConfig {
            model: ToyModel { kind: ModelKind::Mlp { width: 16 }, d: 4, l2: 1e-4 },
            dataset: DatasetSpec::classification(4, 1024, 0.3, 7),
            held_out: 1024,
            optimizer: OptimizerConfig { inner: InnerConfig::Adam, learning_rate: 0.01, lookahead: None }
                .with_lookahead(5, 0.5),
            epochs: 10,
            batch_size: 32,
            seed: 0,
            sampling: Sampling::WithoutReplacement,
        },
        alpha_low: AdaptiveAlphaConfig::default().alpha_low,
    };
    let mut cfg = resolve(&defaults, args.common.config.as_deref())?;
    args.run.apply(&mut cfg.run, args.common.seed);
    cfg.alpha_low = args.alpha_low.unwrap_or(cfg.alpha_low);
    if !(cfg.alpha_low > 0.0 && cfg.alpha_low < 1.0) {
        return Err(CliError::Usage(format!("alpha_low must lie in (0, 1), got {}", cfg.alpha_low)));
    }
    let Some(mut la) = cfg.run.optimizer.lookahead else {
        return Err(CliError::Usage("the demo needs a lookahead section (k, alpha)".into()));
    };
    cfg.run.validate()?;
    let out = Output::prepare(&args.common.output)?;

    la.adaptive = None;
    let mut fixed = cfg.run.clone();
    fixed.optimizer.lookahead = Some(la);
    la.adaptive = Some(AdaptiveAlphaConfig { alpha_low: cfg.alpha_low });
    let mut adaptive = cfg.run.clone();
    adaptive.optimizer.lookahead = Some(la);
    let (f, a) = (train(&fixed)?, train(&adaptive)?);

    let steps = f.train_loss.len().max(a.train_loss.len());
    let rows: Vec<DemoRow> = (0..steps)
        .map(|i| DemoRow {
            step: i + 1,
            fixed_loss: f.train_loss.get(i).copied(),
            adaptive_loss: a.train_loss.get(i).copied(),
            adaptive_alpha: if (i + 1) % la.k == 0 { a.outer_alphas.get((i + 1) / la.k - 1).copied() } else { None },
        })
        .collect();
    let mut buf = Vec::new();
    write_csv(&mut buf, &rows, Some(&meta_line("adaptive-alpha-demo", cfg.run.seed, &cfg)))?;
    out.write("adaptive_alpha.csv", &buf)?;
    Ok(if f.diverged || a.diverged { Status::Partial("a demo run diverged".into()) } else { Status::Done })
}
