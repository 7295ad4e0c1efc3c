//! Mini-batch training runs with checkpoint/resume and inner-loop traces.

use std::io::Write;
use std::time::{Duration, Instant};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{config, Error, Result};
use crate::harness::data::{make_dataset, make_held_out, DatasetSpec, SyntheticDataset};
use crate::harness::model::ToyModel;
use crate::optim::{adaptive_alpha, InnerOptimizer, LookaheadState, MomentumMode, SquaredGradMean, CHECKPOINT_VERSION};
use crate::params::ParamVector;

/// A run is marked diverged once a mini-batch loss exceeds this or is not
/// finite.
pub const DIVERGENCE_THRESHOLD: f64 = 1e10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum InnerConfig {
    Sgd,
    Momentum { beta: f64 },
    Adam,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdaptiveAlphaConfig {
    pub alpha_low: f64,
}

impl Default for AdaptiveAlphaConfig {
    fn default() -> Self {
        Self { alpha_low: 0.2 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LookaheadConfig {
    pub k: usize,
    pub alpha: f64,
    #[serde(default)]
    pub momentum_mode: MomentumMode,
    /// When set, each outer step uses the clipped α̂* instead of `alpha`
    /// (`alpha` is then only the fallback for a zero-length step).
    #[serde(default)]
    pub adaptive: Option<AdaptiveAlphaConfig>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OptimizerConfig {
    pub inner: InnerConfig,
    pub learning_rate: f64,
    #[serde(default)]
    pub lookahead: Option<LookaheadConfig>,
}

impl OptimizerConfig {
    pub fn sgd(learning_rate: f64) -> Self {
        Self { inner: InnerConfig::Sgd, learning_rate, lookahead: None }
    }

    pub fn with_lookahead(mut self, k: usize, alpha: f64) -> Self {
        self.lookahead = Some(LookaheadConfig { k, alpha, momentum_mode: MomentumMode::Maintain, adaptive: None });
        self
    }

    fn build_inner(&self, dim: usize) -> Result<InnerOptimizer> {
        match self.inner {
            InnerConfig::Sgd => InnerOptimizer::sgd(self.learning_rate),
            InnerConfig::Momentum { beta } => InnerOptimizer::momentum(self.learning_rate, beta, dim),
            InnerConfig::Adam => InnerOptimizer::adam(self.learning_rate, dim),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Sampling {
    /// Each epoch visits a fresh permutation of the rows.
    #[default]
    WithoutReplacement,
    /// Each batch draws its rows uniformly at random.
    WithReplacement,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub model: ToyModel,
    pub dataset: DatasetSpec,
    pub held_out: usize,
    pub optimizer: OptimizerConfig,
    pub epochs: usize,
    pub batch_size: usize,
    /// Seeds parameter initialization and batch order.
    pub seed: u64,
    #[serde(default)]
    pub sampling: Sampling,
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        self.dataset.validate()?;
        if self.held_out == 0 || self.epochs == 0 {
            return Err(config("need held_out >= 1 and epochs >= 1"));
        }
        if self.batch_size == 0 || self.batch_size > self.dataset.count {
            return Err(config("batch size must lie in [1, dataset count]"));
        }
        Ok(())
    }

    /// Full batches per epoch; a trailing partial batch is dropped.
    pub fn steps_per_epoch(&self) -> usize {
        self.dataset.count / self.batch_size
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunRecord {
    pub config: TrainConfig,
    /// Mini-batch loss at the point where each gradient was taken.
    pub train_loss: Vec<f64>,
    /// Held-out loss of the evaluation weights (the slow weights under
    /// Lookahead) after each epoch.
    pub held_out_loss: Vec<f64>,
    /// α used at each outer step.
    #[serde(default)]
    pub outer_alphas: Vec<f64>,
    pub diverged: bool,
    /// Full training-set loss of the final evaluation weights.
    pub final_train_loss: Option<f64>,
    pub final_held_out_loss: Option<f64>,
    #[serde(skip)]
    pub wall_clock: Duration,
}

/// Equality ignores the wall clock.
impl PartialEq for RunRecord {
    fn eq(&self, other: &Self) -> bool {
        self.config == other.config
            && self.train_loss == other.train_loss
            && self.held_out_loss == other.held_out_loss
            && self.outer_alphas == other.outer_alphas
            && self.diverged == other.diverged
            && self.final_train_loss == other.final_train_loss
            && self.final_held_out_loss == other.final_held_out_loss
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
enum OptState {
    Plain { params: ParamVector, inner: InnerOptimizer },
    Lookahead { state: LookaheadState, fisher: Option<SquaredGradMean> },
}

impl OptState {
    fn eval_weights(&self) -> &ParamVector {
        match self {
            Self::Plain { params, .. } => params,
            Self::Lookahead { state, .. } => &state.slow_weights,
        }
    }

    fn grad_point(&self) -> &ParamVector {
        match self {
            Self::Plain { params, .. } => params,
            Self::Lookahead { state, .. } => &state.fast_weights,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TracePhase {
    /// Fast weights (or plain parameters) right after an inner step.
    Inner,
    /// Slow weights right after an outer step.
    Outer,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceEntry {
    pub step: usize,
    pub phase: TracePhase,
    pub held_out_loss: f64,
}

#[derive(Serialize, Deserialize)]
struct SessionCheckpoint {
    version: u32,
    config: TrainConfig,
    step: usize,
    optimizer: OptState,
    train_loss: Vec<f64>,
    held_out_loss: Vec<f64>,
    outer_alphas: Vec<f64>,
}

/// A resumable training run.
pub struct Session {
    config: TrainConfig,
    train: SyntheticDataset,
    held_out: SyntheticDataset,
    opt: OptState,
    step: usize,
    order: Vec<usize>,
    order_epoch: Option<usize>,
    train_loss: Vec<f64>,
    held_out_loss: Vec<f64>,
    outer_alphas: Vec<f64>,
    diverged: bool,
    elapsed: Duration,
}

impl Session {
    pub fn new(config: TrainConfig) -> Result<Self> {
        config.validate()?;
        let dim = config.model.num_params();
        let params = ParamVector::new(config.model.init_params(config.seed))?;
        let inner = config.optimizer.build_inner(dim)?;
        let opt = match config.optimizer.lookahead {
            None => OptState::Plain { params, inner },
            Some(la) => {
                if let Some(a) = la.adaptive {
                    if !(a.alpha_low > 0.0 && a.alpha_low < 1.0) {
                        return Err(crate::error::config(format!("alpha_low must lie in (0, 1), got {}", a.alpha_low)));
                    }
                }
                let fisher = match (la.adaptive, config.optimizer.inner) {
                    (Some(_), InnerConfig::Adam) | (None, _) => None,
                    (Some(_), _) => Some(SquaredGradMean::new(dim)),
                };
                OptState::Lookahead { state: LookaheadState::new(params, inner, la.k, la.alpha, la.momentum_mode)?, fisher }
            }
        };
        Self::assemble(config, opt, 0, Vec::new(), Vec::new(), Vec::new())
    }

    fn assemble(
        config: TrainConfig,
        opt: OptState,
        step: usize,
        train_loss: Vec<f64>,
        held_out_loss: Vec<f64>,
        outer_alphas: Vec<f64>,
    ) -> Result<Self> {
        let train = make_dataset(&config.dataset)?;
        let held_out = make_held_out(&config.dataset, config.held_out)?;
        config.model.check_data(&train)?;
        Ok(Self {
            config,
            train,
            held_out,
            opt,
            step,
            order: Vec::new(),
            order_epoch: None,
            train_loss,
            held_out_loss,
            outer_alphas,
            diverged: false,
            elapsed: Duration::ZERO,
        })
    }

    pub fn config(&self) -> &TrainConfig {
        &self.config
    }

    pub fn total_steps(&self) -> usize {
        self.config.epochs * self.config.steps_per_epoch()
    }

    pub fn steps_done(&self) -> usize {
        self.step
    }

    pub fn finished(&self) -> bool {
        self.diverged || self.step >= self.total_steps()
    }

    /// Weights used for evaluation: the slow weights under Lookahead.
    pub fn eval_weights(&self) -> &[f64] {
        self.opt.eval_weights()
    }

    pub fn held_out_loss_of(&self, weights: &[f64]) -> f64 {
        self.config.model.full_loss(weights, &self.held_out)
    }

    /// Runs one mini-batch step. Returns `false` once the run has finished.
    pub fn step(&mut self) -> Result<bool> {
        self.step_observed(&mut |_, _| {})
    }

    /// As [`Self::step`]; `observe` sees the fast weights after the inner
    /// step and the slow weights after an outer step.
    pub fn step_observed(&mut self, observe: &mut dyn FnMut(TracePhase, &[f64])) -> Result<bool> {
        if self.finished() {
            return Ok(false);
        }
        let started = Instant::now();
        let spe = self.config.steps_per_epoch();
        let (epoch, batch) = (self.step / spe, self.step % spe);
        let rows = self.batch_rows(epoch, batch);
        let model = &self.config.model;
        let (loss, grad) = model.loss_and_grad(self.opt.grad_point(), &self.train, &rows);
        if loss.is_finite() {
            self.train_loss.push(loss);
        }
        if !(loss.is_finite() && loss <= DIVERGENCE_THRESHOLD) {
            self.diverged = true;
            return Ok(false);
        }
        match self.apply(&grad, &rows, observe) {
            Ok(()) => {}
            Err(Error::NonFinite(_)) => {
                self.diverged = true;
                return Ok(false);
            }
            Err(e) => return Err(e),
        }
        self.step += 1;
        if self.step.is_multiple_of(spe) {
            let l = self.held_out_loss_of(self.opt.eval_weights());
            self.held_out_loss.push(l);
        }
        self.elapsed += started.elapsed();
        Ok(!self.finished())
    }

    fn apply(&mut self, grad: &[f64], rows: &[usize], observe: &mut dyn FnMut(TracePhase, &[f64])) -> Result<()> {
        match &mut self.opt {
            OptState::Plain { params, inner } => {
                *params = inner.step(params, grad)?;
                observe(TracePhase::Inner, params);
            }
            OptState::Lookahead { state, fisher } => {
                state.inner_step(grad)?;
                observe(TracePhase::Inner, &state.fast_weights);
                if let Some(f) = fisher.as_mut() {
                    f.update(grad)?;
                }
                if state.outer_step_due() {
                    let la = self.config.optimizer.lookahead.expect("lookahead state without config");
                    let alpha = match la.adaptive {
                        None => state.alpha,
                        Some(a) => {
                            let diag = match fisher {
                                Some(f) => f.fisher_diag().to_vec(),
                                None => state.inner.fisher_diag().expect("adam keeps a second moment"),
                            };
                            let (_, g_k) = self.config.model.loss_and_grad(&state.fast_weights, &self.train, rows);
                            if g_k.iter().any(|g| !g.is_finite()) {
                                return Err(Error::NonFinite("gradient at fast weights"));
                            }
                            adaptive_alpha(state, &diag, &g_k, a.alpha_low)?
                        }
                    };
                    state.outer_step_with_alpha(alpha)?;
                    self.outer_alphas.push(alpha);
                    if let Some(f) = fisher.as_mut() {
                        *f = SquaredGradMean::new(state.dim());
                    }
                    observe(TracePhase::Outer, &state.slow_weights);
                }
            }
        }
        Ok(())
    }

    fn batch_rows(&mut self, epoch: usize, batch: usize) -> Vec<usize> {
        let n = self.train.len();
        let bs = self.config.batch_size;
        let mut rng = ChaCha8Rng::seed_from_u64(self.config.seed);
        match self.config.sampling {
            Sampling::WithoutReplacement => {
                if self.order_epoch != Some(epoch) {
                    rng.set_stream(epoch as u64 + 1);
                    self.order = (0..n).collect();
                    self.order.shuffle(&mut rng);
                    self.order_epoch = Some(epoch);
                }
                self.order[batch * bs..(batch + 1) * bs].to_vec()
            }
            Sampling::WithReplacement => {
                rng.set_stream((epoch * self.config.steps_per_epoch() + batch) as u64 + 1);
                (0..bs).map(|_| rng.random_range(0..n)).collect()
            }
        }
    }

    /// Runs until done and returns the record.
    pub fn run(mut self) -> Result<RunRecord> {
        while self.step()? {}
        Ok(self.into_record())
    }

    pub fn into_record(self) -> RunRecord {
        let (final_train_loss, final_held_out_loss) = if self.diverged {
            (None, None)
        } else {
            let w = self.opt.eval_weights();
            let tr = self.config.model.full_loss(w, &self.train);
            let ho = self.config.model.full_loss(w, &self.held_out);
            (tr.is_finite().then_some(tr), ho.is_finite().then_some(ho))
        };
        let diverged = self.diverged || final_train_loss.is_none() || final_held_out_loss.is_none();
        RunRecord {
            config: self.config,
            train_loss: self.train_loss,
            held_out_loss: self.held_out_loss,
            outer_alphas: self.outer_alphas,
            diverged,
            final_train_loss,
            final_held_out_loss,
            wall_clock: self.elapsed,
        }
    }

    /// JSON snapshot of the run so far; the data are regenerated from the
    /// config on resume.
    pub fn checkpoint(&self) -> String {
        let doc = SessionCheckpoint {
            version: CHECKPOINT_VERSION,
            config: self.config.clone(),
            step: self.step,
            optimizer: self.opt.clone(),
            train_loss: self.train_loss.clone(),
            held_out_loss: self.held_out_loss.clone(),
            outer_alphas: self.outer_alphas.clone(),
        };
        serde_json::to_string(&doc).expect("session state is always serializable")
    }

    pub fn resume(json: &str) -> Result<Self> {
        let doc: SessionCheckpoint = serde_json::from_str(json).map_err(|e| Error::Checkpoint(e.to_string()))?;
        if doc.version != CHECKPOINT_VERSION {
            return Err(Error::Checkpoint(format!("unsupported checkpoint version {}", doc.version)));
        }
        doc.config.validate()?;
        if let OptState::Lookahead { state, .. } = &doc.optimizer {
            // round-trip through the optimizer's own validation
            LookaheadState::from_checkpoint_json(&state.to_checkpoint_json())?;
        }
        Self::assemble(doc.config, doc.optimizer, doc.step, doc.train_loss, doc.held_out_loss, doc.outer_alphas)
    }
}

/// Runs `config` to completion.
pub fn train(config: &TrainConfig) -> Result<RunRecord> {
    Session::new(config.clone())?.run()
}

/// Held-out loss after every inner step (fast weights) and every outer step
/// (slow weights). Length is `epochs × steps_per_epoch` plus one entry per
/// outer step, shorter if the run diverges.
pub fn inner_loop_trace(config: &TrainConfig) -> Result<Vec<TraceEntry>> {
    let mut session = Session::new(config.clone())?;
    let model = config.model.clone();
    let held_out = make_held_out(&config.dataset, config.held_out)?;
    let mut trace = Vec::new();
    loop {
        let step = session.steps_done() + 1;
        let more = session.step_observed(&mut |phase, w| {
            trace.push(TraceEntry { step, phase, held_out_loss: model.full_loss(w, &held_out) });
        })?;
        if !more {
            break;
        }
    }
    Ok(trace)
}

/// Writes one JSON object per step: `step`, `epoch`, `train_loss`, and
/// `held_out_loss` on the last step of each epoch. A `# ` metadata line comes
/// first when given.
pub fn write_run_jsonl<W: Write>(mut out: W, record: &RunRecord, meta: Option<&str>) -> Result<()> {
    let io = |e: std::io::Error| config(format!("write failed: {e}"));
    if let Some(m) = meta {
        writeln!(out, "# {m}").map_err(io)?;
    }
    let spe = record.config.steps_per_epoch();
    for (i, loss) in record.train_loss.iter().enumerate() {
        let epoch = i / spe;
        let mut line = serde_json::json!({ "step": i + 1, "epoch": epoch + 1, "train_loss": loss });
        if (i + 1) % spe == 0 {
            if let Some(h) = record.held_out_loss.get(epoch) {
                line["held_out_loss"] = serde_json::json!(h);
            }
        }
        writeln!(out, "{line}").map_err(io)?;
    }
    Ok(())
}
