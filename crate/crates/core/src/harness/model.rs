//! Toy models with analytic gradients.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{check_len, config, Result};
use crate::harness::data::{SyntheticDataset, TaskKind};
use crate::taylor::Task;

/// Serialized as `"linear-regression"`, `"logistic-regression"` or
/// `{"mlp": {"width": w}}`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelKind {
    /// Squared loss on `x·w + b`.
    LinearRegression,
    /// Logistic loss on `x·w + b`; labels in {0, 1}.
    LogisticRegression,
    /// `w₂·tanh(W₁x + b₁) + b₂`; squared loss on regression data, logistic
    /// loss on classification data.
    Mlp { width: usize },
}

/// Parameter layout: linear models `[w (d), b]`; MLP
/// `[W₁ (width×d, row-major), b₁ (width), w₂ (width), b₂]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ToyModel {
    pub kind: ModelKind,
    pub d: usize,
    #[serde(default)]
    pub l2: f64,
}

#[derive(Clone, Copy, PartialEq)]
enum Head {
    Squared,
    Logistic,
}

impl ToyModel {
    pub fn new(kind: ModelKind, d: usize, l2: f64) -> Result<Self> {
        let m = Self { kind, d, l2 };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        if self.d == 0 {
            return Err(config("model input dimension must be at least 1"));
        }
        if !(self.l2 >= 0.0 && self.l2.is_finite()) {
            return Err(config("l2 coefficient must be nonnegative"));
        }
        if let ModelKind::Mlp { width: 0 } = self.kind {
            return Err(config("mlp width must be at least 1"));
        }
        Ok(())
    }

    /// Checks the model against a dataset.
    pub fn check_data(&self, data: &SyntheticDataset) -> Result<()> {
        check_len(self.d, data.dim())?;
        if self.kind == ModelKind::LogisticRegression && data.spec.kind != TaskKind::Classification {
            return Err(config("logistic regression needs classification data"));
        }
        Ok(())
    }

    pub fn num_params(&self) -> usize {
        match self.kind {
            ModelKind::LinearRegression | ModelKind::LogisticRegression => self.d + 1,
            ModelKind::Mlp { width } => width * (self.d + 2) + 1,
        }
    }

    /// Zeros for the linear models; for the MLP `W₁ ~ N(0, 1/d)`,
    /// `w₂ ~ N(0, 1/width)` and zero biases.
    pub fn init_params(&self, seed: u64) -> Vec<f64> {
        match self.kind {
            ModelKind::LinearRegression | ModelKind::LogisticRegression => vec![0.0; self.num_params()],
            ModelKind::Mlp { width } => {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let mut p = vec![0.0; self.num_params()];
                let s1 = (1.0 / self.d as f64).sqrt();
                let s2 = (1.0 / width as f64).sqrt();
                for v in &mut p[..width * self.d] {
                    *v = s1 * rng.sample::<f64, _>(StandardNormal);
                }
                let w2 = width * (self.d + 1);
                for v in &mut p[w2..w2 + width] {
                    *v = s2 * rng.sample::<f64, _>(StandardNormal);
                }
                p
            }
        }
    }

    fn head(&self, data: &SyntheticDataset) -> Head {
        match (self.kind, data.spec.kind) {
            (ModelKind::LinearRegression, _) => Head::Squared,
            (ModelKind::LogisticRegression, _) => Head::Logistic,
            (ModelKind::Mlp { .. }, TaskKind::Regression) => Head::Squared,
            (ModelKind::Mlp { .. }, TaskKind::Classification) => Head::Logistic,
        }
    }

    /// Mean loss over `rows` plus `½·l2·‖θ‖²`.
    pub fn loss(&self, params: &[f64], data: &SyntheticDataset, rows: &[usize]) -> f64 {
        self.evaluate(params, data, rows, None)
    }

    /// Loss over all rows.
    pub fn full_loss(&self, params: &[f64], data: &SyntheticDataset) -> f64 {
        let rows: Vec<usize> = (0..data.len()).collect();
        self.loss(params, data, &rows)
    }

    pub fn loss_and_grad(&self, params: &[f64], data: &SyntheticDataset, rows: &[usize]) -> (f64, Vec<f64>) {
        let mut grad = vec![0.0; params.len()];
        let loss = self.evaluate(params, data, rows, Some(&mut grad));
        (loss, grad)
    }

    fn evaluate(&self, params: &[f64], data: &SyntheticDataset, rows: &[usize], mut grad: Option<&mut [f64]>) -> f64 {
        let head = self.head(data);
        let d = self.d;
        let scale = 1.0 / rows.len().max(1) as f64;
        let mut total = 0.0;
        let mut hidden = Vec::new();
        for &r in rows {
            let x = data.row(r);
            let y = data.targets[r];
            let out = match self.kind {
                ModelKind::LinearRegression | ModelKind::LogisticRegression => {
                    params[..d].iter().zip(x).map(|(w, x)| w * x).sum::<f64>() + params[d]
                }
                ModelKind::Mlp { width } => {
                    hidden.clear();
                    for j in 0..width {
                        let z: f64 = params[j * d..(j + 1) * d].iter().zip(x).map(|(w, x)| w * x).sum::<f64>()
                            + params[width * d + j];
                        hidden.push(z.tanh());
                    }
                    let w2 = &params[width * (d + 1)..width * (d + 2)];
                    w2.iter().zip(&hidden).map(|(w, h)| w * h).sum::<f64>() + params[width * (d + 2)]
                }
            };
            let (loss, dout) = match head {
                Head::Squared => {
                    let e = out - y;
                    (0.5 * e * e, e)
                }
                Head::Logistic => {
                    let sp = out.max(0.0) + (-out.abs()).exp().ln_1p();
                    let s = if out >= 0.0 { 1.0 / (1.0 + (-out).exp()) } else { out.exp() / (1.0 + out.exp()) };
                    (sp - y * out, s - y)
                }
            };
            total += loss;
            if let Some(g) = grad.as_deref_mut() {
                let dout = dout * scale;
                match self.kind {
                    ModelKind::LinearRegression | ModelKind::LogisticRegression => {
                        for i in 0..d {
                            g[i] += dout * x[i];
                        }
                        g[d] += dout;
                    }
                    ModelKind::Mlp { width } => {
                        let w2_off = width * (d + 1);
                        for j in 0..width {
                            let h = hidden[j];
                            g[w2_off + j] += dout * h;
                            let dz = dout * params[w2_off + j] * (1.0 - h * h);
                            for i in 0..d {
                                g[j * d + i] += dz * x[i];
                            }
                            g[width * d + j] += dz;
                        }
                        g[width * (d + 2)] += dout;
                    }
                }
            }
        }
        let reg: f64 = 0.5 * self.l2 * params.iter().map(|p| p * p).sum::<f64>();
        if let Some(g) = grad {
            for (g, p) in g.iter_mut().zip(params) {
                *g += self.l2 * p;
            }
        }
        total * scale + reg
    }

    /// Largest eigenvalue of the full-batch Hessian of the squared loss for
    /// the linear model, `λ_max(X̃ᵀX̃/N) + l2` with `X̃ = [X, 1]`.
    pub fn linear_curvature(&self, data: &SyntheticDataset) -> f64 {
        let n = self.d + 1;
        let mut m = nalgebra::DMatrix::<f64>::zeros(n, n);
        for r in 0..data.len() {
            let mut xt = data.row(r).to_vec();
            xt.push(1.0);
            for i in 0..n {
                for j in 0..n {
                    m[(i, j)] += xt[i] * xt[j];
                }
            }
        }
        m /= data.len() as f64;
        m.symmetric_eigen().eigenvalues.max() + self.l2
    }
}

/// A model with a fixed batch, viewed as a [`Task`] so the generic
/// derivative checks apply.
pub struct BatchLoss<'a> {
    pub model: &'a ToyModel,
    pub data: &'a SyntheticDataset,
    pub rows: Vec<usize>,
}

impl Task for BatchLoss<'_> {
    fn dim(&self) -> usize {
        self.model.num_params()
    }

    fn loss(&self, phi: &[f64]) -> f64 {
        self.model.loss(phi, self.data, &self.rows)
    }

    fn grad(&self, phi: &[f64]) -> Vec<f64> {
        self.model.loss_and_grad(phi, self.data, &self.rows).1
    }
}
