//! Differentiable task losses and seeded task families.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{check_len, config, Result};

pub trait Task: Send + Sync {
    fn dim(&self) -> usize;
    fn loss(&self, phi: &[f64]) -> f64;
    fn grad(&self, phi: &[f64]) -> Vec<f64>;

    /// `∇²L(φ)·v`. The default takes central differences of the gradient
    /// with step `1e−6·(1+‖v‖)`.
    fn hvp(&self, phi: &[f64], v: &[f64]) -> Vec<f64> {
        fd_hvp(self, phi, v)
    }
}

/// Central-difference Hessian-vector product.
pub fn fd_hvp<T: Task + ?Sized>(task: &T, phi: &[f64], v: &[f64]) -> Vec<f64> {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm == 0.0 {
        return vec![0.0; phi.len()];
    }
    let h = 1e-6 * (1.0 + norm) / norm;
    let plus: Vec<f64> = phi.iter().zip(v).map(|(p, d)| p + h * d).collect();
    let minus: Vec<f64> = phi.iter().zip(v).map(|(p, d)| p - h * d).collect();
    task.grad(&plus)
        .iter()
        .zip(task.grad(&minus))
        .map(|(a, b)| (a - b) / (2.0 * h))
        .collect()
}

/// Largest relative error between `task.grad` and central differences of
/// `task.loss` with step `h`, scaled by `max(1, ‖∇L‖∞)`.
pub fn gradient_check<T: Task + ?Sized>(task: &T, phi: &[f64], h: f64) -> f64 {
    let g = task.grad(phi);
    let scale = g.iter().fold(1.0f64, |m, v| m.max(v.abs()));
    let mut x = phi.to_vec();
    let mut worst = 0.0f64;
    for i in 0..phi.len() {
        x[i] = phi[i] + h;
        let up = task.loss(&x);
        x[i] = phi[i] - h;
        let down = task.loss(&x);
        x[i] = phi[i];
        worst = worst.max(((up - down) / (2.0 * h) - g[i]).abs() / scale);
    }
    worst
}

/// Relative error of `task.hvp` against [`fd_hvp`].
pub fn hvp_check<T: Task + ?Sized>(task: &T, phi: &[f64], v: &[f64]) -> f64 {
    let exact = task.hvp(phi, v);
    let fd = fd_hvp(task, phi, v);
    let scale = exact.iter().fold(1.0f64, |m, x| m.max(x.abs()));
    exact.iter().zip(&fd).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max) / scale
}

pub trait TaskFamily: Sync {
    type Task: Task;
    fn dim(&self) -> usize;
    fn sample(&self, rng: &mut ChaCha8Rng) -> Self::Task;
}

/// `k` i.i.d. tasks drawn from ChaCha8 stream `index` of `seed`.
pub fn sample_tasks<F: TaskFamily>(family: &F, k: usize, seed: u64, index: u64) -> Vec<F::Task> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    (0..k).map(|_| family.sample(&mut rng)).collect()
}

/// `L(φ) = ½(φ − c)ᵀH(φ − c)`.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadraticTask {
    pub hessian: DMatrix<f64>,
    pub center: DVector<f64>,
}

impl QuadraticTask {
    pub fn new(hessian: DMatrix<f64>, center: Vec<f64>) -> Result<Self> {
        if !hessian.is_square() {
            return Err(config("hessian must be square"));
        }
        check_len(hessian.nrows(), center.len())?;
        if (&hessian - hessian.transpose()).amax() > 1e-12 * hessian.amax().max(1.0) {
            return Err(config("hessian must be symmetric"));
        }
        Ok(Self { hessian, center: DVector::from_vec(center) })
    }

    /// `½(φ − c)²` in one dimension.
    pub fn scalar(center: f64) -> Self {
        Self { hessian: DMatrix::from_element(1, 1, 1.0), center: DVector::from_element(1, center) }
    }
}

impl Task for QuadraticTask {
    fn dim(&self) -> usize {
        self.center.len()
    }

    fn loss(&self, phi: &[f64]) -> f64 {
        let d = DVector::from_column_slice(phi) - &self.center;
        0.5 * d.dot(&(&self.hessian * &d))
    }

    fn grad(&self, phi: &[f64]) -> Vec<f64> {
        let d = DVector::from_column_slice(phi) - &self.center;
        (&self.hessian * d).as_slice().to_vec()
    }

    fn hvp(&self, _phi: &[f64], v: &[f64]) -> Vec<f64> {
        (&self.hessian * DVector::from_column_slice(v)).as_slice().to_vec()
    }
}

/// Quadratic tasks with centers `c ~ N(μ, sd²I)` and Hessians
/// `H₀ + jitter·diag(u)`, `u ~ U[0,1)ⁿ`.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadraticFamily {
    pub base_hessian: DMatrix<f64>,
    pub hessian_jitter: f64,
    pub center_mean: Vec<f64>,
    pub center_sd: f64,
}

impl QuadraticFamily {
    /// Scalar family `½(φ − c)²`, `c ~ N(μ, sd²)`.
    pub fn scalar(mean: f64, sd: f64) -> Self {
        Self {
            base_hessian: DMatrix::from_element(1, 1, 1.0),
            hessian_jitter: 0.0,
            center_mean: vec![mean],
            center_sd: sd,
        }
    }

    /// Random family: `H₀ = QᵀQ/n + 0.1·I` with Gaussian `Q`, Gaussian mean.
    pub fn random(n: usize, jitter: f64, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let q = DMatrix::from_fn(n, n, |_, _| rng.sample::<f64, _>(StandardNormal));
        let h = q.transpose() * &q / n as f64 + DMatrix::identity(n, n) * 0.1;
        let mean = (0..n).map(|_| rng.sample(StandardNormal)).collect();
        Self { base_hessian: h, hessian_jitter: jitter, center_mean: mean, center_sd: 1.0 }
    }

    /// Largest eigenvalue any sampled Hessian can have (Weyl bound).
    pub fn max_curvature(&self) -> f64 {
        let eig = self.base_hessian.clone().symmetric_eigen();
        eig.eigenvalues.max() + self.hessian_jitter
    }
}

impl TaskFamily for QuadraticFamily {
    type Task = QuadraticTask;

    fn dim(&self) -> usize {
        self.center_mean.len()
    }

    fn sample(&self, rng: &mut ChaCha8Rng) -> QuadraticTask {
        let n = self.dim();
        let mut h = self.base_hessian.clone();
        if self.hessian_jitter != 0.0 {
            for i in 0..n {
                h[(i, i)] += self.hessian_jitter * rng.random::<f64>();
            }
        }
        let c = self
            .center_mean
            .iter()
            .map(|m| m + self.center_sd * rng.sample::<f64, _>(StandardNormal))
            .collect();
        QuadraticTask { hessian: h, center: DVector::from_vec(c) }
    }
}

/// Ridge-regularized binary logistic regression on a fixed design:
/// `L(φ) = (1/m) Σ_r [softplus(x_rᵀφ) − y_r x_rᵀφ] + (λ/2)‖φ‖²`.
#[derive(Debug, Clone, PartialEq)]
pub struct LogisticTask {
    design: std::sync::Arc<DMatrix<f64>>,
    labels: Vec<f64>,
    ridge: f64,
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

fn softplus(z: f64) -> f64 {
    z.max(0.0) + (-z.abs()).exp().ln_1p()
}

impl LogisticTask {
    fn logits(&self, phi: &[f64]) -> DVector<f64> {
        &*self.design * DVector::from_column_slice(phi)
    }
}

impl Task for LogisticTask {
    fn dim(&self) -> usize {
        self.design.ncols()
    }

    fn loss(&self, phi: &[f64]) -> f64 {
        let z = self.logits(phi);
        let m = self.labels.len() as f64;
        let data: f64 = z.iter().zip(&self.labels).map(|(z, y)| softplus(*z) - y * z).sum();
        data / m + 0.5 * self.ridge * phi.iter().map(|p| p * p).sum::<f64>()
    }

    fn grad(&self, phi: &[f64]) -> Vec<f64> {
        let z = self.logits(phi);
        let m = self.labels.len() as f64;
        let r = DVector::from_iterator(z.len(), z.iter().zip(&self.labels).map(|(z, y)| (sigmoid(*z) - y) / m));
        let g = self.design.tr_mul(&r);
        g.iter().zip(phi).map(|(g, p)| g + self.ridge * p).collect()
    }

    fn hvp(&self, phi: &[f64], v: &[f64]) -> Vec<f64> {
        let z = self.logits(phi);
        let xv = &*self.design * DVector::from_column_slice(v);
        let m = self.labels.len() as f64;
        let w = DVector::from_iterator(
            z.len(),
            z.iter().zip(xv.iter()).map(|(z, xv)| {
                let s = sigmoid(*z);
                s * (1.0 - s) * xv / m
            }),
        );
        let h = self.design.tr_mul(&w);
        h.iter().zip(v).map(|(h, v)| h + self.ridge * v).collect()
    }
}

/// Fixed Gaussian design and teacher weights; each task redraws the labels
/// `y_r ~ Bernoulli(σ(x_rᵀw*))`.
#[derive(Debug, Clone, PartialEq)]
pub struct LogisticFamily {
    design: std::sync::Arc<DMatrix<f64>>,
    teacher_prob: Vec<f64>,
    ridge: f64,
}

impl LogisticFamily {
    pub fn random(n: usize, rows: usize, ridge: f64, seed: u64) -> Result<Self> {
        if n == 0 || rows == 0 || !(ridge >= 0.0) {
            return Err(config("logistic family needs n, rows >= 1 and ridge >= 0"));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let design = DMatrix::from_fn(rows, n, |_, _| rng.sample::<f64, _>(StandardNormal));
        let teacher: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
        let z = &design * DVector::from_vec(teacher);
        Ok(Self { design: std::sync::Arc::new(design), teacher_prob: z.iter().map(|z| sigmoid(*z)).collect(), ridge })
    }
}

impl TaskFamily for LogisticFamily {
    type Task = LogisticTask;

    fn dim(&self) -> usize {
        self.design.ncols()
    }

    fn sample(&self, rng: &mut ChaCha8Rng) -> LogisticTask {
        let labels = self.teacher_prob.iter().map(|p| f64::from(rng.random::<f64>() < *p)).collect();
        LogisticTask { design: self.design.clone(), labels, ridge: self.ridge }
    }
}
