//! Seeded synthetic regression and classification data.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{config, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TaskKind {
    Regression,
    Classification,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Teacher {
    /// `x·w* + b*`, entries of `w*` drawn `N(0, 1/d)`; `b* = 0` for
    /// classification.
    Linear,
    /// `w₂·tanh(W₁x)` with a hidden layer of the given width.
    TanhMlp { width: usize },
}

/// Inputs are `N(0, I_d)`. Regression targets are the teacher output plus
/// `noise·N(0,1)`; classification labels are `1[teacher + noise·N(0,1) > 0]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetSpec {
    pub kind: TaskKind,
    pub d: usize,
    pub count: usize,
    pub noise: f64,
    pub seed: u64,
    #[serde(default = "default_teacher")]
    pub teacher: Teacher,
}

fn default_teacher() -> Teacher {
    Teacher::Linear
}

impl DatasetSpec {
    pub fn regression(d: usize, count: usize, noise: f64, seed: u64) -> Self {
        Self { kind: TaskKind::Regression, d, count, noise, seed, teacher: Teacher::Linear }
    }

    pub fn classification(d: usize, count: usize, noise: f64, seed: u64) -> Self {
        Self { kind: TaskKind::Classification, d, count, noise, seed, teacher: Teacher::Linear }
    }

    pub fn validate(&self) -> Result<()> {
        if self.d == 0 || self.count == 0 {
            return Err(config("dataset needs d >= 1 and count >= 1"));
        }
        if !(self.noise >= 0.0 && self.noise.is_finite()) {
            return Err(config("dataset noise must be nonnegative and finite"));
        }
        if let Teacher::TanhMlp { width: 0 } = self.teacher {
            return Err(config("teacher width must be at least 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticDataset {
    pub spec: DatasetSpec,
    /// Row-major, `count × d`.
    pub inputs: Vec<f64>,
    pub targets: Vec<f64>,
}

impl SyntheticDataset {
    pub fn len(&self) -> usize {
        self.targets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.spec.d
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.inputs[i * self.spec.d..(i + 1) * self.spec.d]
    }

    /// SHA-256 over the little-endian bytes of the inputs, then the targets.
    pub fn checksum(&self) -> String {
        let mut h = Sha256::new();
        for v in self.inputs.iter().chain(&self.targets) {
            h.update(v.to_le_bytes());
        }
        hex::encode(h.finalize())
    }

    /// Fraction of positive labels.
    pub fn positive_fraction(&self) -> f64 {
        self.targets.iter().sum::<f64>() / self.len() as f64
    }
}

// stream layout of the spec seed
const TEACHER_STREAM: u64 = 0;
const TRAIN_STREAM: u64 = 1;
const HELD_OUT_STREAM: u64 = 2;

/// Training set for `spec`.
pub fn make_dataset(spec: &DatasetSpec) -> Result<SyntheticDataset> {
    generate(spec, spec.count, TRAIN_STREAM)
}

/// Fresh samples from the same teacher, disjoint from the training stream.
pub fn make_held_out(spec: &DatasetSpec, count: usize) -> Result<SyntheticDataset> {
    generate(spec, count, HELD_OUT_STREAM)
}

enum TeacherFn {
    Linear { w: Vec<f64>, b: f64 },
    Mlp { w1: Vec<f64>, w2: Vec<f64>, width: usize },
}

impl TeacherFn {
    fn draw(spec: &DatasetSpec) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
        rng.set_stream(TEACHER_STREAM);
        let d = spec.d;
        let mut normal = |scale: f64| scale * rng.sample::<f64, _>(StandardNormal);
        match spec.teacher {
            Teacher::Linear => {
                let w = (0..d).map(|_| normal((1.0 / d as f64).sqrt())).collect();
                // no offset for labels so the classes stay balanced
                let b = normal(0.1);
                let b = if spec.kind == TaskKind::Classification { 0.0 } else { b };
                Self::Linear { w, b }
            }
            Teacher::TanhMlp { width } => {
                let w1 = (0..width * d).map(|_| normal((1.0 / d as f64).sqrt())).collect();
                let w2 = (0..width).map(|_| normal((1.0 / width as f64).sqrt())).collect();
                Self::Mlp { w1, w2, width }
            }
        }
    }

    fn eval(&self, x: &[f64]) -> f64 {
        match self {
            Self::Linear { w, b } => w.iter().zip(x).map(|(w, x)| w * x).sum::<f64>() + b,
            Self::Mlp { w1, w2, width } => {
                let d = x.len();
                (0..*width)
                    .map(|j| {
                        let z: f64 = w1[j * d..(j + 1) * d].iter().zip(x).map(|(w, x)| w * x).sum();
                        w2[j] * z.tanh()
                    })
                    .sum()
            }
        }
    }
}

fn generate(spec: &DatasetSpec, count: usize, stream: u64) -> Result<SyntheticDataset> {
    spec.validate()?;
    if count == 0 {
        return Err(config("dataset count must be at least 1"));
    }
    let teacher = TeacherFn::draw(spec);
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    rng.set_stream(stream);
    let mut inputs = Vec::with_capacity(count * spec.d);
    let mut targets = Vec::with_capacity(count);
    for _ in 0..count {
        let start = inputs.len();
        inputs.extend((0..spec.d).map(|_| rng.sample::<f64, _>(StandardNormal)));
        let clean = teacher.eval(&inputs[start..]);
        let noisy = clean + spec.noise * rng.sample::<f64, _>(StandardNormal);
        targets.push(match spec.kind {
            TaskKind::Regression => noisy,
            TaskKind::Classification => f64::from(noisy > 0.0),
        });
    }
    Ok(SyntheticDataset { spec: spec.clone(), inputs, targets })
}
