use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{check_len, config, Error, Result};

/// Diagonal noisy quadratic model: `L̂(x) = ½(x − c)ᵀA(x − c)`, `c ~ N(0, Σ)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoisyQuadraticModel {
    a: Vec<f64>,
    sigma2: Vec<f64>,
}

impl NoisyQuadraticModel {
    pub fn new(a: Vec<f64>, sigma2: Vec<f64>) -> Result<Self> {
        check_len(a.len(), sigma2.len())?;
        if a.is_empty() {
            return Err(config("noisy quadratic model needs at least one dimension"));
        }
        if a.iter().any(|v| !(*v > 0.0 && v.is_finite())) {
            return Err(config("curvatures a_i must be positive and finite"));
        }
        if sigma2.iter().any(|v| !(*v >= 0.0 && v.is_finite())) {
            return Err(config("noise variances must be nonnegative and finite"));
        }
        Ok(Self { a, sigma2 })
    }

    /// `Σ = A⁻¹`.
    pub fn with_inverse_noise(a: Vec<f64>) -> Result<Self> {
        let sigma2 = a.iter().map(|v| 1.0 / v).collect();
        Self::new(a, sigma2)
    }

    /// One dimension with curvature `a` and noise variance `sigma2`.
    pub fn scalar(a: f64, sigma2: f64) -> Result<Self> {
        Self::new(vec![a], vec![sigma2])
    }

    pub fn dim(&self) -> usize {
        self.a.len()
    }

    pub fn curvature(&self) -> &[f64] {
        &self.a
    }

    pub fn noise(&self) -> &[f64] {
        &self.sigma2
    }

    /// `L = max_i a_i`.
    pub fn max_curvature(&self) -> f64 {
        self.a.iter().cloned().fold(0.0, f64::max)
    }

    /// `2 / L`; learning rates must stay strictly below it.
    pub fn stability_bound(&self) -> f64 {
        2.0 / self.max_curvature()
    }

    /// `½ Σ a_i σ_i²`, the loss no iterate distribution can go below.
    pub fn noise_floor(&self) -> f64 {
        0.5 * self.a.iter().zip(&self.sigma2).map(|(a, s)| a * s).sum::<f64>()
    }

    pub(crate) fn check_gamma(&self, gamma: f64) -> Result<()> {
        let bound = self.stability_bound();
        if gamma >= 0.0 && gamma < bound {
            Ok(())
        } else {
            Err(Error::Stability { gamma, bound })
        }
    }
}

/// Curvature spectra for the sweeps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Spectrum {
    /// Single dimension with `a = 1`.
    Scalar,
    /// `a_i = 1`.
    Uniform,
    /// `a_i = 1/i`.
    Inverse,
    /// `a_i = 1/i²`.
    InverseSquare,
    Custom(Vec<f64>),
}

impl Spectrum {
    pub fn eigenvalues(&self, n: usize) -> Vec<f64> {
        match self {
            Self::Scalar => vec![1.0],
            Self::Uniform => vec![1.0; n],
            Self::Inverse => (1..=n).map(|i| 1.0 / i as f64).collect(),
            Self::InverseSquare => (1..=n).map(|i| 1.0 / (i * i) as f64).collect(),
            Self::Custom(v) => v.clone(),
        }
    }

    /// Parses `scalar`, `uniform`, `inverse`, `inverse-square`, or
    /// `file:<path>` (one eigenvalue per line, `#` comments allowed).
    pub fn parse(spec: &str) -> Result<Self> {
        match spec {
            "scalar" => Ok(Self::Scalar),
            "uniform" => Ok(Self::Uniform),
            "inverse" => Ok(Self::Inverse),
            "inverse-square" => Ok(Self::InverseSquare),
            s => match s.strip_prefix("file:") {
                Some(path) => Self::from_file(Path::new(path)),
                None => Err(config(format!("unknown spectrum '{s}'"))),
            },
        }
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| config(format!("cannot read spectrum file {}: {e}", path.display())))?;
        Self::from_text(&text)
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut values = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let v: f64 = line
                .parse()
                .map_err(|_| config(format!("spectrum line {}: not a number: '{line}'", lineno + 1)))?;
            values.push(v);
        }
        if values.is_empty() {
            return Err(config("spectrum file contains no eigenvalues"));
        }
        Ok(Self::Custom(values))
    }
}

/// Per-dimension mean and variance of the iterate distribution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MomentState {
    pub mean: Vec<f64>,
    pub var: Vec<f64>,
}

impl MomentState {
    pub fn new(mean: Vec<f64>, var: Vec<f64>) -> Result<Self> {
        check_len(mean.len(), var.len())?;
        if var.iter().any(|v| !(*v >= 0.0)) {
            return Err(config("variances must be nonnegative"));
        }
        Ok(Self { mean, var })
    }

    /// Deterministic start at `x0` in every dimension.
    pub fn deterministic(x0: f64, n: usize) -> Self {
        Self { mean: vec![x0; n], var: vec![0.0; n] }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn spectra() {
        assert_eq!(Spectrum::Inverse.eigenvalues(3), vec![1.0, 0.5, 1.0 / 3.0]);
        assert_eq!(Spectrum::InverseSquare.eigenvalues(2), vec![1.0, 0.25]);
        assert_eq!(Spectrum::parse("scalar").unwrap().eigenvalues(100), vec![1.0]);
        let s = Spectrum::from_text("# eigenvalues\n2.0\n\n0.5\n").unwrap();
        assert_eq!(s, Spectrum::Custom(vec![2.0, 0.5]));
        assert!(Spectrum::from_text("abc").is_err());
        assert!(Spectrum::parse("weird").is_err());
    }

    #[test]
    fn model_validation() {
        assert!(NoisyQuadraticModel::new(vec![1.0, 0.0], vec![1.0, 1.0]).is_err());
        assert!(NoisyQuadraticModel::new(vec![1.0], vec![-1.0]).is_err());
        assert!(NoisyQuadraticModel::new(vec![1.0], vec![1.0, 2.0]).is_err());
        let m = NoisyQuadraticModel::with_inverse_noise(vec![4.0, 0.5]).unwrap();
        assert_eq!(m.noise(), &[0.25, 2.0]);
        assert_eq!(m.stability_bound(), 0.5);
        assert_eq!(m.noise_floor(), 1.0);
    }
}
