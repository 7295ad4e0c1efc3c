//! Lookahead around classical momentum on `f(x) = ½λx²` as a linear map
//! acting once per outer step.

use nalgebra::{DMatrix, Schur};
use serde::{Deserialize, Serialize};

use crate::error::{config, Error, Result};

/// One eigen-direction of a diagonal quadratic.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScalarModeSystem {
    pub lambda: f64,
    pub eta: f64,
    pub beta: f64,
    pub k: usize,
    pub alpha: f64,
}

impl ScalarModeSystem {
    pub fn new(lambda: f64, eta: f64, beta: f64, k: usize, alpha: f64) -> Result<Self> {
        let sys = Self { lambda, eta, beta, k, alpha };
        sys.validate()?;
        Ok(sys)
    }

    /// Plain classical momentum: α = 1, k = 1.
    pub fn momentum(lambda: f64, eta: f64, beta: f64) -> Result<Self> {
        Self::new(lambda, eta, beta, 1, 1.0)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lambda > 0.0 && self.lambda.is_finite()) {
            return Err(config(format!("lambda must be positive, got {}", self.lambda)));
        }
        if !(self.eta >= 0.0 && self.eta.is_finite()) {
            return Err(config(format!("eta must be nonnegative, got {}", self.eta)));
        }
        if !(0.0..1.0).contains(&self.beta) {
            return Err(config(format!("beta must lie in [0, 1), got {}", self.beta)));
        }
        if self.k == 0 {
            return Err(config("k must be at least 1"));
        }
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            return Err(config(format!("alpha must lie in (0, 1], got {}", self.alpha)));
        }
        Ok(())
    }
}

/// One-outer-step transition `L·B^{k−1}·T` on the stacked state
/// `[θ_{t,0}; θ_{t−1,k}; …; θ_{t−1,1}]`, size `(k+1)×(k+1)`.
///
/// For k = 1 the momentum carried into the next cycle needs `θ_{t−1,0}`,
/// which that state does not hold. With β ≠ 0 the state becomes
/// `[θ_{t,0}; θ_{t−1,1}; θ_{t−1,0}]` and the matrix is 3×3.
pub fn build_transition(sys: &ScalarModeSystem) -> Result<DMatrix<f64>> {
    sys.validate()?;
    let ScalarModeSystem { lambda, eta, beta, k, alpha } = *sys;
    let h = eta * lambda;
    if k == 1 && beta != 0.0 {
        let fast = [1.0 - h, beta, -beta];
        let mut m = DMatrix::zeros(3, 3);
        for j in 0..3 {
            m[(0, j)] = alpha * fast[j];
            m[(1, j)] = fast[j];
        }
        m[(0, 0)] += 1.0 - alpha;
        m[(2, 0)] = 1.0;
        return Ok(m);
    }
    let n = k + 1;
    let shift = |top: &[f64]| {
        let mut m = DMatrix::zeros(n, n);
        for (j, v) in top.iter().enumerate() {
            m[(0, j)] = *v;
        }
        for i in 1..n {
            m[(i, i - 1)] = 1.0;
        }
        m
    };
    let mut l_top = vec![0.0; n];
    l_top[0] = alpha;
    l_top[n - 1] += 1.0 - alpha;
    let l = shift(&l_top);
    let b = shift(&[1.0 + beta - h, -beta]);
    let t = if n >= 3 { shift(&[1.0 - h, beta, -beta]) } else { shift(&[1.0 - h]) };
    let mut m = t;
    for _ in 1..k {
        m = &b * m;
    }
    Ok(l * m)
}

/// Largest eigenvalue modulus, from a real Schur decomposition.
pub fn spectral_radius(m: &DMatrix<f64>) -> Result<f64> {
    let dump = || Error::Eigen { dump: dump_matrix(m) };
    if m.iter().any(|v| !v.is_finite()) {
        return Err(dump());
    }
    let schur = Schur::try_new(m.clone(), f64::EPSILON, 10_000).ok_or_else(dump)?;
    let radius = schur.complex_eigenvalues().iter().map(|z| z.norm()).fold(0.0, f64::max);
    if radius.is_finite() {
        Ok(radius)
    } else {
        Err(dump())
    }
}

/// Per-inner-step contraction: spectral radius of the transition to the
/// power `1/k`.
///
/// The transition only reads its input through `s₀` and `s₁ − s₂` (the slow
/// weights and the carried momentum), so it factors as `M = U·P` with
/// `P s = (s₀, s₁ − s₂)`. Its nonzero eigenvalues are those of the 2×2
/// matrix `P·U`; the remaining ones form a nilpotent block that an
/// eigensolver would smear out to roughly `ε^{1/(k−1)}`, swamping small
/// radii. The 2×2 problem is solved instead.
pub fn convergence_rate(sys: &ScalarModeSystem) -> Result<f64> {
    let m = build_transition(sys)?;
    let radius = if m.nrows() == 2 {
        spectral_radius(&m)?
    } else {
        let reduced = DMatrix::from_fn(2, 2, |i, j| match i {
            0 => m[(0, j)],
            _ => m[(1, j)] - m[(2, j)],
        });
        spectral_radius(&reduced).map_err(|_| Error::Eigen { dump: dump_matrix(&m) })?
    };
    Ok(radius.powf(1.0 / sys.k as f64))
}

/// Worst rate over the eigenvalues of a diagonal quadratic.
pub fn diagonal_rate(lambdas: &[f64], eta: f64, beta: f64, k: usize, alpha: f64) -> Result<f64> {
    if lambdas.is_empty() {
        return Err(config("need at least one eigenvalue"));
    }
    lambdas.iter().try_fold(0.0, |acc: f64, &lambda| {
        Ok(acc.max(convergence_rate(&ScalarModeSystem::new(lambda, eta, beta, k, alpha)?)?))
    })
}

/// Spectral radius of the companion matrix `[[1+β−ηλ, −β], [1, 0]]` from
/// its characteristic polynomial `z² − (1+β−ηλ)z + β`.
pub fn cm_rate_reference(lambda: f64, eta: f64, beta: f64) -> f64 {
    let tr = 1.0 + beta - eta * lambda;
    let disc = tr * tr - 4.0 * beta;
    if disc < 0.0 {
        beta.sqrt()
    } else {
        let s = disc.sqrt();
        // larger-magnitude root first, the other from the product β
        let big = 0.5 * (tr.abs() + s);
        let small = if big > 0.0 { beta / big } else { 0.0 };
        big.max(small)
    }
}

/// Row-major plain-text dump, one row per line.
pub fn dump_matrix(m: &DMatrix<f64>) -> String {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| format!("{:e}", m[(i, j)])).collect::<Vec<_>>().join(" "))
        .collect::<Vec<_>>()
        .join("\n")
}
