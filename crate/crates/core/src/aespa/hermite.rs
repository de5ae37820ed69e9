//! Hermite expansion of ReLU under the standard Gaussian and the normalized activation.

use serde::{Deserialize, Serialize};

use super::AespaError;

pub const MAX_DEGREE: usize = 8;

/// Orthonormal probabilists' Hermite coefficients of ReLU.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HermiteBasis {
    pub degree: usize,
    /// `f_hat[i] = E[ReLU(X)·h_i(X)]` for `X ~ N(0, 1)`.
    pub f_hat: Vec<f64>,
}

/// `h_0(x)..h_d(x)` with `h_i = He_i / sqrt(i!)`.
pub fn hermite_values(x: f64, d: usize) -> Vec<f64> {
    let mut he = vec![1.0, x];
    for n in 1..d {
        he.push(x * he[n] - n as f64 * he[n - 1]);
    }
    he.truncate(d + 1);
    let mut fact = 1.0;
    he.iter()
        .enumerate()
        .map(|(i, v)| {
            if i > 0 {
                fact *= i as f64;
            }
            v / fact.sqrt()
        })
        .collect()
}

/// Gauss–Legendre nodes and weights on `[-1, 1]`.
fn gauss_legendre(n: usize) -> Vec<(f64, f64)> {
    (0..n)
        .map(|i| {
            let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
            let mut dp = 0.0;
            for _ in 0..100 {
                let (mut p0, mut p1) = (1.0, x);
                for k in 2..=n {
                    let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                    p0 = p1;
                    p1 = p2;
                }
                dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
                let dx = p1 / dp;
                x -= dx;
                if dx.abs() < 1e-16 {
                    break;
                }
            }
            (x, 2.0 / ((1.0 - x * x) * dp * dp))
        })
        .collect()
}

/// Coefficients by composite Gauss–Legendre quadrature over the positive half line,
/// where ReLU is smooth; the Gaussian tail beyond 40 is below `1e-300`.
pub fn hermite_coeffs(d: usize) -> Result<HermiteBasis, AespaError> {
    if d > MAX_DEGREE {
        return Err(AespaError::DegreeOutOfRange(d));
    }
    const PANELS: usize = 80;
    const UPPER: f64 = 40.0;
    let rule = gauss_legendre(24);
    let norm = 1.0 / (2.0 * std::f64::consts::PI).sqrt();
    let half = UPPER / PANELS as f64 / 2.0;
    let mut f_hat = vec![0.0; d + 1];
    for p in 0..PANELS {
        let mid = half * (2 * p + 1) as f64;
        for &(t, w) in &rule {
            let x = mid + half * t;
            let weight = w * half * x * (-x * x / 2.0).exp() * norm;
            for (f, h) in f_hat.iter_mut().zip(hermite_values(x, d)) {
                *f += weight * h;
            }
        }
    }
    Ok(HermiteBasis { degree: d, f_hat })
}

/// Learned affine and per-basis normalization statistics of one channel.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AespaChannelParams {
    pub gamma: f64,
    pub beta: f64,
    pub mu: Vec<f64>,
    pub sigma2: Vec<f64>,
    pub eps: f64,
}

pub const DEFAULT_EPS: f64 = 1e-5;

impl AespaChannelParams {
    /// Unit affine and zero-mean, unit-variance statistics.
    pub fn identity(d: usize) -> Self {
        Self { gamma: 1.0, beta: 0.0, mu: vec![0.0; d + 1], sigma2: vec![1.0; d + 1], eps: 0.0 }
    }

    pub fn degree(&self) -> usize {
        self.mu.len().saturating_sub(1)
    }

    fn check(&self, basis: &HermiteBasis) -> Result<(), AespaError> {
        if self.mu.len() != basis.degree + 1 || self.sigma2.len() != basis.degree + 1 {
            return Err(AespaError::DegreeMismatch { params: self.degree(), basis: basis.degree });
        }
        if let Some(i) = self.sigma2.iter().position(|s| s + self.eps <= 0.0) {
            return Err(AespaError::NonPositiveVariance(i));
        }
        Ok(())
    }
}

/// `gamma · Σ f_i (h_i(x) - mu_i) / sqrt(sigma2_i + eps) + beta`.
pub fn aespa_eval_plain(x: f64, ch: &AespaChannelParams, basis: &HermiteBasis) -> Result<f64, AespaError> {
    ch.check(basis)?;
    let h = hermite_values(x, basis.degree);
    let s: f64 = (0..=basis.degree).map(|i| basis.f_hat[i] * (h[i] - ch.mu[i]) / (ch.sigma2[i] + ch.eps).sqrt()).sum();
    Ok(ch.gamma * s + ch.beta)
}

/// Per-channel quadratic `a·x² + b·x + c`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QuadActivation {
    pub a: Vec<f64>,
    pub b: Vec<f64>,
    pub c: Vec<f64>,
}

impl QuadActivation {
    pub fn channels(&self) -> usize {
        self.a.len()
    }

    pub fn eval(&self, ch: usize, x: f64) -> f64 {
        (self.a[ch] * x + self.b[ch]) * x + self.c[ch]
    }

    pub fn from_channels(chs: &[AespaChannelParams], basis: &HermiteBasis) -> Result<Self, AespaError> {
        let mut q = Self { a: Vec::new(), b: Vec::new(), c: Vec::new() };
        for ch in chs {
            let (a, b, c) = fold_quadratic(ch, basis)?;
            q.a.push(a);
            q.b.push(b);
            q.c.push(c);
        }
        Ok(q)
    }
}

/// Expands the degree-2 normalized form into `(a, b, c)`.
pub fn fold_quadratic(ch: &AespaChannelParams, basis: &HermiteBasis) -> Result<(f64, f64, f64), AespaError> {
    if basis.degree != 2 {
        return Err(AespaError::DegreeUnsupported(basis.degree));
    }
    ch.check(basis)?;
    let s: Vec<f64> = (0..3).map(|i| ch.gamma * basis.f_hat[i] / (ch.sigma2[i] + ch.eps).sqrt()).collect();
    let r2 = std::f64::consts::SQRT_2;
    // h_0 = 1, h_1 = x, h_2 = (x² - 1)/√2
    let a = s[2] / r2;
    let b = s[1];
    let c = ch.beta + s[0] * (1.0 - ch.mu[0]) - s[1] * ch.mu[1] - s[2] * (1.0 / r2 + ch.mu[2]);
    Ok((a, b, c))
}
