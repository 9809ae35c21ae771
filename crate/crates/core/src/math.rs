//! Scalar and simplex primitives shared by the inference and learning code.
//!
//! Everything here is `f64` and pure. Entropy-like quantities use the
//! convention `0 · ln 0 = 0`.

use std::ops::Deref;

use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};

/// Absolute tolerance on the sum of a [`SimplexVector`].
pub const SIMPLEX_TOL: f64 = 1e-9;

/// `ln(1 + e^x)` without overflow.
#[inline]
pub fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `ln σ(x)` computed as `-softplus(-x)`; no finiteness check.
#[inline]
pub fn ln_sigmoid(x: f64) -> f64 {
    -softplus(-x)
}

/// Checked `ln σ(x)`.
pub fn log_sigmoid(x: f64) -> Result<f64> {
    if !x.is_finite() {
        return domain(format!("log_sigmoid of non-finite {x}"));
    }
    Ok(ln_sigmoid(x))
}

/// Remainder of the first-order expansion `ln σ(x) = -ln 2 + x/2 + ε(x)`.
///
/// `|ε(x)| ≤ x²/8` for all real `x`.
pub fn maclaurin_remainder(x: f64) -> Result<f64> {
    Ok(log_sigmoid(x)? + std::f64::consts::LN_2 - 0.5 * x)
}

/// A probability vector: non-negative entries summing to one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct SimplexVector(Vec<f64>);

impl SimplexVector {
    /// Validates `weights` as a point on the simplex.
    pub fn new(weights: Vec<f64>) -> Result<Self> {
        if weights.is_empty() {
            return domain("empty simplex vector");
        }
        let mut sum = 0.0;
        for (k, &w) in weights.iter().enumerate() {
            if !w.is_finite() || w < 0.0 {
                return domain(format!("simplex entry {k} is {w}"));
            }
            sum += w;
        }
        if (sum - 1.0).abs() > SIMPLEX_TOL {
            return domain(format!("simplex entries sum to {sum}"));
        }
        Ok(SimplexVector(weights))
    }

    /// Normalizes non-negative weights with a positive total.
    pub fn normalize(weights: &[f64]) -> Result<Self> {
        let total: f64 = weights.iter().sum();
        if weights.is_empty() || !(total > 0.0) || !total.is_finite() {
            return domain("cannot normalize weights with non-positive total");
        }
        if let Some(w) = weights.iter().find(|w| !(**w >= 0.0)) {
            return domain(format!("negative weight {w}"));
        }
        Ok(SimplexVector(weights.iter().map(|w| w / total).collect()))
    }

    pub fn uniform(n: usize) -> Result<Self> {
        if n == 0 {
            return domain("empty simplex vector");
        }
        Ok(SimplexVector(vec![1.0 / n as f64; n]))
    }

    pub fn one_hot(n: usize, k: usize) -> Result<Self> {
        if k >= n {
            return domain(format!("one-hot index {k} out of range {n}"));
        }
        let mut w = vec![0.0; n];
        w[k] = 1.0;
        Ok(SimplexVector(w))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    // Callers guarantee the simplex invariants (softmax output and similar).
    pub(crate) fn from_raw(weights: Vec<f64>) -> Self {
        debug_assert!((weights.iter().sum::<f64>() - 1.0).abs() <= 1e-6);
        SimplexVector(weights)
    }
}

impl Deref for SimplexVector {
    type Target = [f64];
    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl TryFrom<Vec<f64>> for SimplexVector {
    type Error = Error;
    fn try_from(v: Vec<f64>) -> Result<Self> {
        SimplexVector::new(v)
    }
}

impl From<SimplexVector> for Vec<f64> {
    fn from(s: SimplexVector) -> Vec<f64> {
        s.0
    }
}

/// Softmax of `logits / temperature` with max subtraction.
pub fn stable_softmax(logits: &[f64], temperature: f64) -> Result<SimplexVector> {
    if logits.is_empty() {
        return domain("softmax of empty input");
    }
    if !(temperature > 0.0) || !temperature.is_finite() {
        return domain(format!("softmax temperature must be positive, got {temperature}"));
    }
    if let Some(x) = logits.iter().find(|x| !x.is_finite()) {
        return domain(format!("softmax of non-finite logit {x}"));
    }
    Ok(SimplexVector::from_raw(softmax_unchecked(logits, temperature)))
}

pub(crate) fn softmax_unchecked(logits: &[f64], temperature: f64) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut out: Vec<f64> = logits.iter().map(|&x| ((x - max) / temperature).exp()).collect();
    let total: f64 = out.iter().sum();
    for v in &mut out {
        *v /= total;
    }
    out
}

/// `KL(p‖q) = Σ p ln(p/q)`; errors when `p` puts mass where `q` has none.
pub fn kl_divergence(p: &SimplexVector, q: &SimplexVector) -> Result<f64> {
    if p.len() != q.len() {
        return Err(Error::LengthMismatch(p.len(), q.len()));
    }
    let mut kl = 0.0;
    for (k, (&pk, &qk)) in p.iter().zip(q.iter()).enumerate() {
        if pk == 0.0 {
            continue;
        }
        if qk == 0.0 {
            return domain(format!("kl support violation at index {k}"));
        }
        kl += pk * (pk / qk).ln();
    }
    // Rounding can leave a tiny negative value when p ≈ q.
    Ok(kl.max(0.0))
}

/// Shannon entropy in nats.
pub fn entropy(p: &SimplexVector) -> f64 {
    -p.iter().filter(|&&pk| pk > 0.0).map(|&pk| pk * pk.ln()).sum::<f64>()
}

/// Cross-entropy `H(p, q) = -Σ p ln q`; infinite on a support violation.
pub fn cross_entropy(p: &SimplexVector, q: &SimplexVector) -> Result<f64> {
    if p.len() != q.len() {
        return Err(Error::LengthMismatch(p.len(), q.len()));
    }
    let mut h = 0.0;
    for (&pk, &qk) in p.iter().zip(q.iter()) {
        if pk == 0.0 {
            continue;
        }
        if qk == 0.0 {
            return Ok(f64::INFINITY);
        }
        h -= pk * qk.ln();
    }
    Ok(h)
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}
