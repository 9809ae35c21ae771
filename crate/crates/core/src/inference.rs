//! Exposure/suppression priors and the closed-form variational posteriors.
//!
//! For a bag with positive scores `s⁺` and negative scores `s⁻`, the
//! posteriors maximizing the entropy-regularized alignment objectives are
//!
//! ```text
//! α_m ∝ π⁺_m · exp( s⁺_m / c_pos)
//! β_n ∝ π⁻_n · exp(-s⁻_n / c_neg)
//! ```
//!
//! evaluated in log space. Priors need not be normalized: the posteriors are
//! invariant to a common rescaling of either prior.

use serde::{Deserialize, Serialize};

use crate::data::SignalBuffer;
use crate::error::{domain, Error, Result};
use crate::math::{cross_entropy, dot, entropy, softmax_unchecked, SimplexVector};
use crate::model::EmbeddingModel;
use crate::sampler::EnrichedInteraction;

/// Lower clamp applied to every encoded prior weight.
pub const PRIOR_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Side {
    Positive,
    Negative,
}

/// Temperatures and prior exponents.
///
/// `lambda_pos = (rarity, quality, hardness)`,
/// `lambda_neg = (popularity, bad quality, hardness)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InferenceConfig {
    pub c_pos: f64,
    pub c_neg: f64,
    pub tau: f64,
    pub lambda_pos: [f64; 3],
    pub lambda_neg: [f64; 3],
}

impl Default for InferenceConfig {
    fn default() -> Self {
        InferenceConfig {
            c_pos: 1.0,
            c_neg: 1.0,
            tau: 1.0,
            lambda_pos: [0.0; 3],
            lambda_neg: [0.0; 3],
        }
    }
}

impl InferenceConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("c_pos", self.c_pos), ("c_neg", self.c_neg), ("tau", self.tau)] {
            if !(v > 0.0) || v.is_nan() {
                return Err(Error::Config(format!("{name} must be positive, got {v}")));
            }
        }
        for v in self.lambda_pos.iter().chain(&self.lambda_neg) {
            if !(*v >= 0.0) || !v.is_finite() {
                return Err(Error::Config(format!("prior exponents must be non-negative, got {v}")));
            }
        }
        Ok(())
    }

    /// True when every prior exponent is zero (uniform prior).
    pub fn uniform_prior(&self) -> bool {
        self.lambda_pos.iter().chain(&self.lambda_neg).all(|&l| l == 0.0)
    }
}

/// Unnormalized prior weights over a bag.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PriorPair {
    pub pos: Vec<f64>,
    pub neg: Vec<f64>,
}

impl PriorPair {
    pub fn uniform(m: usize, n: usize) -> Self {
        PriorPair {
            pos: vec![1.0; m],
            neg: vec![1.0; n],
        }
    }

    /// Each side renormalized onto the simplex.
    pub fn normalized(&self) -> Result<(SimplexVector, SimplexVector)> {
        Ok((SimplexVector::normalize(&self.pos)?, SimplexVector::normalize(&self.neg)?))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PosteriorPair {
    pub alpha: SimplexVector,
    pub beta: SimplexVector,
}

impl PosteriorPair {
    pub fn uniform(m: usize, n: usize) -> Result<Self> {
        Ok(PosteriorPair {
            alpha: SimplexVector::uniform(m)?,
            beta: SimplexVector::uniform(n)?,
        })
    }
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Bag-wise hardness: `softmax((s̄ − s)/τ)` on the positive side and
/// `softmax((s − s̄)/τ)` on the negative side, `s̄` including every bag member.
pub fn hardness_scores(scores: &[f64], side: Side, tau: f64) -> Result<SimplexVector> {
    if scores.is_empty() {
        return domain("hardness of an empty bag");
    }
    if let Some(s) = scores.iter().find(|s| !s.is_finite()) {
        return domain(format!("non-finite score {s}"));
    }
    if !(tau > 0.0) {
        return domain(format!("tau must be positive, got {tau}"));
    }
    Ok(SimplexVector::from_raw(hardness_unchecked(scores, side, tau)))
}

fn hardness_unchecked(scores: &[f64], side: Side, tau: f64) -> Vec<f64> {
    let bar = mean(scores);
    let logits: Vec<f64> = match side {
        Side::Positive => scores.iter().map(|s| bar - s).collect(),
        Side::Negative => scores.iter().map(|s| s - bar).collect(),
    };
    softmax_unchecked(&logits, tau)
}

#[inline]
fn factor(value: f64, exponent: f64) -> f64 {
    if exponent == 0.0 {
        1.0
    } else {
        value.powf(exponent)
    }
}

/// Per-item static prior factor (everything but hardness).
#[inline]
pub(crate) fn static_weight(item: u32, side: Side, signals: &SignalBuffer, cfg: &InferenceConfig) -> f64 {
    let i = item as usize;
    let quality = signals.quality_of(item);
    match side {
        Side::Positive => {
            let [l_rar, l_qual, _] = cfg.lambda_pos;
            factor(signals.rarity[i], l_rar) * quality.map_or(1.0, |q| factor(q, l_qual))
        }
        Side::Negative => {
            let [l_pop, l_bad, _] = cfg.lambda_neg;
            factor(signals.popularity[i], l_pop) * quality.map_or(1.0, |q| factor(1.0 - q, l_bad))
        }
    }
}

/// Prior weights for one side of a set of items with the given model scores.
pub fn encode_side(items: &[u32], scores: &[f64], side: Side, signals: &SignalBuffer, cfg: &InferenceConfig) -> Vec<f64> {
    debug_assert_eq!(items.len(), scores.len());
    let l_hard = match side {
        Side::Positive => cfg.lambda_pos[2],
        Side::Negative => cfg.lambda_neg[2],
    };
    let hard = (l_hard != 0.0).then(|| hardness_unchecked(scores, side, cfg.tau));
    items
        .iter()
        .enumerate()
        .map(|(k, &i)| {
            let mut w = static_weight(i, side, signals, cfg);
            if let Some(h) = &hard {
                w *= factor(h[k], l_hard);
            }
            w.max(PRIOR_FLOOR)
        })
        .collect()
}

/// `π⁺ ∝ rar^λ1 · qual^λ2 · hard⁺^λ3`, `π⁻ ∝ pop^λ1 · (1−qual)^λ2 · hard⁻^λ3`.
///
/// Items without a quality signal skip the quality factor. Not normalized.
pub fn encode_prior(
    bag: &EnrichedInteraction,
    signals: &SignalBuffer,
    pos_scores: &[f64],
    neg_scores: &[f64],
    cfg: &InferenceConfig,
) -> Result<PriorPair> {
    if pos_scores.len() != bag.m() {
        return Err(Error::LengthMismatch(pos_scores.len(), bag.m()));
    }
    if neg_scores.len() != bag.n() {
        return Err(Error::LengthMismatch(neg_scores.len(), bag.n()));
    }
    if let Some(&i) = bag
        .positives
        .iter()
        .chain(&bag.negatives)
        .find(|&&i| i as usize >= signals.item_count())
    {
        return domain(format!("item {i} not covered by the signal buffer"));
    }
    Ok(PriorPair {
        pos: encode_side(&bag.positives, pos_scores, Side::Positive, signals, cfg),
        neg: encode_side(&bag.negatives, neg_scores, Side::Negative, signals, cfg),
    })
}

fn check_posterior_inputs(scores: &[f64], prior: &[f64], c: f64) -> Result<()> {
    if !(c > 0.0) || !c.is_finite() {
        return domain(format!("temperature must be positive and finite, got {c}"));
    }
    if scores.len() != prior.len() {
        return Err(Error::LengthMismatch(scores.len(), prior.len()));
    }
    if scores.is_empty() {
        return domain("empty bag side");
    }
    if let Some(p) = prior.iter().find(|p| !(**p > 0.0) || !p.is_finite()) {
        return domain(format!("prior entries must be positive, got {p}"));
    }
    if let Some(s) = scores.iter().find(|s| !s.is_finite()) {
        return domain(format!("non-finite score {s}"));
    }
    Ok(())
}

/// Writes `softmax(ln π + sign · s / c)` into `out`.
pub(crate) fn posterior_into(scores: &[f64], prior: &[f64], c: f64, sign: f64, out: &mut Vec<f64>) {
    out.clear();
    out.extend(scores.iter().zip(prior).map(|(s, p)| p.ln() + sign * s / c));
    let max = out.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    for v in out.iter_mut() {
        *v = (*v - max).exp();
        total += *v;
    }
    for v in out.iter_mut() {
        *v /= total;
    }
}

/// `α_m ∝ π⁺_m exp(s_m / c_pos)`.
pub fn posterior_positive(scores: &[f64], prior: &[f64], c_pos: f64) -> Result<SimplexVector> {
    check_posterior_inputs(scores, prior, c_pos)?;
    let mut out = Vec::with_capacity(scores.len());
    posterior_into(scores, prior, c_pos, 1.0, &mut out);
    Ok(SimplexVector::from_raw(out))
}

/// `β_n ∝ π⁻_n exp(−s_n / c_neg)`.
pub fn posterior_negative(scores: &[f64], prior: &[f64], c_neg: f64) -> Result<SimplexVector> {
    check_posterior_inputs(scores, prior, c_neg)?;
    let mut out = Vec::with_capacity(scores.len());
    posterior_into(scores, prior, c_neg, -1.0, &mut out);
    Ok(SimplexVector::from_raw(out))
}

/// Both posteriors of a bag.
pub fn infer(pos_scores: &[f64], neg_scores: &[f64], prior: &PriorPair, cfg: &InferenceConfig) -> Result<PosteriorPair> {
    Ok(PosteriorPair {
        alpha: posterior_positive(pos_scores, &prior.pos, cfg.c_pos)?,
        beta: posterior_negative(neg_scores, &prior.neg, cfg.c_neg)?,
    })
}

/// Objective of the positive subproblem at `alpha`:
/// `Σ α s + c·H(α) − c·H(α, π̂)` with `π̂` the normalized prior.
pub fn positive_objective(alpha: &SimplexVector, scores: &[f64], prior: &[f64], c: f64) -> Result<f64> {
    let pi = SimplexVector::normalize(prior)?;
    let align: f64 = alpha.iter().zip(scores).map(|(a, s)| a * s).sum();
    Ok(align + c * entropy(alpha) - c * cross_entropy(alpha, &pi)?)
}

/// Objective of the negative subproblem: `−Σ β s + c·H(β) − c·H(β, π̂)`.
pub fn negative_objective(beta: &SimplexVector, scores: &[f64], prior: &[f64], c: f64) -> Result<f64> {
    let negated: Vec<f64> = scores.iter().map(|s| -s).collect();
    positive_objective(beta, &negated, prior, c)
}

/// Posterior-weighted centers `c⁺ = Σ α_m i_m` and `c⁻ = Σ β_n j_n`.
pub fn interest_centers(positives: &[&[f64]], negatives: &[&[f64]], post: &PosteriorPair) -> Result<(Vec<f64>, Vec<f64>)> {
    Ok((weighted_sum(positives, &post.alpha)?, weighted_sum(negatives, &post.beta)?))
}

fn weighted_sum(vectors: &[&[f64]], weights: &[f64]) -> Result<Vec<f64>> {
    if vectors.len() != weights.len() {
        return Err(Error::LengthMismatch(vectors.len(), weights.len()));
    }
    let d = vectors.first().map_or(0, |v| v.len());
    let mut out = vec![0.0; d];
    for (v, &w) in vectors.iter().zip(weights) {
        if v.len() != d {
            return Err(Error::LengthMismatch(v.len(), d));
        }
        for (o, x) in out.iter_mut().zip(v.iter()) {
            *o += w * x;
        }
    }
    Ok(out)
}

/// How bag posteriors are formed during training and diagnostics.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PosteriorMode {
    /// Closed-form `α`, `β`.
    #[default]
    Variational,
    /// `α = 1/M`, `β = 1/N` (mean pooling).
    Uniform,
}

/// Reusable per-bag buffers: scores, prior and posterior of one bag.
#[derive(Debug, Clone, Default)]
pub(crate) struct BagWork {
    pub sp: Vec<f64>,
    pub sn: Vec<f64>,
    pub prior_pos: Vec<f64>,
    pub prior_neg: Vec<f64>,
    pub alpha: Vec<f64>,
    pub beta: Vec<f64>,
    pub a: Vec<f64>,
    pub b: Vec<f64>,
}

impl BagWork {
    /// Scores the bag and solves its posteriors; no validation.
    pub fn infer(
        &mut self,
        model: &EmbeddingModel,
        bag: &EnrichedInteraction,
        signals: &SignalBuffer,
        cfg: &InferenceConfig,
        mode: PosteriorMode,
    ) {
        let u = model.user(bag.user);
        self.sp.clear();
        self.sp.extend(bag.positives.iter().map(|&i| dot(u, model.item(i))));
        self.sn.clear();
        self.sn.extend(bag.negatives.iter().map(|&j| dot(u, model.item(j))));
        self.prior_pos = encode_side(&bag.positives, &self.sp, Side::Positive, signals, cfg);
        self.prior_neg = encode_side(&bag.negatives, &self.sn, Side::Negative, signals, cfg);
        match mode {
            PosteriorMode::Variational => {
                posterior_into(&self.sp, &self.prior_pos, cfg.c_pos, 1.0, &mut self.alpha);
                posterior_into(&self.sn, &self.prior_neg, cfg.c_neg, -1.0, &mut self.beta);
            }
            PosteriorMode::Uniform => {
                let (m, n) = (self.sp.len(), self.sn.len());
                self.alpha.clear();
                self.alpha.resize(m, 1.0 / m as f64);
                self.beta.clear();
                self.beta.resize(n, 1.0 / n as f64);
            }
        }
    }
}
