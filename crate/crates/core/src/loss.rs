//! BPR, VarBPR (plug-in) and VarBPR-ELBO losses with analytical gradients.
//!
//! Posteriors are treated as constants. All three losses share one gradient
//! shape: with per-slot coefficients `a_m` (positives) and `b_n` (negatives),
//!
//! ```text
//! ∂u   = −Σ a_m i_m + Σ b_n j_n
//! ∂i_m = −a_m u
//! ∂j_n = +b_n u
//! ```
//!
//! VarBPR uses `a = g·α`, `b = g·β` with `g = σ(−γ)`; the ELBO variant uses
//! `a_m = α_m Σ_n β_n σ(−γ_mn)` and `b_n = β_n Σ_m α_m σ(−γ_mn)`.

use crate::error::{Error, Result};
use crate::inference::{PosteriorPair, PriorPair};
use crate::math::{cross_entropy, dot, entropy, ln_sigmoid, sigmoid, softplus};

/// `−ln σ(margin)`.
pub fn bpr_loss(margin: f64) -> f64 {
    softplus(-margin)
}

/// `−ln σ(⟨u, c⁺⟩ − ⟨u, c⁻⟩)`.
pub fn varbpr_loss(u: &[f64], c_plus: &[f64], c_minus: &[f64]) -> f64 {
    bpr_loss(dot(u, c_plus) - dot(u, c_minus))
}

fn check_bag(positives: &[&[f64]], negatives: &[&[f64]], post: &PosteriorPair) -> Result<()> {
    if positives.len() != post.alpha.len() {
        return Err(Error::LengthMismatch(positives.len(), post.alpha.len()));
    }
    if negatives.len() != post.beta.len() {
        return Err(Error::LengthMismatch(negatives.len(), post.beta.len()));
    }
    Ok(())
}

/// `−Σ_m Σ_n α_m β_n ln σ(⟨u,i_m⟩ − ⟨u,j_n⟩)`.
pub fn elbo_loss(u: &[f64], positives: &[&[f64]], negatives: &[&[f64]], post: &PosteriorPair) -> Result<f64> {
    check_bag(positives, negatives, post)?;
    let sp: Vec<f64> = positives.iter().map(|i| dot(u, i)).collect();
    let sn: Vec<f64> = negatives.iter().map(|j| dot(u, j)).collect();
    Ok(elbo_from_scores(&sp, &sn, &post.alpha, &post.beta))
}

pub(crate) fn elbo_from_scores(sp: &[f64], sn: &[f64], alpha: &[f64], beta: &[f64]) -> f64 {
    let mut total = 0.0;
    for (a, s) in alpha.iter().zip(sp) {
        for (b, t) in beta.iter().zip(sn) {
            total -= a * b * ln_sigmoid(s - t);
        }
    }
    total
}

/// Full ELBO of one bag with `q(h) = α_{h⁺} β_{h⁻}` and `P(h) = π̂⁺ ⊗ π̂⁻`:
/// `E_q ln σ(Γ) + H(α) + H(β) − H(α, π̂⁺) − H(β, π̂⁻)`.
pub fn bag_elbo(pos_scores: &[f64], neg_scores: &[f64], post: &PosteriorPair, prior: &PriorPair) -> Result<f64> {
    if pos_scores.len() != post.alpha.len() || prior.pos.len() != post.alpha.len() {
        return Err(Error::LengthMismatch(pos_scores.len(), post.alpha.len()));
    }
    if neg_scores.len() != post.beta.len() || prior.neg.len() != post.beta.len() {
        return Err(Error::LengthMismatch(neg_scores.len(), post.beta.len()));
    }
    let (pi_pos, pi_neg) = prior.normalized()?;
    let expected = -elbo_from_scores(pos_scores, neg_scores, &post.alpha, &post.beta);
    Ok(expected + entropy(&post.alpha) + entropy(&post.beta) - cross_entropy(&post.alpha, &pi_pos)? - cross_entropy(&post.beta, &pi_neg)?)
}

/// Summarized margin `γ = Σ α s⁺ − Σ β s⁻`.
pub(crate) fn summarized_margin(sp: &[f64], sn: &[f64], alpha: &[f64], beta: &[f64]) -> f64 {
    dot(alpha, sp) - dot(beta, sn)
}

/// Fills the per-slot coefficients for the plug-in loss; returns the loss.
pub(crate) fn varbpr_coefficients(sp: &[f64], sn: &[f64], alpha: &[f64], beta: &[f64], a: &mut Vec<f64>, b: &mut Vec<f64>) -> f64 {
    let gamma = summarized_margin(sp, sn, alpha, beta);
    let g = sigmoid(-gamma);
    a.clear();
    a.extend(alpha.iter().map(|x| g * x));
    b.clear();
    b.extend(beta.iter().map(|x| g * x));
    bpr_loss(gamma)
}

/// Per-slot coefficients for the ELBO loss; returns the loss.
pub(crate) fn elbo_coefficients(sp: &[f64], sn: &[f64], alpha: &[f64], beta: &[f64], a: &mut Vec<f64>, b: &mut Vec<f64>) -> f64 {
    a.clear();
    a.resize(sp.len(), 0.0);
    b.clear();
    b.resize(sn.len(), 0.0);
    let mut loss = 0.0;
    for m in 0..sp.len() {
        for n in 0..sn.len() {
            let w = alpha[m] * beta[n];
            let x = sp[m] - sn[n];
            loss -= w * ln_sigmoid(x);
            let g = w * sigmoid(-x);
            a[m] += g;
            b[n] += g;
        }
    }
    loss
}

/// Gradients of one bag with respect to `u`, each positive and each negative slot.
///
/// Slot gradients include `2·l2·param`; a repeated item gets one entry per slot.
#[derive(Debug, Clone, PartialEq)]
pub struct BagGradients {
    pub loss: f64,
    pub user: Vec<f64>,
    pub positives: Vec<Vec<f64>>,
    pub negatives: Vec<Vec<f64>>,
}

pub(crate) fn assemble(u: &[f64], positives: &[&[f64]], negatives: &[&[f64]], a: &[f64], b: &[f64], l2: f64, loss: f64) -> BagGradients {
    let d = u.len();
    let mut gu: Vec<f64> = u.iter().map(|x| 2.0 * l2 * x).collect();
    for (am, im) in a.iter().zip(positives) {
        for k in 0..d {
            gu[k] -= am * im[k];
        }
    }
    for (bn, jn) in b.iter().zip(negatives) {
        for k in 0..d {
            gu[k] += bn * jn[k];
        }
    }
    let slot = |coef: f64, sign: f64, p: &[f64]| -> Vec<f64> { (0..d).map(|k| sign * coef * u[k] + 2.0 * l2 * p[k]).collect() };
    BagGradients {
        loss,
        user: gu,
        positives: a.iter().zip(positives).map(|(am, im)| slot(*am, -1.0, im)).collect(),
        negatives: b.iter().zip(negatives).map(|(bn, jn)| slot(*bn, 1.0, jn)).collect(),
    }
}

fn bag_scores(u: &[f64], positives: &[&[f64]], negatives: &[&[f64]]) -> (Vec<f64>, Vec<f64>) {
    (
        positives.iter().map(|i| dot(u, i)).collect(),
        negatives.iter().map(|j| dot(u, j)).collect(),
    )
}

/// Plug-in VarBPR loss and gradients for one bag; the loss excludes weight decay.
pub fn varbpr_gradients(u: &[f64], positives: &[&[f64]], negatives: &[&[f64]], post: &PosteriorPair, l2: f64) -> Result<BagGradients> {
    check_bag(positives, negatives, post)?;
    let (sp, sn) = bag_scores(u, positives, negatives);
    let (mut a, mut b) = (Vec::new(), Vec::new());
    let loss = varbpr_coefficients(&sp, &sn, &post.alpha, &post.beta, &mut a, &mut b);
    Ok(assemble(u, positives, negatives, &a, &b, l2, loss))
}

/// ELBO-variant loss and gradients (double sum over pairs).
pub fn elbo_gradients(u: &[f64], positives: &[&[f64]], negatives: &[&[f64]], post: &PosteriorPair, l2: f64) -> Result<BagGradients> {
    check_bag(positives, negatives, post)?;
    let (sp, sn) = bag_scores(u, positives, negatives);
    let (mut a, mut b) = (Vec::new(), Vec::new());
    let loss = elbo_coefficients(&sp, &sn, &post.alpha, &post.beta, &mut a, &mut b);
    Ok(assemble(u, positives, negatives, &a, &b, l2, loss))
}

/// Classic BPR triplet gradients.
pub fn bpr_gradients(u: &[f64], i: &[f64], j: &[f64], l2: f64) -> BagGradients {
    let margin = dot(u, i) - dot(u, j);
    let g = sigmoid(-margin);
    assemble(u, &[i], &[j], &[g], &[g], l2, bpr_loss(margin))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::math::SimplexVector;

    fn post(a: Vec<f64>, b: Vec<f64>) -> PosteriorPair {
        PosteriorPair {
            alpha: SimplexVector::new(a).unwrap(),
            beta: SimplexVector::new(b).unwrap(),
        }
    }

    #[test]
    fn bpr_examples() {
        assert!((bpr_loss(0.0) - std::f64::consts::LN_2).abs() < 1e-15);
        assert!(bpr_loss(800.0) < 1e-300);
        assert!((bpr_loss(2.0) - 0.1269280).abs() < 5e-8);
    }

    #[test]
    fn varbpr_equal_centers_is_ln2() {
        let u = [0.3, -1.2];
        let c = [0.5, 0.5];
        assert!((varbpr_loss(&u, &c, &c) - std::f64::consts::LN_2).abs() < 1e-15);
    }

    #[test]
    fn contrastive_form() {
        let u = [0.3, -1.2, 0.7];
        let cp = [0.1, 0.4, -0.2];
        let cm = [-0.5, 0.2, 0.9];
        let (ep, em) = (dot(&u, &cp).exp(), dot(&u, &cm).exp());
        let contrastive = -(ep / (ep + em)).ln();
        assert!((varbpr_loss(&u, &cp, &cm) - contrastive).abs() < 1e-12);
    }

    #[test]
    fn one_hot_elbo_is_selected_pair() {
        let u = [0.4, -0.3];
        let i: [&[f64]; 2] = [&[1.0, 0.0], &[0.2, 0.8]];
        let j: [&[f64]; 2] = [&[0.0, 1.0], &[-1.0, 0.5]];
        let p = post(vec![0.0, 1.0], vec![1.0, 0.0]);
        let want = bpr_loss(dot(&u, i[1]) - dot(&u, j[0]));
        assert!((elbo_loss(&u, &i, &j, &p).unwrap() - want).abs() < 1e-15);
    }

    #[test]
    fn zero_user_gradients() {
        let u = [0.0, 0.0];
        let i: [&[f64]; 1] = [&[1.0, 2.0]];
        let j: [&[f64]; 1] = [&[-1.0, 0.5]];
        let g = varbpr_gradients(&u, &i, &j, &post(vec![1.0], vec![1.0]), 0.0).unwrap();
        assert_eq!(g.user, vec![-0.5 * 2.0, -0.5 * 1.5]);
        assert!(g.positives[0].iter().chain(&g.negatives[0]).all(|v| *v == 0.0));
    }

    #[test]
    fn mismatched_posterior_is_error() {
        let u = [1.0];
        let i: [&[f64]; 1] = [&[1.0]];
        let j: [&[f64]; 1] = [&[1.0]];
        assert!(elbo_loss(&u, &i, &j, &post(vec![0.5, 0.5], vec![1.0])).is_err());
    }
}
