//! Ranking and exposure metrics, the likelihood probe, Jensen-gap and
//! KL-compliance diagnostics.

use std::cmp::Ordering;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::{SignalBuffer, SplitBundle};
use crate::error::{domain, Result};
use crate::inference::{encode_side, BagWork, InferenceConfig, PosteriorMode, Side};
use crate::loss::{elbo_from_scores, summarized_margin};
use crate::math::{dot, kl_divergence, ln_sigmoid, sigmoid, SimplexVector};
use crate::model::EmbeddingModel;
use crate::par::Executor;
use crate::sampler::EnrichedInteraction;

/// Default cutoff for Recall/NDCG/APLT.
pub const DEFAULT_K: usize = 20;
/// Smoothing added to pooled posterior mass before global KL.
pub const GLOBAL_KL_FLOOR: f64 = 1e-12;

/// Top-K lists, one per user. Only users with test positives are ranked;
/// every other user has an empty list.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RankedList {
    pub k: usize,
    pub lists: Vec<Vec<u32>>,
}

fn by_score_then_id(a: &(f64, u32), b: &(f64, u32)) -> Ordering {
    b.0.total_cmp(&a.0).then(a.1.cmp(&b.1))
}

/// Top `k` of `scores`, skipping `exclude` (sorted), ties to the lower id.
pub(crate) fn top_k(scores: &[f64], exclude: &[u32], k: usize) -> Vec<u32> {
    let mut cand: Vec<(f64, u32)> = scores
        .iter()
        .enumerate()
        .filter(|(i, _)| exclude.binary_search(&(*i as u32)).is_err())
        .map(|(i, s)| (*s, i as u32))
        .collect();
    if cand.len() > k {
        cand.select_nth_unstable_by(k - 1, by_score_then_id);
        cand.truncate(k);
    }
    cand.sort_unstable_by(by_score_then_id);
    cand.into_iter().map(|(_, i)| i).collect()
}

/// Exact full-catalog ranking minus training positives.
pub fn rank_topk(model: &EmbeddingModel, bundle: &SplitBundle, k: usize, exec: &Executor) -> Result<RankedList> {
    if k == 0 {
        return domain("K must be at least 1");
    }
    if model.user_count() < bundle.user_count || model.item_count() < bundle.item_count {
        return domain("model is smaller than the split");
    }
    let lists = exec.map_range(bundle.user_count, |u| {
        if bundle.test[u].is_empty() {
            return Vec::new();
        }
        let mut scores = Vec::with_capacity(bundle.item_count);
        model.score_all(u as u32, &mut scores);
        scores.truncate(bundle.item_count);
        top_k(&scores, &bundle.train[u], k)
    });
    Ok(RankedList { k, lists })
}

fn per_user_mean(lists: &RankedList, test: &[Vec<u32>], f: impl Fn(&[u32], &[u32], usize) -> f64) -> f64 {
    let mut total = 0.0;
    let mut users = 0usize;
    for (list, t) in lists.lists.iter().zip(test) {
        if t.is_empty() {
            continue;
        }
        total += f(list, t, lists.k);
        users += 1;
    }
    if users == 0 {
        0.0
    } else {
        total / users as f64
    }
}

/// Mean over users with test positives of `|hits| / |test|`.
pub fn recall_at_k(lists: &RankedList, test: &[Vec<u32>]) -> f64 {
    per_user_mean(lists, test, |list, t, k| {
        let hits = list.iter().take(k).filter(|i| t.contains(i)).count();
        hits as f64 / t.len() as f64
    })
}

fn discount(rank: usize) -> f64 {
    1.0 / ((rank + 1) as f64).log2()
}

/// Binary-relevance NDCG with truncated ideal DCG.
pub fn ndcg_at_k(lists: &RankedList, test: &[Vec<u32>]) -> f64 {
    per_user_mean(lists, test, |list, t, k| {
        let dcg: f64 = list
            .iter()
            .take(k)
            .enumerate()
            .filter(|(_, i)| t.contains(i))
            .map(|(r, _)| discount(r + 1))
            .sum();
        let idcg: f64 = (1..=t.len().min(k)).map(discount).sum();
        dcg / idcg
    })
}

/// Mean over ranked users of the long-tail share of their top-K.
pub fn aplt_at_k(lists: &RankedList, signals: &SignalBuffer) -> f64 {
    let mut total = 0.0;
    let mut users = 0usize;
    for list in lists.lists.iter().filter(|l| !l.is_empty()) {
        let tail = list.iter().take(lists.k).filter(|&&i| signals.long_tail[i as usize]).count();
        total += tail as f64 / lists.k as f64;
        users += 1;
    }
    if users == 0 {
        0.0
    } else {
        total / users as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LikelihoodEstimate {
    /// Mean of `σ(x_ui − x_uj)`.
    pub mean: f64,
    /// Mean of `ln σ(x_ui − x_uj)`.
    pub log_mean: f64,
    pub triplets: usize,
}

/// Held-out pairwise likelihood: each test positive against `samples`
/// uniformly drawn items that are neither training nor test positives.
///
/// Each user draws from its own ChaCha stream of `seed`, so the estimate does
/// not depend on the thread count.
pub fn likelihood_probe(
    model: &EmbeddingModel,
    bundle: &SplitBundle,
    samples: usize,
    seed: u64,
    exec: &Executor,
) -> Result<LikelihoodEstimate> {
    if samples == 0 {
        return domain("likelihood probe needs at least one sample per positive");
    }
    let per_user = exec.map_range(bundle.user_count, |u| {
        let (train, test) = (&bundle.train[u], &bundle.test[u]);
        if test.is_empty() || train.len() + test.len() >= bundle.item_count {
            return (0.0, 0.0, 0usize);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(u as u64);
        let uv = model.user(u as u32);
        let (mut s, mut l, mut n) = (0.0, 0.0, 0usize);
        for &i in test {
            let si = dot(uv, model.item(i));
            for _ in 0..samples {
                let j = loop {
                    let j = rng.random_range(0..bundle.item_count as u32);
                    if train.binary_search(&j).is_err() && test.binary_search(&j).is_err() {
                        break j;
                    }
                };
                let x = si - dot(uv, model.item(j));
                s += sigmoid(x);
                l += ln_sigmoid(x);
                n += 1;
            }
        }
        (s, l, n)
    });
    let (s, l, n) = per_user
        .into_iter()
        .fold((0.0, 0.0, 0), |acc, x| (acc.0 + x.0, acc.1 + x.1, acc.2 + x.2));
    if n == 0 {
        return domain("likelihood probe found no test positives");
    }
    Ok(LikelihoodEstimate {
        mean: s / n as f64,
        log_mean: l / n as f64,
        triplets: n,
    })
}

/// Slack allowed when counting sandwich violations.
pub const JENSEN_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JensenReport {
    /// `(gap, Var(Γ))` per bag.
    pub bags: Vec<(f64, f64)>,
    pub mean: f64,
    pub median: f64,
    pub max: f64,
    pub margin_var_mean: f64,
    /// Bags outside `0 ≤ gap ≤ Var(Γ)/8`.
    pub violations: usize,
}

/// `gap = ln σ(EΓ) − E ln σ(Γ)` and `Var(Γ) = Var_α(s⁺) + Var_β(s⁻)`.
pub fn jensen_gap(sp: &[f64], sn: &[f64], alpha: &[f64], beta: &[f64]) -> (f64, f64) {
    let gamma = summarized_margin(sp, sn, alpha, beta);
    let expected = -elbo_from_scores(sp, sn, alpha, beta);
    let var = |s: &[f64], w: &[f64]| {
        let mu = dot(w, s);
        w.iter().zip(s).map(|(w, s)| w * (s - mu) * (s - mu)).sum::<f64>()
    };
    (ln_sigmoid(gamma) - expected, var(sp, alpha) + var(sn, beta))
}

/// Jensen gap of each bag under the posteriors it induces on `model`.
pub fn jensen_gap_probe(
    model: &EmbeddingModel,
    bags: &[EnrichedInteraction],
    signals: &SignalBuffer,
    cfg: &InferenceConfig,
    mode: PosteriorMode,
    exec: &Executor,
) -> Result<JensenReport> {
    if bags.is_empty() {
        return domain("no bags to probe");
    }
    let per_bag = exec.map(bags, |bag| {
        let mut w = BagWork::default();
        w.infer(model, bag, signals, cfg, mode);
        jensen_gap(&w.sp, &w.sn, &w.alpha, &w.beta)
    });
    let n = per_bag.len() as f64;
    let mut gaps: Vec<f64> = per_bag.iter().map(|g| g.0).collect();
    gaps.sort_by(f64::total_cmp);
    let median = if gaps.len() % 2 == 1 {
        gaps[gaps.len() / 2]
    } else {
        0.5 * (gaps[gaps.len() / 2 - 1] + gaps[gaps.len() / 2])
    };
    Ok(JensenReport {
        mean: per_bag.iter().map(|g| g.0).sum::<f64>() / n,
        median,
        max: gaps[gaps.len() - 1],
        margin_var_mean: per_bag.iter().map(|g| g.1).sum::<f64>() / n,
        violations: per_bag
            .iter()
            .filter(|(g, v)| *g < -JENSEN_TOL || *g > v / 8.0 + JENSEN_TOL)
            .count(),
        bags: per_bag,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KlScope {
    /// Per bag, against the prior restricted to the bag and renormalized.
    Bag,
    /// Per user, pooled posterior mass against the user-level prior.
    Global,
}

/// Mean `(KL⁺, KL⁻)` of posteriors against priors at the given scope.
///
/// Global scope pools each user's `α` (`β`) mass over all training positives
/// (all non-positives), adds [`GLOBAL_KL_FLOOR`] everywhere, renormalizes, and
/// compares with the prior encoded over that full support (hardness included).
/// Users without bags are skipped.
#[allow(clippy::too_many_arguments)]
pub fn kl_compliance(
    model: &EmbeddingModel,
    bundle: &SplitBundle,
    signals: &SignalBuffer,
    cfg: &InferenceConfig,
    mode: PosteriorMode,
    bags: &[EnrichedInteraction],
    scope: KlScope,
    exec: &Executor,
) -> Result<(f64, f64)> {
    if bags.is_empty() {
        return domain("no bags for KL compliance");
    }
    match scope {
        KlScope::Bag => {
            let per_bag = exec.map(bags, |bag| -> Result<(f64, f64)> {
                let mut w = BagWork::default();
                w.infer(model, bag, signals, cfg, mode);
                let kl = |post: &[f64], prior: &[f64]| -> Result<f64> {
                    kl_divergence(&SimplexVector::normalize(post)?, &SimplexVector::normalize(prior)?)
                };
                Ok((kl(&w.alpha, &w.prior_pos)?, kl(&w.beta, &w.prior_neg)?))
            });
            mean_pair(per_bag)
        }
        KlScope::Global => {
            let mut by_user: Vec<Vec<usize>> = vec![Vec::new(); bundle.user_count];
            for (k, bag) in bags.iter().enumerate() {
                match by_user.get_mut(bag.user as usize) {
                    Some(v) => v.push(k),
                    None => return domain(format!("bag user {} out of range", bag.user)),
                }
            }
            let users: Vec<usize> = (0..bundle.user_count).filter(|&u| !by_user[u].is_empty()).collect();
            let per_user = exec.map(&users, |&u| {
                global_user_kl(model, bundle, signals, cfg, mode, bags, &by_user[u], u as u32)
            });
            mean_pair(per_user)
        }
    }
}

fn mean_pair(xs: Vec<Result<(f64, f64)>>) -> Result<(f64, f64)> {
    let n = xs.len() as f64;
    let mut acc = (0.0, 0.0);
    for x in xs {
        let (p, q) = x?;
        acc.0 += p;
        acc.1 += q;
    }
    Ok((acc.0 / n, acc.1 / n))
}

#[allow(clippy::too_many_arguments)]
fn global_user_kl(
    model: &EmbeddingModel,
    bundle: &SplitBundle,
    signals: &SignalBuffer,
    cfg: &InferenceConfig,
    mode: PosteriorMode,
    bags: &[EnrichedInteraction],
    idx: &[usize],
    u: u32,
) -> Result<(f64, f64)> {
    let pos_support = &bundle.train[u as usize];
    let neg_support: Vec<u32> = (0..bundle.item_count as u32)
        .filter(|i| pos_support.binary_search(i).is_err())
        .collect();
    let mut pooled_pos = vec![0.0; pos_support.len()];
    let mut pooled_neg = vec![0.0; neg_support.len()];
    let mut w = BagWork::default();
    for &k in idx {
        let bag = &bags[k];
        w.infer(model, bag, signals, cfg, mode);
        for (i, a) in bag.positives.iter().zip(&w.alpha) {
            match pos_support.binary_search(i) {
                Ok(s) => pooled_pos[s] += a,
                Err(_) => return domain(format!("bag positive {i} is not a training positive of user {u}")),
            }
        }
        for (j, b) in bag.negatives.iter().zip(&w.beta) {
            match neg_support.binary_search(j) {
                Ok(s) => pooled_neg[s] += b,
                Err(_) => return domain(format!("bag negative {j} is a training positive of user {u}")),
            }
        }
    }
    let uv = model.user(u);
    let side_kl = |support: &[u32], pooled: &mut [f64], side: Side| -> Result<f64> {
        pooled.iter_mut().for_each(|p| *p += GLOBAL_KL_FLOOR);
        let scores: Vec<f64> = support.iter().map(|&i| dot(uv, model.item(i))).collect();
        let prior = encode_side(support, &scores, side, signals, cfg);
        kl_divergence(&SimplexVector::normalize(pooled)?, &SimplexVector::normalize(&prior)?)
    };
    Ok((
        side_kl(pos_support, &mut pooled_pos, Side::Positive)?,
        side_kl(&neg_support, &mut pooled_neg, Side::Negative)?,
    ))
}

/// One evaluation point of a training run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticsRow {
    pub epoch: usize,
    pub loss: f64,
    pub recall_k: f64,
    pub ndcg_k: f64,
    pub aplt_k: f64,
    pub likelihood: f64,
    pub log_likelihood: f64,
    pub jensen_gap_mean: f64,
    pub jensen_gap_max: f64,
    pub margin_var_mean: f64,
    pub kl_bag_pos: f64,
    pub kl_bag_neg: f64,
    pub kl_global_pos: f64,
    pub kl_global_neg: f64,
}

impl DiagnosticsRow {
    pub const CSV_HEADER: &'static str = "epoch,loss,recall_k,ndcg_k,aplt_k,likelihood,log_likelihood,\
jensen_gap_mean,jensen_gap_max,margin_var_mean,kl_bag_pos,kl_bag_neg,kl_global_pos,kl_global_neg";

    pub fn to_csv(&self) -> String {
        let vals = [
            self.loss,
            self.recall_k,
            self.ndcg_k,
            self.aplt_k,
            self.likelihood,
            self.log_likelihood,
            self.jensen_gap_mean,
            self.jensen_gap_max,
            self.margin_var_mean,
            self.kl_bag_pos,
            self.kl_bag_neg,
            self.kl_global_pos,
            self.kl_global_neg,
        ];
        let mut out = self.epoch.to_string();
        for v in vals {
            out.push(',');
            out.push_str(&format!("{v}"));
        }
        out
    }

    pub fn is_finite(&self) -> bool {
        [
            self.loss,
            self.recall_k,
            self.ndcg_k,
            self.aplt_k,
            self.likelihood,
            self.log_likelihood,
            self.jensen_gap_mean,
            self.jensen_gap_max,
            self.margin_var_mean,
            self.kl_bag_pos,
            self.kl_bag_neg,
            self.kl_global_pos,
            self.kl_global_neg,
        ]
        .iter()
        .all(|v| v.is_finite())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lists(k: usize, lists: Vec<Vec<u32>>) -> RankedList {
        RankedList { k, lists }
    }

    #[test]
    fn top_k_ties_and_exclusion() {
        let scores = [0.5, 0.9, 0.9, 0.1, 0.9];
        assert_eq!(top_k(&scores, &[], 3), vec![1, 2, 4]);
        assert_eq!(top_k(&scores, &[2], 3), vec![1, 4, 0]);
        assert_eq!(top_k(&scores, &[0, 1, 2], 5), vec![4, 3]);
    }

    #[test]
    fn recall_hand_computed() {
        let l = lists(2, vec![vec![1, 2], vec![3, 4], vec![5, 6], vec![]]);
        let test = vec![vec![1, 9], vec![7], vec![5, 6, 8], vec![]];
        let want = (0.5 + 0.0 + 2.0 / 3.0) / 3.0;
        assert!((recall_at_k(&l, &test) - want).abs() < 1e-15);
    }

    #[test]
    fn ndcg_rank_two() {
        let l = lists(3, vec![vec![4, 7, 1]]);
        assert!((ndcg_at_k(&l, &[vec![7]]) - 0.63093).abs() < 1e-5);
        assert_eq!(ndcg_at_k(&l, &[vec![4]]), 1.0);
        assert_eq!(ndcg_at_k(&l, &[vec![9]]), 0.0);
    }

    #[test]
    fn jensen_degenerate_cases() {
        let (g, v) = jensen_gap(&[1.3], &[-0.4], &[1.0], &[1.0]);
        assert_eq!((g, v), (0.0, 0.0));
        let (g, v) = jensen_gap(&[1.3, 2.0], &[-0.4, 0.1], &[0.0, 1.0], &[1.0, 0.0]);
        assert!(g.abs() < 1e-15 && v == 0.0);
    }

    #[test]
    fn diagnostics_csv_has_header_arity() {
        let row = DiagnosticsRow {
            epoch: 3,
            loss: 0.5,
            recall_k: 0.1,
            ndcg_k: 0.2,
            aplt_k: 0.0,
            likelihood: 0.7,
            log_likelihood: -0.4,
            jensen_gap_mean: 0.0,
            jensen_gap_max: 0.0,
            margin_var_mean: 0.0,
            kl_bag_pos: 0.0,
            kl_bag_neg: 0.0,
            kl_global_pos: 0.0,
            kl_global_neg: 0.0,
        };
        let cols = DiagnosticsRow::CSV_HEADER.split(',').count();
        assert_eq!(row.to_csv().split(',').count(), cols);
        assert!(row.to_csv().starts_with("3,0.5,"));
    }
}
