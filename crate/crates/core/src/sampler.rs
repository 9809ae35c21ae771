//! Bag construction: one user, `M` training positives, `N` sampled negatives.

use rand::seq::{index, SliceRandom};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::data::SplitBundle;
use crate::error::{domain, Result};

/// A training unit `(u, i_1..i_M, j_1..j_N)`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EnrichedInteraction {
    pub user: u32,
    pub positives: Vec<u32>,
    pub negatives: Vec<u32>,
}

impl EnrichedInteraction {
    pub fn m(&self) -> usize {
        self.positives.len()
    }

    pub fn n(&self) -> usize {
        self.negatives.len()
    }
}

fn check_sizes(bundle: &SplitBundle, user: u32, m: usize, n: usize) -> Result<&[u32]> {
    if m == 0 || n == 0 {
        return domain(format!("bag sizes must be positive, got M={m}, N={n}"));
    }
    let Some(pos) = bundle.train.get(user as usize) else {
        return domain(format!("user {user} out of range"));
    };
    if pos.is_empty() {
        return domain(format!("user {user} has no training positives"));
    }
    if n >= bundle.item_count - pos.len() {
        return domain(format!(
            "N={n} too large for user {user} with {} eligible negatives",
            bundle.item_count - pos.len()
        ));
    }
    Ok(pos)
}

/// `n` distinct items outside the user's training positives, by rejection.
fn sample_negatives<R: Rng + ?Sized>(pos: &[u32], item_count: usize, n: usize, rng: &mut R, out: &mut Vec<u32>) {
    out.clear();
    while out.len() < n {
        let j = rng.random_range(0..item_count as u32);
        if pos.binary_search(&j).is_err() && !out.contains(&j) {
            out.push(j);
        }
    }
}

/// Positives uniform without replacement when the user has at least `m`,
/// with replacement otherwise; negatives uniform without replacement.
pub fn sample_bag<R: Rng + ?Sized>(user: u32, bundle: &SplitBundle, m: usize, n: usize, rng: &mut R) -> Result<EnrichedInteraction> {
    let pos = check_sizes(bundle, user, m, n)?;
    let positives = if pos.len() >= m {
        index::sample(rng, pos.len(), m).into_iter().map(|k| pos[k]).collect()
    } else {
        (0..m).map(|_| pos[rng.random_range(0..pos.len())]).collect()
    };
    let mut negatives = Vec::with_capacity(n);
    sample_negatives(pos, bundle.item_count, n, rng, &mut negatives);
    Ok(EnrichedInteraction {
        user,
        positives,
        negatives,
    })
}

/// Like [`sample_bag`] but with `anchor` pinned in slot `i_1`; the other
/// `m - 1` positives are drawn from the remaining training positives.
pub fn sample_anchored_bag<R: Rng + ?Sized>(
    user: u32,
    anchor: u32,
    bundle: &SplitBundle,
    m: usize,
    n: usize,
    rng: &mut R,
) -> Result<EnrichedInteraction> {
    let pos = check_sizes(bundle, user, m, n)?;
    let Ok(anchor_at) = pos.binary_search(&anchor) else {
        return domain(format!("anchor {anchor} is not a training positive of user {user}"));
    };
    let mut bag = EnrichedInteraction {
        user,
        positives: Vec::with_capacity(m),
        negatives: Vec::with_capacity(n),
    };
    fill_anchored(pos, anchor_at, bundle.item_count, m, n, rng, &mut bag);
    Ok(bag)
}

// Hot path for the training loop: no validation, reuses the bag buffers.
pub(crate) fn fill_anchored<R: Rng + ?Sized>(
    pos: &[u32],
    anchor_at: usize,
    item_count: usize,
    m: usize,
    n: usize,
    rng: &mut R,
    bag: &mut EnrichedInteraction,
) {
    bag.positives.clear();
    bag.positives.push(pos[anchor_at]);
    if m > 1 {
        if pos.len() >= m {
            // distinct picks among the other len-1 positives
            for k in index::sample(rng, pos.len() - 1, m - 1) {
                let k = if k >= anchor_at { k + 1 } else { k };
                bag.positives.push(pos[k]);
            }
        } else {
            for _ in 1..m {
                bag.positives.push(pos[rng.random_range(0..pos.len())]);
            }
        }
    }
    sample_negatives(pos, item_count, n, rng, &mut bag.negatives);
}

/// One `(user, anchor)` entry per training positive, shuffled.
pub fn epoch_schedule<R: Rng + ?Sized>(bundle: &SplitBundle, rng: &mut R) -> Vec<(u32, u32)> {
    let mut out = Vec::with_capacity(bundle.train_positive_count());
    for (u, items) in bundle.train.iter().enumerate() {
        out.extend(items.iter().map(|&i| (u as u32, i)));
    }
    out.shuffle(rng);
    out
}

/// Samples the bags of one full epoch.
pub fn sample_epoch<R: Rng + ?Sized>(bundle: &SplitBundle, m: usize, n: usize, rng: &mut R) -> Result<Vec<EnrichedInteraction>> {
    epoch_schedule(bundle, rng)
        .into_iter()
        .map(|(u, i)| sample_anchored_bag(u, i, bundle, m, n, rng))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn bundle() -> SplitBundle {
        SplitBundle {
            user_count: 3,
            item_count: 20,
            train: vec![vec![1, 4, 7, 9, 12], vec![3, 5], vec![]],
            test: vec![vec![2], vec![], vec![]],
            dropped_users: 0,
            injected: vec![],
        }
    }

    #[test]
    fn degenerate_bag_is_a_bpr_pair() {
        let b = bundle();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let bag = sample_bag(0, &b, 1, 1, &mut rng).unwrap();
        assert_eq!((bag.m(), bag.n()), (1, 1));
        assert!(b.is_train_positive(0, bag.positives[0]));
        assert!(!b.is_train_positive(0, bag.negatives[0]));
    }

    #[test]
    fn small_users_sample_with_replacement() {
        let b = bundle();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let bag = sample_bag(1, &b, 4, 3, &mut rng).unwrap();
        assert_eq!(bag.positives.len(), 4);
        assert!(bag.positives.iter().all(|i| *i == 3 || *i == 5));
        let mut negs = bag.negatives.clone();
        negs.sort();
        negs.dedup();
        assert_eq!(negs.len(), 3);
    }

    #[test]
    fn large_users_sample_distinct_positives() {
        let b = bundle();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..100 {
            let bag = sample_anchored_bag(0, 9, &b, 4, 4, &mut rng).unwrap();
            assert_eq!(bag.positives[0], 9);
            let mut p = bag.positives.clone();
            p.sort();
            p.dedup();
            assert_eq!(p.len(), 4);
            assert!(bag.positives.iter().all(|&i| b.is_train_positive(0, i)));
            assert!(bag.negatives.iter().all(|&j| !b.is_train_positive(0, j)));
        }
    }

    #[test]
    fn errors() {
        let b = bundle();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(sample_bag(2, &b, 1, 1, &mut rng).is_err());
        assert!(sample_bag(0, &b, 0, 1, &mut rng).is_err());
        assert!(sample_bag(0, &b, 1, 15, &mut rng).is_err());
        assert!(sample_bag(0, &b, 1, 14, &mut rng).is_ok());
        assert!(sample_anchored_bag(0, 2, &b, 2, 2, &mut rng).is_err());
    }

    #[test]
    fn schedule_covers_each_positive_once() {
        let b = bundle();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let s = epoch_schedule(&b, &mut rng);
        assert_eq!(s.len(), 7);
        let mut sorted = s.clone();
        sorted.sort();
        assert_eq!(sorted, vec![(0, 1), (0, 4), (0, 7), (0, 9), (0, 12), (1, 3), (1, 5)]);
        let mut rng2 = ChaCha8Rng::seed_from_u64(3);
        assert_eq!(s, epoch_schedule(&b, &mut rng2));
    }

    #[test]
    fn negatives_are_uniform() {
        // chi-square over the 15 eligible negatives of user 0
        let b = bundle();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let draws = 100_000;
        let mut counts = [0usize; 20];
        for _ in 0..draws {
            let bag = sample_bag(0, &b, 1, 1, &mut rng).unwrap();
            counts[bag.negatives[0] as usize] += 1;
        }
        let eligible: Vec<usize> = (0..20).filter(|i| !b.train[0].contains(&(*i as u32))).collect();
        assert_eq!(eligible.len(), 15);
        let expected = draws as f64 / 15.0;
        let sd = (expected * (1.0 - 1.0 / 15.0)).sqrt();
        let mut chi2 = 0.0;
        for &i in &eligible {
            let c = counts[i] as f64;
            assert!((c - expected).abs() < 5.0 * sd, "item {i}: {c}");
            chi2 += (c - expected).powi(2) / expected;
        }
        // 14 dof, p = 0.001 critical value 36.12
        assert!(chi2 < 36.12, "chi2 = {chi2}");
        for &i in &b.train[0] {
            assert_eq!(counts[i as usize], 0);
        }
    }
}
