use proptest::prelude::*;

use varbpr::eval::jensen_gap;
use varbpr::inference::{
    hardness_scores, infer, positive_objective, posterior_negative, posterior_positive, InferenceConfig, PriorPair, Side,
};
use varbpr::loss::{elbo_loss, varbpr_loss};
use varbpr::math::{cross_entropy, dot, entropy, kl_divergence, log_sigmoid, stable_softmax, SimplexVector};

fn simplex(n: usize) -> impl Strategy<Value = SimplexVector> {
    prop::collection::vec(0.01f64..1.0, n).prop_map(|w| SimplexVector::normalize(&w).unwrap())
}

fn simplex_pair() -> impl Strategy<Value = (SimplexVector, SimplexVector)> {
    (1usize..8).prop_flat_map(|n| (simplex(n), simplex(n)))
}

proptest! {
    #[test]
    fn log_odds_identity(x in -30.0f64..30.0) {
        let d = log_sigmoid(x).unwrap() - log_sigmoid(-x).unwrap();
        prop_assert!((d - x).abs() < 1e-10);
    }

    #[test]
    fn softmax_shift_invariant(logits in prop::collection::vec(-50.0f64..50.0, 1..10), shift in -1e3f64..1e3, t in 0.05f64..20.0) {
        let a = stable_softmax(&logits, t).unwrap();
        let shifted: Vec<f64> = logits.iter().map(|l| l + shift).collect();
        let b = stable_softmax(&shifted, t).unwrap();
        for (x, y) in a.iter().zip(b.iter()) {
            prop_assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn kl_gibbs_and_decomposition((p, q) in simplex_pair()) {
        let kl = kl_divergence(&p, &q).unwrap();
        prop_assert!(kl >= 0.0);
        let split = cross_entropy(&p, &q).unwrap() - entropy(&p);
        prop_assert!((kl - split).abs() < 1e-10);
    }

    #[test]
    fn closed_form_beats_any_feasible_point(
        scores in prop::collection::vec(-4.0f64..4.0, 1..7),
        c in 0.1f64..50.0,
        seed in any::<u64>(),
    ) {
        let m = scores.len();
        let prior: Vec<f64> = (0..m).map(|k| 0.1 + ((seed >> (k * 5)) & 31) as f64).collect();
        let alpha = posterior_positive(&scores, &prior, c).unwrap();
        let best = positive_objective(&alpha, &scores, &prior, c).unwrap();
        let other = SimplexVector::normalize(&(0..m).map(|k| 1.0 + ((seed >> (k * 7)) & 15) as f64).collect::<Vec<_>>()).unwrap();
        prop_assert!(positive_objective(&other, &scores, &prior, c).unwrap() <= best + 1e-10);
    }

    #[test]
    fn posterior_limits(scores in prop::collection::vec(-3.0f64..3.0, 2..6)) {
        let prior = vec![1.0; scores.len()];
        // large temperature: the prior (uniform) wins
        let a = posterior_positive(&scores, &prior, 1e7).unwrap();
        prop_assert!(a.iter().all(|x| (x - 1.0 / scores.len() as f64).abs() < 1e-5));
        // negative side puts more mass on lower scores
        let b = posterior_negative(&scores, &prior, 1.0).unwrap();
        for i in 0..scores.len() {
            for j in 0..scores.len() {
                if scores[i] < scores[j] {
                    prop_assert!(b[i] > b[j]);
                }
            }
        }
    }

    #[test]
    fn hardness_orders_by_score(scores in prop::collection::vec(-5.0f64..5.0, 2..8), tau in 0.1f64..5.0) {
        let pos = hardness_scores(&scores, Side::Positive, tau).unwrap();
        let neg = hardness_scores(&scores, Side::Negative, tau).unwrap();
        for i in 0..scores.len() {
            for j in 0..scores.len() {
                if scores[i] < scores[j] {
                    prop_assert!(pos[i] > pos[j]);
                    prop_assert!(neg[i] < neg[j]);
                }
            }
        }
    }

    #[test]
    fn jensen_sandwich_on_vectors(
        d in 1usize..8,
        m in 1usize..5,
        n in 1usize..5,
        c in 0.1f64..10.0,
        raw in prop::collection::vec(-1.5f64..1.5, 8 * 9),
    ) {
        let u = &raw[..d];
        let pos: Vec<&[f64]> = (0..m).map(|k| &raw[8 * (k + 1)..8 * (k + 1) + d]).collect();
        let neg: Vec<&[f64]> = (0..n).map(|k| &raw[8 * (k + 5)..8 * (k + 5) + d]).collect();
        let sp: Vec<f64> = pos.iter().map(|i| dot(u, i)).collect();
        let sn: Vec<f64> = neg.iter().map(|j| dot(u, j)).collect();
        let cfg = InferenceConfig { c_pos: c, c_neg: c, ..InferenceConfig::default() };
        let post = infer(&sp, &sn, &PriorPair::uniform(m, n), &cfg).unwrap();
        let mut cp = vec![0.0; d];
        let mut cn = vec![0.0; d];
        for (a, i) in post.alpha.iter().zip(&pos) { for k in 0..d { cp[k] += a * i[k]; } }
        for (b, j) in post.beta.iter().zip(&neg) { for k in 0..d { cn[k] += b * j[k]; } }
        let plug = varbpr_loss(u, &cp, &cn);
        let full = elbo_loss(u, &pos, &neg, &post).unwrap();
        let (gap, var) = jensen_gap(&sp, &sn, &post.alpha, &post.beta);
        prop_assert!(plug <= full + 1e-12);
        prop_assert!(full <= plug + var / 8.0 + 1e-12);
        prop_assert!((gap - (full - plug)).abs() < 1e-10);
    }
}
