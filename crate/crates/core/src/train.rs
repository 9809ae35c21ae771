//! The training loop: sample bags, infer posteriors, take Adam steps.

use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::{SignalBuffer, SplitBundle};
use crate::error::{domain, Error, Result};
use crate::eval::{
    aplt_at_k, jensen_gap_probe, kl_compliance, likelihood_probe, ndcg_at_k, rank_topk, recall_at_k, DiagnosticsRow, KlScope, DEFAULT_K,
};
use crate::inference::{BagWork, InferenceConfig, PosteriorMode};
use crate::loss::{elbo_coefficients, varbpr_coefficients};
use crate::model::EmbeddingModel;
use crate::optim::{SparseAdam, SparseGrad};
use crate::par::Executor;
use crate::sampler::{epoch_schedule, fill_anchored, sample_epoch, EnrichedInteraction};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    /// Classic triplet BPR; bags are forced to `M = N = 1`.
    Bpr,
    /// Plug-in VarBPR, `−ln σ(⟨u, c⁺ − c⁻⟩)`.
    Varbpr,
    /// Double-sum ELBO variant.
    VarbprElbo,
}

impl std::str::FromStr for LossKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "bpr" => Ok(LossKind::Bpr),
            "varbpr" => Ok(LossKind::Varbpr),
            "varbpr_elbo" => Ok(LossKind::VarbprElbo),
            other => Err(Error::Config(format!("unknown loss kind `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub loss: LossKind,
    pub dim: usize,
    pub lr: f64,
    pub l2: f64,
    pub epochs: usize,
    pub m: usize,
    pub n: usize,
    pub seed: u64,
    pub init_std: f64,
    /// Bags per Adam step; 1 gives per-bag updates.
    pub batch_size: usize,
    /// Threads for per-bag inference inside a batch.
    pub threads: usize,
    pub posterior: PosteriorMode,
    pub inference: InferenceConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            loss: LossKind::Varbpr,
            dim: 64,
            lr: 1e-3,
            l2: 1e-4,
            epochs: 100,
            m: 4,
            n: 4,
            seed: 2024,
            init_std: 0.01,
            batch_size: 1,
            threads: 1,
            posterior: PosteriorMode::Variational,
            inference: InferenceConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if self.dim == 0 {
            return bad("d must be at least 1".into());
        }
        if self.epochs == 0 {
            return bad("epochs must be at least 1".into());
        }
        if self.m == 0 || self.n == 0 {
            return bad(format!("bag sizes must be positive, got M={}, N={}", self.m, self.n));
        }
        if self.batch_size == 0 {
            return bad("batch_size must be at least 1".into());
        }
        if !(self.lr > 0.0) || !self.lr.is_finite() {
            return bad(format!("lr must be positive, got {}", self.lr));
        }
        if !(self.l2 >= 0.0) || !self.l2.is_finite() {
            return bad(format!("l2 must be non-negative, got {}", self.l2));
        }
        if !(self.init_std > 0.0) || !self.init_std.is_finite() {
            return bad(format!("init_std must be positive, got {}", self.init_std));
        }
        self.inference.validate()
    }

    /// Bag sizes actually used (`1, 1` for BPR).
    pub fn bag_sizes(&self) -> (usize, usize) {
        match self.loss {
            LossKind::Bpr => (1, 1),
            _ => (self.m, self.n),
        }
    }
}

/// When and how much to evaluate during training.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalSettings {
    pub k: usize,
    /// Evaluate every this many epochs (0: final epoch only). The final epoch is always evaluated.
    pub eval_every: usize,
    /// Bags sampled for the Jensen-gap and bag-scope KL probes.
    pub probe_bags: usize,
    /// Negatives per test positive in the likelihood probe.
    pub likelihood_samples: usize,
}

impl Default for EvalSettings {
    fn default() -> Self {
        EvalSettings {
            k: DEFAULT_K,
            eval_every: 1,
            probe_bags: 2048,
            likelihood_samples: 100,
        }
    }
}

impl EvalSettings {
    pub fn validate(&self) -> Result<()> {
        if self.k == 0 || self.probe_bags == 0 || self.likelihood_samples == 0 {
            return Err(Error::Config("K, probe_bags and likelihood_samples must be positive".into()));
        }
        Ok(())
    }

    fn is_eval_epoch(&self, epoch: usize, last: usize) -> bool {
        epoch == last || (self.eval_every > 0 && epoch.is_multiple_of(self.eval_every))
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: EmbeddingModel,
    pub rows: Vec<DiagnosticsRow>,
    /// Mean bag loss per epoch.
    pub epoch_losses: Vec<f64>,
    /// Training wall-clock per epoch, evaluation excluded.
    pub epoch_seconds: Vec<f64>,
}

const INIT_STREAM: u64 = 0;
const TRAIN_STREAM: u64 = 1;
const PROBE_STREAM: u64 = 2;

fn stream(seed: u64, s: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(s);
    rng
}

/// Loss of one bag, leaving the gradient coefficients in `w.a`, `w.b`.
fn bag_loss(model: &EmbeddingModel, bag: &EnrichedInteraction, signals: &SignalBuffer, cfg: &TrainConfig, w: &mut BagWork) -> f64 {
    w.infer(model, bag, signals, &cfg.inference, cfg.posterior);
    match cfg.loss {
        LossKind::Bpr | LossKind::Varbpr => varbpr_coefficients(&w.sp, &w.sn, &w.alpha, &w.beta, &mut w.a, &mut w.b),
        LossKind::VarbprElbo => elbo_coefficients(&w.sp, &w.sn, &w.alpha, &w.beta, &mut w.a, &mut w.b),
    }
}

/// Adds `scale ×` the gradients of one bag to the accumulators.
#[allow(clippy::too_many_arguments)]
fn accumulate(
    model: &EmbeddingModel,
    bag: &EnrichedInteraction,
    a: &[f64],
    b: &[f64],
    l2: f64,
    scale: f64,
    gu: &mut SparseGrad,
    gi: &mut SparseGrad,
) {
    let d = model.dim();
    let u = model.user(bag.user);
    {
        let row = gu.row_mut(bag.user);
        for k in 0..d {
            row[k] += scale * 2.0 * l2 * u[k];
        }
        for (am, &i) in a.iter().zip(&bag.positives) {
            let iv = model.item(i);
            for k in 0..d {
                row[k] -= scale * am * iv[k];
            }
        }
        for (bn, &j) in b.iter().zip(&bag.negatives) {
            let jv = model.item(j);
            for k in 0..d {
                row[k] += scale * bn * jv[k];
            }
        }
    }
    for (coef, sign, &i) in a
        .iter()
        .map(|c| (*c, -1.0))
        .zip(&bag.positives)
        .chain(b.iter().map(|c| (*c, 1.0)).zip(&bag.negatives))
        .map(|((c, s), i)| (c, s, i))
    {
        let iv = model.item(i);
        let row = gi.row_mut(i);
        for k in 0..d {
            row[k] += scale * (sign * coef * u[k] + 2.0 * l2 * iv[k]);
        }
    }
}

/// Trains with evaluation on the environment-configured executor.
pub fn train(cfg: &TrainConfig, eval: &EvalSettings, bundle: &SplitBundle, signals: &SignalBuffer) -> Result<TrainOutcome> {
    train_with(cfg, Some(eval), bundle, signals, &Executor::from_env(), &mut |_| {})
}

/// Full training run; `on_eval` sees every diagnostics row as it is produced.
/// With `eval = None` nothing is evaluated (timing runs).
pub fn train_with(
    cfg: &TrainConfig,
    eval: Option<&EvalSettings>,
    bundle: &SplitBundle,
    signals: &SignalBuffer,
    eval_exec: &Executor,
    on_eval: &mut dyn FnMut(&DiagnosticsRow),
) -> Result<TrainOutcome> {
    cfg.validate()?;
    if let Some(e) = eval {
        e.validate()?;
    }
    if signals.item_count() != bundle.item_count {
        return domain("signal buffer does not match the split");
    }
    let (m, n) = cfg.bag_sizes();
    if let Some(u) = (0..bundle.user_count).find(|&u| {
        let p = bundle.train[u].len();
        p > 0 && n >= bundle.item_count - p
    }) {
        return domain(format!("N={n} leaves no room for negatives of user {u}"));
    }

    let mut model = EmbeddingModel::random(
        bundle.user_count,
        bundle.item_count,
        cfg.dim,
        cfg.init_std,
        &mut stream(cfg.seed, INIT_STREAM),
    )?;
    let mut adam_u = SparseAdam::new(bundle.user_count, cfg.dim);
    let mut adam_i = SparseAdam::new(bundle.item_count, cfg.dim);
    let mut gu = SparseGrad::new(cfg.dim);
    let mut gi = SparseGrad::new(cfg.dim);
    let mut rng = stream(cfg.seed, TRAIN_STREAM);
    let train_exec = Executor::new(cfg.threads);

    let mut bags: Vec<EnrichedInteraction> = (0..cfg.batch_size)
        .map(|_| EnrichedInteraction {
            user: 0,
            positives: Vec::with_capacity(m),
            negatives: Vec::with_capacity(n),
        })
        .collect();
    let mut work = BagWork::default();
    let mut out = TrainOutcome {
        model: EmbeddingModel::zeros(0, 0, 1),
        rows: Vec::new(),
        epoch_losses: Vec::new(),
        epoch_seconds: Vec::new(),
    };

    for epoch in 1..=cfg.epochs {
        let start = Instant::now();
        let schedule = epoch_schedule(bundle, &mut rng);
        let mut loss_sum = 0.0;
        for (chunk_no, chunk) in schedule.chunks(cfg.batch_size).enumerate() {
            let batch = &mut bags[..chunk.len()];
            for (bag, &(u, anchor)) in batch.iter_mut().zip(chunk) {
                let pos = &bundle.train[u as usize];
                let at = pos.binary_search(&anchor).expect("anchor from the schedule");
                bag.user = u;
                fill_anchored(pos, at, bundle.item_count, m, n, &mut rng, bag);
            }
            gu.clear();
            gi.clear();
            let scale = 1.0 / chunk.len() as f64;
            let mut batch_loss = 0.0;
            if chunk.len() == 1 || train_exec.threads() <= 1 {
                for bag in batch.iter() {
                    batch_loss += bag_loss(&model, bag, signals, cfg, &mut work);
                    accumulate(&model, bag, &work.a, &work.b, cfg.l2, scale, &mut gu, &mut gi);
                }
            } else {
                let snapshot = &model;
                let coefs = train_exec.map(batch, |bag| {
                    let mut w = BagWork::default();
                    let l = bag_loss(snapshot, bag, signals, cfg, &mut w);
                    (l, w.a, w.b)
                });
                for (bag, (l, a, b)) in batch.iter().zip(&coefs) {
                    batch_loss += l;
                    accumulate(&model, bag, a, b, cfg.l2, scale, &mut gu, &mut gi);
                }
            }
            if !batch_loss.is_finite() {
                return Err(Error::Divergence {
                    epoch,
                    bag: chunk_no * cfg.batch_size,
                    user_norm: model.max_user_norm(),
                    item_norm: model.max_item_norm(),
                });
            }
            loss_sum += batch_loss;
            let (users, items) = model.factors_mut();
            adam_u.update(users, &gu, cfg.lr);
            adam_i.update(items, &gi, cfg.lr);
        }
        out.epoch_seconds.push(start.elapsed().as_secs_f64());
        let mean_loss = loss_sum / schedule.len().max(1) as f64;
        out.epoch_losses.push(mean_loss);
        if !model.is_finite() {
            return Err(Error::Divergence {
                epoch,
                bag: schedule.len(),
                user_norm: model.max_user_norm(),
                item_norm: model.max_item_norm(),
            });
        }
        log::debug!("epoch {epoch}: loss {mean_loss:.6} in {:.2}s", out.epoch_seconds[epoch - 1]);
        if let Some(eval) = eval.filter(|e| e.is_eval_epoch(epoch, cfg.epochs)) {
            let row = diagnostics(&model, cfg, eval, bundle, signals, epoch, mean_loss, eval_exec)?;
            log::info!(
                "epoch {epoch}: recall {:.4} ndcg {:.4} aplt {:.4}",
                row.recall_k,
                row.ndcg_k,
                row.aplt_k
            );
            on_eval(&row);
            out.rows.push(row);
        }
    }
    out.model = model;
    Ok(out)
}

/// Evaluates a model snapshot into one diagnostics row.
#[allow(clippy::too_many_arguments)]
pub fn diagnostics(
    model: &EmbeddingModel,
    cfg: &TrainConfig,
    eval: &EvalSettings,
    bundle: &SplitBundle,
    signals: &SignalBuffer,
    epoch: usize,
    loss: f64,
    exec: &Executor,
) -> Result<DiagnosticsRow> {
    let lists = rank_topk(model, bundle, eval.k, exec)?;
    let probe_seed = cfg.seed ^ (epoch as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    let like = likelihood_probe(model, bundle, eval.likelihood_samples, probe_seed, exec)?;
    let (m, n) = cfg.bag_sizes();
    let mut rng = stream(probe_seed, PROBE_STREAM);
    let epoch_bags = sample_epoch(bundle, m, n, &mut rng)?;
    let probe = &epoch_bags[..eval.probe_bags.min(epoch_bags.len())];
    let jensen = jensen_gap_probe(model, probe, signals, &cfg.inference, cfg.posterior, exec)?;
    let (kl_bag_pos, kl_bag_neg) = kl_compliance(model, bundle, signals, &cfg.inference, cfg.posterior, probe, KlScope::Bag, exec)?;
    let (kl_global_pos, kl_global_neg) = kl_compliance(
        model,
        bundle,
        signals,
        &cfg.inference,
        cfg.posterior,
        &epoch_bags,
        KlScope::Global,
        exec,
    )?;
    Ok(DiagnosticsRow {
        epoch,
        loss,
        recall_k: recall_at_k(&lists, &bundle.test),
        ndcg_k: ndcg_at_k(&lists, &bundle.test),
        aplt_k: aplt_at_k(&lists, signals),
        likelihood: like.mean,
        log_likelihood: like.log_mean,
        jensen_gap_mean: jensen.mean,
        jensen_gap_max: jensen.max,
        margin_var_mean: jensen.margin_var_mean,
        kl_bag_pos,
        kl_bag_neg,
        kl_global_pos,
        kl_global_neg,
    })
}
