//! Experiment commands. Each writes fixed-header CSV/JSON files into an
//! output directory; wall-clock data goes to a separate `run_info.json`.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::Serialize;
use varbpr::data::{
    compute_signals, inject_noise, load_ratings, split_clean_test, split_implicit, InteractionLog, SignalBuffer, SplitBundle,
};
use varbpr::eval::DiagnosticsRow;
use varbpr::inference::PosteriorMode;
use varbpr::model::EmbeddingModel;
use varbpr::par::Executor;
use varbpr::train::{diagnostics, train_with, LossKind, TrainConfig, TrainOutcome};
use varbpr::{Error, Result};

use crate::config::{ExperimentConfig, SplitKind};

pub const EPOCHS_CSV: &str = "epochs.csv";
pub const REPORT_JSON: &str = "report.json";
pub const RUN_INFO_JSON: &str = "run_info.json";
pub const CHECKPOINT: &str = "model.ckpt";
pub const PARETO_CSV: &str = "pareto.csv";
pub const TABLE_CSV: &str = "table.csv";
pub const LIKELIHOOD_CSV: &str = "likelihood.csv";
pub const TIMING_CSV: &str = "timing.csv";

/// Loaded data for one configuration.
pub struct Prepared {
    pub log: InteractionLog,
    pub bundle: SplitBundle,
    pub signals: SignalBuffer,
}

/// Loads, splits, injects noise (if configured) and computes item signals.
pub fn prepare(cfg: &ExperimentConfig) -> Result<Prepared> {
    let log = load_ratings(&cfg.dataset.path, cfg.dataset.format)?;
    let clean = match cfg.dataset.split {
        SplitKind::CleanTest => {
            if !log.has_ratings() {
                return Err(Error::Config("split = \"clean_test\" needs a rated dataset".into()));
            }
            split_clean_test(&log, cfg.dataset.split_seed)?
        }
        SplitKind::Implicit8020 => split_implicit(&log, cfg.dataset.test_fraction, cfg.dataset.split_seed)?,
    };
    let bundle = if cfg.noise.rate > 0.0 {
        inject_noise(&clean, cfg.noise.rate, cfg.noise.seed)?
    } else {
        clean
    };
    let signals = compute_signals(&bundle, &log);
    log::info!(
        "{} users, {} items, {} train / {} test positives",
        bundle.user_count,
        bundle.item_count,
        bundle.train_positive_count(),
        bundle.test_positive_count()
    );
    Ok(Prepared { log, bundle, signals })
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| Error::Config(format!("serializing {}: {e}", path.display())))?;
    write_text(path, &(text + "\n"))
}

fn write_csv(path: &Path, header: &str, rows: impl IntoIterator<Item = String>) -> Result<()> {
    let mut text = String::from(header);
    text.push('\n');
    for r in rows {
        text.push_str(&r);
        text.push('\n');
    }
    write_text(path, &text)
}

#[derive(Debug, Clone, Serialize)]
struct RunInfo {
    started_unix: u64,
    host: Option<String>,
    eval_threads: usize,
    epoch_seconds: Vec<f64>,
}

fn write_run_info(dir: &Path, epoch_seconds: Vec<f64>, exec: &Executor) -> Result<()> {
    let info = RunInfo {
        started_unix: SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs()),
        host: std::env::var("HOSTNAME").ok(),
        eval_threads: exec.threads(),
        epoch_seconds,
    };
    write_json(&dir.join(RUN_INFO_JSON), &info)
}

/// Deterministic summary of a training run.
#[derive(Debug, Clone, Serialize)]
pub struct RunReport {
    pub config: ExperimentConfig,
    pub epoch_losses: Vec<f64>,
    pub rows: Vec<DiagnosticsRow>,
    pub final_metrics: DiagnosticsRow,
}

fn run(cfg: &ExperimentConfig, train: &TrainConfig, data: &Prepared, exec: &Executor) -> Result<TrainOutcome> {
    let eval = cfg.eval_settings();
    train_with(train, Some(&eval), &data.bundle, &data.signals, exec, &mut |_| {})
}

/// Trains one model; writes `epochs.csv`, `report.json`, `model.ckpt`,
/// the id remaps and `run_info.json`.
pub fn cmd_train(cfg: &ExperimentConfig, out: &Path) -> Result<RunReport> {
    let data = prepare(cfg)?;
    let exec = Executor::from_env();
    let outcome = run(cfg, &cfg.train_config(), &data, &exec)?;
    create_dir(out)?;
    write_csv(
        &out.join(EPOCHS_CSV),
        DiagnosticsRow::CSV_HEADER,
        outcome.rows.iter().map(|r| r.to_csv()),
    )?;
    let report = RunReport {
        config: cfg.clone(),
        epoch_losses: outcome.epoch_losses.clone(),
        final_metrics: outcome.rows.last().cloned().expect("final epoch is always evaluated"),
        rows: outcome.rows.clone(),
    };
    write_json(&out.join(REPORT_JSON), &report)?;
    outcome.model.save(&out.join(CHECKPOINT), &cfg.to_toml())?;
    data.log.write_remap(&out.join("users.csv"), false)?;
    data.log.write_remap(&out.join("items.csv"), true)?;
    write_run_info(out, outcome.epoch_seconds, &exec)?;
    Ok(report)
}

/// Re-evaluates a saved checkpoint (default `<out>/model.ckpt`) on the
/// configured split; writes `evaluation.json`.
pub fn cmd_evaluate(cfg: &ExperimentConfig, out: &Path, checkpoint: Option<&Path>) -> Result<DiagnosticsRow> {
    let path: PathBuf = checkpoint.map_or_else(|| out.join(CHECKPOINT), Path::to_path_buf);
    let (model, _) = EmbeddingModel::load(&path)?;
    let data = prepare(cfg)?;
    if model.user_count() != data.bundle.user_count || model.item_count() != data.bundle.item_count {
        return Err(Error::Config(format!(
            "checkpoint is {}×{} but the dataset has {} users and {} items",
            model.user_count(),
            model.item_count(),
            data.bundle.user_count,
            data.bundle.item_count
        )));
    }
    let train = cfg.train_config();
    let row = diagnostics(
        &model,
        &train,
        &cfg.eval_settings(),
        &data.bundle,
        &data.signals,
        0,
        f64::NAN,
        &Executor::from_env(),
    )?;
    create_dir(out)?;
    write_json(&out.join("evaluation.json"), &row)?;
    Ok(row)
}

/// One cell of the direction–strength sweep.
#[derive(Debug, Clone, Serialize)]
pub struct SweepRow {
    pub direction: usize,
    pub lambda_pos: [f64; 3],
    pub lambda_neg: [f64; 3],
    pub c: f64,
    pub recall_k: f64,
    pub ndcg_k: f64,
    pub aplt_k: f64,
    pub ok: bool,
    pub on_front: bool,
}

impl SweepRow {
    pub const CSV_HEADER: &'static str =
        "direction,lambda1_pos,lambda2_pos,lambda3_pos,lambda1_neg,lambda2_neg,lambda3_neg,c,recall_k,ndcg_k,aplt_k,status,on_front";

    fn to_csv(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{},{},{},{},{}",
            self.direction,
            self.lambda_pos[0],
            self.lambda_pos[1],
            self.lambda_pos[2],
            self.lambda_neg[0],
            self.lambda_neg[1],
            self.lambda_neg[2],
            self.c,
            self.recall_k,
            self.ndcg_k,
            self.aplt_k,
            if self.ok { "ok" } else { "failed" },
            self.on_front
        )
    }
}

/// Prior directions of the sweep. Lockstep moves rarity up while quality
/// moves down; grid mode crosses every rarity level with every quality level.
pub fn sweep_directions(cfg: &ExperimentConfig, grid: bool) -> Vec<([f64; 3], [f64; 3])> {
    let s = &cfg.sweep;
    let steps = s.direction_steps.max(1);
    let t = |k: usize| if steps == 1 { 0.0 } else { k as f64 / (steps - 1) as f64 };
    let l3_pos = cfg.loss.lambda_pos[2];
    let point = |a: f64, b: f64| {
        (
            [a * s.pos_rarity_max, b * s.pos_rarity_max, l3_pos],
            [a * s.neg_popularity_max, b * s.neg_popularity_max, s.neg_hardness],
        )
    };
    if grid {
        (0..steps)
            .flat_map(|a| (0..steps).map(move |b| (a, b)))
            .map(|(a, b)| point(t(a), t(b)))
            .collect()
    } else {
        (0..steps).map(|k| point(t(k), 1.0 - t(k))).collect()
    }
}

/// Marks rows not dominated in (NDCG, APLT) by any other successful row.
pub fn mark_pareto_front(rows: &mut [SweepRow]) {
    let pts: Vec<(f64, f64, bool)> = rows.iter().map(|r| (r.ndcg_k, r.aplt_k, r.ok)).collect();
    for (k, row) in rows.iter_mut().enumerate() {
        let (n, a, ok) = pts[k];
        row.on_front = ok
            && !pts
                .iter()
                .enumerate()
                .any(|(j, &(n2, a2, ok2))| j != k && ok2 && n2 >= n && a2 >= a && (n2 > n || a2 > a));
    }
}

/// Trains one VarBPR model per (direction, strength) cell; writes `pareto.csv`.
/// A failed cell is recorded with status `failed` and the sweep continues.
pub fn cmd_sweep(cfg: &ExperimentConfig, out: &Path, grid: bool) -> Result<Vec<SweepRow>> {
    if cfg.sweep.strengths.is_empty() || cfg.sweep.strengths.iter().any(|c| c.is_nan() || *c <= 0.0) {
        return Err(Error::Config("sweep strengths must be a non-empty list of positive values".into()));
    }
    let data = prepare(cfg)?;
    let exec = Executor::from_env();
    let mut rows = Vec::new();
    for (direction, (lp, ln)) in sweep_directions(cfg, grid).into_iter().enumerate() {
        for &c in &cfg.sweep.strengths {
            let mut t = cfg.train_config();
            t.inference.lambda_pos = lp;
            t.inference.lambda_neg = ln;
            t.inference.c_pos = c;
            t.inference.c_neg = c;
            let mut cell = cfg.clone();
            cell.eval.eval_every = 0;
            let mut row = SweepRow {
                direction,
                lambda_pos: lp,
                lambda_neg: ln,
                c,
                recall_k: f64::NAN,
                ndcg_k: f64::NAN,
                aplt_k: f64::NAN,
                ok: false,
                on_front: false,
            };
            match run(&cell, &t, &data, &exec) {
                Ok(o) => {
                    let last = o.rows.last().expect("final epoch is always evaluated");
                    row.recall_k = last.recall_k;
                    row.ndcg_k = last.ndcg_k;
                    row.aplt_k = last.aplt_k;
                    row.ok = true;
                }
                Err(e) => log::error!("sweep cell direction {direction}, c {c} failed: {e}"),
            }
            log::info!("sweep direction {direction} c {c}: ndcg {:.4} aplt {:.4}", row.ndcg_k, row.aplt_k);
            rows.push(row);
        }
    }
    mark_pareto_front(&mut rows);
    create_dir(out)?;
    write_csv(&out.join(PARETO_CSV), SweepRow::CSV_HEADER, rows.iter().map(SweepRow::to_csv))?;
    Ok(rows)
}

#[derive(Debug, Clone, Serialize)]
pub struct AblationRow {
    pub variant: &'static str,
    pub recall_k: f64,
    pub ndcg_k: f64,
    pub aplt_k: f64,
}

/// The configured VarBPR model and its three ablations.
pub fn ablation_variants(base: &TrainConfig) -> Vec<(&'static str, TrainConfig)> {
    let mut full = base.clone();
    full.loss = LossKind::Varbpr;
    full.posterior = PosteriorMode::Variational;
    let mut no_prior = full.clone();
    no_prior.inference.lambda_pos = [0.0; 3];
    no_prior.inference.lambda_neg = [0.0; 3];
    let mut no_vi = full.clone();
    no_vi.posterior = PosteriorMode::Uniform;
    let mut no_plugin = full.clone();
    no_plugin.loss = LossKind::VarbprElbo;
    vec![("varbpr", full), ("wo_prior", no_prior), ("wo_vi", no_vi), ("wo_plugin", no_plugin)]
}

/// Writes `table.csv` with the full model and each ablation.
pub fn cmd_ablate(cfg: &ExperimentConfig, out: &Path) -> Result<Vec<AblationRow>> {
    let data = prepare(cfg)?;
    let exec = Executor::from_env();
    let mut cell = cfg.clone();
    cell.eval.eval_every = 0;
    let mut rows = Vec::new();
    for (variant, t) in ablation_variants(&cfg.train_config()) {
        let o = run(&cell, &t, &data, &exec)?;
        let last = o.rows.last().expect("final epoch is always evaluated");
        log::info!("{variant}: recall {:.4} ndcg {:.4}", last.recall_k, last.ndcg_k);
        rows.push(AblationRow {
            variant,
            recall_k: last.recall_k,
            ndcg_k: last.ndcg_k,
            aplt_k: last.aplt_k,
        });
    }
    create_dir(out)?;
    write_csv(
        &out.join(TABLE_CSV),
        "variant,recall_k,ndcg_k,aplt_k",
        rows.iter()
            .map(|r| format!("{},{},{},{}", r.variant, r.recall_k, r.ndcg_k, r.aplt_k)),
    )?;
    Ok(rows)
}

#[derive(Debug, Clone, Serialize)]
pub struct LikelihoodRow {
    pub loss: LossKind,
    pub rate: f64,
    pub epoch: usize,
    pub likelihood: f64,
    pub log_likelihood: f64,
}

fn loss_name(l: LossKind) -> &'static str {
    match l {
        LossKind::Bpr => "bpr",
        LossKind::Varbpr => "varbpr",
        LossKind::VarbprElbo => "varbpr_elbo",
    }
}

/// Likelihood-probe trajectories of BPR and the configured VarBPR model
/// at each noise rate; writes `likelihood.csv`.
pub fn cmd_robustness(cfg: &ExperimentConfig, out: &Path, rates: &[f64]) -> Result<Vec<LikelihoodRow>> {
    if rates.is_empty() || rates.iter().any(|r| !(0.0..1.0).contains(r)) {
        return Err(Error::Config("noise rates must lie in [0, 1)".into()));
    }
    if cfg.dataset.split != SplitKind::CleanTest {
        return Err(Error::Config("robustness runs need split = \"clean_test\"".into()));
    }
    let exec = Executor::from_env();
    let mut rows = Vec::new();
    for &rate in rates {
        let mut noisy = cfg.clone();
        noisy.noise.rate = rate;
        let data = prepare(&noisy)?;
        for kind in [LossKind::Bpr, LossKind::Varbpr] {
            let mut t = noisy.train_config();
            t.loss = kind;
            let o = run(&noisy, &t, &data, &exec)?;
            rows.extend(o.rows.iter().map(|r| LikelihoodRow {
                loss: kind,
                rate,
                epoch: r.epoch,
                likelihood: r.likelihood,
                log_likelihood: r.log_likelihood,
            }));
            log::info!(
                "{} at rate {rate}: final likelihood {:.4}",
                loss_name(kind),
                rows.last().map_or(f64::NAN, |r| r.likelihood)
            );
        }
    }
    create_dir(out)?;
    write_csv(
        &out.join(LIKELIHOOD_CSV),
        "loss,rate,epoch,likelihood,log_likelihood",
        rows.iter()
            .map(|r| format!("{},{},{},{},{}", loss_name(r.loss), r.rate, r.epoch, r.likelihood, r.log_likelihood)),
    )?;
    Ok(rows)
}

#[derive(Debug, Clone, Serialize)]
pub struct TimingRow {
    pub loss: LossKind,
    pub m: usize,
    pub n: usize,
    pub epochs: usize,
    /// Median training seconds per epoch.
    pub seconds_per_epoch: f64,
}

fn median(mut xs: Vec<f64>) -> f64 {
    xs.sort_by(f64::total_cmp);
    let k = xs.len();
    if k % 2 == 1 {
        xs[k / 2]
    } else {
        0.5 * (xs[k / 2 - 1] + xs[k / 2])
    }
}

/// Training wall-clock per epoch for each bag size `M + N` (split evenly),
/// plus a BPR reference row; writes `timing.csv`. No evaluation is run.
pub fn cmd_scale(cfg: &ExperimentConfig, out: &Path, bag_sizes: &[usize]) -> Result<Vec<TimingRow>> {
    if bag_sizes.is_empty() || bag_sizes.iter().any(|s| *s < 2 || s % 2 != 0) {
        return Err(Error::Config("bag sizes (M+N) must be even and at least 2".into()));
    }
    let data = prepare(cfg)?;
    let exec = Executor::sequential();
    let mut jobs: Vec<(LossKind, usize)> = vec![(LossKind::Bpr, 2)];
    jobs.extend(bag_sizes.iter().map(|&s| (cfg.loss.kind, s)));
    let mut rows = Vec::new();
    for (kind, size) in jobs {
        let mut t = cfg.train_config();
        t.loss = kind;
        t.m = size / 2;
        t.n = size / 2;
        let o = train_with(&t, None, &data.bundle, &data.signals, &exec, &mut |_| {})?;
        let row = TimingRow {
            loss: kind,
            m: t.m,
            n: t.n,
            epochs: t.epochs,
            seconds_per_epoch: median(o.epoch_seconds),
        };
        log::info!("{} M+N={size}: {:.3}s/epoch", loss_name(kind), row.seconds_per_epoch);
        rows.push(row);
    }
    create_dir(out)?;
    write_csv(
        &out.join(TIMING_CSV),
        "loss,m,n,bag_size,epochs,seconds_per_epoch",
        rows.iter().map(|r| {
            format!(
                "{},{},{},{},{},{}",
                loss_name(r.loss),
                r.m,
                r.n,
                r.m + r.n,
                r.epochs,
                r.seconds_per_epoch
            )
        }),
    )?;
    Ok(rows)
}
