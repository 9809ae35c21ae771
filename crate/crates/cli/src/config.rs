//! Experiment configuration (TOML).
//!
//! Every section and key is optional; missing values take the defaults below.
//! Unknown keys are rejected.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use varbpr::data::DataFormat;
use varbpr::inference::{InferenceConfig, PosteriorMode};
use varbpr::train::{EvalSettings, LossKind, TrainConfig};
use varbpr::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitKind {
    /// Half of each user's ≥4-star items held out; all else trains.
    CleanTest,
    /// Global random split with `test_fraction` held out.
    #[serde(rename = "implicit_80_20")]
    Implicit8020,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DatasetSection {
    pub path: PathBuf,
    pub format: DataFormat,
    pub split: SplitKind,
    pub test_fraction: f64,
    pub split_seed: u64,
}

impl Default for DatasetSection {
    fn default() -> Self {
        DatasetSection {
            path: PathBuf::from("data/ml-100k/u.data"),
            format: DataFormat::Ml100kTab,
            split: SplitKind::CleanTest,
            test_fraction: 0.2,
            split_seed: 2024,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelSection {
    pub d: usize,
    pub lr: f64,
    pub l2: f64,
    pub epochs: usize,
    pub seed: u64,
    pub init_std: f64,
    pub batch_size: usize,
    pub threads: usize,
}

impl Default for ModelSection {
    fn default() -> Self {
        let t = TrainConfig::default();
        ModelSection {
            d: t.dim,
            lr: t.lr,
            l2: t.l2,
            epochs: t.epochs,
            seed: t.seed,
            init_std: t.init_std,
            batch_size: t.batch_size,
            threads: t.threads,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LossSection {
    pub kind: LossKind,
    #[serde(rename = "M")]
    pub m: usize,
    #[serde(rename = "N")]
    pub n: usize,
    pub c_pos: f64,
    pub c_neg: f64,
    pub tau: f64,
    pub lambda_pos: [f64; 3],
    pub lambda_neg: [f64; 3],
    pub posterior: PosteriorMode,
}

impl Default for LossSection {
    fn default() -> Self {
        let t = TrainConfig::default();
        LossSection {
            kind: t.loss,
            m: t.m,
            n: t.n,
            c_pos: t.inference.c_pos,
            c_neg: t.inference.c_neg,
            tau: t.inference.tau,
            lambda_pos: t.inference.lambda_pos,
            lambda_neg: t.inference.lambda_neg,
            posterior: t.posterior,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalSection {
    #[serde(rename = "K")]
    pub k: usize,
    pub eval_every: usize,
    pub probe_bags: usize,
    pub likelihood_samples: usize,
}

impl Default for EvalSection {
    fn default() -> Self {
        let e = EvalSettings::default();
        EvalSection {
            k: e.k,
            eval_every: e.eval_every,
            probe_bags: e.probe_bags,
            likelihood_samples: e.likelihood_samples,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NoiseSection {
    pub rate: f64,
    pub seed: u64,
}

impl Default for NoiseSection {
    fn default() -> Self {
        NoiseSection { rate: 0.0, seed: 7 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputSection {
    pub directory: PathBuf,
}

impl Default for OutputSection {
    fn default() -> Self {
        OutputSection {
            directory: PathBuf::from("runs/default"),
        }
    }
}

/// Direction–strength sweep.
///
/// Direction step `k` of `direction_steps` sets `t = k / (steps − 1)` and
/// `λ⁺ = (t·pos_rarity_max, (1 − t)·pos_rarity_max, λ3⁺)`,
/// `λ⁻ = (t·neg_popularity_max, (1 − t)·neg_popularity_max, neg_hardness)`.
/// Each strength sets `c_pos = c_neg`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepSection {
    pub direction_steps: usize,
    pub pos_rarity_max: f64,
    pub neg_popularity_max: f64,
    pub neg_hardness: f64,
    pub strengths: Vec<f64>,
}

impl Default for SweepSection {
    fn default() -> Self {
        SweepSection {
            direction_steps: 6,
            pos_rarity_max: 1.0,
            neg_popularity_max: 0.5,
            neg_hardness: 0.5,
            strengths: vec![2.0, 4.0, 6.0, 8.0, 10.0],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub dataset: DatasetSection,
    pub model: ModelSection,
    pub loss: LossSection,
    pub eval: EvalSection,
    pub noise: NoiseSection,
    pub output: OutputSection,
    pub sweep: SweepSection,
}

impl ExperimentConfig {
    /// Parses and validates. A relative dataset path resolves against the
    /// current directory, then the config file's directory; a missing
    /// MovieLens-100K file falls back to `$VARBPR_ML100K`.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::from_toml(&text)?;
        if cfg.dataset.path.is_relative() && !cfg.dataset.path.exists() {
            if let Some(dir) = path.parent() {
                let alt = dir.join(&cfg.dataset.path);
                if alt.exists() {
                    cfg.dataset.path = alt;
                }
            }
        }
        if !cfg.dataset.path.exists() && cfg.dataset.format == DataFormat::Ml100kTab {
            if let Some(p) = std::env::var_os(ML100K_ENV) {
                cfg.dataset.path = PathBuf::from(p);
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    /// Parses without checking that the dataset exists.
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.train_config().validate()?;
        cfg.eval_settings().validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !self.dataset.path.exists() {
            return Err(Error::Config(format!("dataset {} not found", self.dataset.path.display())));
        }
        if self.dataset.split == SplitKind::Implicit8020 && !(self.dataset.test_fraction > 0.0 && self.dataset.test_fraction < 1.0) {
            return Err(Error::Config(format!(
                "test_fraction must lie in (0, 1), got {}",
                self.dataset.test_fraction
            )));
        }
        if !(0.0..1.0).contains(&self.noise.rate) {
            return Err(Error::Config(format!("noise rate must lie in [0, 1), got {}", self.noise.rate)));
        }
        self.train_config().validate()?;
        self.eval_settings().validate()
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            loss: self.loss.kind,
            dim: self.model.d,
            lr: self.model.lr,
            l2: self.model.l2,
            epochs: self.model.epochs,
            m: self.loss.m,
            n: self.loss.n,
            seed: self.model.seed,
            init_std: self.model.init_std,
            batch_size: self.model.batch_size,
            threads: self.model.threads,
            posterior: self.loss.posterior,
            inference: InferenceConfig {
                c_pos: self.loss.c_pos,
                c_neg: self.loss.c_neg,
                tau: self.loss.tau,
                lambda_pos: self.loss.lambda_pos,
                lambda_neg: self.loss.lambda_neg,
            },
        }
    }

    pub fn eval_settings(&self) -> EvalSettings {
        EvalSettings {
            k: self.eval.k,
            eval_every: self.eval.eval_every,
            probe_bags: self.eval.probe_bags,
            likelihood_samples: self.eval.likelihood_samples,
        }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }
}

/// Overrides the location of the ML-100K ratings file for configs that use the default path.
pub const ML100K_ENV: &str = "VARBPR_ML100K";
