//! Versioned training configuration (TOML).
//!
//! ```toml
//! version = 1
//! mode = "unsupervised"        # or "supervised"
//! seed = 0
//! lr = 1e-4
//! batch_train = 10
//! batch_backtranslate = 64
//! max_epochs = 30
//! patience = 10
//! max_unsup_iterations = 30
//! clip_norm = 5.0
//! val_sample = 100
//! exec = "parallel"            # or "sequential"
//! # vocab_max = 20000
//!
//! [noise]
//! regime = "sampled"           # or "composed"
//! functions = ["swap", "drop", "blank", "repeat", "rule"]
//! p_drop = 0.1
//! p_blank = 0.2
//! p_repeat = 0.2
//! k_text = 3
//! # k_graph = 2               # absent: unbounded
//!
//! [model]
//! embed = 300
//! hidden = 250
//! attention = 250
//! dropout = 0.2
//!
//! [data]
//! train = "data/train.jsonl"
//! val = "data/val.jsonl"
//! test = "data/test.jsonl"
//! ```

use std::fs;
use std::path::{Path, PathBuf};

use kgtext_core::noise::{NoiseConfig, NoiseFn, NoisePlan, Regime};
use kgtext_core::Exec;
use kgtext_neuro::Dims;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const CONFIG_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{0}")]
    Parse(#[from] toml::de::Error),
    #[error("invalid config: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    #[default]
    Unsupervised,
    Supervised,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NoiseSection {
    pub regime: Regime,
    pub functions: Vec<NoiseFn>,
    #[serde(flatten)]
    pub params: NoiseConfig,
}

impl Default for NoiseSection {
    fn default() -> Self {
        NoiseSection { regime: Regime::Sampled, functions: NoiseFn::ALL.to_vec(), params: NoiseConfig::default() }
    }
}

impl NoiseSection {
    pub fn plan(&self) -> NoisePlan {
        let mut functions = self.functions.clone();
        functions.sort();
        functions.dedup();
        NoisePlan { regime: self.regime, functions }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataPaths {
    pub train: Option<PathBuf>,
    pub val: Option<PathBuf>,
    pub test: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub version: u32,
    pub mode: Mode,
    pub seed: u64,
    pub lr: f64,
    pub batch_train: usize,
    pub batch_backtranslate: usize,
    pub max_epochs: usize,
    pub patience: usize,
    pub max_unsup_iterations: usize,
    pub clip_norm: f64,
    pub val_sample: usize,
    pub exec: Exec,
    pub vocab_max: Option<usize>,
    pub noise: NoiseSection,
    pub model: Dims,
    pub data: DataPaths,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            version: CONFIG_VERSION,
            mode: Mode::Unsupervised,
            seed: 0,
            lr: 1e-4,
            batch_train: 10,
            batch_backtranslate: 64,
            max_epochs: 30,
            patience: 10,
            max_unsup_iterations: 30,
            clip_norm: 5.0,
            val_sample: 100,
            exec: Exec::Parallel,
            vocab_max: None,
            noise: NoiseSection::default(),
            model: Dims::default(),
            data: DataPaths::default(),
        }
    }
}

impl TrainConfig {
    pub fn from_toml(s: &str) -> Result<Self, ConfigError> {
        let cfg: TrainConfig = toml::from_str(s)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let s = fs::read_to_string(path).map_err(|source| ConfigError::Io { path: path.into(), source })?;
        Self::from_toml(&s)
    }

    /// Small model and a faster optimizer for the synthetic desk corpus
    /// (hundreds of pairs, a vocabulary under 100 tokens).
    pub fn desk() -> Self {
        TrainConfig {
            lr: 5e-3,
            model: Dims { embed: 64, hidden: 96, attention: 96, dropout: 0.0 },
            ..TrainConfig::default()
        }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |m: String| Err(ConfigError::Invalid(m));
        if self.version != CONFIG_VERSION {
            return bad(format!("unsupported config version {} (expected {CONFIG_VERSION})", self.version));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return bad(format!("lr must be positive, got {}", self.lr));
        }
        if self.batch_train == 0 || self.batch_backtranslate == 0 {
            return bad("batch sizes must be at least 1".into());
        }
        if self.max_epochs == 0 || self.patience == 0 {
            return bad("max_epochs and patience must be positive".into());
        }
        if self.clip_norm.is_nan() || self.clip_norm <= 0.0 {
            return bad("clip_norm must be positive".into());
        }
        if self.val_sample == 0 {
            return bad("val_sample must be positive".into());
        }
        self.noise.params.validate().map_err(ConfigError::Invalid)?;
        self.model.validate().map_err(ConfigError::Invalid)
    }
}
