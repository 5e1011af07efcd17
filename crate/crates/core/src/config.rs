//! Flat JSON run configuration.
//!
//! Every field is optional in the file; missing fields take the defaults
//! below. Unknown keys are rejected. A resolved config is also the run
//! manifest: feeding it back reproduces the run.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Result, SkdError};
use crate::network::ModelDims;
use crate::objectives::SkdConfig;
use crate::training::{OptimizerConfig, OptimizerKind, TrainConfig};

/// Which terms are switched on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Objective {
    #[serde(rename = "ce")]
    CrossEntropy,
    #[serde(rename = "noise")]
    Noise,
    #[serde(rename = "skd")]
    Skd,
    #[serde(rename = "noise+skd")]
    NoiseSkd,
}

impl Objective {
    pub const ALL: [Objective; 4] = [
        Objective::CrossEntropy,
        Objective::Noise,
        Objective::Skd,
        Objective::NoiseSkd,
    ];

    pub fn uses_noise(self) -> bool {
        matches!(self, Objective::Noise | Objective::NoiseSkd)
    }

    pub fn uses_skd(self) -> bool {
        matches!(self, Objective::Skd | Objective::NoiseSkd)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Objective::CrossEntropy => "ce",
            Objective::Noise => "noise",
            Objective::Skd => "skd",
            Objective::NoiseSkd => "noise+skd",
        }
    }

    /// Row label used in comparison tables.
    pub fn label(self) -> &'static str {
        match self {
            Objective::CrossEntropy => "Baseline",
            Objective::Noise => "+Noise",
            Objective::Skd => "+SKD",
            Objective::NoiseSkd => "+Noise+SKD",
        }
    }
}

impl fmt::Display for Objective {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Objective {
    type Err = SkdError;

    fn from_str(s: &str) -> Result<Self> {
        Objective::ALL
            .into_iter()
            .find(|o| o.as_str() == s)
            .ok_or_else(|| {
                SkdError::Config(format!(
                    "unknown objective {s:?}; expected ce, noise, skd or noise+skd"
                ))
            })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub train_path: Option<PathBuf>,
    pub valid_path: Option<PathBuf>,
    pub test_path: Option<PathBuf>,

    pub vocab_size: usize,
    pub embed_in: usize,
    pub hidden: usize,
    pub embed_out: usize,

    pub objective: Objective,
    pub sigma: f64,
    pub lambda: f64,
    pub eta: f64,
    pub warmup_k: u64,
    pub noise_std: f64,

    pub optimizer: OptimizerKind,
    /// Defaults to 0.1 for SGD and 1e-3 for Adam.
    pub learning_rate: Option<f64>,
    pub clip_norm: Option<f64>,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_epsilon: f64,

    pub seed: u64,
    pub epochs: usize,
    pub batch_size: usize,
    pub window: usize,
    pub log_interval: u64,
    pub patience: Option<usize>,
}

impl Default for RunConfig {
    fn default() -> Self {
        let skd = SkdConfig::default();
        RunConfig {
            train_path: None,
            valid_path: None,
            test_path: None,
            vocab_size: 10_000,
            embed_in: 64,
            hidden: 64,
            embed_out: 64,
            objective: Objective::CrossEntropy,
            sigma: skd.sigma,
            lambda: skd.lambda,
            eta: skd.eta,
            warmup_k: skd.warmup_k,
            noise_std: skd.noise_std,
            optimizer: OptimizerKind::Sgd,
            learning_rate: None,
            clip_norm: Some(5.0),
            beta1: 0.9,
            beta2: 0.999,
            adam_epsilon: 1e-8,
            seed: 1,
            epochs: 10,
            batch_size: 20,
            window: 35,
            log_interval: 100,
            patience: Some(3),
        }
    }
}

/// Splits `key=value`; the value is read as JSON when it parses, otherwise
/// as a bare string.
pub fn parse_override(s: &str) -> Result<(String, Value)> {
    let (key, raw) = s
        .split_once('=')
        .ok_or_else(|| SkdError::Config(format!("override {s:?} is not key=value")))?;
    let key = key.trim();
    if key.is_empty() {
        return Err(SkdError::Config(format!("override {s:?} has an empty key")));
    }
    let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_owned()));
    Ok((key.to_owned(), value))
}

impl RunConfig {
    pub fn from_value(value: Value) -> Result<Self> {
        if !value.is_object() {
            return Err(SkdError::Config("config must be a JSON object".into()));
        }
        let config: RunConfig =
            serde_json::from_value(value).map_err(|e| SkdError::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    /// Reads a config file and applies `overrides` on top, in order.
    pub fn load(path: &Path, overrides: &[(String, Value)]) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| SkdError::io(path, e))?;
        let mut value: Value = serde_json::from_str(&text)
            .map_err(|e| SkdError::Config(format!("{}: {e}", path.display())))?;
        let map = value
            .as_object_mut()
            .ok_or_else(|| SkdError::Config(format!("{}: not a JSON object", path.display())))?;
        for (k, v) in overrides {
            map.insert(k.clone(), v.clone());
        }
        let mut config = RunConfig::from_value(value)?;
        config.resolve_paths(path.parent().unwrap_or(Path::new("")));
        Ok(config)
    }

    /// Makes corpus paths absolute, reading relative ones against `base`.
    pub fn resolve_paths(&mut self, base: &Path) {
        for p in [&mut self.train_path, &mut self.valid_path, &mut self.test_path]
            .into_iter()
            .flatten()
        {
            let joined = base.join(&*p);
            *p = std::path::absolute(&joined).unwrap_or(joined);
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.dims(self.vocab_size.max(2)).validate().map_err(|e| SkdError::Config(e.to_string()))?;
        if self.vocab_size < 3 {
            return Err(SkdError::Config("vocab_size must be at least 3".into()));
        }
        SkdConfig {
            sigma: self.sigma,
            lambda: self.lambda,
            eta: self.eta,
            warmup_k: self.warmup_k,
            noise_std: self.noise_std,
        }
        .validate()?;
        self.optimizer_config().validate()?;
        if self.batch_size == 0 || self.window == 0 || self.log_interval == 0 {
            return Err(SkdError::Config(
                "batch_size, window and log_interval must be at least 1".into(),
            ));
        }
        if self.patience == Some(0) {
            return Err(SkdError::Config("patience must be at least 1 or null".into()));
        }
        if self.objective.uses_skd() && self.eta <= 0.0 {
            return Err(SkdError::Config(format!(
                "objective {} needs eta > 0",
                self.objective
            )));
        }
        if self.objective.uses_noise() && self.noise_std <= 0.0 {
            return Err(SkdError::Config(format!(
                "objective {} needs noise_std > 0",
                self.objective
            )));
        }
        Ok(())
    }

    pub fn dims(&self, vocab: usize) -> ModelDims {
        ModelDims {
            vocab,
            embed_in: self.embed_in,
            hidden: self.hidden,
            embed_out: self.embed_out,
        }
    }

    /// Objective settings with the terms the selector leaves out zeroed.
    pub fn skd_config(&self) -> SkdConfig {
        SkdConfig {
            sigma: self.sigma,
            lambda: self.lambda,
            eta: if self.objective.uses_skd() { self.eta } else { 0.0 },
            warmup_k: self.warmup_k,
            noise_std: if self.objective.uses_noise() {
                self.noise_std
            } else {
                0.0
            },
        }
    }

    pub fn optimizer_config(&self) -> OptimizerConfig {
        OptimizerConfig {
            kind: self.optimizer,
            learning_rate: self
                .learning_rate
                .unwrap_or_else(|| self.optimizer.default_learning_rate()),
            clip_norm: self.clip_norm,
            beta1: self.beta1,
            beta2: self.beta2,
            epsilon: self.adam_epsilon,
        }
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            skd: self.skd_config(),
            batch_size: self.batch_size,
            window: self.window,
            log_interval: self.log_interval,
            patience: self.patience,
            seed: self.seed,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes") + "\n"
    }
}
