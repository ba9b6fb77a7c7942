use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::{ActivationKind, Architecture, BodyKind, HeadKind, ModelConfig};
use crate::pruning::{LearnedMaskConfig, PruneMethod, SparsityLevel};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DatasetKind {
    Mnist,
    Cifar10,
    /// Gaussian blobs, split 80/20 into train and test.
    Blobs,
}

impl FromStr for DatasetKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "mnist" => Ok(DatasetKind::Mnist),
            "cifar10" | "cifar-10" | "cifar" => Ok(DatasetKind::Cifar10),
            "blobs" | "synthetic" => Ok(DatasetKind::Blobs),
            _ => Err(Error::Config(format!("unknown dataset {s:?}"))),
        }
    }
}

impl fmt::Display for DatasetKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DatasetKind::Mnist => "mnist",
            DatasetKind::Cifar10 => "cifar10",
            DatasetKind::Blobs => "blobs",
        })
    }
}

/// Label smoothing, PSwish temperature and soft-skip schedules.
///
/// `α_t = α₀(1 - t/T_α)`, `β_t = β₀(1 - t/T_β) + β_max·t/T_β` and
/// `γ_t = γ₀(1 - t/T_γ)`, each frozen at its end value once `t ≥ T`.
/// A horizon of 0 means the end value from the start.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScheduleConfig {
    pub alpha0: f64,
    pub t_alpha: usize,
    pub beta0: f64,
    pub beta_max: f64,
    pub t_beta: usize,
    pub gamma0: f64,
    pub t_gamma: usize,
}

impl Default for ScheduleConfig {
    fn default() -> Self {
        Self {
            alpha0: 0.0,
            t_alpha: 0,
            beta0: 20.0,
            beta_max: 20.0,
            t_beta: 0,
            gamma0: 0.0,
            t_gamma: 0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScheduleState {
    pub epoch: usize,
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
}

fn progress(t: usize, horizon: usize) -> f64 {
    if horizon == 0 {
        1.0
    } else {
        (t as f64 / horizon as f64).min(1.0)
    }
}

impl ScheduleConfig {
    pub fn at(&self, epoch: usize) -> ScheduleState {
        let pa = progress(epoch, self.t_alpha);
        let pb = progress(epoch, self.t_beta);
        let pg = progress(epoch, self.t_gamma);
        ScheduleState {
            epoch,
            alpha: self.alpha0 * (1.0 - pa),
            beta: self.beta0 * (1.0 - pb) + self.beta_max * pb,
            gamma: self.gamma0 * (1.0 - pg),
        }
    }

    fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.alpha0) {
            return Err(Error::Config(format!("alpha0 {} outside [0, 1]", self.alpha0)));
        }
        if self.beta0 < 0.0 || self.beta_max < 0.0 || self.gamma0 < 0.0 {
            return Err(Error::Config("beta0, beta_max and gamma0 must be >= 0".into()));
        }
        Ok(())
    }
}

/// Learned-mask pre-training switch and weights.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[derive(Default)]
pub struct LearnedMaskBlock {
    pub enabled: bool,
    #[serde(flatten)]
    pub params: LearnedMaskConfig,
}


#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TimingConfig {
    pub enabled: bool,
    pub batch_size: usize,
    pub reps: usize,
    pub warmup: usize,
}

impl Default for TimingConfig {
    fn default() -> Self {
        Self {
            enabled: true,
            batch_size: 256,
            reps: 5,
            warmup: 2,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub dataset: DatasetKind,
    /// Directory holding the dataset files; falls back to the environment.
    pub data_dir: Option<PathBuf>,
    /// Use at most this many training / test samples.
    pub train_limit: Option<usize>,
    pub test_limit: Option<usize>,
    pub model: ModelConfig,
    pub zero_init: bool,
    pub method: PruneMethod,
    pub sparsity: SparsityLevel,
    pub seed: u64,
    pub lr: f64,
    pub batch_size: usize,
    /// Training before scoring; used by magnitude pruning and learned masks.
    pub pretrain_epochs: usize,
    pub epochs: usize,
    pub weight_decay: f64,
    pub synflow_iterations: usize,
    /// Samples in the SNIP / GraSP scoring batch.
    pub score_batch: usize,
    /// Keep training when the mask collapses the network.
    pub train_collapsed: bool,
    pub schedule: ScheduleConfig,
    pub learned_mask: LearnedMaskBlock,
    pub timing: TimingConfig,
    /// Where to write the final checkpoint, if anywhere.
    pub checkpoint: Option<PathBuf>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            dataset: DatasetKind::Mnist,
            data_dir: None,
            train_limit: None,
            test_limit: None,
            model: ModelConfig::fc6(),
            zero_init: false,
            method: PruneMethod::None,
            sparsity: SparsityLevel::dense(),
            seed: 0,
            lr: 1e-3,
            batch_size: 256,
            pretrain_epochs: 10,
            epochs: 50,
            weight_decay: 0.0,
            synflow_iterations: 100,
            score_batch: 256,
            train_collapsed: true,
            schedule: ScheduleConfig::default(),
            learned_mask: LearnedMaskBlock::default(),
            timing: TimingConfig::default(),
            checkpoint: None,
        }
    }
}

fn parse<T: FromStr>(key: &str, v: &str) -> Result<T> {
    v.parse()
        .map_err(|_| Error::Config(format!("cannot parse {key} = {v:?}")))
}

fn parse_bool(key: &str, v: &str) -> Result<bool> {
    match v.to_ascii_lowercase().as_str() {
        "true" | "yes" | "on" | "1" => Ok(true),
        "false" | "no" | "off" | "0" => Ok(false),
        _ => Err(Error::Config(format!("cannot parse {key} = {v:?} as a boolean"))),
    }
}

fn parse_opt_path(v: &str) -> Option<PathBuf> {
    if v.is_empty() || v == "none" {
        None
    } else {
        Some(PathBuf::from(v))
    }
}

fn parse_opt_usize(key: &str, v: &str) -> Result<Option<usize>> {
    if v.is_empty() || v == "none" {
        Ok(None)
    } else {
        parse(key, v).map(Some)
    }
}

impl ExperimentConfig {
    /// Parses the `key = value` format. `#` starts a comment; `[section]`
    /// headers select `model`, `schedule`, `learned_mask` or `timing`.
    /// Keys not set keep their defaults.
    pub fn parse_str(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        let mut section = String::new();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            if let Some(name) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
                section = name.trim().to_ascii_lowercase();
                if !["", "model", "schedule", "learned_mask", "timing"].contains(&section.as_str()) {
                    return Err(Error::Config(format!("line {}: unknown section [{name}]", n + 1)));
                }
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected key = value", n + 1)))?;
            let (k, v) = (k.trim().to_ascii_lowercase(), v.trim().trim_matches('"'));
            cfg.set(&section, &k, v)
                .map_err(|e| Error::Config(format!("line {}: {}", n + 1, e.to_string().trim_start_matches("config error: "))))?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse_str(&text)
    }

    /// Sets one key; `section` is empty for top-level keys.
    pub fn set(&mut self, section: &str, key: &str, v: &str) -> Result<()> {
        let full = if section.is_empty() {
            key.to_string()
        } else {
            format!("{section}.{key}")
        };
        match full.as_str() {
            "dataset" => self.dataset = v.parse()?,
            "data_dir" => self.data_dir = parse_opt_path(v),
            "train_limit" => self.train_limit = parse_opt_usize(key, v)?,
            "test_limit" => self.test_limit = parse_opt_usize(key, v)?,
            "method" => self.method = v.parse()?,
            "k" => self.sparsity = SparsityLevel::from_exponent(parse(key, v)?).map_err(config)?,
            "s" => self.sparsity = SparsityLevel::from_fraction(parse(key, v)?).map_err(config)?,
            "seed" => self.seed = parse(key, v)?,
            "lr" => self.lr = parse(key, v)?,
            "batch_size" => self.batch_size = parse(key, v)?,
            "pretrain_epochs" => self.pretrain_epochs = parse(key, v)?,
            "epochs" => self.epochs = parse(key, v)?,
            "weight_decay" => self.weight_decay = parse(key, v)?,
            "synflow_iterations" => self.synflow_iterations = parse(key, v)?,
            "score_batch" => self.score_batch = parse(key, v)?,
            "train_collapsed" => self.train_collapsed = parse_bool(key, v)?,
            "checkpoint" => self.checkpoint = parse_opt_path(v),
            "model.architecture" => {
                let arch = match v.to_ascii_lowercase().as_str() {
                    "fc6" | "mlp" => Architecture::Fc6,
                    "vgg16" | "vgg" => Architecture::Vgg16,
                    _ => return Err(Error::Config(format!("unknown architecture {v:?}"))),
                };
                if arch != self.model.architecture {
                    let keep = self.model.clone();
                    self.model = match arch {
                        Architecture::Fc6 => ModelConfig::fc6(),
                        Architecture::Vgg16 => ModelConfig::vgg16(),
                    };
                    self.model.head = keep.head;
                    self.model.body = keep.body;
                    self.model.dropout = keep.dropout;
                    self.model.activation = keep.activation;
                    self.model.kaleidoscope_width = keep.kaleidoscope_width;
                }
            }
            "model.head" => {
                self.model.head = match v.to_ascii_lowercase().as_str() {
                    "dense" => HeadKind::Dense,
                    "butterfly" => HeadKind::Butterfly,
                    _ => return Err(Error::Config(format!("unknown head {v:?}"))),
                }
            }
            "model.body" => {
                self.model.body = match v.to_ascii_lowercase().as_str() {
                    "dense" => BodyKind::Dense,
                    "factorized" | "butterfly" | "kaleidoscope" => BodyKind::Factorized,
                    _ => return Err(Error::Config(format!("unknown body {v:?}"))),
                }
            }
            "model.width" | "model.hidden_width" => self.model.hidden_width = parse(key, v)?,
            "model.dropout" => self.model.dropout = parse(key, v)?,
            "model.activation" => {
                self.model.activation = match v.to_ascii_lowercase().as_str() {
                    "relu" => ActivationKind::Relu,
                    "pswish" => ActivationKind::PSwish,
                    _ => return Err(Error::Config(format!("unknown activation {v:?}"))),
                }
            }
            "model.kaleidoscope_width" => self.model.kaleidoscope_width = parse(key, v)?,
            "model.zero_init" => self.zero_init = parse_bool(key, v)?,
            "schedule.alpha0" => self.schedule.alpha0 = parse(key, v)?,
            "schedule.t_alpha" => self.schedule.t_alpha = parse(key, v)?,
            "schedule.beta0" => self.schedule.beta0 = parse(key, v)?,
            "schedule.beta_max" => self.schedule.beta_max = parse(key, v)?,
            "schedule.t_beta" => self.schedule.t_beta = parse(key, v)?,
            "schedule.gamma0" => self.schedule.gamma0 = parse(key, v)?,
            "schedule.t_gamma" => self.schedule.t_gamma = parse(key, v)?,
            "learned_mask.enabled" => self.learned_mask.enabled = parse_bool(key, v)?,
            "learned_mask.lambda1" => self.learned_mask.params.lambda1 = parse(key, v)?,
            "learned_mask.lambda2" => self.learned_mask.params.lambda2 = parse(key, v)?,
            "learned_mask.init" => self.learned_mask.params.init = parse(key, v)?,
            "timing.enabled" => self.timing.enabled = parse_bool(key, v)?,
            "timing.batch_size" => self.timing.batch_size = parse(key, v)?,
            "timing.reps" => self.timing.reps = parse(key, v)?,
            "timing.warmup" => self.timing.warmup = parse(key, v)?,
            _ => return Err(Error::Config(format!("unknown key {full:?}"))),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        self.schedule.validate()?;
        self.learned_mask.params.validate()?;
        if self.batch_size == 0 || self.score_batch == 0 {
            return Err(Error::Config("batch sizes must be positive".into()));
        }
        if !(self.lr > 0.0) || self.weight_decay < 0.0 {
            return Err(Error::Config("lr must be > 0 and weight_decay >= 0".into()));
        }
        if !(0.0..1.0).contains(&self.model.dropout) {
            return Err(Error::Config(format!("dropout {} outside [0, 1)", self.model.dropout)));
        }
        if self.method == PruneMethod::Synflow && self.synflow_iterations == 0 {
            return Err(Error::Config("synflow_iterations must be >= 1".into()));
        }
        if self.timing.enabled && (self.timing.reps < 5 || self.timing.warmup < 2) {
            return Err(Error::Config("timing needs reps >= 5 and warmup >= 2".into()));
        }
        Ok(())
    }

    /// Training epochs spent before scoring.
    pub fn effective_pretrain_epochs(&self) -> usize {
        if self.method == PruneMethod::Magnitude || self.learned_mask.enabled {
            self.pretrain_epochs
        } else {
            0
        }
    }

    /// Warnings about legal but risky combinations.
    pub fn warnings(&self) -> Vec<String> {
        let mut w = Vec::new();
        if self.learned_mask.enabled && self.zero_init && self.learned_mask.params.lambda2 == 0.0 {
            w.push("learned mask with ZerO init and lambda2 = 0: mask mass is unregularized".into());
        }
        if self.learned_mask.enabled && self.zero_init && self.learned_mask.params.lambda2 > 0.0 {
            w.push("learned mask with ZerO init and lambda2 > 0 tends to drive the whole mask to 0".into());
        }
        w
    }
}

fn config(e: Error) -> Error {
    Error::Config(e.to_string())
}
