use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use crate::discriminator::DiscConfig;
use crate::distributions::{GammaHyperprior, Hyperprior};
use crate::error::{NuqError, Result};
use crate::kv::{self, fmt_f64, KvConfig};
use crate::model::ModelConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Variant {
    /// Learned per-frame precision.
    Nuq,
    /// Unit precision baseline.
    Fixed,
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Variant::Nuq => "nuq",
            Variant::Fixed => "fixed",
        })
    }
}

impl FromStr for Variant {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "nuq" => Ok(Variant::Nuq),
            "fixed" | "fixed-precision" => Ok(Variant::Fixed),
            other => Err(format!("unknown variant `{other}` (expected nuq or fixed)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HyperpriorKind {
    Gamma,
    Uniform,
}

impl fmt::Display for HyperpriorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            HyperpriorKind::Gamma => "gamma",
            HyperpriorKind::Uniform => "uniform",
        })
    }
}

impl FromStr for HyperpriorKind {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "gamma" => Ok(HyperpriorKind::Gamma),
            "uniform" => Ok(HyperpriorKind::Uniform),
            other => Err(format!("unknown hyperprior `{other}` (expected gamma or uniform)")),
        }
    }
}

/// Everything a training run depends on. Frame height and width are taken
/// from the training data.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub variant: Variant,
    pub gan: bool,
    pub eta1: f64,
    pub eta2: f64,
    pub gamma: f64,
    /// Discriminator window length.
    pub k: usize,
    pub lr: f64,
    /// Global gradient-norm clip; 0 disables.
    pub clip: f64,
    pub batch_size: usize,
    /// Maximum number of epochs.
    pub epochs: usize,
    /// Stop after this many epochs without a validation improvement; 0
    /// disables early stopping.
    pub patience: usize,
    /// Seen frames.
    pub context: usize,
    /// Frames per training window, seen frames included.
    pub train_len: usize,
    /// Frames predicted at validation and test time.
    pub predict_len: usize,
    pub hyperprior: HyperpriorKind,
    pub alpha_s: f64,
    pub beta_s: f64,
    pub seed: u64,
    pub val_videos: usize,
    pub val_k: usize,
    pub model: ModelConfig,
    pub disc_base_width: usize,
    pub disc_hidden: usize,
    pub train_data: PathBuf,
    pub val_data: PathBuf,
    pub checkpoint_dir: PathBuf,
    /// Run log file; empty means `run_log.csv` in the checkpoint directory.
    pub log_path: PathBuf,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            variant: Variant::Nuq,
            gan: false,
            eta1: 1e-4,
            eta2: 1e-3,
            gamma: 1e-5,
            k: 3,
            lr: 0.002,
            clip: 5.0,
            batch_size: 16,
            epochs: 150,
            patience: 10,
            context: 5,
            train_len: 20,
            predict_len: 20,
            hyperprior: HyperpriorKind::Gamma,
            alpha_s: 2.0,
            beta_s: 1.0,
            seed: 1,
            val_videos: 50,
            val_k: 10,
            model: ModelConfig::default(),
            disc_base_width: 16,
            disc_hidden: 64,
            train_data: PathBuf::from("data/train"),
            val_data: PathBuf::from("data/val"),
            checkpoint_dir: PathBuf::from("checkpoints"),
            log_path: PathBuf::new(),
        }
    }
}

/// Keys that may differ between a checkpoint and the run resuming it.
pub(crate) const RESUMABLE_KEYS: &[&str] =
    &["epochs", "patience", "train_data", "val_data", "checkpoint_dir", "log_path"];

impl TrainConfig {
    pub fn hyperprior(&self) -> Result<Hyperprior> {
        Ok(match self.hyperprior {
            HyperpriorKind::Gamma => Hyperprior::Gamma(GammaHyperprior::new(self.alpha_s, self.beta_s)?),
            HyperpriorKind::Uniform => Hyperprior::Uniform { low: 0.0, high: 1.0 },
        })
    }

    pub fn disc_config(&self) -> DiscConfig {
        DiscConfig {
            height: self.model.height,
            width: self.model.width,
            levels: self.model.levels,
            base_width: self.disc_base_width,
            hidden: self.disc_hidden,
            k: self.k,
        }
    }

    pub fn run_log_path(&self) -> PathBuf {
        if self.log_path.as_os_str().is_empty() {
            self.checkpoint_dir.join("run_log.csv")
        } else {
            self.log_path.clone()
        }
    }

    /// Entries that must match for a resume, keyed as in checkpoint headers.
    pub(crate) fn resume_echo(&self) -> Vec<(String, String)> {
        self.entries()
            .into_iter()
            .filter(|(k, _)| !RESUMABLE_KEYS.contains(k))
            .map(|(k, v)| (format!("cfg.{k}"), v))
            .collect()
    }
}

fn non_negative(field: &str, v: f64) -> Result<()> {
    if v >= 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(NuqError::config(field, format!("must be a finite value >= 0, got {v}")))
    }
}

impl KvConfig for TrainConfig {
    fn key_docs() -> &'static [(&'static str, &'static str)] {
        &[
            ("variant", "nuq | fixed"),
            ("gan", "add the sequence-discriminator term"),
            ("eta1", "weight of the frame-latent KL"),
            ("eta2", "weight of the hyperprior KL"),
            ("gamma", "weight of the adversarial term"),
            ("k", "discriminator window length"),
            ("lr", "learning rate"),
            ("clip", "gradient-norm clip (0 = off)"),
            ("batch_size", "videos per batch"),
            ("epochs", "maximum number of epochs"),
            ("patience", "epochs without validation improvement before stopping (0 = off)"),
            ("F", "seen frames"),
            ("train_len", "frames per training window, seen frames included"),
            ("predict_len", "frames predicted at validation/test time"),
            ("hyperprior", "gamma | uniform"),
            ("alpha_s", "gamma hyperprior shape"),
            ("beta_s", "gamma hyperprior rate"),
            ("seed", "master seed"),
            ("val_videos", "validation videos scored per epoch"),
            ("val_k", "futures per validation video (best-of)"),
            ("g", "frame-latent dimension"),
            ("levels", "encoder stride-2 levels"),
            ("base_width", "channels at the first encoder level"),
            ("feature_dim", "per-frame feature size"),
            ("hidden", "predictor hidden size"),
            ("predictor_layers", "stacked predictor LSTMs"),
            ("latent_hidden", "prior/inference network hidden size"),
            ("var_hidden", "variance encoder hidden size"),
            ("s_min", "smallest accepted scale sample"),
            ("max_retries", "rejection-sampling retry cap"),
            ("detach_prior_variance", "stop variance-encoder gradients into the prior"),
            ("disc_base_width", "discriminator channels at the first level"),
            ("disc_hidden", "discriminator hidden size"),
            ("train_data", "training dataset directory"),
            ("val_data", "validation dataset directory"),
            ("checkpoint_dir", "checkpoint directory"),
            ("log_path", "run log file (empty = checkpoint_dir/run_log.csv)"),
        ]
    }

    fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let m = &mut self.model;
        match key {
            "variant" => self.variant = kv::parse_value(key, value)?,
            "gan" => self.gan = kv::parse_bool(key, value)?,
            "eta1" => self.eta1 = kv::parse_value(key, value)?,
            "eta2" => self.eta2 = kv::parse_value(key, value)?,
            "gamma" => self.gamma = kv::parse_value(key, value)?,
            "k" => self.k = kv::parse_value(key, value)?,
            "lr" => self.lr = kv::parse_value(key, value)?,
            "clip" => self.clip = kv::parse_value(key, value)?,
            "batch_size" => self.batch_size = kv::parse_value(key, value)?,
            "epochs" => self.epochs = kv::parse_value(key, value)?,
            "patience" => self.patience = kv::parse_value(key, value)?,
            "F" => self.context = kv::parse_value(key, value)?,
            "train_len" => self.train_len = kv::parse_value(key, value)?,
            "predict_len" => self.predict_len = kv::parse_value(key, value)?,
            "hyperprior" => self.hyperprior = kv::parse_value(key, value)?,
            "alpha_s" => self.alpha_s = kv::parse_value(key, value)?,
            "beta_s" => self.beta_s = kv::parse_value(key, value)?,
            "seed" => self.seed = kv::parse_value(key, value)?,
            "val_videos" => self.val_videos = kv::parse_value(key, value)?,
            "val_k" => self.val_k = kv::parse_value(key, value)?,
            "g" => m.g = kv::parse_value(key, value)?,
            "levels" => m.levels = kv::parse_value(key, value)?,
            "base_width" => m.base_width = kv::parse_value(key, value)?,
            "feature_dim" => m.feature_dim = kv::parse_value(key, value)?,
            "hidden" => m.hidden = kv::parse_value(key, value)?,
            "predictor_layers" => m.predictor_layers = kv::parse_value(key, value)?,
            "latent_hidden" => m.latent_hidden = kv::parse_value(key, value)?,
            "var_hidden" => m.var_hidden = kv::parse_value(key, value)?,
            "s_min" => m.s_min = kv::parse_value(key, value)?,
            "max_retries" => m.max_retries = kv::parse_value(key, value)?,
            "detach_prior_variance" => m.detach_prior_variance = kv::parse_bool(key, value)?,
            "disc_base_width" => self.disc_base_width = kv::parse_value(key, value)?,
            "disc_hidden" => self.disc_hidden = kv::parse_value(key, value)?,
            "train_data" => self.train_data = PathBuf::from(value),
            "val_data" => self.val_data = PathBuf::from(value),
            "checkpoint_dir" => self.checkpoint_dir = PathBuf::from(value),
            "log_path" => self.log_path = PathBuf::from(value),
            _ => return Err(kv::unknown_key(key)),
        }
        Ok(())
    }

    fn entries(&self) -> Vec<(&'static str, String)> {
        let m = &self.model;
        vec![
            ("variant", self.variant.to_string()),
            ("gan", self.gan.to_string()),
            ("eta1", fmt_f64(self.eta1)),
            ("eta2", fmt_f64(self.eta2)),
            ("gamma", fmt_f64(self.gamma)),
            ("k", self.k.to_string()),
            ("lr", fmt_f64(self.lr)),
            ("clip", fmt_f64(self.clip)),
            ("batch_size", self.batch_size.to_string()),
            ("epochs", self.epochs.to_string()),
            ("patience", self.patience.to_string()),
            ("F", self.context.to_string()),
            ("train_len", self.train_len.to_string()),
            ("predict_len", self.predict_len.to_string()),
            ("hyperprior", self.hyperprior.to_string()),
            ("alpha_s", fmt_f64(self.alpha_s)),
            ("beta_s", fmt_f64(self.beta_s)),
            ("seed", self.seed.to_string()),
            ("val_videos", self.val_videos.to_string()),
            ("val_k", self.val_k.to_string()),
            ("g", m.g.to_string()),
            ("levels", m.levels.to_string()),
            ("base_width", m.base_width.to_string()),
            ("feature_dim", m.feature_dim.to_string()),
            ("hidden", m.hidden.to_string()),
            ("predictor_layers", m.predictor_layers.to_string()),
            ("latent_hidden", m.latent_hidden.to_string()),
            ("var_hidden", m.var_hidden.to_string()),
            ("s_min", fmt_f64(m.s_min)),
            ("max_retries", m.max_retries.to_string()),
            ("detach_prior_variance", m.detach_prior_variance.to_string()),
            ("disc_base_width", self.disc_base_width.to_string()),
            ("disc_hidden", self.disc_hidden.to_string()),
            ("train_data", self.train_data.display().to_string()),
            ("val_data", self.val_data.display().to_string()),
            ("checkpoint_dir", self.checkpoint_dir.display().to_string()),
            ("log_path", self.log_path.display().to_string()),
        ]
    }

    fn validate(&self) -> Result<()> {
        non_negative("eta1", self.eta1)?;
        non_negative("eta2", self.eta2)?;
        non_negative("gamma", self.gamma)?;
        non_negative("clip", self.clip)?;
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(NuqError::config("lr", format!("must be positive, got {}", self.lr)));
        }
        if self.context == 0 {
            return Err(NuqError::config("F", "must be at least 1"));
        }
        if self.train_len <= self.context {
            return Err(NuqError::config(
                "train_len",
                format!("must exceed F ({}), got {}", self.context, self.train_len),
            ));
        }
        for (field, v) in [
            ("batch_size", self.batch_size),
            ("predict_len", self.predict_len),
            ("val_k", self.val_k),
            ("val_videos", self.val_videos),
            ("k", self.k),
            ("disc_base_width", self.disc_base_width),
            ("disc_hidden", self.disc_hidden),
        ] {
            if v == 0 {
                return Err(NuqError::config(field, "must be at least 1"));
            }
        }
        if self.gan && self.k > self.train_len - self.context {
            return Err(NuqError::config(
                "k",
                format!("window of {} frames exceeds the {} predicted training frames", self.k, self.train_len - self.context),
            ));
        }
        self.hyperprior()?;
        self.model.validate()
    }
}
