//! Per-subcommand configurations. Every command-line flag is shorthand for
//! one of these keys.

use std::path::PathBuf;
use std::sync::OnceLock;

use nuq::data::SynthConfig;
use nuq::evaluation::Selection;
use nuq::kv::{self, KvConfig};
use nuq::{NuqError, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct MakeDataConfig {
    pub synth: SynthConfig,
    pub out: PathBuf,
}

impl Default for MakeDataConfig {
    fn default() -> Self {
        MakeDataConfig { synth: SynthConfig::default(), out: PathBuf::from("data/train") }
    }
}

impl KvConfig for MakeDataConfig {
    fn key_docs() -> &'static [(&'static str, &'static str)] {
        static DOCS: OnceLock<Vec<(&'static str, &'static str)>> = OnceLock::new();
        DOCS.get_or_init(|| {
            let mut docs = SynthConfig::key_docs().to_vec();
            docs.push(("out", "output dataset directory"));
            docs
        })
    }

    fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "out" => self.out = PathBuf::from(value),
            _ => self.synth.set(key, value)?,
        }
        Ok(())
    }

    fn entries(&self) -> Vec<(&'static str, String)> {
        let mut e = self.synth.entries();
        e.push(("out", self.out.display().to_string()));
        e
    }

    fn validate(&self) -> Result<()> {
        if self.out.as_os_str().is_empty() {
            return Err(NuqError::config("out", "an output directory is required"));
        }
        self.synth.validate()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GenerateConfig {
    pub checkpoint: PathBuf,
    /// Dataset directory or a directory of `frame_%04d` images.
    pub context: PathBuf,
    pub video: usize,
    pub num_futures: usize,
    pub steps: usize,
    pub seed: u64,
    pub out: PathBuf,
}

impl Default for GenerateConfig {
    fn default() -> Self {
        GenerateConfig {
            checkpoint: PathBuf::from("checkpoints/best.ckpt"),
            context: PathBuf::from("data/test"),
            video: 0,
            num_futures: 3,
            steps: 20,
            seed: 1,
            out: PathBuf::from("futures"),
        }
    }
}

impl KvConfig for GenerateConfig {
    fn key_docs() -> &'static [(&'static str, &'static str)] {
        &[
            ("checkpoint", "training checkpoint"),
            ("context", "dataset directory or frame directory holding the seen frames"),
            ("video", "video index when `context` is a dataset"),
            ("K", "number of futures"),
            ("steps", "frames to predict"),
            ("seed", "sampling seed"),
            ("out", "output directory"),
        ]
    }

    fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "checkpoint" => self.checkpoint = PathBuf::from(value),
            "context" => self.context = PathBuf::from(value),
            "video" => self.video = kv::parse_value(key, value)?,
            "K" => self.num_futures = kv::parse_value(key, value)?,
            "steps" => self.steps = kv::parse_value(key, value)?,
            "seed" => self.seed = kv::parse_value(key, value)?,
            "out" => self.out = PathBuf::from(value),
            _ => return Err(kv::unknown_key(key)),
        }
        Ok(())
    }

    fn entries(&self) -> Vec<(&'static str, String)> {
        vec![
            ("checkpoint", self.checkpoint.display().to_string()),
            ("context", self.context.display().to_string()),
            ("video", self.video.to_string()),
            ("K", self.num_futures.to_string()),
            ("steps", self.steps.to_string()),
            ("seed", self.seed.to_string()),
            ("out", self.out.display().to_string()),
        ]
    }

    fn validate(&self) -> Result<()> {
        if self.num_futures == 0 {
            return Err(NuqError::config("K", "must be at least 1"));
        }
        if self.steps == 0 {
            return Err(NuqError::config("steps", "must be at least 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalConfig {
    pub checkpoint: PathBuf,
    pub data: PathBuf,
    pub num_futures: usize,
    /// 0 uses the checkpoint's `predict_len`.
    pub steps: usize,
    pub seed: u64,
    pub selection: Selection,
    /// 0 evaluates every video.
    pub max_videos: usize,
    pub k_grid: Vec<usize>,
    pub rows_per_batch: usize,
    pub out: PathBuf,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            checkpoint: PathBuf::from("checkpoints/best.ckpt"),
            data: PathBuf::from("data/test"),
            num_futures: 100,
            steps: 0,
            seed: 1,
            selection: Selection::Ssim,
            max_videos: 0,
            k_grid: vec![1, 5, 10, 20, 50, 100],
            rows_per_batch: 200,
            out: PathBuf::from("eval"),
        }
    }
}

fn parse_grid(key: &str, value: &str) -> Result<Vec<usize>> {
    value.split(',').map(|s| kv::parse_value(key, s.trim())).collect()
}

impl KvConfig for EvalConfig {
    fn key_docs() -> &'static [(&'static str, &'static str)] {
        &[
            ("checkpoint", "training checkpoint"),
            ("data", "test dataset directory"),
            ("K", "futures per video"),
            ("steps", "frames to predict (0 = the checkpoint's predict_len)"),
            ("seed", "sampling seed"),
            ("selection", "best-future criterion: ssim | psnr"),
            ("max_videos", "evaluate only the first n videos (0 = all)"),
            ("k_grid", "comma-separated K values for the best-of-K curve"),
            ("rows_per_batch", "rollouts generated per batch"),
            ("out", "report directory"),
        ]
    }

    fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "checkpoint" => self.checkpoint = PathBuf::from(value),
            "data" => self.data = PathBuf::from(value),
            "K" => self.num_futures = kv::parse_value(key, value)?,
            "steps" => self.steps = kv::parse_value(key, value)?,
            "seed" => self.seed = kv::parse_value(key, value)?,
            "selection" => self.selection = kv::parse_value(key, value)?,
            "max_videos" => self.max_videos = kv::parse_value(key, value)?,
            "k_grid" => self.k_grid = parse_grid(key, value)?,
            "rows_per_batch" => self.rows_per_batch = kv::parse_value(key, value)?,
            "out" => self.out = PathBuf::from(value),
            _ => return Err(kv::unknown_key(key)),
        }
        Ok(())
    }

    fn entries(&self) -> Vec<(&'static str, String)> {
        let grid: Vec<String> = self.k_grid.iter().map(|k| k.to_string()).collect();
        vec![
            ("checkpoint", self.checkpoint.display().to_string()),
            ("data", self.data.display().to_string()),
            ("K", self.num_futures.to_string()),
            ("steps", self.steps.to_string()),
            ("seed", self.seed.to_string()),
            ("selection", self.selection.to_string()),
            ("max_videos", self.max_videos.to_string()),
            ("k_grid", grid.join(",")),
            ("rows_per_batch", self.rows_per_batch.to_string()),
            ("out", self.out.display().to_string()),
        ]
    }

    fn validate(&self) -> Result<()> {
        if self.num_futures == 0 {
            return Err(NuqError::config("K", "must be at least 1"));
        }
        if self.rows_per_batch == 0 {
            return Err(NuqError::config("rows_per_batch", "must be at least 1"));
        }
        if self.k_grid.is_empty() || self.k_grid.contains(&0) {
            return Err(NuqError::config("k_grid", "needs one or more positive values"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReportConfig {
    pub input: PathBuf,
    pub out: PathBuf,
}

impl Default for ReportConfig {
    fn default() -> Self {
        ReportConfig { input: PathBuf::from("eval"), out: PathBuf::from("eval") }
    }
}

impl KvConfig for ReportConfig {
    fn key_docs() -> &'static [(&'static str, &'static str)] {
        &[("in", "directory holding evaluation data files"), ("out", "directory for the plots")]
    }

    fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "in" => self.input = PathBuf::from(value),
            "out" => self.out = PathBuf::from(value),
            _ => return Err(kv::unknown_key(key)),
        }
        Ok(())
    }

    fn entries(&self) -> Vec<(&'static str, String)> {
        vec![("in", self.input.display().to_string()), ("out", self.out.display().to_string())]
    }

    fn validate(&self) -> Result<()> {
        Ok(())
    }
}
