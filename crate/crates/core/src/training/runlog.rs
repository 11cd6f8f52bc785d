use std::fs::{self, File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use crate::error::{NuqError, Result};
use crate::kv::fmt_f64;
use crate::losses::LossValues;

pub const RUN_LOG_HEADER: &str = "kind,epoch,step,elapsed_s,unix_time,total,weighted_recon,neg_log_precision,\
kl_latent,kl_hyper,adv,disc_loss,grad_norm,val_ssim,val_psnr";

#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord {
    /// Global optimizer step, starting at 1.
    pub step: u64,
    pub epoch: usize,
    pub elapsed_s: f64,
    pub unix_time: f64,
    pub loss: LossValues,
    /// Discriminator loss after its own update, when the GAN term is on.
    pub disc_loss: Option<f64>,
    pub grad_norm: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub step: u64,
    pub elapsed_s: f64,
    pub unix_time: f64,
    /// Mean optimized loss over the epoch's batches (NaN for epoch 0).
    pub train_loss: f64,
    pub val_ssim: f64,
    pub val_psnr: f64,
}

/// In-memory copy of everything written to the run log file.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunLog {
    pub echo: Vec<(String, String)>,
    pub steps: Vec<StepRecord>,
    pub epochs: Vec<EpochRecord>,
}

impl RunLog {
    /// Total loss of every step, in order.
    pub fn loss_trace(&self) -> Vec<f64> {
        self.steps.iter().map(|s| s.loss.total).collect()
    }

    pub fn last_epoch(&self) -> Option<&EpochRecord> {
        self.epochs.last()
    }
}

pub(crate) fn unix_now() -> f64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map_or(0.0, |d| d.as_secs_f64())
}

fn opt(v: Option<f64>) -> String {
    v.map(fmt_f64).unwrap_or_default()
}

/// Appends records to the log file as they are produced.
pub(crate) struct RunLogWriter {
    path: PathBuf,
    file: File,
}

impl RunLogWriter {
    /// Starts a new log (truncating) or, when `append`, continues one.
    pub fn open(path: &Path, append: bool, echo: &[(String, String)], note: Option<&str>) -> Result<Self> {
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            fs::create_dir_all(dir).map_err(|e| NuqError::io(dir, e))?;
        }
        let fresh = !append || !path.exists();
        let file = if fresh {
            File::create(path)
        } else {
            OpenOptions::new().append(true).open(path)
        }
        .map_err(|e| NuqError::io(path, e))?;
        let mut w = RunLogWriter { path: path.to_path_buf(), file };
        let mut text = String::new();
        if let Some(note) = note {
            text.push_str(&format!("# {note}\n"));
        }
        for (k, v) in echo {
            text.push_str(&format!("# {k}={v}\n"));
        }
        if fresh {
            text.push_str(RUN_LOG_HEADER);
            text.push('\n');
        }
        w.write(&text)?;
        Ok(w)
    }

    fn write(&mut self, text: &str) -> Result<()> {
        self.file.write_all(text.as_bytes()).map_err(|e| NuqError::io(&self.path, e))
    }

    pub fn step(&mut self, r: &StepRecord) -> Result<()> {
        let l = &r.loss;
        let line = format!(
            "step,{},{},{:.3},{:.3},{},{},{},{},{},{},{},{},,\n",
            r.epoch,
            r.step,
            r.elapsed_s,
            r.unix_time,
            fmt_f64(l.total),
            fmt_f64(l.weighted_recon),
            fmt_f64(l.neg_log_precision),
            fmt_f64(l.kl_latent),
            fmt_f64(l.kl_hyper),
            fmt_f64(l.adv),
            opt(r.disc_loss),
            fmt_f64(r.grad_norm),
        );
        self.write(&line)
    }

    pub fn epoch(&mut self, r: &EpochRecord) -> Result<()> {
        let line = format!(
            "epoch,{},{},{:.3},{:.3},{},,,,,,,,{},{}\n",
            r.epoch,
            r.step,
            r.elapsed_s,
            r.unix_time,
            fmt_f64(r.train_loss),
            fmt_f64(r.val_ssim),
            fmt_f64(r.val_psnr),
        );
        self.write(&line)?;
        self.file.flush().map_err(|e| NuqError::io(&self.path, e))
    }
}
