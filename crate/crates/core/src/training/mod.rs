//! Optimization loop, checkpoints, resume and the run log.

mod config;
mod runlog;

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use candle_core::DType;

pub use config::{HyperpriorKind, TrainConfig, Variant};
pub use runlog::{EpochRecord, RunLog, StepRecord, RUN_LOG_HEADER};

use crate::checkpoint::{check_compatible, Checkpoint};
use crate::data::{batch_iter, VideoBatch, VideoDataset};
use crate::discriminator::{disc_update, gan_losses, sample_real_windows, sample_windows, Origin, SeqDiscriminator};
use crate::distributions::Hyperprior;
use crate::error::{NuqError, Result};
use crate::evaluation::{best_of_k_eval, EvalSetup};
use crate::kv::{fmt_f64, KvConfig};
use crate::losses::{fixed_precision_loss, nuq_loss, LossBreakdown, LossValues};
use crate::model::{Noise, NuqModel};
use crate::optim::{Adam, AdamConfig};
use crate::seeding::{self, Rng};
use runlog::{unix_now, RunLogWriter};

pub const LAST_CHECKPOINT: &str = "last.ckpt";
pub const BEST_CHECKPOINT: &str = "best.ckpt";
pub const DIAGNOSTIC_FILE: &str = "diagnostic.txt";
/// Epochs that additionally keep their own checkpoint.
pub const SNAPSHOT_EPOCHS: &[usize] = &[1, 5];
const FORMAT_TAG: &str = "nuq-train";

pub fn epoch_checkpoint_name(epoch: usize) -> String {
    format!("epoch_{epoch:04}.ckpt")
}

#[derive(Debug)]
pub struct TrainOutcome {
    pub log: RunLog,
    pub model: NuqModel,
    pub disc: Option<SeqDiscriminator>,
    pub epochs_completed: usize,
    /// Stopped because validation SSIM stalled for `patience` epochs.
    pub converged: bool,
    /// `(validation SSIM, epoch)` of the best epoch.
    pub best: Option<(f64, usize)>,
    pub last_checkpoint: Option<PathBuf>,
    pub best_checkpoint: Option<PathBuf>,
    /// Steps at which both alternating-update isolation checks ran.
    pub isolation_checks: u64,
}

struct Gan {
    disc: SeqDiscriminator,
    opt: Adam,
}

struct Trainer<'a> {
    cfg: TrainConfig,
    train: &'a VideoDataset,
    val: &'a VideoDataset,
    hyper: Hyperprior,
    model: NuqModel,
    opt: Adam,
    gan: Option<Gan>,
    epoch: usize,
    step: u64,
    best: Option<(f64, usize)>,
    stale: usize,
    log: RunLog,
    writer: RunLogWriter,
    started: Instant,
    isolation_checks: u64,
    last_checkpoint: Option<PathBuf>,
}

/// Trains from scratch. Frame size comes from `train`; `val` must match.
pub fn train_run(cfg: &TrainConfig, train: &VideoDataset, val: &VideoDataset) -> Result<TrainOutcome> {
    Trainer::fresh(cfg, train, val)?.run()
}

/// Continues the run saved in `checkpoint` up to `cfg.epochs`. Every
/// setting except the epoch cap, patience and paths must match.
pub fn resume(checkpoint: &Path, cfg: &TrainConfig, train: &VideoDataset, val: &VideoDataset) -> Result<TrainOutcome> {
    Trainer::resumed(checkpoint, cfg, train, val)?.run()
}

/// Loads the model (and the configuration it was trained with) from a
/// training checkpoint.
pub fn load_model(path: &Path) -> Result<(NuqModel, TrainConfig)> {
    let ck = Checkpoint::load(path)?;
    let cfg = config_from_header(&ck, path)?;
    let model = model_from(&ck, &cfg)?;
    Ok((model, cfg))
}

fn config_from_header(ck: &Checkpoint, path: &Path) -> Result<TrainConfig> {
    if ck.header_value("format") != Some(FORMAT_TAG) {
        return Err(NuqError::format(path, "not a training checkpoint"));
    }
    let mut cfg = TrainConfig::default();
    for (k, v) in &ck.header {
        if let Some(key) = k.strip_prefix("cfg.") {
            cfg.set(key, v).map_err(|e| NuqError::format(path, e.to_string()))?;
        }
    }
    for (key, slot) in [("height", &mut cfg.model.height), ("width", &mut cfg.model.width)] {
        *slot = header_num(ck, path, key)?;
    }
    Ok(cfg)
}

fn header_num<T: std::str::FromStr>(ck: &Checkpoint, path: &Path, key: &str) -> Result<T> {
    ck.header_value(key)
        .and_then(|v| v.parse().ok())
        .ok_or_else(|| NuqError::format(path, format!("header field `{key}` missing or malformed")))
}

fn load_store(store: &crate::nn::ParamStore, blobs: &std::collections::BTreeMap<String, candle_core::Tensor>, ns: &str) -> Result<()> {
    let mut diffs: Vec<String> = store
        .entries()
        .filter(|(name, _)| !blobs.contains_key(*name))
        .map(|(name, _)| format!("{ns}/{name}: missing from checkpoint"))
        .collect();
    diffs.extend(blobs.keys().filter(|k| store.get(k).is_none()).map(|k| format!("{ns}/{k}: not in the model")));
    if !diffs.is_empty() {
        return Err(NuqError::Incompatible(diffs));
    }
    for (name, t) in blobs {
        store.assign(name, t)?;
    }
    Ok(())
}

fn model_from(ck: &Checkpoint, cfg: &TrainConfig) -> Result<NuqModel> {
    let model = NuqModel::new(&cfg.model, DType::F32, cfg.seed)?;
    let expected: Vec<(&str, String)> = model.cfg.echo();
    check_compatible(&ck.header, &expected)?;
    load_store(&model.store, &ck.namespace("model"), "model")?;
    Ok(model)
}

fn check_datasets(train: &VideoDataset, val: &VideoDataset) -> Result<()> {
    if train.is_empty() {
        return Err(NuqError::config("train_data", "training set has no videos"));
    }
    if val.is_empty() {
        return Err(NuqError::config("val_data", "validation set has no videos"));
    }
    if (train.height, train.width) != (val.height, val.width) {
        return Err(NuqError::config(
            "val_data",
            format!("frame size {}x{} differs from training {}x{}", val.height, val.width, train.height, train.width),
        ));
    }
    Ok(())
}

fn adam_config(cfg: &TrainConfig) -> AdamConfig {
    AdamConfig::new(cfg.lr, cfg.clip)
}

impl<'a> Trainer<'a> {
    fn fresh(cfg: &TrainConfig, train: &'a VideoDataset, val: &'a VideoDataset) -> Result<Self> {
        check_datasets(train, val)?;
        let mut cfg = cfg.clone();
        cfg.model.height = train.height;
        cfg.model.width = train.width;
        cfg.validate()?;
        let model = NuqModel::new(&cfg.model, DType::F32, cfg.seed)?;
        let opt = Adam::new(model.store.trainable(&[]), adam_config(&cfg))?;
        let gan = if cfg.gan {
            let disc = SeqDiscriminator::new(&cfg.disc_config(), DType::F32, cfg.seed)?;
            let opt = Adam::new(disc.store.trainable(&[]), adam_config(&cfg))?;
            Some(Gan { disc, opt })
        } else {
            None
        };
        let echo = Self::echo(&cfg);
        let writer = RunLogWriter::open(&cfg.run_log_path(), false, &echo, None)?;
        Ok(Trainer {
            hyper: cfg.hyperprior()?,
            train,
            val,
            model,
            opt,
            gan,
            epoch: 0,
            step: 0,
            best: None,
            stale: 0,
            log: RunLog { echo, ..RunLog::default() },
            writer,
            started: Instant::now(),
            isolation_checks: 0,
            last_checkpoint: None,
            cfg,
        })
    }

    fn resumed(path: &Path, cfg: &TrainConfig, train: &'a VideoDataset, val: &'a VideoDataset) -> Result<Self> {
        check_datasets(train, val)?;
        let mut cfg = cfg.clone();
        cfg.model.height = train.height;
        cfg.model.width = train.width;
        cfg.validate()?;
        let ck = Checkpoint::load(path)?;
        if ck.header_value("format") != Some(FORMAT_TAG) {
            return Err(NuqError::format(path, "not a training checkpoint"));
        }
        let mut expected = cfg.resume_echo();
        expected.push(("height".into(), train.height.to_string()));
        expected.push(("width".into(), train.width.to_string()));
        let expected: Vec<(&str, String)> = expected.iter().map(|(k, v)| (k.as_str(), v.clone())).collect();
        check_compatible(&ck.header, &expected)?;
        if cfg.gan {
            let missing: Vec<String> = ["disc", "disc_optim"]
                .iter()
                .filter(|ns| !ck.has_namespace(ns))
                .map(|ns| format!("checkpoint has no `{ns}/` namespace, required to resume a GAN run"))
                .collect();
            if !missing.is_empty() {
                return Err(NuqError::Incompatible(missing));
            }
        }
        let model = model_from(&ck, &cfg)?;
        let mut opt = Adam::new(model.store.trainable(&[]), adam_config(&cfg))?;
        opt.load_state(header_num(&ck, path, "optim_step")?, &ck.namespace("optim"))?;
        let gan = if cfg.gan {
            let disc = SeqDiscriminator::new(&cfg.disc_config(), DType::F32, cfg.seed)?;
            load_store(&disc.store, &ck.namespace("disc"), "disc")?;
            let mut opt = Adam::new(disc.store.trainable(&[]), adam_config(&cfg))?;
            opt.load_state(header_num(&ck, path, "disc_optim_step")?, &ck.namespace("disc_optim"))?;
            Some(Gan { disc, opt })
        } else {
            None
        };
        let epoch: usize = header_num(&ck, path, "epoch")?;
        let best = match ck.header_value("best_ssim") {
            Some("none") | None => None,
            Some(_) => Some((header_num(&ck, path, "best_ssim")?, header_num(&ck, path, "best_epoch")?)),
        };
        let echo = Self::echo(&cfg);
        let note = format!("resumed from {} at epoch {epoch}", path.display());
        let writer = RunLogWriter::open(&cfg.run_log_path(), true, &echo, Some(&note))?;
        log::info!("{note}");
        Ok(Trainer {
            hyper: cfg.hyperprior()?,
            train,
            val,
            model,
            opt,
            gan,
            epoch,
            step: header_num(&ck, path, "step")?,
            best,
            stale: header_num(&ck, path, "stale")?,
            log: RunLog { echo, ..RunLog::default() },
            writer,
            started: Instant::now(),
            isolation_checks: 0,
            last_checkpoint: Some(path.to_path_buf()),
            cfg,
        })
    }

    fn echo(cfg: &TrainConfig) -> Vec<(String, String)> {
        let mut echo: Vec<(String, String)> = cfg.entries().into_iter().map(|(k, v)| (k.to_string(), v)).collect();
        echo.push(("height".into(), cfg.model.height.to_string()));
        echo.push(("width".into(), cfg.model.width.to_string()));
        echo
    }

    fn converged(&self) -> bool {
        self.cfg.patience > 0 && self.stale >= self.cfg.patience
    }

    fn run(mut self) -> Result<TrainOutcome> {
        let mut best_checkpoint = None;
        if self.cfg.epochs == 0 && self.epoch == 0 {
            let (ssim, psnr) = self.validate()?;
            self.record_epoch(0, f64::NAN, ssim, psnr)?;
        }
        while self.epoch < self.cfg.epochs && !self.converged() {
            let e = self.epoch + 1;
            let train_loss = self.train_epoch(e)?;
            let (ssim, psnr) = self.validate()?;
            self.record_epoch(e, train_loss, ssim, psnr)?;
            let improved = self.best.is_none_or(|(b, _)| ssim > b);
            if improved {
                self.best = Some((ssim, e));
                self.stale = 0;
            } else {
                self.stale += 1;
            }
            self.epoch = e;
            let ck = self.checkpoint()?;
            let dir = self.cfg.checkpoint_dir.clone();
            let last = dir.join(LAST_CHECKPOINT);
            ck.save(&last)?;
            self.last_checkpoint = Some(last);
            if improved {
                let best = dir.join(BEST_CHECKPOINT);
                ck.save(&best)?;
                best_checkpoint = Some(best);
            }
            if SNAPSHOT_EPOCHS.contains(&e) {
                ck.save(&dir.join(epoch_checkpoint_name(e)))?;
            }
            log::info!(
                "epoch {e}: train loss {train_loss:.4}, val ssim {ssim:.4}, val psnr {psnr:.2} ({:.1}s)",
                self.started.elapsed().as_secs_f64()
            );
        }
        if best_checkpoint.is_none() && self.best.is_some() {
            let p = self.cfg.checkpoint_dir.join(BEST_CHECKPOINT);
            best_checkpoint = p.exists().then_some(p);
        }
        Ok(TrainOutcome {
            converged: self.converged(),
            log: self.log,
            model: self.model,
            disc: self.gan.map(|g| g.disc),
            epochs_completed: self.epoch,
            best: self.best,
            last_checkpoint: self.last_checkpoint,
            best_checkpoint,
            isolation_checks: self.isolation_checks,
        })
    }

    fn record_epoch(&mut self, epoch: usize, train_loss: f64, val_ssim: f64, val_psnr: f64) -> Result<()> {
        let r = EpochRecord {
            epoch,
            step: self.step,
            elapsed_s: self.started.elapsed().as_secs_f64(),
            unix_time: unix_now(),
            train_loss,
            val_ssim,
            val_psnr,
        };
        self.writer.epoch(&r)?;
        self.log.epochs.push(r);
        Ok(())
    }

    /// Best-of-`val_k` SSIM and PSNR on the first `val_videos` validation
    /// videos, with the same noise streams every epoch.
    fn validate(&self) -> Result<(f64, f64)> {
        let c = &self.cfg;
        let mut setup = EvalSetup::new(c.val_k, c.context, c.predict_len, seeding::mix(c.seed, seeding::TAG_VALIDATION));
        setup.max_videos = Some(c.val_videos);
        let r = best_of_k_eval(&self.model, self.val, &setup)?;
        Ok((r.mean_ssim(), r.mean_psnr()))
    }

    fn train_epoch(&mut self, epoch: usize) -> Result<f64> {
        let c = &self.cfg;
        let order = seeding::mix(seeding::mix(c.seed, seeding::TAG_DATA_ORDER), epoch as u64);
        let noise_seed = seeding::mix(seeding::mix(c.seed, seeding::TAG_TRAIN_NOISE), epoch as u64);
        let mut disc_rng = seeding::rng(seeding::mix(seeding::mix(c.seed, seeding::TAG_DISC), epoch as u64));
        let batches: Vec<VideoBatch> = batch_iter(self.train, c.batch_size, c.context, c.train_len, order)?.collect();
        let mut sum = 0.0;
        for (i, batch) in batches.iter().enumerate() {
            let mut noise = Noise::from_rng(seeding::substream(noise_seed, i as u64));
            sum += self.train_step(batch, &mut noise, &mut disc_rng, epoch)?;
        }
        Ok(sum / batches.len() as f64)
    }

    fn loss(&self, batch: &VideoBatch, noise: &mut Noise, disc_rng: &mut Rng) -> Result<(LossBreakdown, Option<Windows>)> {
        let c = &self.cfg;
        let frames = self.model.frames_tensor(&batch.frames, batch.batch, batch.len)?;
        let targets = frames.narrow(1, c.context, batch.len - c.context)?;
        let rec = self.model.rollout_train(&frames, c.context, noise)?;
        let mut loss = match c.variant {
            Variant::Nuq => nuq_loss(&rec, &targets, c.eta1, c.eta2, &self.hyper)?,
            Variant::Fixed => fixed_precision_loss(&rec, &targets, c.eta1)?,
        };
        let mut windows = None;
        if let Some(g) = &self.gan {
            let fake = sample_windows(&rec.frames, c.k, Origin::Generated, disc_rng)?;
            let real = sample_real_windows(&frames, c.k, disc_rng)?;
            let (ld, _) = gan_losses(&g.disc.score(&real)?, &g.disc.score(&fake)?)?;
            loss = loss.with_adversarial(&ld, c.gamma)?;
            windows = Some(Windows { real, fake });
        }
        Ok((loss, windows))
    }

    fn train_step(&mut self, batch: &VideoBatch, noise: &mut Noise, disc_rng: &mut Rng, epoch: usize) -> Result<f64> {
        let (loss, windows) = match self.loss(batch, noise, disc_rng) {
            Ok(x) => x,
            Err(e @ (NuqError::Domain(_) | NuqError::SamplingStarvation { .. } | NuqError::Numerical(_))) => {
                return Err(self.abort(epoch, None, &e.to_string()));
            }
            Err(e) => return Err(e),
        };
        let values = loss.values()?;
        if !values.is_finite() {
            return Err(self.abort(epoch, Some(&loss), "non-finite loss"));
        }
        let recomposed = values.recompose(loss.eta1, loss.eta2, loss.gamma);
        if (recomposed - values.total).abs() > 1e-5 * values.total.abs().max(1.0) {
            return Err(NuqError::Numerical(format!(
                "loss terms recompose to {recomposed}, optimized scalar is {}",
                values.total
            )));
        }
        let grads = loss.total.backward()?;
        let disc_before = self.gan.as_ref().map(|g| g.disc.store.fingerprint(&[])).transpose()?;
        let grad_norm = match self.opt.step(&grads) {
            Ok(n) => n,
            Err(e) => return Err(self.abort(epoch, Some(&loss), &e.to_string())),
        };
        let mut disc_loss = None;
        if let (Some(g), Some(w)) = (&mut self.gan, windows) {
            if Some(g.disc.store.fingerprint(&[])?) != disc_before {
                return Err(NuqError::Numerical("generator update changed discriminator parameters".into()));
            }
            let model_before = self.model.store.fingerprint(&[])?;
            disc_loss = Some(disc_update(&g.disc, &mut g.opt, &w.real, &w.fake)?);
            if self.model.store.fingerprint(&[])? != model_before {
                return Err(NuqError::Numerical("discriminator update changed generator parameters".into()));
            }
            self.isolation_checks += 1;
        }
        self.step += 1;
        let r = StepRecord {
            step: self.step,
            epoch,
            elapsed_s: self.started.elapsed().as_secs_f64(),
            unix_time: unix_now(),
            loss: values,
            disc_loss,
            grad_norm,
        };
        self.writer.step(&r)?;
        self.log.steps.push(r);
        Ok(values.total)
    }

    /// Writes the diagnostic dump and builds the abort error.
    fn abort(&self, epoch: usize, loss: Option<&LossBreakdown>, reason: &str) -> NuqError {
        let path = self.cfg.checkpoint_dir.join(DIAGNOSTIC_FILE);
        let mut text = format!("reason={reason}\nepoch={epoch}\nstep={}\n", self.step + 1);
        if let Some(loss) = loss {
            if let Ok(v) = loss.values() {
                text.push_str(&values_text(&v));
            }
            let join = |xs: &[f64]| xs.iter().map(|x| fmt_f64(*x)).collect::<Vec<_>>().join(";");
            let t = &loss.per_t;
            text.push_str(&format!("per_t.weighted_recon={}\n", join(&t.weighted_recon)));
            text.push_str(&format!("per_t.neg_log_precision={}\n", join(&t.neg_log_precision)));
            text.push_str(&format!("per_t.kl_latent={}\n", join(&t.kl_latent)));
            text.push_str(&format!("per_t.kl_hyper={}\n", join(&t.kl_hyper)));
        }
        let last = self.last_checkpoint.as_ref().map_or("none".to_string(), |p| p.display().to_string());
        text.push_str(&format!("last_good_checkpoint={last}\n"));
        let written = fs::create_dir_all(&self.cfg.checkpoint_dir).and_then(|_| fs::write(&path, text));
        let dump = match written {
            Ok(()) => path.display().to_string(),
            Err(e) => format!("(could not write {}: {e})", path.display()),
        };
        NuqError::Numerical(format!(
            "training aborted at epoch {epoch}, step {}: {reason}; diagnostics: {dump}; last good checkpoint: {last}",
            self.step + 1
        ))
    }

    fn checkpoint(&self) -> Result<Checkpoint> {
        let mut ck = Checkpoint::default();
        ck.set_header("format", FORMAT_TAG);
        for (k, v) in self.model.cfg.echo() {
            ck.set_header(k, v);
        }
        for (k, v) in self.cfg.entries() {
            ck.set_header(&format!("cfg.{k}"), v);
        }
        ck.set_header("epoch", self.epoch.to_string());
        ck.set_header("step", self.step.to_string());
        ck.set_header("stale", self.stale.to_string());
        match self.best {
            Some((s, e)) => {
                ck.set_header("best_ssim", fmt_f64(s));
                ck.set_header("best_epoch", e.to_string());
            }
            None => ck.set_header("best_ssim", "none"),
        }
        ck.set_header("optim_step", self.opt.steps_taken().to_string());
        ck.insert_namespace("model", self.model.store.values()?);
        ck.insert_namespace("optim", self.opt.state());
        if let Some(g) = &self.gan {
            ck.set_header("disc_optim_step", g.opt.steps_taken().to_string());
            ck.insert_namespace("disc", g.disc.store.values()?);
            ck.insert_namespace("disc_optim", g.opt.state());
        }
        Ok(ck)
    }
}

struct Windows {
    real: crate::discriminator::FrameWindow,
    fake: crate::discriminator::FrameWindow,
}

fn values_text(v: &LossValues) -> String {
    format!(
        "total={}\nweighted_recon={}\nneg_log_precision={}\nkl_latent={}\nkl_hyper={}\nadv={}\n",
        fmt_f64(v.total),
        fmt_f64(v.weighted_recon),
        fmt_f64(v.neg_log_precision),
        fmt_f64(v.kl_latent),
        fmt_f64(v.kl_hyper),
        fmt_f64(v.adv)
    )
}

#[cfg(test)]
mod tests;
