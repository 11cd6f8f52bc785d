use std::fs;
use std::path::Path;

use nuq::data::{load_dataset, load_frame_dir, save_dataset, save_frames, synthesize_smmnist, Video, MANIFEST_FILE};
use nuq::evaluation::{
    best_of_k, best_traces, diversity_report, emit_reports, generate_and_score, minmax_normalize, render_plots,
    uncertainty_report, EvalSetup, Reports,
};
use nuq::kv::{fmt_f64, KvConfig};
use nuq::training::{load_model, resume, train_run, TrainConfig};
use nuq::{NuqError, Result};

use crate::configs::{EvalConfig, GenerateConfig, MakeDataConfig, ReportConfig};

/// One `key=value` pair per field, space separated.
pub type Summary = Vec<(&'static str, String)>;

pub fn make_data(cfg: &MakeDataConfig) -> Result<Summary> {
    let (mut ds, bounces) = synthesize_smmnist(&cfg.synth)?;
    ds.bounces = Some(bounces.clone());
    save_dataset(&ds, &cfg.out)?;
    Ok(vec![
        ("command", "make-data".into()),
        ("split", ds.split.to_string()),
        ("videos", ds.len().to_string()),
        ("T", ds.seq_len.to_string()),
        ("H", ds.height.to_string()),
        ("W", ds.width.to_string()),
        ("bounces", bounces.total().to_string()),
        ("out", cfg.out.display().to_string()),
    ])
}

pub fn train(cfg: &TrainConfig, resume_from: Option<&Path>) -> Result<Summary> {
    let train = load_dataset(&cfg.train_data)?;
    let val = load_dataset(&cfg.val_data)?;
    let out = match resume_from {
        Some(path) => resume(path, cfg, &train, &val)?,
        None => train_run(cfg, &train, &val)?,
    };
    let mut s: Summary = vec![
        ("command", "train".into()),
        ("variant", cfg.variant.to_string()),
        ("gan", cfg.gan.to_string()),
        ("epochs", out.epochs_completed.to_string()),
        ("steps", out.log.steps.len().to_string()),
        ("converged", out.converged.to_string()),
    ];
    if let Some(e) = out.log.last_epoch() {
        s.push(("val_ssim", fmt_f64(e.val_ssim)));
        s.push(("val_psnr", fmt_f64(e.val_psnr)));
    }
    if let Some((ssim, epoch)) = out.best {
        s.push(("best_ssim", fmt_f64(ssim)));
        s.push(("best_epoch", epoch.to_string()));
    }
    let path = |p: Option<std::path::PathBuf>| p.map_or("none".into(), |p| p.display().to_string());
    s.push(("last_checkpoint", path(out.last_checkpoint)));
    s.push(("best_checkpoint", path(out.best_checkpoint)));
    Ok(s)
}

fn context_video(cfg: &GenerateConfig) -> Result<Video> {
    if cfg.context.join(MANIFEST_FILE).exists() {
        let ds = load_dataset(&cfg.context)?;
        ds.videos.get(cfg.video).cloned().ok_or_else(|| {
            NuqError::config("video", format!("index {} out of range for {} videos", cfg.video, ds.len()))
        })
    } else {
        load_frame_dir(&cfg.context)
    }
}

pub fn generate(cfg: &GenerateConfig) -> Result<Summary> {
    let (model, tcfg) = load_model(&cfg.checkpoint)?;
    let video = context_video(cfg)?;
    let f = tcfg.context;
    if (video.height, video.width) != (model.cfg.height, model.cfg.width) {
        return Err(NuqError::config(
            "context",
            format!(
                "frames are {}x{}, the model expects {}x{}",
                video.height, video.width, model.cfg.height, model.cfg.width
            ),
        ));
    }
    if video.len < f {
        return Err(NuqError::config("context", format!("{} frames given, the model needs F = {f}", video.len)));
    }
    let frames: Vec<f32> = (0..f).flat_map(|t| video.frame_f32(t)).collect();
    let ctx = model.frames_tensor(&frames, 1, f)?;
    let futures = model.generate_futures(&ctx, cfg.steps, cfg.num_futures, cfg.seed, &[cfg.video as u64])?;
    fs::create_dir_all(&cfg.out).map_err(|e| NuqError::io(&cfg.out, e))?;
    for k in 0..cfg.num_futures {
        let frames: Vec<Vec<f32>> = (0..cfg.steps).map(|j| futures.frame(0, k, j).to_vec()).collect();
        save_frames(&cfg.out.join(format!("future_{k:03}")), &frames, futures.height, futures.width)?;
        let s = futures.trace(0, k);
        let u = minmax_normalize(s);
        let mut text = String::from("step,frame,s,precision,u\n");
        for (j, (sv, uv)) in s.iter().zip(&u).enumerate() {
            text.push_str(&format!("{j},{},{},{},{}\n", f + j, fmt_f64(*sv), fmt_f64(1.0 / sv), fmt_f64(*uv)));
        }
        let path = cfg.out.join(format!("trace_{k:03}.csv"));
        fs::write(&path, text).map_err(|e| NuqError::io(&path, e))?;
    }
    Ok(vec![
        ("command", "generate".into()),
        ("futures", cfg.num_futures.to_string()),
        ("steps", cfg.steps.to_string()),
        ("context_frames", f.to_string()),
        ("out", cfg.out.display().to_string()),
    ])
}

pub fn eval(cfg: &EvalConfig) -> Result<Summary> {
    let (model, tcfg) = load_model(&cfg.checkpoint)?;
    let ds = load_dataset(&cfg.data)?;
    let steps = if cfg.steps == 0 { tcfg.predict_len } else { cfg.steps };
    let k = cfg.num_futures;
    let mut setup = EvalSetup::new(k, tcfg.context, steps, cfg.seed);
    setup.selection = cfg.selection;
    setup.max_videos = (cfg.max_videos > 0).then_some(cfg.max_videos);
    setup.intra = k >= 2;
    setup.rows_per_batch = cfg.rows_per_batch;
    let scored = generate_and_score(&model, &ds, &setup)?;
    let metrics = best_of_k(&scored, k, cfg.selection)?;
    let grid: Vec<usize> = cfg.k_grid.iter().copied().filter(|&g| g <= k).collect();
    let diversity = if k >= 2 && !grid.is_empty() {
        Some(diversity_report(&scored, &grid, cfg.selection)?)
    } else {
        None
    };
    let uncertainty = uncertainty_report(&best_traces(&scored, k, cfg.selection), ds.bounces.as_ref(), tcfg.context)?;
    let mut s: Summary = vec![
        ("command", "eval".into()),
        ("K", k.to_string()),
        ("videos", metrics.videos.len().to_string()),
        ("steps", steps.to_string()),
        ("mean_ssim", fmt_f64(metrics.mean_ssim())),
        ("mean_psnr", fmt_f64(metrics.mean_psnr())),
    ];
    if let Some(t) = &uncertainty.sign_test {
        s.push(("sign_p", fmt_f64(t.p_value)));
    }
    let reports = Reports { metrics: Some(metrics), diversity, uncertainty: Some(uncertainty) };
    let written = emit_reports(&reports, &cfg.out)?;
    s.push(("files", written.len().to_string()));
    s.push(("out", cfg.out.display().to_string()));
    Ok(s)
}

pub fn report(cfg: &ReportConfig) -> Result<Summary> {
    let plots = render_plots(&cfg.input, &cfg.out)?;
    if plots.is_empty() {
        return Err(NuqError::config("in", format!("no evaluation data files in {}", cfg.input.display())));
    }
    Ok(vec![
        ("command", "report".into()),
        ("plots", plots.len().to_string()),
        ("out", cfg.out.display().to_string()),
    ])
}

/// Loads defaults, then the config file, then flag overrides, and
/// validates.
pub fn resolve<C: KvConfig + Default>(file: Option<&Path>, overrides: &[String]) -> Result<C> {
    let mut cfg = C::default();
    if let Some(path) = file {
        cfg.load_file(path)?;
    }
    cfg.apply_overrides(overrides)?;
    cfg.validate()?;
    Ok(cfg)
}
