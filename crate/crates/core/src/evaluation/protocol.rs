use std::fmt;
use std::str::FromStr;

use statrs::distribution::{Binomial, DiscreteCDF};

use super::metrics::{psnr, ssim};
use crate::data::{BounceLog, VideoDataset};
use crate::error::{NuqError, Result};
use crate::model::{Futures, NuqModel};

/// Criterion for picking the best of K futures.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Selection {
    Ssim,
    Psnr,
}

impl fmt::Display for Selection {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Selection::Ssim => "ssim",
            Selection::Psnr => "psnr",
        })
    }
}

impl FromStr for Selection {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "ssim" => Ok(Selection::Ssim),
            "psnr" => Ok(Selection::Psnr),
            other => Err(format!("unknown selection `{other}` (expected ssim or psnr)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalSetup {
    pub k: usize,
    pub context: usize,
    pub steps: usize,
    pub seed: u64,
    pub selection: Selection,
    /// Evaluate only the first `n` videos.
    pub max_videos: Option<usize>,
    /// Also compute pairwise SSIM between futures.
    pub intra: bool,
    /// Upper bound on rollouts generated in one batch.
    pub rows_per_batch: usize,
}

impl EvalSetup {
    pub fn new(k: usize, context: usize, steps: usize, seed: u64) -> Self {
        EvalSetup {
            k,
            context,
            steps,
            seed,
            selection: Selection::Ssim,
            max_videos: None,
            intra: false,
            rows_per_batch: 200,
        }
    }
}

/// SSIM, PSNR and scale trace of every predicted frame of every future:
/// each vector is laid out `[video, future, step]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoredFutures {
    pub videos: Vec<usize>,
    pub num_futures: usize,
    pub steps: usize,
    pub context: usize,
    pub ssim: Vec<f64>,
    pub psnr: Vec<f64>,
    pub s: Vec<f64>,
    /// Mean pairwise SSIM between futures, `[video, step]`.
    pub intra: Option<Vec<f64>>,
}

impl ScoredFutures {
    fn span(&self, v: usize, k: usize) -> std::ops::Range<usize> {
        let off = (v * self.num_futures + k) * self.steps;
        off..off + self.steps
    }

    pub fn ssim_of(&self, v: usize, k: usize) -> &[f64] {
        &self.ssim[self.span(v, k)]
    }

    pub fn psnr_of(&self, v: usize, k: usize) -> &[f64] {
        &self.psnr[self.span(v, k)]
    }

    pub fn trace_of(&self, v: usize, k: usize) -> &[f64] {
        &self.s[self.span(v, k)]
    }

    fn mean_score(&self, v: usize, k: usize, sel: Selection) -> f64 {
        let x = match sel {
            Selection::Ssim => self.ssim_of(v, k),
            Selection::Psnr => self.psnr_of(v, k),
        };
        x.iter().sum::<f64>() / x.len() as f64
    }

    /// Index of the best of the first `k` futures (earliest on ties).
    pub fn best(&self, v: usize, k: usize, sel: Selection) -> usize {
        let mut best = 0;
        let mut best_score = self.mean_score(v, 0, sel);
        for j in 1..k.min(self.num_futures) {
            let s = self.mean_score(v, j, sel);
            if s > best_score {
                best = j;
                best_score = s;
            }
        }
        best
    }
}

/// Ground-truth frames `context..context+steps` of a video, flattened.
fn truth(ds: &VideoDataset, v: usize, context: usize, steps: usize) -> Result<Vec<f32>> {
    let video = &ds.videos[v];
    if context + steps > video.len {
        return Err(NuqError::config(
            "steps",
            format!("F + steps = {} exceeds video length {}", context + steps, video.len),
        ));
    }
    Ok((context..context + steps).flat_map(|t| video.frame_f32(t)).collect())
}

/// Pairwise SSIM between futures of one video at every step.
pub fn intra_set_ssim(futures: &Futures, video: usize) -> Result<Vec<f64>> {
    let k = futures.num_futures;
    if k < 2 {
        return Err(NuqError::config("K", "intra-set similarity needs at least 2 futures"));
    }
    let (h, w) = (futures.height, futures.width);
    let mut out = Vec::with_capacity(futures.steps);
    for j in 0..futures.steps {
        let mut total = 0.0;
        let mut pairs = 0;
        for a in 0..k {
            for b in a + 1..k {
                total += ssim(futures.frame(video, a, j), futures.frame(video, b, j), h, w)?;
                pairs += 1;
            }
        }
        out.push(total / pairs as f64);
    }
    Ok(out)
}

/// Scores every future in `futures` against per-video ground truth
/// (`truth[v]` holds `steps` flattened frames).
pub fn score_futures(futures: &Futures, truth: &[Vec<f32>], videos: &[usize], context: usize, intra: bool) -> Result<ScoredFutures> {
    let (h, w, p) = (futures.height, futures.width, futures.steps);
    if truth.len() != futures.num_videos || videos.len() != futures.num_videos {
        return Err(NuqError::Shape(format!("{} truths for {} videos", truth.len(), futures.num_videos)));
    }
    let mut out = ScoredFutures {
        videos: videos.to_vec(),
        num_futures: futures.num_futures,
        steps: p,
        context,
        ssim: Vec::new(),
        psnr: Vec::new(),
        s: futures.s.clone(),
        intra: intra.then(Vec::new),
    };
    for (v, gt) in truth.iter().enumerate() {
        if gt.len() != p * h * w {
            return Err(NuqError::Shape(format!("truth for video {v} has {} pixels", gt.len())));
        }
        for k in 0..futures.num_futures {
            for j in 0..p {
                let g = &gt[j * h * w..(j + 1) * h * w];
                let f = futures.frame(v, k, j);
                out.ssim.push(ssim(f, g, h, w)?);
                out.psnr.push(psnr(f, g, 1.0)?);
            }
        }
        if let Some(intra) = &mut out.intra {
            intra.extend(intra_set_ssim(futures, v)?);
        }
    }
    Ok(out)
}

fn merge(parts: Vec<ScoredFutures>) -> ScoredFutures {
    let mut it = parts.into_iter();
    let mut acc = it.next().expect("at least one chunk");
    for p in it {
        acc.videos.extend(p.videos);
        acc.ssim.extend(p.ssim);
        acc.psnr.extend(p.psnr);
        acc.s.extend(p.s);
        if let (Some(a), Some(b)) = (&mut acc.intra, p.intra) {
            a.extend(b);
        }
    }
    acc
}

/// Generates `setup.k` futures per video from its first `F` frames and
/// scores them against frames `F..F+steps`.
pub fn generate_and_score(model: &NuqModel, ds: &VideoDataset, setup: &EvalSetup) -> Result<ScoredFutures> {
    if setup.k == 0 {
        return Err(NuqError::config("K", "must be at least 1"));
    }
    if setup.context == 0 {
        return Err(NuqError::config("F", "must be at least 1"));
    }
    let n = setup.max_videos.map_or(ds.len(), |m| m.min(ds.len()));
    if n == 0 {
        return Err(NuqError::config("test_data", "dataset has no videos"));
    }
    let chunk = (setup.rows_per_batch / setup.k).max(1);
    let (h, w) = (ds.height, ds.width);
    let mut parts = Vec::new();
    for first in (0..n).step_by(chunk) {
        let ids: Vec<usize> = (first..(first + chunk).min(n)).collect();
        let truths = ids.iter().map(|&v| truth(ds, v, setup.context, setup.steps)).collect::<Result<Vec<_>>>()?;
        let ctx: Vec<f32> = ids
            .iter()
            .flat_map(|&v| (0..setup.context).flat_map(move |t| ds.videos[v].frame_f32(t)))
            .collect();
        let ctx = model.frames_tensor(&ctx, ids.len(), setup.context)?;
        let ids64: Vec<u64> = ids.iter().map(|&v| v as u64).collect();
        let futures = model.generate_futures(&ctx, setup.steps, setup.k, setup.seed, &ids64)?;
        debug_assert_eq!((futures.height, futures.width), (h, w));
        parts.push(score_futures(&futures, &truths, &ids, setup.context, setup.intra)?);
    }
    Ok(merge(parts))
}

#[derive(Debug, Clone, PartialEq)]
pub struct VideoMetrics {
    pub video: usize,
    pub best_future: usize,
    pub ssim: Vec<f64>,
    pub psnr: Vec<f64>,
}

/// Per-frame scores of the best-matching future of each video.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricReport {
    pub k: usize,
    pub selection: Selection,
    pub context: usize,
    pub videos: Vec<VideoMetrics>,
}

impl MetricReport {
    fn mean_of(&self, f: impl Fn(&VideoMetrics) -> &[f64]) -> f64 {
        let (sum, n) = self
            .videos
            .iter()
            .flat_map(|v| f(v).iter())
            .fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
        sum / n as f64
    }

    pub fn mean_ssim(&self) -> f64 {
        self.mean_of(|v| &v.ssim)
    }

    pub fn mean_psnr(&self) -> f64 {
        self.mean_of(|v| &v.psnr)
    }

    /// Mean over videos at each predicted step.
    pub fn per_step_ssim(&self) -> Vec<f64> {
        let p = self.videos.first().map_or(0, |v| v.ssim.len());
        (0..p)
            .map(|j| self.videos.iter().map(|v| v.ssim[j]).sum::<f64>() / self.videos.len() as f64)
            .collect()
    }
}

/// Best-of-`k` report using the first `k` scored futures of each video.
pub fn best_of_k(scored: &ScoredFutures, k: usize, selection: Selection) -> Result<MetricReport> {
    if k == 0 || k > scored.num_futures {
        return Err(NuqError::config("K", format!("{k} not in 1..={}", scored.num_futures)));
    }
    let videos = scored
        .videos
        .iter()
        .enumerate()
        .map(|(i, &video)| {
            let best = scored.best(i, k, selection);
            VideoMetrics {
                video,
                best_future: best,
                ssim: scored.ssim_of(i, best).to_vec(),
                psnr: scored.psnr_of(i, best).to_vec(),
            }
        })
        .collect();
    Ok(MetricReport { k, selection, context: scored.context, videos })
}

/// Generate K futures per video and report the best-matching one.
pub fn best_of_k_eval(model: &NuqModel, ds: &VideoDataset, setup: &EvalSetup) -> Result<MetricReport> {
    let scored = generate_and_score(model, ds, setup)?;
    best_of_k(&scored, setup.k, setup.selection)
}

#[derive(Debug, Clone, PartialEq)]
pub struct DiversityReport {
    pub k_grid: Vec<usize>,
    /// Mean (over videos and frames) of the selection metric for the best
    /// of the first `k` futures, for each `k` in the grid.
    pub best_of_k: Vec<f64>,
    /// Mean pairwise SSIM between futures at each predicted step.
    pub intra_ssim: Vec<f64>,
}

pub fn diversity_report(scored: &ScoredFutures, k_grid: &[usize], selection: Selection) -> Result<DiversityReport> {
    let intra = scored
        .intra
        .as_ref()
        .ok_or_else(|| NuqError::config("K", "intra-set similarity was not computed"))?;
    if scored.num_futures < 2 {
        return Err(NuqError::config("K", "diversity needs at least 2 futures"));
    }
    let mut curve = Vec::with_capacity(k_grid.len());
    for &k in k_grid {
        let r = best_of_k(scored, k, selection)?;
        curve.push(match selection {
            Selection::Ssim => r.mean_ssim(),
            Selection::Psnr => r.mean_psnr(),
        });
    }
    let n = scored.videos.len();
    let intra_ssim = (0..scored.steps)
        .map(|j| (0..n).map(|v| intra[v * scored.steps + j]).sum::<f64>() / n as f64)
        .collect();
    Ok(DiversityReport { k_grid: k_grid.to_vec(), best_of_k: curve, intra_ssim })
}

/// One scale trace, aligned so that entry `j` belongs to video frame
/// `context + j`.
#[derive(Debug, Clone, PartialEq)]
pub struct SeqTrace {
    pub video: usize,
    pub s: Vec<f64>,
}

/// Traces of each video's best-matching future.
pub fn best_traces(scored: &ScoredFutures, k: usize, selection: Selection) -> Vec<SeqTrace> {
    (0..scored.videos.len())
        .map(|i| SeqTrace { video: scored.videos[i], s: scored.trace_of(i, scored.best(i, k, selection)).to_vec() })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct SeqUncertainty {
    pub video: usize,
    pub s: Vec<f64>,
    /// Min–max normalized `s`.
    pub u: Vec<f64>,
    /// Whether each step lies within one frame of a bounce.
    pub near_bounce: Vec<bool>,
    pub near_mean: Option<f64>,
    pub far_mean: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SignTest {
    pub positive: usize,
    pub negative: usize,
    pub ties: usize,
    /// One-sided: P(at least `positive` successes of `positive + negative`
    /// fair coin flips).
    pub p_value: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct UncertaintyReport {
    pub context: usize,
    pub sequences: Vec<SeqUncertainty>,
    pub pooled_near: Option<f64>,
    pub pooled_far: Option<f64>,
    pub sign_test: Option<SignTest>,
}

/// `(s − min) / (max − min)`, all zeros for a constant trace.
pub fn minmax_normalize(s: &[f64]) -> Vec<f64> {
    let lo = s.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = s.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if hi <= lo {
        return vec![0.0; s.len()];
    }
    s.iter().map(|v| (v - lo) / (hi - lo)).collect()
}

fn mean(v: impl Iterator<Item = f64>) -> Option<f64> {
    let (s, n) = v.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    (n > 0).then(|| s / n as f64)
}

pub fn sign_test(positive: usize, negative: usize, ties: usize) -> SignTest {
    let n = (positive + negative) as u64;
    let p_value = if positive == 0 {
        1.0
    } else {
        Binomial::new(0.5, n).expect("valid binomial").sf(positive as u64 - 1)
    };
    SignTest { positive, negative, ties, p_value }
}

/// Normalizes each trace and, given bounce annotations, compares the mean
/// scaled uncertainty within ±1 frame of a bounce against all other frames.
pub fn uncertainty_report(traces: &[SeqTrace], bounces: Option<&BounceLog>, context: usize) -> Result<UncertaintyReport> {
    if traces.is_empty() || traces.iter().any(|t| t.s.is_empty()) {
        return Err(NuqError::config("steps", "uncertainty traces must be non-empty"));
    }
    let mut sequences = Vec::with_capacity(traces.len());
    for t in traces {
        let u = minmax_normalize(&t.s);
        let near_bounce: Vec<bool> = match bounces {
            Some(log) => {
                let events = log.videos.get(t.video).ok_or_else(|| {
                    NuqError::config("test_data", format!("no bounce annotations for video {}", t.video))
                })?;
                (0..t.s.len())
                    .map(|j| events.iter().any(|e| (e.frame as i64 - (context + j) as i64).abs() <= 1))
                    .collect()
            }
            None => vec![false; t.s.len()],
        };
        let pick = |flag: bool| mean(u.iter().zip(&near_bounce).filter(|(_, &n)| n == flag).map(|(v, _)| *v));
        let (near_mean, far_mean) = if bounces.is_some() { (pick(true), pick(false)) } else { (None, None) };
        sequences.push(SeqUncertainty { video: t.video, s: t.s.clone(), u, near_bounce, near_mean, far_mean });
    }
    let (pooled_near, pooled_far, test) = if bounces.is_some() {
        let pooled = |flag: bool| {
            mean(sequences.iter().flat_map(|q| q.u.iter().zip(&q.near_bounce).filter(move |(_, &n)| n == flag).map(|(v, _)| *v)))
        };
        let (mut pos, mut neg, mut ties) = (0, 0, 0);
        for q in &sequences {
            if let (Some(a), Some(b)) = (q.near_mean, q.far_mean) {
                match a.partial_cmp(&b) {
                    Some(std::cmp::Ordering::Greater) => pos += 1,
                    Some(std::cmp::Ordering::Less) => neg += 1,
                    _ => ties += 1,
                }
            }
        }
        (pooled(true), pooled(false), Some(sign_test(pos, neg, ties)))
    } else {
        (None, None, None)
    };
    Ok(UncertaintyReport { context, sequences, pooled_near, pooled_far, sign_test: test })
}
