use candle_core::{DType, Tensor};

use super::{Noise, NuqModel};
use crate::distributions::{reparam_gaussian_sample, GaussianParams, TruncNormalParams};
use crate::error::{NuqError, Result};
use crate::nn::LstmState;
use crate::seeding::{self, Rng};

/// Applied to each decoded frame (predicted-step index, frame) before it
/// is recorded and, during generation, fed back.
pub type FrameHook<'a> = &'a dyn Fn(usize, &Tensor) -> Result<Tensor>;

#[derive(Debug, Clone)]
pub struct RolloutState {
    pub predictor: Vec<LstmState>,
    pub prior: LstmState,
    pub posterior: Option<LstmState>,
}

/// Everything a rollout produced for the predicted steps `F..T`, stacked
/// along dim 1 (`P = T - F` steps).
#[derive(Debug, Clone)]
pub struct RolloutRecord {
    pub context: usize,
    /// `[N, P, 1, H, W]`.
    pub frames: Tensor,
    /// `[N, P, g]`.
    pub prior: GaussianParams,
    /// `[N, P, g]`; absent for generation.
    pub posterior: Option<GaussianParams>,
    pub z: Tensor,
    /// `[N, P]`.
    pub scale: TruncNormalParams,
    pub s: Tensor,
    /// Precision `1 / s`, `[N, P]`.
    pub b: Tensor,
    pub last: RolloutState,
}

impl RolloutRecord {
    pub fn steps(&self) -> usize {
        self.frames.dims()[1]
    }

    pub fn frame(&self, step: usize) -> Result<Tensor> {
        Ok(self.frames.narrow(1, step, 1)?.squeeze(1)?)
    }
}

fn to_f64(t: &Tensor) -> Result<Vec<f64>> {
    Ok(t.flatten_all()?.to_dtype(DType::F64)?.to_vec1::<f64>()?)
}

fn noise_tensor(values: Vec<f64>, like: &Tensor) -> Result<Tensor> {
    Ok(Tensor::from_vec(values, like.dims(), like.device())?.to_dtype(like.dtype())?)
}

struct StepOut {
    h: Tensor,
    prior: GaussianParams,
    posterior: Option<GaussianParams>,
    z: Tensor,
    scale: TruncNormalParams,
    s: Tensor,
}

fn stack_gaussians(parts: &[GaussianParams]) -> Result<GaussianParams> {
    let m: Vec<&Tensor> = parts.iter().map(|p| &p.mean).collect();
    let v: Vec<&Tensor> = parts.iter().map(|p| &p.variance).collect();
    GaussianParams::new(Tensor::stack(&m, 1)?, Tensor::stack(&v, 1)?)
}

impl NuqModel {
    /// Draws `s_t` for one step from the prior variance.
    fn sample_scale(&self, prior: &GaussianParams, noise: &mut Noise) -> Result<(TruncNormalParams, Tensor)> {
        let var = if self.cfg.detach_prior_variance {
            prior.variance.detach()
        } else {
            prior.variance.clone()
        };
        let scale = self.variance_encode(&var)?;
        let (alpha, beta) = scale.values()?;
        let sampler = self.cfg.sampler();
        let eps = noise.trunc_eps(&sampler, &alpha, &beta)?;
        let s = sampler.replay(&scale, &eps)?;
        Ok((scale, s))
    }

    fn finish(
        &self,
        context: usize,
        frames: Vec<Tensor>,
        steps: Vec<StepOut>,
        last: RolloutState,
    ) -> Result<RolloutRecord> {
        let prior: Vec<GaussianParams> = steps.iter().map(|s| s.prior.clone()).collect();
        let posterior = match steps.iter().map(|s| s.posterior.clone()).collect::<Option<Vec<_>>>() {
            Some(p) => Some(stack_gaussians(&p)?),
            None => None,
        };
        let z: Vec<&Tensor> = steps.iter().map(|s| &s.z).collect();
        let alpha: Vec<&Tensor> = steps.iter().map(|s| &s.scale.alpha).collect();
        let beta: Vec<&Tensor> = steps.iter().map(|s| &s.scale.beta).collect();
        let s: Vec<&Tensor> = steps.iter().map(|s| &s.s).collect();
        let s = Tensor::stack(&s, 1)?;
        Ok(RolloutRecord {
            context,
            frames: Tensor::stack(&frames, 1)?,
            prior: stack_gaussians(&prior)?,
            posterior,
            z: Tensor::stack(&z, 1)?,
            scale: TruncNormalParams::new(Tensor::stack(&alpha, 1)?, Tensor::stack(&beta, 1)?)?,
            b: s.recip()?,
            s,
            last,
        })
    }

    /// Teacher-forced rollout over a `[B, T, 1, H, W]` window: context
    /// frames warm up every recurrent core, then each predicted step draws
    /// `z_t` from the inference network and `s_t` from the variance encoder,
    /// with the predictor always reading the ground-truth previous frame.
    pub fn rollout_train(&self, frames: &Tensor, context: usize, noise: &mut Noise) -> Result<RolloutRecord> {
        self.rollout_train_hooked(frames, context, noise, None)
    }

    pub fn rollout_train_hooked(
        &self,
        frames: &Tensor,
        context: usize,
        noise: &mut Noise,
        hook: Option<FrameHook<'_>>,
    ) -> Result<RolloutRecord> {
        let (b, t, c, h, w) = frames.dims5()?;
        if context == 0 || context >= t {
            return Err(NuqError::config("F", format!("need 1 <= F < {t}, got {context}")));
        }
        let dtype = self.dtype();
        // Every encoder input is ground truth, so all frames go through the
        // encoder in one batch.
        let (feat, skips) = self.encode_frame(&frames.reshape((b * t, c, h, w))?, true)?;
        let feat = feat.reshape((b, t, ()))?;
        let skips: Vec<Tensor> = skips
            .iter()
            .map(|s| {
                let (_, sc, sh, sw) = s.dims4()?;
                Ok(s.reshape((b, t, sc, sh, sw))?.narrow(1, context - 1, 1)?.squeeze(1)?)
            })
            .collect::<Result<_>>()?;

        let mut pred_state = self.zero_predictor_state(b)?;
        let mut prior_state = self.prior.zero_state(b, dtype)?;
        let mut post_state = self.posterior.zero_state(b, dtype)?;
        let mut steps = Vec::with_capacity(t - context);
        for step in 1..t {
            let prev = feat.narrow(1, step - 1, 1)?.squeeze(1)?;
            let cur = feat.narrow(1, step, 1)?.squeeze(1)?;
            let (q, ps) = self.posterior_step(&post_state, &cur)?;
            let (p, pr) = self.prior_step(&prior_state, &prev)?;
            post_state = ps;
            prior_state = pr;
            let eps = noise_tensor(noise.gaussian(q.mean.elem_count())?, &q.mean)?;
            let z = reparam_gaussian_sample(&q, &eps)?;
            let (out, st) = self.predictor_step(&pred_state, &prev, &z)?;
            pred_state = st;
            if step >= context {
                let (scale, s) = self.sample_scale(&p, noise)?;
                steps.push(StepOut { h: out, prior: p, posterior: Some(q), z, scale, s });
            }
        }

        // Decoder inputs do not depend on earlier predictions either.
        let p = steps.len();
        let hs: Vec<&Tensor> = steps.iter().map(|s| &s.h).collect();
        let hs = Tensor::stack(&hs, 1)?.reshape((b * p, ()))?;
        let rep_skips: Vec<Tensor> = skips
            .iter()
            .map(|s| {
                let (_, sc, sh, sw) = s.dims4()?;
                Ok(s.unsqueeze(1)?.broadcast_as((b, p, sc, sh, sw))?.reshape((b * p, sc, sh, sw))?)
            })
            .collect::<Result<_>>()?;
        let decoded = self.decode_frame(&hs, &rep_skips, true)?.reshape((b, p, c, h, w))?;
        let mut out_frames = Vec::with_capacity(p);
        for j in 0..p {
            let f = decoded.narrow(1, j, 1)?.squeeze(1)?;
            out_frames.push(match hook {
                Some(hook) => hook(j, &f)?,
                None => f,
            });
        }
        let last = RolloutState { predictor: pred_state, prior: prior_state, posterior: Some(post_state) };
        self.finish(context, out_frames, steps, last)
    }

    /// Autoregressive rollout from `[N, F, 1, H, W]` context frames: the
    /// inference network is unused, `z_t` comes from the learned prior and
    /// the predictor reads its own previous output. Batch norm runs in
    /// evaluation mode.
    pub fn rollout_generate(&self, context: &Tensor, steps: usize, noise: &mut Noise) -> Result<RolloutRecord> {
        self.rollout_generate_hooked(context, steps, noise, None)
    }

    pub fn rollout_generate_hooked(
        &self,
        context: &Tensor,
        steps: usize,
        noise: &mut Noise,
        hook: Option<FrameHook<'_>>,
    ) -> Result<RolloutRecord> {
        if steps == 0 {
            return Err(NuqError::config("steps", "must be at least 1"));
        }
        let (n, f, c, h, w) = context.dims5()?;
        if f == 0 {
            return Err(NuqError::config("F", "need at least one context frame"));
        }
        let dtype = self.dtype();
        let (feat, skips) = self.encode_frame(&context.reshape((n * f, c, h, w))?, false)?;
        let feat = feat.reshape((n, f, ()))?;
        let skips: Vec<Tensor> = skips
            .iter()
            .map(|s| {
                let (_, sc, sh, sw) = s.dims4()?;
                Ok(s.reshape((n, f, sc, sh, sw))?.narrow(1, f - 1, 1)?.squeeze(1)?)
            })
            .collect::<Result<_>>()?;

        let mut pred_state = self.zero_predictor_state(n)?;
        let mut prior_state = self.prior.zero_state(n, dtype)?;
        let mut prev = feat.narrow(1, 0, 1)?.squeeze(1)?;
        let mut outs = Vec::with_capacity(steps);
        let mut frames = Vec::with_capacity(steps);
        for step in 1..f + steps {
            let (p, pr) = self.prior_step(&prior_state, &prev)?;
            prior_state = pr;
            let eps = noise_tensor(noise.gaussian(p.mean.elem_count())?, &p.mean)?;
            let z = reparam_gaussian_sample(&p, &eps)?;
            let (out, st) = self.predictor_step(&pred_state, &prev, &z)?;
            pred_state = st;
            if step < f {
                prev = feat.narrow(1, step, 1)?.squeeze(1)?;
                continue;
            }
            let (scale, s) = self.sample_scale(&p, noise)?;
            let mut frame = self.decode_frame(&out, &skips, false)?;
            if let Some(hook) = hook {
                frame = hook(frames.len(), &frame)?;
            }
            prev = self.encode_frame(&frame, false)?.0;
            frames.push(frame);
            outs.push(StepOut { h: out, prior: p, posterior: None, z, scale, s });
        }
        let last = RolloutState { predictor: pred_state, prior: prior_state, posterior: None };
        self.finish(f, frames, outs, last)
    }

    /// `num_futures` futures for each of `N` videos (`context` is
    /// `[N, F, 1, H, W]`). Future `k` of the video with id `video_ids[i]`
    /// uses its own noise stream, so the first `k` futures are the same no
    /// matter how many are requested.
    pub fn generate_futures(
        &self,
        context: &Tensor,
        steps: usize,
        num_futures: usize,
        seed: u64,
        video_ids: &[u64],
    ) -> Result<Futures> {
        if num_futures == 0 {
            return Err(NuqError::config("K", "must be at least 1"));
        }
        let (n, f, c, h, w) = context.dims5()?;
        if video_ids.len() != n {
            return Err(NuqError::Shape(format!("{} video ids for {n} videos", video_ids.len())));
        }
        let rows = context
            .unsqueeze(1)?
            .broadcast_as((n, num_futures, f, c, h, w))?
            .reshape((n * num_futures, f, c, h, w))?;
        let rngs = video_ids
            .iter()
            .flat_map(|&v| (0..num_futures).map(move |k| future_stream(seed, v, k as u64)))
            .collect();
        let mut noise = Noise::per_row(rngs);
        let rec = self.rollout_generate(&rows, steps, &mut noise)?;
        Ok(Futures {
            num_videos: n,
            num_futures,
            steps,
            height: h,
            width: w,
            frames: rec.frames.flatten_all()?.to_dtype(DType::F32)?.to_vec1::<f32>()?,
            s: to_f64(&rec.s)?,
        })
    }
}

/// Noise stream for future `k` of video `video`.
pub fn future_stream(seed: u64, video: u64, k: u64) -> Rng {
    seeding::substream(seeding::mix(seed, video), k)
}

/// Generated futures, frames `[N, K, P, H, W]` in [0,1] and scale traces
/// `[N, K, P]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Futures {
    pub num_videos: usize,
    pub num_futures: usize,
    pub steps: usize,
    pub height: usize,
    pub width: usize,
    pub frames: Vec<f32>,
    pub s: Vec<f64>,
}

impl Futures {
    pub fn frame(&self, video: usize, future: usize, step: usize) -> &[f32] {
        let px = self.height * self.width;
        let off = ((video * self.num_futures + future) * self.steps + step) * px;
        &self.frames[off..off + px]
    }

    pub fn trace(&self, video: usize, future: usize) -> &[f64] {
        let off = (video * self.num_futures + future) * self.steps;
        &self.s[off..off + self.steps]
    }
}
