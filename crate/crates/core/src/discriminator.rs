//! Recurrent sequence discriminator over k-frame windows and the
//! adversarial loss pair.

use candle_core::{DType, Tensor};
use rand::Rng as _;

use crate::error::{NuqError, Result};
use crate::nn::{leaky_relu, sigmoid, DownConv, Linear, LstmCell, ParamStore};
use crate::optim::Adam;
use crate::seeding::{self, Rng};

pub const SCORE_CLAMP: f64 = 1e-7;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Origin {
    Real,
    Generated,
}

/// `k` contiguous frames per row: `[N, k, 1, H, W]`.
#[derive(Debug, Clone)]
pub struct FrameWindow {
    pub frames: Tensor,
    pub origin: Origin,
    pub starts: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DiscConfig {
    pub height: usize,
    pub width: usize,
    pub levels: usize,
    pub base_width: usize,
    pub hidden: usize,
    pub k: usize,
}

#[derive(Debug, Clone)]
pub struct SeqDiscriminator {
    pub cfg: DiscConfig,
    pub store: ParamStore,
    convs: Vec<DownConv>,
    embed: Linear,
    cell: LstmCell,
    head: Linear,
}

impl SeqDiscriminator {
    pub fn new(cfg: &DiscConfig, dtype: DType, seed: u64) -> Result<Self> {
        if cfg.k == 0 {
            return Err(NuqError::config("k", "must be at least 1"));
        }
        let div = 1usize << cfg.levels;
        if cfg.levels == 0 || cfg.height % div != 0 || cfg.width % div != 0 {
            return Err(NuqError::config("levels", format!("frame size must be divisible by {div}")));
        }
        let mut store = ParamStore::new(dtype);
        let mut rng = seeding::rng(seeding::mix(seed, seeding::TAG_DISC_INIT));
        let mut convs = Vec::new();
        let mut input = 1;
        for i in 0..cfg.levels {
            let w = cfg.base_width << i;
            convs.push(DownConv::new(&mut store, &mut rng, &format!("disc.conv{i}"), input, w)?);
            input = w;
        }
        let flat = input * (cfg.height >> cfg.levels) * (cfg.width >> cfg.levels);
        let embed = Linear::new(&mut store, &mut rng, "disc.embed", flat, cfg.hidden)?;
        let cell = LstmCell::new(&mut store, &mut rng, "disc.lstm", cfg.hidden, cfg.hidden)?;
        let head = Linear::new(&mut store, &mut rng, "disc.head", cfg.hidden, 1)?;
        Ok(SeqDiscriminator { cfg: cfg.clone(), store, convs, embed, cell, head })
    }

    /// Probability that each window is real, `[N]`.
    pub fn score(&self, window: &FrameWindow) -> Result<Tensor> {
        let (n, k, c, h, w) = window.frames.dims5()?;
        if k != self.cfg.k || (c, h, w) != (1, self.cfg.height, self.cfg.width) {
            return Err(NuqError::Shape(format!(
                "discriminator expects [N, {}, 1, {}, {}], got {:?}",
                self.cfg.k,
                self.cfg.height,
                self.cfg.width,
                window.frames.dims()
            )));
        }
        let frames = window.frames.to_dtype(self.store.dtype())?;
        let mut x = frames.reshape((n * k, c, h, w))?;
        for conv in &self.convs {
            x = leaky_relu(&conv.forward(&x)?)?;
        }
        let e = leaky_relu(&self.embed.forward(&x.flatten_from(1)?)?)?.reshape((n, k, ()))?;
        let mut state = self.cell.zero_state(n, self.store.dtype())?;
        for t in 0..k {
            state = self.cell.step(&e.narrow(1, t, 1)?.squeeze(1)?, &state)?;
        }
        Ok(sigmoid(&self.head.forward(&state.h)?)?.squeeze(1)?)
    }
}

/// One window of length `k` per row of a `[B, T, 1, H, W]` tensor, with a
/// uniformly random start.
pub fn sample_windows(frames: &Tensor, k: usize, origin: Origin, rng: &mut Rng) -> Result<FrameWindow> {
    let (b, t, _, _, _) = frames.dims5()?;
    if k == 0 || t < k {
        return Err(NuqError::config("k", format!("window of {k} frames does not fit in {t}")));
    }
    let starts: Vec<usize> = (0..b).map(|_| rng.random_range(0..=t - k)).collect();
    let rows = starts
        .iter()
        .enumerate()
        .map(|(i, &s)| frames.narrow(0, i, 1)?.narrow(1, s, k))
        .collect::<candle_core::Result<Vec<_>>>()?;
    Ok(FrameWindow { frames: Tensor::cat(&rows, 0)?, origin, starts })
}

/// Real windows from anywhere in the ground-truth sequence.
pub fn sample_real_windows(frames: &Tensor, k: usize, rng: &mut Rng) -> Result<FrameWindow> {
    sample_windows(frames, k, Origin::Real, rng)
}

/// `(L_D, generator term)` where
/// `L_D = −mean log D(real) − mean log(1 − D(fake))` and the generator term
/// is the part of `L_D` that depends on generated frames.
pub fn gan_losses(real_scores: &Tensor, fake_scores: &Tensor) -> Result<(Tensor, Tensor)> {
    if real_scores.elem_count() == 0 || fake_scores.elem_count() == 0 {
        return Err(NuqError::config("k", "no windows to score"));
    }
    let hi = 1.0 - SCORE_CLAMP;
    let real = real_scores.clamp(SCORE_CLAMP, hi)?.log()?.mean_all()?.neg()?;
    let fake = ((fake_scores.clamp(SCORE_CLAMP, hi)?.neg()? + 1.0)?).log()?.mean_all()?.neg()?;
    Ok(((&real + &fake)?, fake))
}

/// One discriminator update on detached windows. Returns `L_D` before the
/// update.
pub fn disc_update(disc: &SeqDiscriminator, opt: &mut Adam, real: &FrameWindow, fake: &FrameWindow) -> Result<f64> {
    let fake = FrameWindow { frames: fake.frames.detach(), ..fake.clone() };
    let real = FrameWindow { frames: real.frames.detach(), ..real.clone() };
    let (ld, _) = gan_losses(&disc.score(&real)?, &disc.score(&fake)?)?;
    let value = ld.to_dtype(DType::F64)?.to_scalar::<f64>()?;
    if !value.is_finite() {
        return Err(NuqError::Numerical(format!("discriminator loss is {value}")));
    }
    opt.step(&ld.backward()?)?;
    Ok(value)
}
