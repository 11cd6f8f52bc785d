use candle_core::Tensor;

use super::ModelConfig;
use crate::error::{NuqError, Result};
use crate::nn::{leaky_relu, sigmoid, BatchNorm, DownConv, Linear, ParamStore, UpConv};
use crate::seeding::Rng;

/// Convolutional frame encoder with a mirrored, skip-connected decoder.
#[derive(Debug, Clone)]
pub struct FrameCodec {
    levels: usize,
    height: usize,
    width: usize,
    widths: Vec<usize>,
    down: Vec<(DownConv, BatchNorm)>,
    to_feature: Linear,
    from_hidden: (Linear, BatchNorm),
    up: Vec<(UpConv, Option<BatchNorm>)>,
}

impl FrameCodec {
    pub fn new(cfg: &ModelConfig, store: &mut ParamStore, rng: &mut Rng) -> Result<Self> {
        let widths: Vec<usize> = (0..cfg.levels).map(|i| cfg.base_width << i).collect();
        let (bh, bw) = (cfg.height >> cfg.levels, cfg.width >> cfg.levels);
        let mut down = Vec::new();
        let mut input = 1;
        for (i, &w) in widths.iter().enumerate() {
            down.push((
                DownConv::new(store, rng, &format!("frame.enc.{i}.conv"), input, w)?,
                BatchNorm::new(store, rng, &format!("frame.enc.{i}.bn"), w)?,
            ));
            input = w;
        }
        let top = widths[cfg.levels - 1];
        let to_feature = Linear::new(store, rng, "frame.enc.out", top * bh * bw, cfg.feature_dim)?;
        let from_hidden = (
            Linear::new(store, rng, "frame.dec.in", cfg.hidden, top * bh * bw)?,
            BatchNorm::new(store, rng, "frame.dec.in.bn", top * bh * bw)?,
        );
        let mut up = Vec::new();
        let mut current = top;
        for i in (0..cfg.levels).rev() {
            let out = if i == 0 { 1 } else { widths[i - 1] };
            let conv = UpConv::new(store, rng, &format!("frame.dec.{i}.deconv"), current + widths[i], out)?;
            let bn = if i == 0 {
                None
            } else {
                Some(BatchNorm::new(store, rng, &format!("frame.dec.{i}.bn"), out)?)
            };
            up.push((conv, bn));
            current = out;
        }
        Ok(FrameCodec {
            levels: cfg.levels,
            height: cfg.height,
            width: cfg.width,
            widths,
            down,
            to_feature,
            from_hidden,
            up,
        })
    }

    /// Expected skip shape `[channels, h, w]` at each level.
    pub fn skip_shapes(&self) -> Vec<[usize; 3]> {
        (0..self.levels)
            .map(|i| [self.widths[i], self.height >> (i + 1), self.width >> (i + 1)])
            .collect()
    }

    /// `[N, 1, H, W]` → (`[N, feature_dim]` in (-1,1), one skip per level).
    pub fn encode(&self, x: &Tensor, train: bool) -> Result<(Tensor, Vec<Tensor>)> {
        let (_, c, h, w) = x.dims4()?;
        let div = 1usize << self.levels;
        if c != 1 || h % div != 0 || w % div != 0 || h != self.height || w != self.width {
            return Err(NuqError::Shape(format!(
                "encoder configured for 1x{}x{} with {} levels (divisible by {div}), got {:?}",
                self.height,
                self.width,
                self.levels,
                x.dims()
            )));
        }
        let mut skips = Vec::with_capacity(self.levels);
        let mut cur = x.clone();
        for (conv, bn) in &self.down {
            cur = leaky_relu(&bn.forward(&conv.forward(&cur)?, train)?)?;
            skips.push(cur.clone());
        }
        let feature = self.to_feature.forward(&cur.flatten_from(1)?)?.tanh()?;
        Ok((feature, skips))
    }

    /// `[N, hidden]` plus skips → `[N, 1, H, W]` in [0,1].
    pub fn decode(&self, h: &Tensor, skips: &[Tensor], train: bool) -> Result<Tensor> {
        let n = h.dims()[0];
        let shapes = self.skip_shapes();
        if skips.len() != self.levels {
            return Err(NuqError::Shape(format!("expected {} skips, got {}", self.levels, skips.len())));
        }
        for (s, want) in skips.iter().zip(&shapes) {
            if s.dims() != [n, want[0], want[1], want[2]] {
                return Err(NuqError::Shape(format!("skip {:?} does not match [{n}, {want:?}]", s.dims())));
            }
        }
        let (lin, bn) = &self.from_hidden;
        let top = shapes[self.levels - 1];
        let mut cur = leaky_relu(&bn.forward(&lin.forward(h)?, train)?)?.reshape((n, top[0], top[1], top[2]))?;
        for (level, (conv, bn)) in (0..self.levels).rev().zip(&self.up) {
            let joined = Tensor::cat(&[&cur, &skips[level]], 1)?;
            cur = conv.forward(&joined)?;
            cur = match bn {
                Some(bn) => leaky_relu(&bn.forward(&cur, train)?)?,
                None => sigmoid(&cur)?,
            };
        }
        Ok(cur)
    }
}
