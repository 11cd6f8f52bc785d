//! The generative model: frame codec, three recurrent cores (predictor,
//! learned prior, inference network), the variance encoder for the
//! precision hierarchy, and the two rollout regimes.

mod codec;
mod cores;
mod noise;
mod rollout;

use candle_core::{DType, Device, Tensor};

pub use codec::FrameCodec;
pub use cores::{LatentCore, Predictor, VarianceEncoder, BETA_FLOOR, LOGVAR_MAX, LOGVAR_MIN};
pub use noise::{Noise, NoiseTape};
pub use rollout::{future_stream, FrameHook, Futures, RolloutRecord, RolloutState};

use crate::distributions::{GaussianParams, TruncNormalParams, TruncNormalSampler};
use crate::error::{NuqError, Result};
use crate::nn::{LstmState, ParamStore};
use crate::seeding;

/// Parameter-name prefixes of the four trainable groups.
pub const FRAME_GROUP: &[&str] = &["frame.", "predictor."];
pub const POSTERIOR_GROUP: &[&str] = &["posterior."];
pub const PRIOR_GROUP: &[&str] = &["prior."];
pub const VARIANCE_GROUP: &[&str] = &["variance."];

#[derive(Debug, Clone, PartialEq)]
pub struct ModelConfig {
    pub height: usize,
    pub width: usize,
    /// Stride-2 levels in the encoder; `height` and `width` must be
    /// divisible by `2^levels`.
    pub levels: usize,
    /// Channels at the first encoder level, doubled at each further level.
    pub base_width: usize,
    /// Size of the per-frame feature vector.
    pub feature_dim: usize,
    /// Frame-latent dimension.
    pub g: usize,
    /// Predictor hidden size (also the decoder input size).
    pub hidden: usize,
    pub predictor_layers: usize,
    /// Hidden size of the prior and inference networks.
    pub latent_hidden: usize,
    pub var_hidden: usize,
    pub s_min: f64,
    pub max_retries: usize,
    /// Stop gradients from the variance encoder into the prior.
    pub detach_prior_variance: bool,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            height: 48,
            width: 48,
            levels: 4,
            base_width: 64,
            feature_dim: 128,
            g: 10,
            hidden: 256,
            predictor_layers: 2,
            latent_hidden: 256,
            var_hidden: 32,
            s_min: 1e-3,
            max_retries: 100,
            detach_prior_variance: false,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("levels", self.levels),
            ("base_width", self.base_width),
            ("feature_dim", self.feature_dim),
            ("g", self.g),
            ("hidden", self.hidden),
            ("predictor_layers", self.predictor_layers),
            ("latent_hidden", self.latent_hidden),
            ("var_hidden", self.var_hidden),
            ("max_retries", self.max_retries),
        ];
        for (field, v) in positive {
            if v == 0 {
                return Err(NuqError::config(field, "must be at least 1"));
            }
        }
        let div = 1usize << self.levels;
        for (field, v) in [("height", self.height), ("width", self.width)] {
            if v == 0 || v % div != 0 {
                return Err(NuqError::config(field, format!("{v} is not divisible by 2^levels = {div}")));
            }
        }
        if !(self.s_min > 0.0 && self.s_min.is_finite()) {
            return Err(NuqError::config("s_min", "must be positive"));
        }
        Ok(())
    }

    /// The architecture fields that must agree between a checkpoint and
    /// the configuration loading it.
    pub fn echo(&self) -> Vec<(&'static str, String)> {
        vec![
            ("height", self.height.to_string()),
            ("width", self.width.to_string()),
            ("levels", self.levels.to_string()),
            ("base_width", self.base_width.to_string()),
            ("feature_dim", self.feature_dim.to_string()),
            ("g", self.g.to_string()),
            ("hidden", self.hidden.to_string()),
            ("predictor_layers", self.predictor_layers.to_string()),
            ("latent_hidden", self.latent_hidden.to_string()),
            ("var_hidden", self.var_hidden.to_string()),
        ]
    }

    pub fn sampler(&self) -> TruncNormalSampler {
        TruncNormalSampler { s_min: self.s_min, max_retries: self.max_retries }
    }
}

#[derive(Debug, Clone)]
pub struct NuqModel {
    pub cfg: ModelConfig,
    pub store: ParamStore,
    codec: FrameCodec,
    predictor: Predictor,
    prior: LatentCore,
    posterior: LatentCore,
    variance: VarianceEncoder,
}

impl NuqModel {
    pub fn new(cfg: &ModelConfig, dtype: DType, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let mut store = ParamStore::new(dtype);
        let mut rng = seeding::rng(seeding::mix(seed, seeding::TAG_INIT));
        let codec = FrameCodec::new(cfg, &mut store, &mut rng)?;
        let predictor = Predictor::new(cfg, &mut store, &mut rng)?;
        let prior = LatentCore::new(cfg, &mut store, &mut rng, "prior")?;
        let posterior = LatentCore::new(cfg, &mut store, &mut rng, "posterior")?;
        let variance = VarianceEncoder::new(cfg, &mut store, &mut rng)?;
        Ok(NuqModel { cfg: cfg.clone(), store, codec, predictor, prior, posterior, variance })
    }

    pub fn dtype(&self) -> DType {
        self.store.dtype()
    }

    pub fn codec(&self) -> &FrameCodec {
        &self.codec
    }

    pub fn predictor(&self) -> &Predictor {
        &self.predictor
    }

    /// Frames as a `[N, T, 1, H, W]` tensor in the model's dtype.
    pub fn frames_tensor(&self, frames: &[f32], n: usize, t: usize) -> Result<Tensor> {
        let (h, w) = (self.cfg.height, self.cfg.width);
        if frames.len() != n * t * h * w {
            return Err(NuqError::Shape(format!("{} pixels for {n}x{t}x{h}x{w}", frames.len())));
        }
        Ok(Tensor::from_slice(frames, (n, t, 1, h, w), &Device::Cpu)?.to_dtype(self.dtype())?)
    }

    pub fn encode_frame(&self, x: &Tensor, train: bool) -> Result<(Tensor, Vec<Tensor>)> {
        self.codec.encode(x, train)
    }

    pub fn decode_frame(&self, h: &Tensor, skips: &[Tensor], train: bool) -> Result<Tensor> {
        self.codec.decode(h, skips, train)
    }

    pub fn zero_latent_state(&self, batch: usize) -> Result<LstmState> {
        self.prior.zero_state(batch, self.dtype())
    }

    pub fn zero_predictor_state(&self, batch: usize) -> Result<Vec<LstmState>> {
        self.predictor.zero_state(batch, self.dtype())
    }

    /// Prior over `z_t` from the previous frame's feature.
    pub fn prior_step(&self, state: &LstmState, prev_feature: &Tensor) -> Result<(GaussianParams, LstmState)> {
        self.prior.step(state, prev_feature)
    }

    /// Approximate posterior over `z_t` from the current frame's feature.
    pub fn posterior_step(&self, state: &LstmState, feature: &Tensor) -> Result<(GaussianParams, LstmState)> {
        self.posterior.step(state, feature)
    }

    pub fn predictor_step(
        &self,
        state: &[LstmState],
        prev_feature: &Tensor,
        z: &Tensor,
    ) -> Result<(Tensor, Vec<LstmState>)> {
        self.predictor.step(state, prev_feature, z)
    }

    pub fn variance_encode(&self, prior_variance: &Tensor) -> Result<TruncNormalParams> {
        self.variance.forward(prior_variance)
    }
}
