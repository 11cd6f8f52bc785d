use candle_core::{DType, Tensor, D};

use super::ModelConfig;
use crate::distributions::{GaussianParams, TruncNormalParams};
use crate::error::{NuqError, Result};
use crate::nn::{leaky_relu, softplus, Linear, LstmCell, LstmState, ParamStore};
use crate::seeding::Rng;

pub const LOGVAR_MIN: f64 = -10.0;
pub const LOGVAR_MAX: f64 = 10.0;
pub const BETA_FLOOR: f64 = 1e-4;

/// One-layer recurrent network with Gaussian output heads; used for both
/// the learned prior and the inference network.
#[derive(Debug, Clone)]
pub struct LatentCore {
    embed: Linear,
    cell: LstmCell,
    mean: Linear,
    logvar: Linear,
}

impl LatentCore {
    pub fn new(cfg: &ModelConfig, store: &mut ParamStore, rng: &mut Rng, name: &str) -> Result<Self> {
        let h = cfg.latent_hidden;
        Ok(LatentCore {
            embed: Linear::new(store, rng, &format!("{name}.embed"), cfg.feature_dim, h)?,
            cell: LstmCell::new(store, rng, &format!("{name}.lstm"), h, h)?,
            mean: Linear::new(store, rng, &format!("{name}.mean"), h, cfg.g)?,
            logvar: Linear::new(store, rng, &format!("{name}.logvar"), h, cfg.g)?,
        })
    }

    pub fn zero_state(&self, batch: usize, dtype: DType) -> Result<LstmState> {
        self.cell.zero_state(batch, dtype)
    }

    pub fn step(&self, state: &LstmState, feature: &Tensor) -> Result<(GaussianParams, LstmState)> {
        let next = self.cell.step(&self.embed.forward(feature)?, state)?;
        let mean = self.mean.forward(&next.h)?;
        let logvar = self.logvar.forward(&next.h)?.clamp(LOGVAR_MIN, LOGVAR_MAX)?;
        Ok((GaussianParams::from_log_variance(mean, logvar)?, next))
    }
}

/// Multi-layer recurrent frame predictor over `[feature, z]`.
#[derive(Debug, Clone)]
pub struct Predictor {
    embed: Linear,
    cells: Vec<LstmCell>,
    g: usize,
}

impl Predictor {
    pub fn new(cfg: &ModelConfig, store: &mut ParamStore, rng: &mut Rng) -> Result<Self> {
        let embed = Linear::new(store, rng, "predictor.embed", cfg.feature_dim + cfg.g, cfg.hidden)?;
        let cells = (0..cfg.predictor_layers)
            .map(|i| LstmCell::new(store, rng, &format!("predictor.lstm{i}"), cfg.hidden, cfg.hidden))
            .collect::<Result<_>>()?;
        Ok(Predictor { embed, cells, g: cfg.g })
    }

    pub fn input_dim(&self) -> usize {
        self.embed.in_dim()
    }

    pub fn zero_state(&self, batch: usize, dtype: DType) -> Result<Vec<LstmState>> {
        self.cells.iter().map(|c| c.zero_state(batch, dtype)).collect()
    }

    /// Returns the top layer's hidden state and the new per-layer states.
    pub fn step(&self, state: &[LstmState], feature: &Tensor, z: &Tensor) -> Result<(Tensor, Vec<LstmState>)> {
        if z.dims().last() != Some(&self.g) {
            return Err(NuqError::Shape(format!("predictor expects z of dim {}, got {:?}", self.g, z.dims())));
        }
        let mut x = self.embed.forward(&Tensor::cat(&[feature, z], D::Minus1)?)?;
        let mut next = Vec::with_capacity(self.cells.len());
        for (cell, s) in self.cells.iter().zip(state) {
            let n = cell.step(&x, s)?;
            x = n.h.clone();
            next.push(n);
        }
        Ok((x, next))
    }
}

/// Two-layer perceptron from the prior's variance diagonal to the
/// truncated-normal parameters of the scale variable.
#[derive(Debug, Clone)]
pub struct VarianceEncoder {
    hidden: Linear,
    out: Linear,
}

impl VarianceEncoder {
    pub fn new(cfg: &ModelConfig, store: &mut ParamStore, rng: &mut Rng) -> Result<Self> {
        Ok(VarianceEncoder {
            hidden: Linear::new(store, rng, "variance.hidden", cfg.g, cfg.var_hidden)?,
            out: Linear::new(store, rng, "variance.out", cfg.var_hidden, 2)?,
        })
    }

    /// `[N, g]` → parameters of shape `[N]`.
    pub fn forward(&self, variance: &Tensor) -> Result<TruncNormalParams> {
        let v = variance.flatten_all()?.to_dtype(DType::F64)?.to_vec1::<f64>()?;
        if let Some(bad) = v.iter().find(|x| !x.is_finite()) {
            return Err(NuqError::Domain(format!("variance encoder input must be finite, got {bad}")));
        }
        let o = self.out.forward(&leaky_relu(&self.hidden.forward(variance)?)?)?;
        let alpha = softplus(&o.narrow(D::Minus1, 0, 1)?.squeeze(D::Minus1)?)?;
        let beta = (softplus(&o.narrow(D::Minus1, 1, 1)?.squeeze(D::Minus1)?)? + BETA_FLOOR)?;
        TruncNormalParams::new(alpha, beta)
    }
}
