//! Adam with optional global gradient-norm clipping and serializable state.

use std::collections::BTreeMap;

use candle_core::backprop::GradStore;
use candle_core::{DType, Tensor, Var};

use crate::error::{NuqError, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Rescale gradients whose global norm exceeds this; 0 disables.
    pub clip_norm: f64,
}

impl AdamConfig {
    pub fn new(lr: f64, clip_norm: f64) -> Self {
        AdamConfig { lr, beta1: 0.9, beta2: 0.999, eps: 1e-8, clip_norm }
    }
}

#[derive(Debug)]
pub struct Adam {
    cfg: AdamConfig,
    params: Vec<(String, Var)>,
    m: Vec<Tensor>,
    v: Vec<Tensor>,
    step: u64,
}

impl Adam {
    pub fn new(params: Vec<(String, Var)>, cfg: AdamConfig) -> Result<Self> {
        let m = params.iter().map(|(_, p)| p.zeros_like()).collect::<candle_core::Result<Vec<_>>>()?;
        Ok(Adam { cfg, v: m.clone(), m, params, step: 0 })
    }

    pub fn steps_taken(&self) -> u64 {
        self.step
    }

    /// One update from `grads`. Parameters without a gradient are left
    /// untouched. Returns the global gradient norm before clipping.
    pub fn step(&mut self, grads: &GradStore) -> Result<f64> {
        let found: Vec<Option<Tensor>> = self.params.iter().map(|(_, p)| grads.get(p).map(|g| g.detach())).collect();
        let mut sq = 0.0;
        for g in found.iter().flatten() {
            sq += g.sqr()?.sum_all()?.to_dtype(DType::F64)?.to_scalar::<f64>()?;
        }
        let norm = sq.sqrt();
        if !norm.is_finite() {
            return Err(NuqError::Numerical(format!("gradient norm is {norm}")));
        }
        let scale = if self.cfg.clip_norm > 0.0 && norm > self.cfg.clip_norm {
            self.cfg.clip_norm / norm
        } else {
            1.0
        };
        self.step += 1;
        let c = self.cfg;
        let bc1 = 1.0 - c.beta1.powi(self.step as i32);
        let bc2 = 1.0 - c.beta2.powi(self.step as i32);
        for (i, g) in found.into_iter().enumerate() {
            let Some(g) = g else { continue };
            let g = (g * scale)?;
            self.m[i] = ((&self.m[i] * c.beta1)? + (&g * (1.0 - c.beta1))?)?;
            self.v[i] = ((&self.v[i] * c.beta2)? + (g.sqr()? * (1.0 - c.beta2))?)?;
            let denom = ((&self.v[i] / bc2)?.sqrt()? + c.eps)?;
            let update = ((&self.m[i] / bc1)? / denom)?;
            let p = &self.params[i].1;
            p.set(&(p.as_tensor() - (update * c.lr)?)?)?;
        }
        Ok(norm)
    }

    /// Moment tensors keyed `m/<param>` and `v/<param>`.
    pub fn state(&self) -> BTreeMap<String, Tensor> {
        let mut out = BTreeMap::new();
        for (i, (name, _)) in self.params.iter().enumerate() {
            out.insert(format!("m/{name}"), self.m[i].clone());
            out.insert(format!("v/{name}"), self.v[i].clone());
        }
        out
    }

    pub fn load_state(&mut self, step: u64, state: &BTreeMap<String, Tensor>) -> Result<()> {
        for (i, (name, p)) in self.params.iter().enumerate() {
            for (key, slot) in [(format!("m/{name}"), &mut self.m[i]), (format!("v/{name}"), &mut self.v[i])] {
                let t = state
                    .get(&key)
                    .ok_or_else(|| NuqError::Incompatible(vec![format!("optimizer state missing {key}")]))?;
                if t.dims() != p.dims() {
                    return Err(NuqError::Incompatible(vec![format!("{key}: shape {:?} vs {:?}", t.dims(), p.dims())]));
                }
                *slot = t.to_dtype(p.dtype())?;
            }
        }
        self.step = step;
        Ok(())
    }
}
