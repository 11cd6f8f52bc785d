//! Minimal layer set on top of candle tensors: a named parameter store with
//! seeded initialization, dense/conv/deconv layers, batch normalization and
//! an LSTM cell.

use std::collections::BTreeMap;
use std::hash::Hasher;

use candle_core::{DType, Device, Tensor, Var, D};
use rand::Rng as _;

use crate::error::{NuqError, Result};
use crate::seeding::Rng;

#[derive(Debug, Clone, Copy)]
pub enum Init {
    /// U(-bound, bound).
    Uniform(f64),
    Const(f64),
}

#[derive(Debug, Clone)]
pub struct Entry {
    pub var: Var,
    /// Buffers (batch-norm running statistics) are saved but never optimized.
    pub trainable: bool,
}

/// Named parameters, ordered by name. Layers hold clones of the `Var`s, so
/// updates through the store are seen by the layers.
#[derive(Debug, Clone)]
pub struct ParamStore {
    dtype: DType,
    entries: BTreeMap<String, Entry>,
}

impl ParamStore {
    pub fn new(dtype: DType) -> Self {
        ParamStore { dtype, entries: BTreeMap::new() }
    }

    pub fn dtype(&self) -> DType {
        self.dtype
    }

    pub fn add(&mut self, name: &str, shape: &[usize], init: Init, trainable: bool, rng: &mut Rng) -> Result<Var> {
        assert!(!self.entries.contains_key(name), "duplicate parameter {name}");
        let n: usize = shape.iter().product();
        let values: Vec<f64> = match init {
            Init::Uniform(bound) => (0..n).map(|_| rng.random_range(-bound..bound)).collect(),
            Init::Const(c) => vec![c; n],
        };
        let t = Tensor::from_vec(values, shape, &Device::Cpu)?.to_dtype(self.dtype)?;
        let var = Var::from_tensor(&t)?;
        self.entries.insert(name.to_string(), Entry { var: var.clone(), trainable });
        Ok(var)
    }

    pub fn get(&self, name: &str) -> Option<&Entry> {
        self.entries.get(name)
    }

    pub fn entries(&self) -> impl Iterator<Item = (&String, &Entry)> {
        self.entries.iter()
    }

    /// Trainable parameters whose name starts with one of `prefixes`
    /// (all trainable parameters when `prefixes` is empty).
    pub fn trainable(&self, prefixes: &[&str]) -> Vec<(String, Var)> {
        self.entries
            .iter()
            .filter(|(k, e)| e.trainable && (prefixes.is_empty() || prefixes.iter().any(|p| k.starts_with(p))))
            .map(|(k, e)| (k.clone(), e.var.clone()))
            .collect()
    }

    pub fn num_params(&self, prefixes: &[&str]) -> usize {
        self.trainable(prefixes).iter().map(|(_, v)| v.elem_count()).sum()
    }

    /// Order-sensitive hash of every value under `prefixes`, for checking
    /// which parameters an update touched.
    pub fn fingerprint(&self, prefixes: &[&str]) -> Result<u64> {
        let mut h = std::collections::hash_map::DefaultHasher::new();
        for (name, e) in &self.entries {
            if !prefixes.is_empty() && !prefixes.iter().any(|p| name.starts_with(p)) {
                continue;
            }
            h.write(name.as_bytes());
            for v in e.var.as_tensor().flatten_all()?.to_dtype(DType::F64)?.to_vec1::<f64>()? {
                h.write_u64(v.to_bits());
            }
        }
        Ok(h.finish())
    }

    /// Overwrites a parameter's value, checking shape.
    pub fn assign(&self, name: &str, value: &Tensor) -> Result<()> {
        let e = self
            .entries
            .get(name)
            .ok_or_else(|| NuqError::Incompatible(vec![format!("unknown parameter {name}")]))?;
        if e.var.dims() != value.dims() {
            return Err(NuqError::Shape(format!(
                "{name}: expected {:?}, got {:?}",
                e.var.dims(),
                value.dims()
            )));
        }
        e.var.set(&value.to_dtype(self.dtype)?.contiguous()?)?;
        Ok(())
    }

    pub fn values(&self) -> Result<BTreeMap<String, Tensor>> {
        self.entries
            .iter()
            .map(|(k, e)| Ok((k.clone(), e.var.as_tensor().copy()?)))
            .collect()
    }
}

pub fn leaky_relu(x: &Tensor) -> Result<Tensor> {
    Ok((x.relu()? - (x.neg()?.relu()? * 0.2)?)?)
}

pub fn sigmoid(x: &Tensor) -> Result<Tensor> {
    Ok((((x * 0.5)?.tanh()? + 1.0)? * 0.5)?)
}

/// log(1 + e^x), written to stay finite for large |x|.
pub fn softplus(x: &Tensor) -> Result<Tensor> {
    let tail = ((x.abs()?.neg()?.exp()? + 1.0)?).log()?;
    Ok((x.relu()? + tail)?)
}

#[derive(Debug, Clone)]
pub struct Linear {
    w: Var,
    b: Var,
}

impl Linear {
    pub fn new(store: &mut ParamStore, rng: &mut Rng, name: &str, input: usize, output: usize) -> Result<Self> {
        let bound = 1.0 / (input as f64).sqrt();
        Ok(Linear {
            w: store.add(&format!("{name}.w"), &[input, output], Init::Uniform(bound), true, rng)?,
            b: store.add(&format!("{name}.b"), &[output], Init::Uniform(bound), true, rng)?,
        })
    }

    pub fn in_dim(&self) -> usize {
        self.w.dims()[0]
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        if x.dims().last() != Some(&self.in_dim()) {
            return Err(NuqError::Shape(format!("linear expects {} inputs, got {:?}", self.in_dim(), x.dims())));
        }
        Ok(x.matmul(self.w.as_tensor())?.broadcast_add(self.b.as_tensor())?)
    }
}

/// 4×4 kernel, stride 2, padding 1: halves the spatial size.
#[derive(Debug, Clone)]
pub struct DownConv {
    w: Var,
    b: Var,
}

impl DownConv {
    pub fn new(store: &mut ParamStore, rng: &mut Rng, name: &str, input: usize, output: usize) -> Result<Self> {
        let bound = 1.0 / ((input * 16) as f64).sqrt();
        Ok(DownConv {
            w: store.add(&format!("{name}.w"), &[output, input, 4, 4], Init::Uniform(bound), true, rng)?,
            b: store.add(&format!("{name}.b"), &[output], Init::Uniform(bound), true, rng)?,
        })
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let y = x.conv2d(self.w.as_tensor(), 1, 2, 1, 1)?;
        Ok(y.broadcast_add(&self.b.as_tensor().reshape((1, (), 1, 1))?)?)
    }
}

/// Transposed 4×4 kernel, stride 2, padding 1: doubles the spatial size.
#[derive(Debug, Clone)]
pub struct UpConv {
    w: Var,
    b: Var,
}

impl UpConv {
    pub fn new(store: &mut ParamStore, rng: &mut Rng, name: &str, input: usize, output: usize) -> Result<Self> {
        let bound = 1.0 / ((output * 16) as f64).sqrt();
        Ok(UpConv {
            w: store.add(&format!("{name}.w"), &[input, output, 4, 4], Init::Uniform(bound), true, rng)?,
            b: store.add(&format!("{name}.b"), &[output], Init::Uniform(bound), true, rng)?,
        })
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let y = x.conv_transpose2d(self.w.as_tensor(), 1, 0, 2, 1)?;
        Ok(y.broadcast_add(&self.b.as_tensor().reshape((1, (), 1, 1))?)?)
    }
}

/// Batch normalization over dim 1 of `[N, C]` or `[N, C, H, W]` inputs.
/// Training mode normalizes with batch statistics and updates the running
/// averages; evaluation mode uses the running averages.
#[derive(Debug, Clone)]
pub struct BatchNorm {
    gamma: Var,
    beta: Var,
    running_mean: Var,
    running_var: Var,
    momentum: f64,
    eps: f64,
}

impl BatchNorm {
    pub fn new(store: &mut ParamStore, rng: &mut Rng, name: &str, channels: usize) -> Result<Self> {
        Ok(BatchNorm {
            gamma: store.add(&format!("{name}.gamma"), &[channels], Init::Const(1.0), true, rng)?,
            beta: store.add(&format!("{name}.beta"), &[channels], Init::Const(0.0), true, rng)?,
            running_mean: store.add(&format!("{name}.running_mean"), &[channels], Init::Const(0.0), false, rng)?,
            running_var: store.add(&format!("{name}.running_var"), &[channels], Init::Const(1.0), false, rng)?,
            momentum: 0.1,
            eps: 1e-5,
        })
    }

    pub fn forward(&self, x: &Tensor, train: bool) -> Result<Tensor> {
        let c = self.gamma.dims()[0];
        let (view, reduce): (Vec<usize>, Vec<usize>) = match x.rank() {
            2 => (vec![1, c], vec![0]),
            4 => (vec![1, c, 1, 1], vec![0, 2, 3]),
            r => return Err(NuqError::Shape(format!("batch norm expects rank 2 or 4, got {r}"))),
        };
        if x.dims()[1] != c {
            return Err(NuqError::Shape(format!("batch norm over {c} channels, got {:?}", x.dims())));
        }
        let (mean, var) = if train {
            let mean = x.mean_keepdim(reduce.as_slice())?;
            let var = x.broadcast_sub(&mean)?.sqr()?.mean_keepdim(reduce.as_slice())?;
            let n = x.elem_count() / c;
            let m = self.momentum;
            let unbias = if n > 1 { n as f64 / (n - 1) as f64 } else { 1.0 };
            let new_mean = ((self.running_mean.as_tensor() * (1.0 - m))? + (mean.detach().flatten_all()? * m)?)?;
            let new_var = ((self.running_var.as_tensor() * (1.0 - m))? + (var.detach().flatten_all()? * (m * unbias))?)?;
            self.running_mean.set(&new_mean)?;
            self.running_var.set(&new_var)?;
            (mean, var)
        } else {
            (
                self.running_mean.as_tensor().reshape(view.as_slice())?,
                self.running_var.as_tensor().reshape(view.as_slice())?,
            )
        };
        let xhat = x.broadcast_sub(&mean)?.broadcast_div(&(var + self.eps)?.sqrt()?)?;
        let gamma = self.gamma.as_tensor().reshape(view.as_slice())?;
        let beta = self.beta.as_tensor().reshape(view.as_slice())?;
        Ok(xhat.broadcast_mul(&gamma)?.broadcast_add(&beta)?)
    }
}

#[derive(Debug, Clone)]
pub struct LstmState {
    pub h: Tensor,
    pub c: Tensor,
}

/// Single LSTM cell; gates computed by one dense layer on `[x, h]`.
#[derive(Debug, Clone)]
pub struct LstmCell {
    gates: Linear,
    hidden: usize,
}

impl LstmCell {
    pub fn new(store: &mut ParamStore, rng: &mut Rng, name: &str, input: usize, hidden: usize) -> Result<Self> {
        Ok(LstmCell { gates: Linear::new(store, rng, name, input + hidden, 4 * hidden)?, hidden })
    }

    pub fn zero_state(&self, batch: usize, dtype: DType) -> Result<LstmState> {
        let z = Tensor::zeros((batch, self.hidden), dtype, &Device::Cpu)?;
        Ok(LstmState { h: z.clone(), c: z })
    }

    pub fn step(&self, x: &Tensor, state: &LstmState) -> Result<LstmState> {
        let g = self.gates.forward(&Tensor::cat(&[x, &state.h], D::Minus1)?)?;
        let parts = g.chunk(4, D::Minus1)?;
        let (i, f, cand, o) = (sigmoid(&parts[0])?, sigmoid(&parts[1])?, parts[2].tanh()?, sigmoid(&parts[3])?);
        let c = ((f * &state.c)? + (i * cand)?)?;
        let h = (o * c.tanh()?)?;
        Ok(LstmState { h, c })
    }
}
