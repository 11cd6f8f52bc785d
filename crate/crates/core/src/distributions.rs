//! Reparameterizable distributions and divergences for both levels of the
//! latent hierarchy: diagonal Gaussians over frame latents, and the
//! positive-truncated normal posterior over the scale variable `s` with its
//! gamma hyperprior.
//!
//! All functions operate on candle tensors so gradients flow through them;
//! they are dtype-agnostic (f32 for training, f64 for gradient checks).

use std::f64::consts::{LN_2, PI};

use candle_core::{DType, Tensor};
use rand_distr::{Distribution, StandardNormal};
use statrs::function::gamma::ln_gamma;

use crate::error::{NuqError, Result};

/// Diagonal Gaussian with `mean` and `variance` of shape `[batch, dim]`.
#[derive(Debug, Clone)]
pub struct GaussianParams {
    pub mean: Tensor,
    pub variance: Tensor,
}

impl GaussianParams {
    pub fn new(mean: Tensor, variance: Tensor) -> Result<Self> {
        if mean.dims() != variance.dims() {
            return Err(NuqError::Shape(format!(
                "mean {:?} vs variance {:?}",
                mean.dims(),
                variance.dims()
            )));
        }
        Ok(GaussianParams { mean, variance })
    }

    /// Variance = exp(log_variance): positive without clipping.
    pub fn from_log_variance(mean: Tensor, log_variance: Tensor) -> Result<Self> {
        let variance = log_variance.exp()?;
        Self::new(mean, variance)
    }

    pub fn dim(&self) -> usize {
        self.mean.dims().last().copied().unwrap_or(1)
    }

    /// Rejects non-finite means and non-positive or non-finite variances.
    pub fn validate(&self) -> Result<()> {
        let m = self.mean.flatten_all()?.to_dtype(DType::F64)?.to_vec1::<f64>()?;
        if m.iter().any(|v| !v.is_finite()) {
            return Err(NuqError::Domain("non-finite Gaussian mean".into()));
        }
        let v = self.variance.flatten_all()?.to_dtype(DType::F64)?.to_vec1::<f64>()?;
        if let Some(bad) = v.iter().find(|v| !(v.is_finite() && **v > 0.0)) {
            return Err(NuqError::Domain(format!("Gaussian variance must be positive and finite, got {bad}")));
        }
        Ok(())
    }
}

/// `mean + sqrt(variance) * noise`.
pub fn reparam_gaussian_sample(p: &GaussianParams, noise: &Tensor) -> Result<Tensor> {
    if noise.dims() != p.mean.dims() {
        return Err(NuqError::Shape(format!(
            "noise {:?} vs latent {:?}",
            noise.dims(),
            p.mean.dims()
        )));
    }
    Ok((&p.mean + p.variance.sqrt()?.mul(noise)?)?)
}

/// Closed-form KL(q || p) between diagonal Gaussians, summed over the last
/// dimension. Returns one value per row.
pub fn kl_diag_gaussian(q: &GaussianParams, p: &GaussianParams) -> Result<Tensor> {
    if q.mean.dims() != p.mean.dims() {
        return Err(NuqError::Shape(format!(
            "KL between {:?} and {:?}",
            q.mean.dims(),
            p.mean.dims()
        )));
    }
    q.validate()?;
    p.validate()?;
    let log_ratio = (p.variance.log()? - q.variance.log()?)?;
    let diff2 = (&q.mean - &p.mean)?.sqr()?;
    let quad = ((&q.variance + diff2)? / &p.variance)?;
    let per_dim = ((log_ratio + quad)? - 1.0)?;
    let last = per_dim.rank().saturating_sub(1);
    Ok((per_dim.sum(last)? * 0.5)?)
}

/// Location/scale of a normal truncated to the positive half-line. `alpha`
/// is the pre-truncation location, not the post-truncation mean.
#[derive(Debug, Clone)]
pub struct TruncNormalParams {
    pub alpha: Tensor,
    pub beta: Tensor,
}

impl TruncNormalParams {
    pub fn new(alpha: Tensor, beta: Tensor) -> Result<Self> {
        if alpha.dims() != beta.dims() {
            return Err(NuqError::Shape(format!("alpha {:?} vs beta {:?}", alpha.dims(), beta.dims())));
        }
        Ok(TruncNormalParams { alpha, beta })
    }

    pub fn scalar(alpha: f64, beta: f64, dtype: DType) -> Result<Self> {
        let dev = candle_core::Device::Cpu;
        Self::new(
            Tensor::new(&[alpha], &dev)?.to_dtype(dtype)?,
            Tensor::new(&[beta], &dev)?.to_dtype(dtype)?,
        )
    }

    pub fn values(&self) -> Result<(Vec<f64>, Vec<f64>)> {
        let a = self.alpha.flatten_all()?.to_dtype(DType::F64)?.to_vec1::<f64>()?;
        let b = self.beta.flatten_all()?.to_dtype(DType::F64)?.to_vec1::<f64>()?;
        Ok((a, b))
    }

    pub fn validate(&self) -> Result<()> {
        let (a, b) = self.values()?;
        for (&a, &b) in a.iter().zip(&b) {
            if !(a.is_finite() && a >= 0.0) {
                return Err(NuqError::Domain(format!("truncated-normal location must be >= 0, got {a}")));
            }
            if !(b.is_finite() && b > 0.0) {
                return Err(NuqError::Domain(format!("truncated-normal scale must be > 0, got {b}")));
            }
        }
        Ok(())
    }
}

/// Output of [`TruncNormalSampler::sample`]: the reparameterized draw and
/// the accepted standard-normal noise (needed to replay the draw).
#[derive(Debug, Clone)]
pub struct TruncNormalDraw {
    pub s: Tensor,
    pub eps: Vec<f64>,
}

/// Rejection sampler for the truncated normal on `[s_min, inf)`.
///
/// Gradients flow through `s = alpha + beta * eps` with the accepted `eps`
/// held constant; the dependence of the acceptance region on the parameters
/// is ignored.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TruncNormalSampler {
    pub s_min: f64,
    pub max_retries: usize,
}

impl Default for TruncNormalSampler {
    fn default() -> Self {
        TruncNormalSampler { s_min: 1e-3, max_retries: 100 }
    }
}

const MIN_ACCEPTANCE: f64 = 1e-6;

impl TruncNormalSampler {
    pub fn sample<R: rand::Rng + ?Sized>(&self, p: &TruncNormalParams, rng: &mut R) -> Result<TruncNormalDraw> {
        p.validate()?;
        let (alpha, beta) = p.values()?;
        let eps = self.accept_eps(&alpha, &beta, rng)?;
        let s = self.replay(p, &eps)?;
        Ok(TruncNormalDraw { s, eps })
    }

    /// Draws one accepted standard-normal `eps` per `(alpha, beta)` pair.
    pub fn accept_eps<R: rand::Rng + ?Sized>(&self, alpha: &[f64], beta: &[f64], rng: &mut R) -> Result<Vec<f64>> {
        let mut eps = Vec::with_capacity(alpha.len());
        for (&a, &b) in alpha.iter().zip(beta) {
            let starved = |retries| NuqError::SamplingStarvation { alpha: a, beta: b, s_min: self.s_min, retries };
            if normal_sf((self.s_min - a) / b) < MIN_ACCEPTANCE {
                return Err(starved(0));
            }
            let mut accepted = None;
            for _ in 0..self.max_retries {
                let e: f64 = StandardNormal.sample(rng);
                if a + b * e >= self.s_min {
                    accepted = Some(e);
                    break;
                }
            }
            eps.push(accepted.ok_or_else(|| starved(self.max_retries))?);
        }
        Ok(eps)
    }

    /// Recomputes `alpha + beta * eps` for previously accepted noise.
    pub fn replay(&self, p: &TruncNormalParams, eps: &[f64]) -> Result<Tensor> {
        let e = Tensor::from_slice(eps, p.alpha.dims(), p.alpha.device())
            .map_err(|_| NuqError::Shape(format!("{} noise values for {:?}", eps.len(), p.alpha.dims())))?
            .to_dtype(p.alpha.dtype())?;
        Ok((&p.alpha + p.beta.mul(&e)?)?)
    }
}

/// Upper tail of the standard normal, 1 - Phi(x).
fn normal_sf(x: f64) -> f64 {
    0.5 * statrs::function::erf::erfc(x / std::f64::consts::SQRT_2)
}

fn check_positive(s: &Tensor, what: &str) -> Result<()> {
    let v = s.flatten_all()?.to_dtype(DType::F64)?.to_vec1::<f64>()?;
    if let Some(bad) = v.iter().find(|v| !(**v > 0.0)) {
        return Err(NuqError::Domain(format!("{what} requires s > 0, got {bad}")));
    }
    Ok(())
}

/// `log N(s; alpha, beta^2) - log(1 - Phi(-alpha/beta))`: the normal density
/// renormalized to `[0, inf)`.
pub fn trunc_normal_logpdf(s: &Tensor, p: &TruncNormalParams) -> Result<Tensor> {
    check_positive(s, "trunc_normal_logpdf")?;
    let z = (s - &p.alpha)?.div(&p.beta)?;
    let log_norm = ((z.sqr()? * -0.5)? - p.beta.log()?)?;
    let log_norm = (log_norm - 0.5 * (2.0 * PI).ln())?;
    // 1 - Phi(-a/b) = Phi(a/b) = (1 + erf(a / (b sqrt 2))) / 2, which is >= 1/2
    // because a >= 0, so the log is well conditioned.
    let mass = ((p.alpha.div(&p.beta)? / std::f64::consts::SQRT_2)?.erf()? + 1.0)?;
    let log_mass = (mass.log()? - LN_2)?;
    Ok((log_norm - log_mass)?)
}

/// Gamma distribution in the shape–rate convention:
/// density ∝ s^(shape-1) exp(-rate * s).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GammaHyperprior {
    pub shape: f64,
    pub rate: f64,
}

impl GammaHyperprior {
    pub fn new(shape: f64, rate: f64) -> Result<Self> {
        if !(shape > 0.0 && shape.is_finite()) {
            return Err(NuqError::config("alpha_s", format!("gamma shape must be > 0, got {shape}")));
        }
        if !(rate > 0.0 && rate.is_finite()) {
            return Err(NuqError::config("beta_s", format!("gamma rate must be > 0, got {rate}")));
        }
        Ok(GammaHyperprior { shape, rate })
    }
}

impl Default for GammaHyperprior {
    fn default() -> Self {
        GammaHyperprior { shape: 2.0, rate: 1.0 }
    }
}

/// `shape*log(rate) - lnGamma(shape) + (shape-1) log s - rate*s`.
pub fn gamma_logpdf(s: &Tensor, h: &GammaHyperprior) -> Result<Tensor> {
    check_positive(s, "gamma_logpdf")?;
    let constant = h.shape * h.rate.ln() - ln_gamma(h.shape);
    let t = ((s.log()? * (h.shape - 1.0))? - (s * h.rate)?)?;
    Ok((t + constant)?)
}

/// Hyperprior placed on the scale variable `s`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Hyperprior {
    Gamma(GammaHyperprior),
    /// Flat density `1/(high-low)`. The support is not enforced: samples
    /// outside `[low, high]` get the same log-density, which keeps the KL
    /// finite for a posterior living on `[s_min, inf)`.
    Uniform { low: f64, high: f64 },
}

impl Default for Hyperprior {
    fn default() -> Self {
        Hyperprior::Gamma(GammaHyperprior::default())
    }
}

impl Hyperprior {
    pub fn logpdf(&self, s: &Tensor) -> Result<Tensor> {
        match self {
            Hyperprior::Gamma(g) => gamma_logpdf(s, g),
            Hyperprior::Uniform { low, high } => {
                check_positive(s, "uniform logpdf")?;
                Ok(s.zeros_like()?.affine(1.0, -(high - low).ln())?)
            }
        }
    }
}

/// Single-sample KL integrand `log q(s) - log p(s)` at a given draw `s`.
pub fn hyper_kl_at(s: &Tensor, q: &TruncNormalParams, h: &Hyperprior) -> Result<Tensor> {
    Ok((trunc_normal_logpdf(s, q)? - h.logpdf(s)?)?)
}

/// Monte-Carlo KL(q || p(s)) from `num_samples` reparameterized draws per
/// element of `q`. Returns one estimate per element.
pub fn kl_truncnorm_gamma<R: rand::Rng + ?Sized>(
    q: &TruncNormalParams,
    h: &Hyperprior,
    num_samples: usize,
    sampler: &TruncNormalSampler,
    rng: &mut R,
) -> Result<Tensor> {
    if num_samples == 0 {
        return Err(NuqError::config("num_samples", "must be at least 1"));
    }
    let n = q.alpha.elem_count();
    let shape = (n, num_samples);
    let alpha = q.alpha.reshape((n, 1))?.broadcast_as(shape)?.contiguous()?;
    let beta = q.beta.reshape((n, 1))?.broadcast_as(shape)?.contiguous()?;
    let wide = TruncNormalParams { alpha, beta };
    let draw = sampler.sample(&wide, rng)?;
    let integrand = hyper_kl_at(&draw.s, &wide, h)?;
    Ok(integrand.mean(1)?.reshape(q.alpha.dims())?)
}
