//! Training objectives over a [`RolloutRecord`] and a finite-difference
//! gradient checker.
//!
//! Every scalar is a batch mean of a sum over predicted steps; squared
//! errors are summed over pixels.

use candle_core::{DType, Tensor};
use rand::seq::index::sample;

use crate::distributions::{hyper_kl_at, kl_diag_gaussian, Hyperprior};
use crate::error::{NuqError, Result};
use crate::model::{Noise, NoiseTape, NuqModel, RolloutRecord};
use crate::seeding;

/// Scalar terms as tensors (so `total` can be differentiated) plus per-step
/// traces (batch means) of each term.
#[derive(Debug, Clone)]
pub struct LossBreakdown {
    /// Σ_t ½ b_t ‖x̂_t − x_t‖².
    pub weighted_recon: Tensor,
    /// Σ_t −½ log b_t.
    pub neg_log_precision: Tensor,
    /// Σ_t KL(q(z_t) ‖ p(z_t)).
    pub kl_latent: Tensor,
    /// Σ_t single-sample KL(q(s_t) ‖ p(s)).
    pub kl_hyper: Tensor,
    /// Discriminator loss seen by the generator; zero without the GAN term.
    pub adv: Tensor,
    pub total: Tensor,
    pub eta1: f64,
    pub eta2: f64,
    pub gamma: f64,
    pub per_t: StepTraces,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct StepTraces {
    pub weighted_recon: Vec<f64>,
    pub neg_log_precision: Vec<f64>,
    pub kl_latent: Vec<f64>,
    pub kl_hyper: Vec<f64>,
}

/// Plain-number copy of a [`LossBreakdown`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossValues {
    pub weighted_recon: f64,
    pub neg_log_precision: f64,
    pub kl_latent: f64,
    pub kl_hyper: f64,
    pub adv: f64,
    pub total: f64,
}

impl LossValues {
    /// Total recomposed from its parts with the given weights.
    pub fn recompose(&self, eta1: f64, eta2: f64, gamma: f64) -> f64 {
        self.weighted_recon + self.neg_log_precision + eta1 * self.kl_latent + eta2 * self.kl_hyper - gamma * self.adv
    }

    pub fn is_finite(&self) -> bool {
        [self.weighted_recon, self.neg_log_precision, self.kl_latent, self.kl_hyper, self.adv, self.total]
            .iter()
            .all(|v| v.is_finite())
    }
}

fn scalar(t: &Tensor) -> Result<f64> {
    Ok(t.to_dtype(DType::F64)?.to_scalar::<f64>()?)
}

fn trace(t: &Tensor) -> Result<Vec<f64>> {
    Ok(t.mean(0)?.to_dtype(DType::F64)?.to_vec1::<f64>()?)
}

/// `[B, P]` → scalar: sum over steps, mean over the batch.
fn reduce(t: &Tensor) -> Result<Tensor> {
    Ok(t.sum(1)?.mean(0)?)
}

impl LossBreakdown {
    pub fn values(&self) -> Result<LossValues> {
        Ok(LossValues {
            weighted_recon: scalar(&self.weighted_recon)?,
            neg_log_precision: scalar(&self.neg_log_precision)?,
            kl_latent: scalar(&self.kl_latent)?,
            kl_hyper: scalar(&self.kl_hyper)?,
            adv: scalar(&self.adv)?,
            total: scalar(&self.total)?,
        })
    }

    /// Adds the adversarial term: `total − γ · disc_loss`.
    pub fn with_adversarial(mut self, disc_loss: &Tensor, gamma: f64) -> Result<Self> {
        self.total = (&self.total - (disc_loss * gamma)?)?;
        self.adv = disc_loss.clone();
        self.gamma = gamma;
        Ok(self)
    }

    fn build(
        recon: Tensor,
        nlp: Tensor,
        kl_latent: Tensor,
        kl_hyper: Tensor,
        eta1: f64,
        eta2: f64,
    ) -> Result<Self> {
        let per_t = StepTraces {
            weighted_recon: trace(&recon)?,
            neg_log_precision: trace(&nlp)?,
            kl_latent: trace(&kl_latent)?,
            kl_hyper: trace(&kl_hyper)?,
        };
        let (recon, nlp, kl_latent, kl_hyper) = (reduce(&recon)?, reduce(&nlp)?, reduce(&kl_latent)?, reduce(&kl_hyper)?);
        let total = (((&recon + &nlp)? + (&kl_latent * eta1)?)? + (&kl_hyper * eta2)?)?;
        Ok(LossBreakdown {
            adv: total.zeros_like()?,
            weighted_recon: recon,
            neg_log_precision: nlp,
            kl_latent,
            kl_hyper,
            total,
            eta1,
            eta2,
            gamma: 0.0,
            per_t,
        })
    }
}

/// Per-sample, per-step squared error summed over pixels: `[B, P]`.
fn squared_error(rollout: &RolloutRecord, targets: &Tensor) -> Result<Tensor> {
    if rollout.frames.dims() != targets.dims() {
        return Err(NuqError::Shape(format!(
            "predictions {:?} vs targets {:?}",
            rollout.frames.dims(),
            targets.dims()
        )));
    }
    let d = (&rollout.frames - targets.to_dtype(rollout.frames.dtype())?)?.sqr()?;
    Ok(d.flatten_from(2)?.sum(2)?)
}

fn latent_kl(rollout: &RolloutRecord) -> Result<Tensor> {
    let q = rollout
        .posterior
        .as_ref()
        .ok_or_else(|| NuqError::Shape("loss needs a teacher-forced rollout with posterior parameters".into()))?;
    kl_diag_gaussian(q, &rollout.prior)
}

/// `Σ_t ½(b_t e_t² − log b_t) + η₁ KL_latent + η₂ KL_hyper`.
pub fn nuq_loss(
    rollout: &RolloutRecord,
    targets: &Tensor,
    eta1: f64,
    eta2: f64,
    hyperprior: &Hyperprior,
) -> Result<LossBreakdown> {
    let e2 = squared_error(rollout, targets)?;
    let recon = ((&rollout.b * &e2)? * 0.5)?;
    let nlp = (rollout.b.log()? * -0.5)?;
    let kl_latent = latent_kl(rollout)?;
    let kl_hyper = hyper_kl_at(&rollout.s, &rollout.scale, hyperprior)?;
    LossBreakdown::build(recon, nlp, kl_latent, kl_hyper, eta1, eta2)
}

/// `Σ_t ½ e_t² + η₁ KL_latent`: unit precision, no hyperprior.
pub fn fixed_precision_loss(rollout: &RolloutRecord, targets: &Tensor, eta1: f64) -> Result<LossBreakdown> {
    let e2 = squared_error(rollout, targets)?;
    let recon = (e2 * 0.5)?;
    let zeros = recon.zeros_like()?;
    let kl_latent = latent_kl(rollout)?;
    LossBreakdown::build(recon, zeros.clone(), kl_latent, zeros, eta1, 0.0)
}

#[derive(Debug, Clone)]
pub struct GradCheckConfig {
    pub eps: f64,
    /// Entries checked per parameter tensor (all entries when smaller).
    pub per_tensor: usize,
    /// Entries whose analytic and numeric gradients are both below this
    /// magnitude are skipped: their finite differences are dominated by
    /// rounding.
    pub min_magnitude: f64,
    pub seed: u64,
}

impl Default for GradCheckConfig {
    fn default() -> Self {
        GradCheckConfig { eps: 1e-5, per_tensor: 6, min_magnitude: 1e-4, seed: 0 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradEntry {
    pub param: String,
    pub index: usize,
    pub analytic: f64,
    pub numeric: f64,
}

impl GradEntry {
    pub fn rel_error(&self) -> f64 {
        (self.analytic - self.numeric).abs() / (self.numeric.abs() + 1e-8)
    }
}

#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub entries: Vec<GradEntry>,
    pub skipped: usize,
}

impl GradCheckReport {
    pub fn max_rel_error(&self) -> f64 {
        self.entries.iter().map(GradEntry::rel_error).fold(0.0, f64::max)
    }

    pub fn worst(&self) -> Option<&GradEntry> {
        self.entries.iter().max_by(|a, b| a.rel_error().total_cmp(&b.rel_error()))
    }
}

/// Compares backprop gradients of `loss` with central differences on a
/// sample of the model's trainable parameters. The first evaluation records
/// every random draw; all later evaluations replay it, so the objective is
/// a deterministic function of the parameters.
pub fn grad_check<F>(model: &NuqModel, loss: F, cfg: &GradCheckConfig) -> Result<GradCheckReport>
where
    F: Fn(&mut Noise) -> Result<Tensor>,
{
    if model.dtype() != DType::F64 {
        return Err(NuqError::config("dtype", "gradient checks need a double-precision model"));
    }
    let mut noise = Noise::from_rng(seeding::rng(seeding::mix(cfg.seed, 0x6772)));
    let value = loss(&mut noise)?;
    check_finite(&value)?;
    let tape: NoiseTape = noise.into_tape();
    let grads = value.backward()?;
    let eval = || -> Result<f64> {
        let v = loss(&mut Noise::replay(tape.clone()))?;
        check_finite(&v)?;
        scalar(&v)
    };

    let mut rng = seeding::rng(seeding::mix(cfg.seed, 0x7069));
    let mut entries = Vec::new();
    let mut skipped = 0;
    for (name, var) in model.store.trainable(&[]) {
        let original = var.as_tensor().copy()?;
        let base = original.flatten_all()?.to_vec1::<f64>()?;
        let analytic = match grads.get(&var) {
            Some(g) => g.flatten_all()?.to_vec1::<f64>()?,
            None => vec![0.0; base.len()],
        };
        let picks = sample(&mut rng, base.len(), cfg.per_tensor.min(base.len())).into_vec();
        for i in picks {
            let at = |delta: f64| -> Result<f64> {
                let mut v = base.clone();
                v[i] += delta;
                var.set(&Tensor::from_vec(v, original.dims(), original.device())?)?;
                eval()
            };
            let numeric = (at(cfg.eps)? - at(-cfg.eps)?) / (2.0 * cfg.eps);
            var.set(&original)?;
            if analytic[i].abs().max(numeric.abs()) < cfg.min_magnitude {
                skipped += 1;
                continue;
            }
            entries.push(GradEntry { param: name.clone(), index: i, analytic: analytic[i], numeric });
        }
    }
    Ok(GradCheckReport { entries, skipped })
}

fn check_finite(t: &Tensor) -> Result<()> {
    let v = scalar(t)?;
    if !v.is_finite() {
        return Err(NuqError::Numerical(format!("loss is {v}")));
    }
    Ok(())
}
