use rand_distr::{Distribution, StandardNormal};

use crate::distributions::TruncNormalSampler;
use crate::error::{NuqError, Result};
use crate::seeding::Rng;

/// Every random number a rollout consumed, in consumption order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct NoiseTape {
    pub chunks: Vec<Vec<f64>>,
}

enum Mode {
    /// One stream for the whole batch.
    Single(Rng),
    /// One stream per batch row; row `r` draws its own slice of each request.
    PerRow(Vec<Rng>),
    Replay { cursor: usize },
}

/// Source of the standard-normal draws used by a rollout. Drawing modes
/// record a tape; replay mode feeds a recorded tape back, which freezes
/// both latent noise and rejection-sampler acceptances.
pub struct Noise {
    mode: Mode,
    tape: NoiseTape,
}

impl Noise {
    pub fn from_rng(rng: Rng) -> Self {
        Noise { mode: Mode::Single(rng), tape: NoiseTape::default() }
    }

    pub fn per_row(rngs: Vec<Rng>) -> Self {
        Noise { mode: Mode::PerRow(rngs), tape: NoiseTape::default() }
    }

    pub fn replay(tape: NoiseTape) -> Self {
        Noise { mode: Mode::Replay { cursor: 0 }, tape }
    }

    pub fn tape(&self) -> &NoiseTape {
        &self.tape
    }

    pub fn into_tape(self) -> NoiseTape {
        self.tape
    }

    fn next_recorded(&mut self, n: usize) -> Result<Vec<f64>> {
        let Mode::Replay { cursor } = &mut self.mode else { unreachable!() };
        let chunk = self
            .tape
            .chunks
            .get(*cursor)
            .ok_or_else(|| NuqError::Shape("noise tape exhausted".into()))?;
        if chunk.len() != n {
            return Err(NuqError::Shape(format!("noise tape chunk has {} values, rollout needs {n}", chunk.len())));
        }
        *cursor += 1;
        Ok(chunk.clone())
    }

    fn rows_for(rngs: &[Rng], n: usize) -> Result<usize> {
        if rngs.is_empty() || n % rngs.len() != 0 {
            return Err(NuqError::Shape(format!("{n} draws do not split over {} row streams", rngs.len())));
        }
        Ok(n / rngs.len())
    }

    /// `n` standard-normal values, row-major over the batch.
    pub fn gaussian(&mut self, n: usize) -> Result<Vec<f64>> {
        let v = match &mut self.mode {
            Mode::Replay { .. } => return self.next_recorded(n),
            Mode::Single(rng) => (0..n).map(|_| StandardNormal.sample(rng)).collect(),
            Mode::PerRow(rngs) => {
                let per = Self::rows_for(rngs, n)?;
                rngs.iter_mut()
                    .flat_map(|rng| (0..per).map(|_| StandardNormal.sample(rng)).collect::<Vec<f64>>())
                    .collect()
            }
        };
        self.tape.chunks.push(v);
        Ok(self.tape.chunks.last().unwrap().clone())
    }

    /// One accepted rejection-sampler noise value per `(alpha, beta)`.
    pub fn trunc_eps(&mut self, sampler: &TruncNormalSampler, alpha: &[f64], beta: &[f64]) -> Result<Vec<f64>> {
        let v = match &mut self.mode {
            Mode::Replay { .. } => return self.next_recorded(alpha.len()),
            Mode::Single(rng) => sampler.accept_eps(alpha, beta, rng)?,
            Mode::PerRow(rngs) => {
                let per = Self::rows_for(rngs, alpha.len())?;
                let mut out = Vec::with_capacity(alpha.len());
                for (r, rng) in rngs.iter_mut().enumerate() {
                    let span = r * per..(r + 1) * per;
                    out.extend(sampler.accept_eps(&alpha[span.clone()], &beta[span], rng)?);
                }
                out
            }
        };
        self.tape.chunks.push(v);
        Ok(self.tape.chunks.last().unwrap().clone())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seeding;

    #[test]
    fn replay_reproduces_draws() {
        let mut n = Noise::from_rng(seeding::rng(5));
        let a = n.gaussian(6).unwrap();
        let e = n.trunc_eps(&TruncNormalSampler::default(), &[1.0, 2.0], &[0.5, 0.5]).unwrap();
        let mut r = Noise::replay(n.into_tape());
        assert_eq!(r.gaussian(6).unwrap(), a);
        assert_eq!(r.trunc_eps(&TruncNormalSampler::default(), &[0.0; 2], &[1.0; 2]).unwrap(), e);
        assert!(r.gaussian(1).is_err());
    }

    #[test]
    fn replay_checks_sizes() {
        let mut n = Noise::from_rng(seeding::rng(5));
        n.gaussian(4).unwrap();
        let mut r = Noise::replay(n.into_tape());
        assert!(matches!(r.gaussian(3), Err(NuqError::Shape(_))));
    }

    #[test]
    fn row_streams_are_independent_of_batch_composition() {
        let streams = |ids: &[u64]| ids.iter().map(|&i| seeding::substream(9, i)).collect::<Vec<_>>();
        let mut both = Noise::per_row(streams(&[0, 1]));
        let mut first = Noise::per_row(streams(&[0]));
        let ab = both.gaussian(6).unwrap();
        assert_eq!(&ab[..3], first.gaussian(3).unwrap().as_slice());
    }
}
