//! Gaussian output noise and Bernoulli synaptic failure.
//!
//! Every random draw comes from an [`RngStream`] keyed by a master seed and a
//! [`StreamId`]. The key is fed straight into ChaCha8, so a stream's contents
//! depend only on `(seed, trial, neuron)` and never on evaluation order or the
//! number of worker threads.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum NoiseError {
    #[error("sigma must be finite and non-negative, got {0}")]
    BadSigma(f64),
    #[error("failure probability must lie in [0, 1], got {0}")]
    BadProbability(f64),
}

/// Noise acting on every physical neuron.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseModel {
    sigma: f64,
    p_fail: f64,
}

impl NoiseModel {
    pub fn new(sigma: f64, p_fail: f64) -> Result<Self, NoiseError> {
        if !sigma.is_finite() || sigma < 0.0 {
            return Err(NoiseError::BadSigma(sigma));
        }
        if !(0.0..=1.0).contains(&p_fail) {
            return Err(NoiseError::BadProbability(p_fail));
        }
        Ok(Self { sigma, p_fail })
    }

    pub fn noiseless() -> Self {
        Self { sigma: 0.0, p_fail: 0.0 }
    }

    /// Standard deviation of the additive output noise.
    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    /// Per-synapse failure probability.
    pub fn p_fail(&self) -> f64 {
        self.p_fail
    }

    pub fn is_noiseless(&self) -> bool {
        self.sigma == 0.0 && self.p_fail == 0.0
    }

    /// Probability that a synapse transmits.
    pub fn survival(&self) -> f64 {
        1.0 - self.p_fail
    }
}

/// Identifies one independent random stream inside a run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct StreamId {
    pub trial: u64,
    pub neuron: u64,
}

impl StreamId {
    pub fn new(trial: u64, neuron: u64) -> Self {
        Self { trial, neuron }
    }
}

#[derive(Debug, Clone)]
pub struct RngStream {
    rng: ChaCha8Rng,
}

impl RngStream {
    pub fn new(seed: u64, id: StreamId) -> Self {
        let mut key = [0u8; 32];
        key[..8].copy_from_slice(&seed.to_le_bytes());
        key[8..16].copy_from_slice(&id.trial.to_le_bytes());
        key[16..24].copy_from_slice(&id.neuron.to_le_bytes());
        key[24..].copy_from_slice(b"gridft\0\x01");
        Self { rng: ChaCha8Rng::from_seed(key) }
    }

    pub fn standard_normal(&mut self) -> f64 {
        self.rng.sample(StandardNormal)
    }

    pub fn uniform(&mut self) -> f64 {
        self.rng.random()
    }

    /// `true` with probability `p`.
    pub fn bernoulli(&mut self, p: f64) -> bool {
        if p <= 0.0 {
            false
        } else if p >= 1.0 {
            true
        } else {
            self.rng.random::<f64>() < p
        }
    }

    pub fn below(&mut self, n: u64) -> u64 {
        self.rng.random_range(0..n)
    }
}

/// One draw of the additive output noise. Exactly 0 when `sigma = 0` (no
/// randomness is consumed in that case).
pub fn sample_output_noise(rng: &mut RngStream, model: &NoiseModel) -> f64 {
    if model.sigma == 0.0 {
        0.0
    } else {
        model.sigma * rng.standard_normal()
    }
}

/// Whether a single synapse transmits (`true`) or has failed.
pub fn sample_synapse(rng: &mut RngStream, model: &NoiseModel) -> bool {
    !rng.bernoulli(model.p_fail)
}

/// Independent transmit/fail bits for `fan_in` synapses.
pub fn sample_synapse_mask(rng: &mut RngStream, model: &NoiseModel, fan_in: usize) -> Vec<bool> {
    (0..fan_in).map(|_| sample_synapse(rng, model)).collect()
}

/// `E[cos(2πξ)]` for `ξ ~ N(0, σ²)`, i.e. `exp(−2π²σ²)`.
pub fn attenuation_factor(sigma: f64) -> f64 {
    (-2.0 * PI * PI * sigma * sigma).exp()
}
