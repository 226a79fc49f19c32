//! Exponential synaptic kernel and its link to the discount factor.
//!
//! A synapse with time constant `tau` turns an input spike train into a
//! current by convolving it with `exp(-t / tau)`. One step of that decay is
//! the factor `exp(-1 / tau)`, so choosing `tau = -1 / ln(gamma)` makes the
//! synapse discount by exactly `gamma` per step.

use crate::error::{Error, Result};

pub fn gamma_to_tau(gamma: f64) -> Result<f64> {
    if !(gamma > 0.0 && gamma < 1.0) {
        return Err(Error::GammaDomain(gamma));
    }
    Ok(-1.0 / libm::log(gamma))
}

pub fn tau_to_gamma(tau: f64) -> Result<f64> {
    if !(tau > 0.0 && tau.is_finite()) {
        return Err(Error::TauDomain(tau));
    }
    Ok(libm::exp(-1.0 / tau))
}

/// Post-synaptic current at step `t`: the causal sum
/// `Σ_{x ≤ t} input[x] · exp(-(t - x) / tau)`.
pub fn synaptic_filter(spike_train: &[f64], tau: f64, t: usize) -> Result<f64> {
    if !(tau > 0.0 && tau.is_finite()) {
        return Err(Error::TauDomain(tau));
    }
    if t >= spike_train.len() {
        return Err(Error::SpikeIndex {
            t,
            len: spike_train.len(),
        });
    }
    Ok(spike_train[..=t]
        .iter()
        .enumerate()
        .map(|(x, &input)| input * libm::exp(-((t - x) as f64) / tau))
        .sum())
}

/// Leaky integrator form of the same kernel, advanced one step at a time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SynapticTrace {
    decay: f64,
    current: f64,
}

impl SynapticTrace {
    pub fn new(tau: f64) -> Result<Self> {
        Ok(SynapticTrace {
            decay: tau_to_gamma(tau)?,
            current: 0.0,
        })
    }

    pub fn decay(&self) -> f64 {
        self.decay
    }

    pub fn current(&self) -> f64 {
        self.current
    }

    /// Decays the held current by one step, adds `input` and returns the result.
    pub fn step(&mut self, input: f64) -> f64 {
        self.current = self.current * self.decay + input;
        self.current
    }

    pub fn reset(&mut self) {
        self.current = 0.0;
    }
}
