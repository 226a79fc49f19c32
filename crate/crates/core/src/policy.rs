//! Greedy action choice and the optional ε-greedy override.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Index of the largest value; the lowest index wins ties.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

pub fn max_value(values: &[f64]) -> f64 {
    values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
}

/// ε-greedy schedule: explore with probability ε, which decays geometrically
/// per episode down to `min_epsilon`. The default never explores.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Exploration {
    pub epsilon: f64,
    pub decay: f64,
    pub min_epsilon: f64,
}

impl Default for Exploration {
    fn default() -> Self {
        Exploration {
            epsilon: 0.0,
            decay: 1.0,
            min_epsilon: 0.0,
        }
    }
}

impl Exploration {
    pub fn validate(&self) -> Result<()> {
        let unit = |v: f64| (0.0..=1.0).contains(&v);
        if !unit(self.epsilon) {
            return Err(Error::config(
                "epsilon",
                alloc::format!("{} is outside [0, 1]", self.epsilon),
            ));
        }
        if !unit(self.decay) {
            return Err(Error::config(
                "epsilon_decay",
                alloc::format!("{} is outside [0, 1]", self.decay),
            ));
        }
        if !unit(self.min_epsilon) {
            return Err(Error::config(
                "epsilon_min",
                alloc::format!("{} is outside [0, 1]", self.min_epsilon),
            ));
        }
        Ok(())
    }

    pub fn epsilon_at(&self, episode: usize) -> f64 {
        let decayed = self.epsilon * libm::pow(self.decay, episode as f64);
        decayed.max(self.min_epsilon.min(self.epsilon))
    }

    /// A random action to force this step, or `None` to act greedily.
    /// Draws nothing from `rng` when ε is zero.
    pub fn sample<R: Rng + ?Sized>(&self, episode: usize, actions: usize, rng: &mut R) -> Option<usize> {
        let eps = self.epsilon_at(episode);
        if eps <= 0.0 {
            return None;
        }
        if rng.gen_bool(eps.min(1.0)) {
            Some(rng.gen_range(0..actions))
        } else {
            None
        }
    }
}
