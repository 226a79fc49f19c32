//! Uniform binning of cartpole states.
//!
//! Each of the four state components is clamped to its `[lower, upper]`
//! range and split into `n_bins` half-open bins, so zero lands in bin
//! `n_bins / 2` for an even bin count and the exact upper bound falls in the
//! last bin. A binned state is identified by a key such as `"3_4_6_5_"`.

use alloc::format;
use alloc::string::{String, ToString};
use core::fmt;
use core::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::cartpole::CartState;
use crate::error::{Error, Result};

pub const DIMS: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BinSpec {
    pub lower: [f64; DIMS],
    pub upper: [f64; DIMS],
    pub n_bins: u16,
}

impl Default for BinSpec {
    /// Position and angle ranges follow the failure limits; the velocity
    /// ranges are wide enough that clamping is rare.
    fn default() -> Self {
        BinSpec::symmetric([2.4, 3.0, 0.418, 3.5], 10)
    }
}

impl BinSpec {
    pub fn symmetric(half_widths: [f64; DIMS], n_bins: u16) -> Self {
        BinSpec {
            lower: half_widths.map(|w| -w),
            upper: half_widths,
            n_bins,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_bins < 2 {
            return Err(Error::config("n_bins", format!("{} is below 2", self.n_bins)));
        }
        for d in 0..DIMS {
            let (lo, hi) = (self.lower[d], self.upper[d]);
            if !(lo.is_finite() && hi.is_finite() && lo < hi) {
                return Err(Error::config("bins", format!("dimension {d} has bounds [{lo}, {hi}]")));
            }
        }
        Ok(())
    }

    /// Number of distinct discrete states, `n_bins^4`.
    pub fn state_count(&self) -> usize {
        (self.n_bins as usize).pow(DIMS as u32)
    }

    /// Bin index of `value` along dimension `dim`.
    pub fn bin(&self, dim: usize, value: f64) -> u16 {
        let (lo, hi) = (self.lower[dim], self.upper[dim]);
        let n = self.n_bins;
        if value.is_nan() || value <= lo {
            return 0;
        }
        if value >= hi {
            return n - 1;
        }
        let scaled = f64::from(n) * (value - lo) / (hi - lo);
        (libm::floor(scaled) as u16).min(n - 1)
    }

    pub fn discretize(&self, state: &CartState) -> DiscreteState {
        let c = state.components();
        DiscreteState::new(core::array::from_fn(|d| self.bin(d, c[d])))
    }
}

/// Free-function form of [`BinSpec::discretize`].
pub fn discretize(state: &CartState, spec: &BinSpec) -> DiscreteState {
    spec.discretize(state)
}

/// Bin indices of one discretized state; ordered and hashable so it can key
/// neuron and ensemble lookups directly.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct DiscreteState {
    bins: [u16; DIMS],
}

impl DiscreteState {
    pub const fn new(bins: [u16; DIMS]) -> Self {
        DiscreteState { bins }
    }

    pub fn bins(&self) -> [u16; DIMS] {
        self.bins
    }

    pub fn key(&self) -> String {
        key_of(self.bins)
    }

    /// Dense row-major index in `[0, n_bins^4)`.
    pub fn dense_index(&self, n_bins: u16) -> usize {
        self.bins
            .iter()
            .fold(0usize, |acc, &b| acc * n_bins as usize + b as usize)
    }

    pub fn in_range(&self, n_bins: u16) -> bool {
        self.bins.iter().all(|&b| b < n_bins)
    }
}

pub fn key_of(bins: [u16; DIMS]) -> String {
    let mut key = String::with_capacity(DIMS * 3);
    for b in bins {
        key.push_str(&b.to_string());
        key.push('_');
    }
    key
}

pub fn parse_key(key: &str) -> Result<[u16; DIMS]> {
    let err = |token: &str| Error::ParseKey {
        key: key.to_string(),
        token: token.to_string(),
    };
    let body = key.strip_suffix('_').ok_or_else(|| err(key))?;
    let mut bins = [0u16; DIMS];
    let mut tokens = body.split('_');
    for slot in bins.iter_mut() {
        let token = tokens.next().ok_or_else(|| err(""))?;
        if token.is_empty() || !token.bytes().all(|b| b.is_ascii_digit()) {
            return Err(err(token));
        }
        *slot = token.parse().map_err(|_| err(token))?;
    }
    if let Some(extra) = tokens.next() {
        return Err(err(extra));
    }
    Ok(bins)
}

impl fmt::Display for DiscreteState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for b in self.bins {
            write!(f, "{b}_")?;
        }
        Ok(())
    }
}

impl FromStr for DiscreteState {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        parse_key(s).map(DiscreteState::new)
    }
}

impl Serialize for DiscreteState {
    fn serialize<S: Serializer>(&self, serializer: S) -> core::result::Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for DiscreteState {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> core::result::Result<Self, D::Error> {
        let key = String::deserialize(deserializer)?;
        key.parse().map_err(serde::de::Error::custom)
    }
}
