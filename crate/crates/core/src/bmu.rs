//! Bellman memory units.
//!
//! One ensemble is spawned per discrete state. An ensemble has `b` neurons
//! per action dimension (one per discretized action value) and `d` action
//! dimensions. Encoders are drawn uniformly from `[-1, 1]` and double as the
//! Q-value store: the Bellman update writes the new Q straight back into the
//! encoder of the neuron whose action was taken.
//!
//! Every ensemble is driven by a constant unit-step input, so a neuron's
//! activity is a monotone function of its own encoder and the most active
//! neuron is the one with the largest Q.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::discretize::DiscreteState;
use crate::error::{ensure_finite, Error, Result};
use crate::policy::{argmax, max_value};
use crate::topology::{self, GraphSnapshot, NetworkStats, SnapshotEdge, SnapshotNode};

/// Monotone non-decreasing rate curve `G` mapping input current to activity.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub enum Tuning {
    #[default]
    Identity,
    /// `max(0, J)`.
    Rectified,
    /// Steady-state LIF rate for threshold current 1.
    Lif { tau_rc: f64, tau_ref: f64 },
}

impl Tuning {
    pub fn rate(&self, current: f64) -> f64 {
        match *self {
            Tuning::Identity => current,
            Tuning::Rectified => current.max(0.0),
            Tuning::Lif { tau_rc, tau_ref } => {
                if current > 1.0 {
                    1.0 / (tau_ref - tau_rc * libm::log(1.0 - 1.0 / current))
                } else {
                    0.0
                }
            }
        }
    }
}

/// Discretized action values `A[j][k]`, row-major `b × d`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActionTable {
    bins: usize,
    dims: usize,
    values: Vec<f64>,
}

impl ActionTable {
    pub fn new(bins: usize, dims: usize, values: Vec<f64>) -> Result<Self> {
        if bins == 0 || dims == 0 || values.len() != bins * dims {
            return Err(Error::config(
                "action_table",
                alloc::format!("{} values do not fill {bins} x {dims}", values.len()),
            ));
        }
        Ok(ActionTable { bins, dims, values })
    }

    /// Cartpole: one dimension, bin 0 pushes left and bin 1 pushes right.
    pub fn cartpole() -> Self {
        ActionTable {
            bins: 2,
            dims: 1,
            values: vec![0.0, 1.0],
        }
    }

    pub fn bins(&self) -> usize {
        self.bins
    }

    pub fn dims(&self) -> usize {
        self.dims
    }

    pub fn value(&self, bin: usize, dim: usize) -> f64 {
        self.values[bin * self.dims + dim]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ensemble {
    pub state: DiscreteState,
    bins: usize,
    dims: usize,
    /// `e[j][k]`, row-major `b × d`; also the stored `Q(s, a_jk)`.
    encoders: Vec<f64>,
    gains: Vec<f64>,
    biases: Vec<f64>,
    pub fan_in: usize,
    /// Connected to the unit-step input node.
    pub driven: bool,
}

impl Ensemble {
    pub fn bins(&self) -> usize {
        self.bins
    }

    pub fn dims(&self) -> usize {
        self.dims
    }

    pub fn encoders(&self) -> &[f64] {
        &self.encoders
    }

    pub fn encoder(&self, bin: usize, dim: usize) -> f64 {
        self.encoders[bin * self.dims + dim]
    }

    pub fn q_value(&self, bin: usize, dim: usize) -> f64 {
        self.encoder(bin, dim)
    }

    /// Encoders of one action dimension, one per bin.
    pub fn column(&self, dim: usize) -> Vec<f64> {
        (0..self.bins).map(|j| self.encoder(j, dim)).collect()
    }

    /// `V = max_j e[j][dim]`.
    pub fn value(&self, dim: usize) -> f64 {
        max_value(&self.column(dim))
    }

    /// Uniform gain and bias applied to every neuron.
    pub fn set_gain_bias(&mut self, gain: f64, bias: f64) {
        self.gains.iter_mut().for_each(|g| *g = gain);
        self.biases.iter_mut().for_each(|b| *b = bias);
    }

    /// `a[j][k] = G(gain_j · e[j][k] · x[k] + bias_j)`.
    pub fn activity(&self, input: &[f64], tuning: &Tuning) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.encoders.len());
        for j in 0..self.bins {
            for (k, x) in input.iter().enumerate().take(self.dims) {
                let current = self.gains[j] * self.encoder(j, k) * x + self.biases[j];
                out.push(tuning.rate(current));
            }
        }
        out
    }

    /// Most active bin per dimension under a unit-step input.
    pub fn select(&self, tuning: &Tuning) -> Vec<usize> {
        let ones = vec![1.0; self.dims];
        let activity = self.activity(&ones, tuning);
        (0..self.dims)
            .map(|k| {
                let column: Vec<f64> = (0..self.bins).map(|j| activity[j * self.dims + k]).collect();
                argmax(&column)
            })
            .collect()
    }
}

/// Population of ensembles plus the connections observed between them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BmuPopulation {
    actions: ActionTable,
    tuning: Tuning,
    ensembles: Vec<Ensemble>,
    index: BTreeMap<DiscreteState, usize>,
    edges: BTreeSet<(usize, usize)>,
}

/// Action chosen by an ensemble: bin per dimension and the action values.
#[derive(Debug, Clone, PartialEq)]
pub struct BmuAction {
    pub bins: Vec<usize>,
    pub values: Vec<f64>,
}

impl BmuPopulation {
    pub fn new(actions: ActionTable, tuning: Tuning) -> Self {
        BmuPopulation {
            actions,
            tuning,
            ensembles: Vec::new(),
            index: BTreeMap::new(),
            edges: BTreeSet::new(),
        }
    }

    pub fn action_table(&self) -> &ActionTable {
        &self.actions
    }

    pub fn tuning(&self) -> &Tuning {
        &self.tuning
    }

    pub fn len(&self) -> usize {
        self.ensembles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ensembles.is_empty()
    }

    pub fn ensembles(&self) -> &[Ensemble] {
        &self.ensembles
    }

    pub fn ensemble(&self, idx: usize) -> &Ensemble {
        &self.ensembles[idx]
    }

    pub fn ensemble_mut(&mut self, idx: usize) -> &mut Ensemble {
        &mut self.ensembles[idx]
    }

    pub fn lookup(&self, state: &DiscreteState) -> Option<usize> {
        self.index.get(state).copied()
    }

    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.edges.iter().copied()
    }

    /// Spawns an ensemble with encoders drawn i.i.d. from `U[-1, 1]`.
    pub fn spawn_ensemble<R: Rng + ?Sized>(&mut self, state: DiscreteState, rng: &mut R) -> Result<usize> {
        let n = self.actions.bins * self.actions.dims;
        let encoders: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..=1.0)).collect();
        self.spawn_ensemble_with(state, encoders)
    }

    pub fn spawn_ensemble_with(&mut self, state: DiscreteState, encoders: Vec<f64>) -> Result<usize> {
        if self.index.contains_key(&state) {
            return Err(Error::DuplicateState(state.key()));
        }
        let (bins, dims) = (self.actions.bins, self.actions.dims);
        if encoders.len() != bins * dims {
            return Err(Error::ActionOutOfRange {
                action: encoders.len(),
                actions: bins * dims,
            });
        }
        for &e in &encoders {
            ensure_finite(e, "encoder")?;
        }
        let idx = self.ensembles.len();
        self.ensembles.push(Ensemble {
            state,
            bins,
            dims,
            encoders,
            gains: vec![1.0; bins],
            biases: vec![0.0; bins],
            fan_in: 0,
            driven: true,
        });
        self.index.insert(state, idx);
        Ok(idx)
    }

    pub fn activity(&self, idx: usize, input: &[f64]) -> Vec<f64> {
        self.ensembles[idx].activity(input, &self.tuning)
    }

    pub fn select_action(&self, idx: usize) -> BmuAction {
        let bins = self.ensembles[idx].select(&self.tuning);
        let values = bins
            .iter()
            .enumerate()
            .map(|(k, &j)| self.actions.value(j, k))
            .collect();
        BmuAction { bins, values }
    }

    /// Applies the Bellman update to the taken neuron of every action
    /// dimension, writes the result back into its encoder and records the
    /// connection `idx → next`. `V(s′)` is read before any write, and is
    /// zero for a terminal transition.
    #[allow(clippy::too_many_arguments)]
    pub fn bmu_update(
        &mut self,
        idx: usize,
        taken: &[usize],
        reward: f64,
        next: usize,
        terminal: bool,
        alpha: f64,
        gamma: f64,
    ) -> Result<()> {
        ensure_finite(reward, "reward")?;
        ensure_finite(alpha, "learning rate")?;
        ensure_finite(gamma, "discount factor")?;
        let dims = self.actions.dims;
        if taken.len() != dims {
            return Err(Error::ActionOutOfRange {
                action: taken.len(),
                actions: dims,
            });
        }
        if let Some(&bad) = taken.iter().find(|&&j| j >= self.actions.bins) {
            return Err(Error::ActionOutOfRange {
                action: bad,
                actions: self.actions.bins,
            });
        }
        let next_values: Vec<f64> = (0..dims)
            .map(|k| if terminal { 0.0 } else { self.ensembles[next].value(k) })
            .collect();
        let ensemble = &mut self.ensembles[idx];
        for (k, &j) in taken.iter().enumerate() {
            let slot = j * dims + k;
            let q = ensemble.encoders[slot];
            ensemble.encoders[slot] = q + alpha * (-q + reward + gamma * next_values[k]);
        }
        if self.edges.insert((idx, next)) {
            self.ensembles[next].fan_in += 1;
        }
        Ok(())
    }

    pub fn stats(&self) -> NetworkStats {
        NetworkStats {
            neurons: self.len(),
            edges: self.edges.len(),
            avg_fan_in: Some(topology::average_fan_in(self.ensembles.iter().map(|e| e.fan_in))),
            parameter_count: topology::parameter_count(self.len(), self.actions.bins * self.actions.dims),
        }
    }

    pub fn snapshot(&self) -> GraphSnapshot {
        let nodes = self
            .ensembles
            .iter()
            .map(|e| SnapshotNode {
                key: e.state.key(),
                value: e.value(0),
                fan_in: e.fan_in,
            })
            .collect();
        let edges = self
            .edges
            .iter()
            .map(|&(source, target)| SnapshotEdge {
                source,
                target,
                action: None,
                q_value: None,
                gate_open: false,
            })
            .collect();
        GraphSnapshot { nodes, edges }
    }
}
