//! Tabular Q-learning baseline over the same discretization.

use alloc::collections::BTreeMap;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::discretize::DiscreteState;
use crate::error::{ensure_finite, Error, Result};
use crate::policy::{argmax, max_value};
use crate::topology::{self, GraphSnapshot, NetworkStats, SnapshotNode};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum TableMode {
    /// Rows created on first visit.
    #[default]
    Sparse,
    /// All `n_bins^4` rows allocated up front.
    Dense,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
enum Storage {
    Sparse(BTreeMap<DiscreteState, Vec<f64>>),
    Dense(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QTable {
    n_bins: u16,
    actions: usize,
    storage: Storage,
    visits: BTreeMap<DiscreteState, u64>,
}

impl QTable {
    pub fn new(mode: TableMode, n_bins: u16, actions: usize) -> Result<Self> {
        if actions == 0 {
            return Err(Error::config("actions", "at least one action is required"));
        }
        if n_bins < 2 {
            return Err(Error::config("n_bins", "must be at least 2"));
        }
        let storage = match mode {
            TableMode::Sparse => Storage::Sparse(BTreeMap::new()),
            TableMode::Dense => {
                let states = (n_bins as usize).pow(4);
                Storage::Dense(vec![0.0; states * actions])
            }
        };
        Ok(QTable {
            n_bins,
            actions,
            storage,
            visits: BTreeMap::new(),
        })
    }

    pub fn mode(&self) -> TableMode {
        match self.storage {
            Storage::Sparse(_) => TableMode::Sparse,
            Storage::Dense(_) => TableMode::Dense,
        }
    }

    pub fn actions(&self) -> usize {
        self.actions
    }

    /// Allocated table entries (state-action pairs).
    pub fn entries(&self) -> usize {
        match &self.storage {
            Storage::Sparse(rows) => rows.len() * self.actions,
            Storage::Dense(values) => values.len(),
        }
    }

    /// Rows held by the table: visited states when sparse, every state when dense.
    pub fn rows(&self) -> usize {
        self.entries() / self.actions
    }

    pub fn visits(&self, state: &DiscreteState) -> u64 {
        self.visits.get(state).copied().unwrap_or(0)
    }

    pub fn visited_states(&self) -> usize {
        self.visits.len()
    }

    /// Q values of `state`; unseen states read as all zeros.
    pub fn q_values(&self, state: &DiscreteState) -> Vec<f64> {
        match &self.storage {
            Storage::Sparse(rows) => rows.get(state).cloned().unwrap_or_else(|| vec![0.0; self.actions]),
            Storage::Dense(values) => {
                let base = self.row_base(state);
                values[base..base + self.actions].to_vec()
            }
        }
    }

    pub fn q(&self, state: &DiscreteState, action: usize) -> f64 {
        self.q_values(state)[action]
    }

    /// Overwrites the row of `state`, creating it when sparse.
    pub fn set_row(&mut self, state: DiscreteState, values: &[f64]) -> Result<()> {
        if values.len() != self.actions {
            return Err(Error::ActionOutOfRange {
                action: values.len(),
                actions: self.actions,
            });
        }
        let actions = self.actions;
        self.row_mut(state)?[..actions].copy_from_slice(values);
        Ok(())
    }

    /// Records a visit, materializing the row in sparse mode.
    pub fn visit(&mut self, state: DiscreteState) -> Result<bool> {
        let fresh = match &self.storage {
            Storage::Sparse(rows) => !rows.contains_key(&state),
            Storage::Dense(_) => !self.visits.contains_key(&state),
        };
        self.row_mut(state)?;
        *self.visits.entry(state).or_insert(0) += 1;
        Ok(fresh)
    }

    pub fn qtable_select(&self, state: &DiscreteState) -> usize {
        argmax(&self.q_values(state))
    }

    #[allow(clippy::too_many_arguments)]
    pub fn qtable_update(
        &mut self,
        state: DiscreteState,
        action: usize,
        reward: f64,
        next: &DiscreteState,
        alpha: f64,
        gamma: f64,
        terminal: bool,
    ) -> Result<f64> {
        ensure_finite(reward, "reward")?;
        ensure_finite(alpha, "learning rate")?;
        ensure_finite(gamma, "discount factor")?;
        if action >= self.actions {
            return Err(Error::ActionOutOfRange {
                action,
                actions: self.actions,
            });
        }
        let next_value = if terminal { 0.0 } else { max_value(&self.q_values(next)) };
        let row = self.row_mut(state)?;
        let q = row[action];
        row[action] = q + alpha * (-q + reward + gamma * next_value);
        Ok(row[action])
    }

    /// Dense tables report every state; fan-in is undefined for a table.
    pub fn stats(&self) -> NetworkStats {
        let rows = self.rows();
        NetworkStats {
            neurons: rows,
            edges: 0,
            avg_fan_in: None,
            parameter_count: topology::parameter_count(rows, self.actions),
        }
    }

    /// Visited states as isolated nodes.
    pub fn snapshot(&self) -> GraphSnapshot {
        let nodes = self
            .visits
            .keys()
            .map(|s| SnapshotNode {
                key: s.key(),
                value: max_value(&self.q_values(s)),
                fan_in: 0,
            })
            .collect();
        GraphSnapshot {
            nodes,
            edges: Vec::new(),
        }
    }

    /// `(state, action, Q)` for every stored entry.
    pub fn entries_iter(&self) -> Vec<(DiscreteState, usize, f64)> {
        let mut out = Vec::new();
        match &self.storage {
            Storage::Sparse(rows) => {
                for (s, row) in rows {
                    out.extend(row.iter().enumerate().map(|(a, &q)| (*s, a, q)));
                }
            }
            Storage::Dense(_) => {
                for s in self.visits.keys() {
                    out.extend(self.q_values(s).into_iter().enumerate().map(|(a, q)| (*s, a, q)));
                }
            }
        }
        out
    }

    fn row_base(&self, state: &DiscreteState) -> usize {
        state.dense_index(self.n_bins) * self.actions
    }

    fn row_mut(&mut self, state: DiscreteState) -> Result<&mut [f64]> {
        let actions = self.actions;
        match &mut self.storage {
            Storage::Sparse(rows) => Ok(rows.entry(state).or_insert_with(|| vec![0.0; actions])),
            Storage::Dense(values) => {
                if !state.in_range(self.n_bins) {
                    return Err(Error::UnknownState(state.key()));
                }
                let base = state.dense_index(self.n_bins) * actions;
                Ok(&mut values[base..base + actions])
            }
        }
    }
}
