//! Single-ensemble variant of the Bellman memory units.
//!
//! A fixed-size ensemble is allocated up front and one neuron is claimed per
//! new discrete state. Each neuron carries one axon per action; the axon
//! weight is the Q value and the heaviest axon picks the action. Running out
//! of neurons is a hard error unless least-recently-used eviction is enabled.

use alloc::collections::BTreeMap;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::discretize::DiscreteState;
use crate::error::{ensure_finite, Error, Result};
use crate::policy::{argmax, max_value};
use crate::topology::{self, GraphSnapshot, NetworkStats, SnapshotEdge, SnapshotNode};

pub const DEFAULT_CAPACITY: usize = 300;
pub const LARGE_CAPACITY: usize = 600;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum Overflow {
    #[default]
    Error,
    EvictLeastRecent,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NeuronPool {
    capacity: usize,
    actions: usize,
    overflow: Overflow,
    assigned: BTreeMap<DiscreteState, usize>,
    owner: Vec<Option<DiscreteState>>,
    /// `w[neuron][action]`, row-major.
    weights: Vec<f64>,
    targets: Vec<Option<usize>>,
    fan_in: Vec<usize>,
    last_used: Vec<u64>,
    next_free: usize,
    edge_count: usize,
    clock: u64,
}

impl NeuronPool {
    pub fn new(capacity: usize, actions: usize, overflow: Overflow) -> Result<Self> {
        if capacity == 0 {
            return Err(Error::config("pool_capacity", "must be at least 1"));
        }
        if actions == 0 {
            return Err(Error::config("actions", "at least one action is required"));
        }
        Ok(NeuronPool {
            capacity,
            actions,
            overflow,
            assigned: BTreeMap::new(),
            owner: vec![None; capacity],
            weights: vec![0.0; capacity * actions],
            targets: vec![None; capacity * actions],
            fan_in: vec![0; capacity],
            last_used: vec![0; capacity],
            next_free: 0,
            edge_count: 0,
            clock: 0,
        })
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn actions(&self) -> usize {
        self.actions
    }

    pub fn len(&self) -> usize {
        self.assigned.len()
    }

    pub fn is_empty(&self) -> bool {
        self.assigned.is_empty()
    }

    pub fn next_free(&self) -> usize {
        self.next_free
    }

    pub fn edge_count(&self) -> usize {
        self.edge_count
    }

    pub fn neuron_of(&self, state: &DiscreteState) -> Option<usize> {
        self.assigned.get(state).copied()
    }

    pub fn weights(&self, neuron: usize) -> &[f64] {
        &self.weights[neuron * self.actions..(neuron + 1) * self.actions]
    }

    pub fn assignments(&self) -> impl Iterator<Item = (&DiscreteState, usize)> + '_ {
        self.assigned.iter().map(|(s, &i)| (s, i))
    }

    /// Claims the next free neuron for `state`, with all axon weights zero.
    pub fn pool_assign(&mut self, state: DiscreteState) -> Result<usize> {
        let zeros = vec![0.0; self.actions];
        self.pool_assign_with(state, &zeros)
    }

    /// Claims a neuron for `state` with the given initial axon weights.
    pub fn pool_assign_with(&mut self, state: DiscreteState, weights: &[f64]) -> Result<usize> {
        if weights.len() != self.actions {
            return Err(Error::ActionOutOfRange {
                action: weights.len(),
                actions: self.actions,
            });
        }
        for &w in weights {
            ensure_finite(w, "initial weight")?;
        }
        if self.assigned.contains_key(&state) {
            return Err(Error::DuplicateState(state.key()));
        }
        let neuron = if self.next_free < self.capacity {
            self.next_free += 1;
            self.next_free - 1
        } else {
            match self.overflow {
                Overflow::Error => {
                    return Err(Error::PoolExhausted {
                        capacity: self.capacity,
                    })
                }
                Overflow::EvictLeastRecent => self.evict(),
            }
        };
        self.assigned.insert(state, neuron);
        self.owner[neuron] = Some(state);
        self.weights[neuron * self.actions..(neuron + 1) * self.actions].copy_from_slice(weights);
        self.touch(neuron);
        Ok(neuron)
    }

    pub fn pool_select(&mut self, state: &DiscreteState) -> Result<usize> {
        let neuron = self.require(state)?;
        self.touch(neuron);
        Ok(argmax(self.weights(neuron)))
    }

    pub fn greedy_action(&self, state: &DiscreteState) -> usize {
        self.neuron_of(state).map_or(0, |n| argmax(self.weights(n)))
    }

    /// Bellman update on the taken axon and connection of that axon to the
    /// neuron of `next`.
    #[allow(clippy::too_many_arguments)]
    pub fn pool_update(
        &mut self,
        state: &DiscreteState,
        action: usize,
        reward: f64,
        next: &DiscreteState,
        terminal: bool,
        alpha: f64,
        gamma: f64,
    ) -> Result<()> {
        ensure_finite(reward, "reward")?;
        ensure_finite(alpha, "learning rate")?;
        ensure_finite(gamma, "discount factor")?;
        if action >= self.actions {
            return Err(Error::ActionOutOfRange {
                action,
                actions: self.actions,
            });
        }
        let source = self.require(state)?;
        let target = self.require(next)?;
        let next_value = if terminal { 0.0 } else { max_value(self.weights(target)) };
        let slot = source * self.actions + action;
        let q = self.weights[slot];
        self.weights[slot] = q + alpha * (-q + reward + gamma * next_value);

        match self.targets[slot] {
            Some(old) if old == target => {}
            Some(old) => {
                self.fan_in[old] -= 1;
                self.fan_in[target] += 1;
            }
            None => {
                self.edge_count += 1;
                self.fan_in[target] += 1;
            }
        }
        self.targets[slot] = Some(target);
        Ok(())
    }

    pub fn stats(&self) -> NetworkStats {
        NetworkStats {
            neurons: self.len(),
            edges: self.edge_count,
            avg_fan_in: Some(topology::average_fan_in(
                self.assigned.values().map(|&n| self.fan_in[n]),
            )),
            parameter_count: topology::parameter_count(self.len(), self.actions),
        }
    }

    /// Assigned neurons in neuron-index order.
    pub fn snapshot(&self) -> GraphSnapshot {
        let live: Vec<usize> = (0..self.capacity).filter(|&n| self.owner[n].is_some()).collect();
        let mut position = vec![usize::MAX; self.capacity];
        for (pos, &n) in live.iter().enumerate() {
            position[n] = pos;
        }
        let nodes = live
            .iter()
            .map(|&n| SnapshotNode {
                key: self.owner[n].map(|s| s.key()).unwrap_or_default(),
                value: max_value(self.weights(n)),
                fan_in: self.fan_in[n],
            })
            .collect();
        let mut edges = Vec::new();
        for &n in &live {
            for a in 0..self.actions {
                if let Some(t) = self.targets[n * self.actions + a] {
                    edges.push(SnapshotEdge {
                        source: position[n],
                        target: position[t],
                        action: Some(a),
                        q_value: Some(self.weights[n * self.actions + a]),
                        gate_open: false,
                    });
                }
            }
        }
        GraphSnapshot { nodes, edges }
    }

    fn require(&self, state: &DiscreteState) -> Result<usize> {
        self.neuron_of(state).ok_or_else(|| Error::UnknownState(state.key()))
    }

    fn touch(&mut self, neuron: usize) {
        self.clock += 1;
        self.last_used[neuron] = self.clock;
    }

    /// Frees the least recently used neuron and drops every connection
    /// touching it.
    fn evict(&mut self) -> usize {
        let victim = (0..self.capacity)
            .filter(|&n| self.owner[n].is_some())
            .min_by_key(|&n| self.last_used[n])
            .expect("a full pool has assigned neurons");
        if let Some(state) = self.owner[victim].take() {
            self.assigned.remove(&state);
        }
        for slot in 0..self.targets.len() {
            let from_victim = slot / self.actions == victim;
            match self.targets[slot] {
                Some(t) if from_victim || t == victim => {
                    self.fan_in[t] -= 1;
                    self.targets[slot] = None;
                    self.edge_count -= 1;
                }
                _ => {}
            }
        }
        for a in 0..self.actions {
            self.weights[victim * self.actions + a] = 0.0;
        }
        victim
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn state(i: u16) -> DiscreteState {
        DiscreteState::new([i / 10, i % 10, 5, 5])
    }

    #[test]
    fn default_capacity_holds_typical_population() {
        let mut pool = NeuronPool::new(DEFAULT_CAPACITY, 2, Overflow::Error).unwrap();
        for i in 0..250 {
            pool.pool_assign(state(i)).unwrap();
        }
        assert_eq!(pool.len(), 250);
        assert_eq!(pool.next_free(), 250);
    }

    #[test]
    fn exhaustion_reports_capacity() {
        let mut pool = NeuronPool::new(2, 2, Overflow::Error).unwrap();
        pool.pool_assign(state(0)).unwrap();
        pool.pool_assign(state(1)).unwrap();
        assert_eq!(pool.pool_assign(state(2)), Err(Error::PoolExhausted { capacity: 2 }));
        assert!(pool.pool_assign(state(0)).is_err());
    }

    #[test]
    fn select_and_update() {
        let mut pool = NeuronPool::new(4, 2, Overflow::Error).unwrap();
        let (s, n) = (state(0), state(1));
        pool.pool_assign(s).unwrap();
        pool.pool_assign(n).unwrap();
        assert_eq!(pool.pool_select(&s).unwrap(), 0);
        pool.pool_update(&s, 0, -10.0, &n, true, 0.9, 0.99).unwrap();
        assert!((pool.weights(0)[0] + 9.0).abs() < 1e-15);
        assert_eq!(pool.pool_select(&s).unwrap(), 1);
        pool.pool_update(&s, 1, 1.0, &n, false, 0.9, 0.99).unwrap();
        assert!((pool.weights(0)[1] - 0.9).abs() < 1e-15);
        let stats = pool.stats();
        assert_eq!((stats.neurons, stats.edges), (2, 2));
        assert_eq!(stats.avg_fan_in, Some(1.0));
        assert!(matches!(
            pool.pool_update(&s, 0, 1.0, &state(9), false, 0.9, 0.99),
            Err(Error::UnknownState(_))
        ));
    }

    #[test]
    fn assignment_is_injective() {
        let mut pool = NeuronPool::new(50, 2, Overflow::Error).unwrap();
        let mut seen = alloc::collections::BTreeSet::new();
        for i in 0..50 {
            assert!(seen.insert(pool.pool_assign(state(i)).unwrap()));
        }
    }

    #[test]
    fn eviction_frees_least_recent() {
        let mut pool = NeuronPool::new(2, 2, Overflow::EvictLeastRecent).unwrap();
        let (a, b, c) = (state(0), state(1), state(2));
        pool.pool_assign(a).unwrap();
        pool.pool_assign(b).unwrap();
        pool.pool_update(&b, 0, 1.0, &a, false, 0.5, 0.9).unwrap();
        pool.pool_select(&a).unwrap();
        // b is now least recently used.
        let n = pool.pool_assign(c).unwrap();
        assert_eq!(n, 1);
        assert_eq!(pool.neuron_of(&b), None);
        assert_eq!(pool.weights(1), &[0.0, 0.0]);
        assert_eq!(pool.edge_count(), 0);
        assert_eq!(pool.stats().avg_fan_in, Some(0.0));
    }
}
