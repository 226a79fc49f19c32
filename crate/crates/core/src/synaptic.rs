//! Synaptic Q-learning network.
//!
//! Every discrete state owns one neuron holding the state value `V`. The
//! neuron has one synapse per action; a synapse stores `Q(s, a)`, the
//! discount kernel time constant `tau`, and a normally closed gate. Action
//! selection opens the gate of the synapse with the largest Q, the taken
//! synapse is connected to the neuron of the state that followed, and the
//! Bellman update is applied at that synapse before its gate closes again.
//!
//! The network only grows: neurons are spawned for unseen states and edges
//! appear as transitions are observed. An edge is identified by its source
//! synapse, so a later transition for the same state and action re-points
//! the edge instead of adding another one.

use alloc::collections::BTreeMap;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::discretize::DiscreteState;
use crate::error::{ensure_finite, Error, Result};
use crate::filter::gamma_to_tau;
use crate::policy::{argmax, max_value};
use crate::topology::{self, GraphSnapshot, NetworkStats, SnapshotEdge, SnapshotNode};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NeuronId(pub usize);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum Gate {
    Open,
    #[default]
    Closed,
}

impl Gate {
    pub fn is_open(self) -> bool {
        self == Gate::Open
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Synapse {
    pub q_value: f64,
    pub tau: f64,
    pub target: Option<NeuronId>,
    pub gate: Gate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Neuron {
    pub id: NeuronId,
    pub state: DiscreteState,
    pub value: f64,
    pub fan_in: usize,
    pub synapses: Vec<Synapse>,
}

impl Neuron {
    pub fn q_values(&self) -> Vec<f64> {
        self.synapses.iter().map(|s| s.q_value).collect()
    }

    pub fn open_gates(&self) -> usize {
        self.synapses.iter().filter(|s| s.gate.is_open()).count()
    }

    fn close_gates(&mut self) {
        for s in &mut self.synapses {
            s.gate = Gate::Closed;
        }
    }

    fn refresh_value(&mut self) {
        self.value = self
            .synapses
            .iter()
            .map(|s| s.q_value)
            .fold(f64::NEG_INFINITY, f64::max);
    }
}

/// Result of a forward pass through one neuron.
#[derive(Debug, Clone, PartialEq)]
pub struct Selection {
    pub action: usize,
    /// Spike frequency per synapse, `max(0, c · Q)`.
    pub frequencies: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynapticGraph {
    actions: usize,
    tau: f64,
    neurons: Vec<Neuron>,
    index: BTreeMap<DiscreteState, NeuronId>,
    edge_count: usize,
}

impl SynapticGraph {
    pub fn new(actions: usize, gamma: f64) -> Result<Self> {
        if actions == 0 {
            return Err(Error::config("actions", "at least one action is required"));
        }
        Ok(SynapticGraph {
            actions,
            tau: gamma_to_tau(gamma)?,
            neurons: Vec::new(),
            index: BTreeMap::new(),
            edge_count: 0,
        })
    }

    pub fn actions(&self) -> usize {
        self.actions
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn len(&self) -> usize {
        self.neurons.len()
    }

    pub fn is_empty(&self) -> bool {
        self.neurons.is_empty()
    }

    pub fn edge_count(&self) -> usize {
        self.edge_count
    }

    /// Neurons in population order (order of first visit).
    pub fn neurons(&self) -> &[Neuron] {
        &self.neurons
    }

    pub fn neuron(&self, id: NeuronId) -> &Neuron {
        &self.neurons[id.0]
    }

    pub fn lookup(&self, state: &DiscreteState) -> Option<NeuronId> {
        self.index.get(state).copied()
    }

    /// `(source, action, target)` for every connected synapse.
    pub fn edges(&self) -> impl Iterator<Item = (NeuronId, usize, NeuronId)> + '_ {
        self.neurons.iter().flat_map(|n| {
            n.synapses
                .iter()
                .enumerate()
                .filter_map(move |(a, s)| s.target.map(|t| (n.id, a, t)))
        })
    }

    pub fn spawn_neuron(&mut self, state: DiscreteState) -> Result<NeuronId> {
        let zeros = vec![0.0; self.actions];
        self.spawn_neuron_with(state, &zeros)
    }

    pub fn spawn_neuron_with(&mut self, state: DiscreteState, q_init: &[f64]) -> Result<NeuronId> {
        if self.index.contains_key(&state) {
            return Err(Error::DuplicateState(state.key()));
        }
        if q_init.len() != self.actions {
            return Err(Error::ActionOutOfRange {
                action: q_init.len(),
                actions: self.actions,
            });
        }
        for &q in q_init {
            ensure_finite(q, "initial Q value")?;
        }
        let id = NeuronId(self.neurons.len());
        let synapses = q_init
            .iter()
            .map(|&q_value| Synapse {
                q_value,
                tau: self.tau,
                target: None,
                gate: Gate::Closed,
            })
            .collect();
        let mut neuron = Neuron {
            id,
            state,
            value: 0.0,
            fan_in: 0,
            synapses,
        };
        neuron.refresh_value();
        self.neurons.push(neuron);
        self.index.insert(state, id);
        Ok(id)
    }

    /// Emits `f_j = c · Q_j` on every synapse and opens the gate of the
    /// largest. Selection looks at the raw Q values; the reported
    /// frequencies are clamped at zero.
    pub fn forward_select(&mut self, id: NeuronId, gain: f64) -> Selection {
        let neuron = &mut self.neurons[id.0];
        let q = neuron.q_values();
        let action = argmax(&q);
        neuron.close_gates();
        neuron.synapses[action].gate = Gate::Open;
        Selection {
            action,
            frequencies: q.iter().map(|&v| (gain * v).max(0.0)).collect(),
        }
    }

    /// Opens the gate of `action` directly, bypassing the argmax.
    pub fn open_gate(&mut self, id: NeuronId, action: usize) -> Result<()> {
        self.check_action(action)?;
        let neuron = &mut self.neurons[id.0];
        neuron.close_gates();
        neuron.synapses[action].gate = Gate::Open;
        Ok(())
    }

    pub fn connect(&mut self, source: NeuronId, action: usize, target: NeuronId) -> Result<()> {
        self.check_action(action)?;
        let synapse = &self.neurons[source.0].synapses[action];
        if !synapse.gate.is_open() {
            return Err(self.gate_closed(source, action));
        }
        match synapse.target {
            Some(old) if old == target => return Ok(()),
            Some(old) => self.neurons[old.0].fan_in -= 1,
            None => self.edge_count += 1,
        }
        self.neurons[source.0].synapses[action].target = Some(target);
        self.neurons[target.0].fan_in += 1;
        Ok(())
    }

    /// `Q ← Q + α(−Q + r + γ·V_next)` on the open synapse, then
    /// `V ← max_j Q_j`; all gates of the neuron close afterwards.
    /// Returns the new `(Q, V)`.
    pub fn bellman_update(
        &mut self,
        id: NeuronId,
        action: usize,
        reward: f64,
        next_value: f64,
        alpha: f64,
        gamma: f64,
    ) -> Result<(f64, f64)> {
        self.check_action(action)?;
        ensure_finite(reward, "reward")?;
        ensure_finite(next_value, "next-state value")?;
        ensure_finite(alpha, "learning rate")?;
        ensure_finite(gamma, "discount factor")?;
        if !self.neurons[id.0].synapses[action].gate.is_open() {
            return Err(self.gate_closed(id, action));
        }
        let neuron = &mut self.neurons[id.0];
        let synapse = &mut neuron.synapses[action];
        let q = synapse.q_value;
        synapse.q_value = q + alpha * (-q + reward + gamma * next_value);
        let new_q = synapse.q_value;
        neuron.refresh_value();
        neuron.close_gates();
        Ok((new_q, neuron.value))
    }

    pub fn value(&self, id: NeuronId) -> f64 {
        self.neurons[id.0].value
    }

    pub fn greedy_action(&self, state: &DiscreteState) -> usize {
        self.lookup(state)
            .map(|id| argmax(&self.neurons[id.0].q_values()))
            .unwrap_or(0)
    }

    pub fn stats(&self) -> NetworkStats {
        NetworkStats {
            neurons: self.len(),
            edges: self.edge_count,
            avg_fan_in: Some(topology::average_fan_in(self.neurons.iter().map(|n| n.fan_in))),
            parameter_count: topology::parameter_count(self.len(), self.actions),
        }
    }

    pub fn snapshot(&self) -> GraphSnapshot {
        let nodes = self
            .neurons
            .iter()
            .map(|n| SnapshotNode {
                key: n.state.key(),
                value: n.value,
                fan_in: n.fan_in,
            })
            .collect();
        let edges = self
            .edges()
            .map(|(source, action, target)| {
                let synapse = &self.neurons[source.0].synapses[action];
                SnapshotEdge {
                    source: source.0,
                    target: target.0,
                    action: Some(action),
                    q_value: Some(synapse.q_value),
                    gate_open: synapse.gate.is_open(),
                }
            })
            .collect();
        GraphSnapshot { nodes, edges }
    }

    fn check_action(&self, action: usize) -> Result<()> {
        if action < self.actions {
            Ok(())
        } else {
            Err(Error::ActionOutOfRange {
                action,
                actions: self.actions,
            })
        }
    }

    fn gate_closed(&self, id: NeuronId, action: usize) -> Error {
        Error::GateClosed {
            state: self.neurons[id.0].state.key(),
            action,
        }
    }
}

/// Largest Q of `neuron`, for use as `V(s′)`.
pub fn neuron_value(neuron: &Neuron) -> f64 {
    max_value(&neuron.q_values())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn state(i: u16) -> DiscreteState {
        DiscreteState::new([i, 5, 5, 5])
    }

    fn graph() -> SynapticGraph {
        SynapticGraph::new(2, 0.99).unwrap()
    }

    #[test]
    fn spawn_zero_initialised() {
        let mut g = graph();
        let id = g.spawn_neuron(DiscreteState::new([5, 5, 5, 5])).unwrap();
        let n = g.neuron(id);
        assert_eq!(n.synapses.len(), 2);
        assert_eq!(n.value, 0.0);
        assert_eq!(n.open_gates(), 0);
        assert!((n.synapses[0].tau - gamma_to_tau(0.99).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn spawn_duplicate_rejected() {
        let mut g = graph();
        g.spawn_neuron(state(1)).unwrap();
        assert_eq!(g.spawn_neuron(state(1)), Err(Error::DuplicateState("1_5_5_5_".into())));
        g.spawn_neuron(state(2)).unwrap();
        g.spawn_neuron(state(3)).unwrap();
        assert_eq!(g.len(), 3);
        assert_eq!(g.edge_count(), 0);
    }

    #[test]
    fn forward_select_examples() {
        let mut g = graph();
        let a = g.spawn_neuron_with(state(0), &[0.9, 0.3]).unwrap();
        let sel = g.forward_select(a, 1.0);
        assert_eq!(sel.action, 0);
        assert_eq!(sel.frequencies, vec![0.9, 0.3]);
        assert_eq!(g.neuron(a).open_gates(), 1);

        let b = g.spawn_neuron(state(1)).unwrap();
        assert_eq!(g.forward_select(b, 1.0).action, 0);

        let c = g.spawn_neuron_with(state(2), &[-10.0, -8.9]).unwrap();
        let sel = g.forward_select(c, 1.0);
        assert_eq!(sel.action, 1);
        assert_eq!(sel.frequencies, vec![0.0, 0.0]);
    }

    #[test]
    fn connect_bookkeeping() {
        let mut g = graph();
        let a = g.spawn_neuron(state(0)).unwrap();
        let b = g.spawn_neuron(state(1)).unwrap();
        let c = g.spawn_neuron(state(2)).unwrap();

        assert!(matches!(g.connect(a, 0, b), Err(Error::GateClosed { .. })));

        g.open_gate(a, 0).unwrap();
        g.connect(a, 0, b).unwrap();
        assert_eq!((g.neuron(b).fan_in, g.edge_count()), (1, 1));

        g.connect(a, 0, b).unwrap();
        assert_eq!((g.neuron(b).fan_in, g.edge_count()), (1, 1));

        g.connect(a, 0, c).unwrap();
        assert_eq!(g.neuron(b).fan_in, 0);
        assert_eq!(g.neuron(c).fan_in, 1);
        assert_eq!(g.edge_count(), 1);
    }

    #[test]
    fn bellman_update_examples() {
        let mut g = graph();
        let a = g.spawn_neuron(state(0)).unwrap();
        g.open_gate(a, 0).unwrap();
        let (q, v) = g.bellman_update(a, 0, 1.0, 0.0, 0.9, 0.99).unwrap();
        assert!((q - 0.9).abs() < 1e-15);
        assert!((v - 0.9).abs() < 1e-15);
        assert_eq!(g.neuron(a).open_gates(), 0);

        let b = g.spawn_neuron(state(1)).unwrap();
        g.open_gate(b, 0).unwrap();
        let (q, v) = g.bellman_update(b, 0, -10.0, 0.0, 0.9, 0.99).unwrap();
        assert!((q + 9.0).abs() < 1e-15);
        assert_eq!(v, 0.0);
    }

    #[test]
    fn bellman_update_requires_open_gate_and_finite_inputs() {
        let mut g = graph();
        let a = g.spawn_neuron(state(0)).unwrap();
        assert!(matches!(
            g.bellman_update(a, 0, 1.0, 0.0, 0.9, 0.99),
            Err(Error::GateClosed { .. })
        ));
        g.open_gate(a, 1).unwrap();
        assert_eq!(
            g.bellman_update(a, 1, f64::NAN, 0.0, 0.9, 0.99),
            Err(Error::NonFinite("reward"))
        );
        assert!(g.open_gate(a, 2).is_err());
    }

    #[test]
    fn stats_and_parameter_convention() {
        let mut g = graph();
        assert_eq!(g.stats().avg_fan_in, Some(0.0));
        g.spawn_neuron(state(0)).unwrap();
        let s = g.stats();
        assert_eq!((s.neurons, s.edges, s.parameter_count), (1, 0, 4));
        assert_eq!(s.avg_fan_in, Some(0.0));
        assert_eq!(topology::parameter_count(250, 2), 1000);
        assert_eq!(topology::parameter_count(10_000, 2), 40_000);
    }

    proptest! {
        #[test]
        fn selection_is_raw_argmax(
            q in proptest::collection::vec(
                prop_oneof![-20.0f64..20.0, Just(0.0), Just(-1.0), Just(1.0)], 1..6),
            gain in 0.01f64..100.0,
        ) {
            let mut g = SynapticGraph::new(q.len(), 0.9).unwrap();
            let id = g.spawn_neuron_with(state(0), &q).unwrap();
            let sel = g.forward_select(id, gain);
            let mut expected = 0;
            for j in 0..q.len() {
                if q[j] > q[expected] {
                    expected = j;
                }
            }
            prop_assert_eq!(sel.action, expected);
            prop_assert_eq!(g.neuron(id).open_gates(), 1);
            prop_assert!(g.neuron(id).synapses[expected].gate.is_open());
            prop_assert!(sel.frequencies.iter().all(|&f| f >= 0.0));
        }

        #[test]
        fn value_tracks_max_q(
            updates in proptest::collection::vec((0usize..3, -10.0f64..10.0, -5.0f64..5.0), 1..40),
        ) {
            let mut g = SynapticGraph::new(3, 0.95).unwrap();
            let id = g.spawn_neuron(state(0)).unwrap();
            for (a, r, v_next) in updates {
                g.open_gate(id, a).unwrap();
                g.bellman_update(id, a, r, v_next, 0.5, 0.95).unwrap();
                let n = g.neuron(id);
                prop_assert_eq!(n.value, neuron_value(n));
                prop_assert_eq!(n.open_gates(), 0);
            }
        }

        #[test]
        fn zero_learning_rate_is_identity(r in -20.0f64..20.0, v in -20.0f64..20.0, q0 in -5.0f64..5.0) {
            let mut g = graph();
            let id = g.spawn_neuron_with(state(0), &[q0, 0.0]).unwrap();
            g.open_gate(id, 0).unwrap();
            let (q, _) = g.bellman_update(id, 0, r, v, 0.0, 0.99).unwrap();
            prop_assert_eq!(q, q0);
        }

        #[test]
        fn fan_in_matches_edges(
            moves in proptest::collection::vec((0u16..6, 0usize..2, 0u16..6), 1..60),
        ) {
            let mut g = graph();
            let mut last_neurons = 0;
            let mut last_edges = 0;
            for (s, a, t) in moves {
                let src = g.lookup(&state(s)).map_or_else(|| g.spawn_neuron(state(s)), Ok).unwrap();
                let dst = g.lookup(&state(t)).map_or_else(|| g.spawn_neuron(state(t)), Ok).unwrap();
                g.open_gate(src, a).unwrap();
                g.connect(src, a, dst).unwrap();
                let mut counted = vec![0usize; g.len()];
                for (_, _, target) in g.edges() {
                    counted[target.0] += 1;
                }
                for n in g.neurons() {
                    prop_assert_eq!(n.fan_in, counted[n.id.0]);
                }
                prop_assert_eq!(g.edges().count(), g.edge_count());
                prop_assert!(g.len() >= last_neurons && g.edge_count() >= last_edges);
                last_neurons = g.len();
                last_edges = g.edge_count();
            }
        }
    }
}
