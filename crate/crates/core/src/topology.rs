//! Read-only views of an agent's network used for statistics and export.

use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

/// Size summary of an agent network.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct NetworkStats {
    pub neurons: usize,
    pub edges: usize,
    /// `None` where fan-in has no meaning (the tabular baseline).
    pub avg_fan_in: Option<f64>,
    pub parameter_count: usize,
}

/// Memory words per neuron: one per action value, one for the state value
/// and one gate word.
pub fn parameter_count(units: usize, actions: usize) -> usize {
    units * (actions + 2)
}

pub(crate) fn average_fan_in(fan_ins: impl Iterator<Item = usize>) -> f64 {
    let (count, total) = fan_ins.fold((0usize, 0usize), |(n, s), f| (n + 1, s + f));
    if count == 0 {
        0.0
    } else {
        total as f64 / count as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SnapshotNode {
    pub key: String,
    pub value: f64,
    pub fan_in: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SnapshotEdge {
    pub source: usize,
    pub target: usize,
    /// Action carried by the connection, when it belongs to one action.
    pub action: Option<usize>,
    pub q_value: Option<f64>,
    pub gate_open: bool,
}

/// Nodes indexed by position; edges refer to node positions.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct GraphSnapshot {
    pub nodes: Vec<SnapshotNode>,
    pub edges: Vec<SnapshotEdge>,
}

impl GraphSnapshot {
    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }
}
