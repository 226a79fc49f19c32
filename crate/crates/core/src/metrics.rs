//! Degree distribution of exported graphs and the cross-agent comparison table.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt::Write;

use serde::{Deserialize, Serialize};

use crate::agent::AgentKind;
use crate::topology::GraphSnapshot;
use crate::trainer::RunMetrics;

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct DegreeHistogram {
    /// degree -> number of nodes with that degree
    pub counts: BTreeMap<usize, usize>,
    pub average: f64,
    pub max: usize,
}

impl DegreeHistogram {
    pub fn node_count(&self) -> usize {
        self.counts.values().sum()
    }

    /// Sum of all node degrees.
    pub fn degree_sum(&self) -> usize {
        self.counts.iter().map(|(d, c)| d * c).sum()
    }
}

/// Total degree (in + out) of every node; a self-loop adds 2 to its node.
pub fn degrees(graph: &GraphSnapshot) -> Vec<usize> {
    let mut deg = alloc::vec![0; graph.node_count()];
    for e in &graph.edges {
        deg[e.source] += 1;
        deg[e.target] += 1;
    }
    deg
}

pub fn degree_distribution(graph: &GraphSnapshot) -> DegreeHistogram {
    let deg = degrees(graph);
    let mut counts = BTreeMap::new();
    for &d in &deg {
        *counts.entry(d).or_insert(0) += 1;
    }
    let average = if deg.is_empty() {
        0.0
    } else {
        deg.iter().sum::<usize>() as f64 / deg.len() as f64
    };
    DegreeHistogram {
        counts,
        average,
        max: deg.iter().copied().max().unwrap_or(0),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub agent: AgentKind,
    pub runs: usize,
    pub converged: usize,
    /// Median over converged runs.
    pub episodes_to_convergence: Option<f64>,
    /// The remaining columns are means of each run's final episode.
    pub neurons: Option<f64>,
    pub avg_fan_in: Option<f64>,
    pub params: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct SummaryTable {
    pub rows: Vec<SummaryRow>,
}

pub const SUMMARY_COLUMNS: [&str; 7] = [
    "agent",
    "runs",
    "converged",
    "episodes_to_convergence",
    "neurons",
    "avg_fan_in",
    "params",
];

fn median(mut v: Vec<f64>) -> Option<f64> {
    if v.is_empty() {
        return None;
    }
    v.sort_by(f64::total_cmp);
    let n = v.len();
    Some(if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    })
}

fn mean(v: &[f64]) -> Option<f64> {
    if v.is_empty() {
        None
    } else {
        Some(v.iter().sum::<f64>() / v.len() as f64)
    }
}

/// One row per agent kind, in the order kinds first appear in `runs`.
pub fn summary_table(runs: &[RunMetrics]) -> SummaryTable {
    let mut kinds: Vec<AgentKind> = Vec::new();
    for r in runs {
        if !kinds.contains(&r.agent) {
            kinds.push(r.agent);
        }
    }
    let rows = kinds
        .into_iter()
        .map(|kind| {
            let group: Vec<&RunMetrics> = runs.iter().filter(|r| r.agent == kind).collect();
            let finals: Vec<_> = group.iter().filter_map(|r| r.last()).collect();
            let fan_ins: Vec<f64> = finals.iter().filter_map(|e| e.avg_fan_in).collect();
            SummaryRow {
                agent: kind,
                runs: group.len(),
                converged: group.iter().filter(|r| r.converged).count(),
                episodes_to_convergence: median(
                    group
                        .iter()
                        .filter_map(|r| r.episodes_to_convergence)
                        .map(|e| e as f64)
                        .collect(),
                ),
                neurons: mean(&finals.iter().map(|e| e.neurons as f64).collect::<Vec<_>>()),
                avg_fan_in: mean(&fan_ins),
                params: mean(&finals.iter().map(|e| e.params as f64).collect::<Vec<_>>()),
            }
        })
        .collect();
    SummaryTable { rows }
}

/// Integers print without a fraction, missing values as `n/a`.
pub fn format_cell(value: Option<f64>) -> String {
    match value {
        None => String::from("n/a"),
        Some(v) if libm::trunc(v) == v && v.abs() < 1e15 => alloc::format!("{}", v as i64),
        Some(v) => alloc::format!("{v:.3}"),
    }
}

impl SummaryRow {
    pub fn cells(&self) -> [String; 7] {
        [
            String::from(self.agent.as_str()),
            alloc::format!("{}", self.runs),
            alloc::format!("{}", self.converged),
            format_cell(self.episodes_to_convergence),
            format_cell(self.neurons),
            format_cell(self.avg_fan_in),
            format_cell(self.params),
        ]
    }
}

impl SummaryTable {
    pub fn to_csv(&self) -> String {
        let mut out = SUMMARY_COLUMNS.join(",");
        out.push('\n');
        for row in &self.rows {
            out.push_str(&row.cells().join(","));
            out.push('\n');
        }
        out
    }

    /// Space-aligned columns for terminal output.
    pub fn to_text(&self) -> String {
        let cells: Vec<[String; 7]> = self.rows.iter().map(SummaryRow::cells).collect();
        let mut widths = SUMMARY_COLUMNS.map(str::len);
        for row in &cells {
            for (w, c) in widths.iter_mut().zip(row) {
                *w = (*w).max(c.len());
            }
        }
        let mut out = String::new();
        let mut line = |items: &[&str]| {
            let mut s = String::new();
            for (i, (item, w)) in items.iter().zip(widths).enumerate() {
                if i > 0 {
                    s.push_str("  ");
                }
                let _ = write!(s, "{item:<w$}");
            }
            out.push_str(s.trim_end());
            out.push('\n');
        };
        line(&SUMMARY_COLUMNS);
        for row in &cells {
            let refs: Vec<&str> = row.iter().map(String::as_str).collect();
            line(&refs);
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::topology::{SnapshotEdge, SnapshotNode};
    use crate::trainer::EpisodeMetrics;
    use alloc::vec;

    fn node(k: &str) -> SnapshotNode {
        SnapshotNode {
            key: String::from(k),
            value: 0.0,
            fan_in: 0,
        }
    }

    fn edge(source: usize, target: usize) -> SnapshotEdge {
        SnapshotEdge {
            source,
            target,
            action: None,
            q_value: None,
            gate_open: false,
        }
    }

    #[test]
    fn single_edge() {
        let g = GraphSnapshot {
            nodes: vec![node("a"), node("b")],
            edges: vec![edge(0, 1)],
        };
        let h = degree_distribution(&g);
        assert_eq!(h.counts, BTreeMap::from([(1, 2)]));
        assert_eq!((h.average, h.max), (1.0, 1));
    }

    #[test]
    fn self_loop_counts_twice() {
        let g = GraphSnapshot {
            nodes: vec![node("a")],
            edges: vec![edge(0, 0)],
        };
        let h = degree_distribution(&g);
        assert_eq!(h.counts, BTreeMap::from([(2, 1)]));
        assert_eq!(h.degree_sum(), 2 * g.edge_count());
    }

    #[test]
    fn empty_graph() {
        let h = degree_distribution(&GraphSnapshot::default());
        assert_eq!((h.node_count(), h.average, h.max), (0, 0.0, 0));
    }

    fn run(agent: AgentKind, conv: Option<usize>, neurons: usize, fan_in: Option<f64>, params: usize) -> RunMetrics {
        RunMetrics {
            agent,
            seed: 0,
            episodes: vec![EpisodeMetrics {
                episode: 1,
                reward: 0.0,
                moving_avg: 0.0,
                std: 0.0,
                steps: 0,
                spawned: 0,
                neurons,
                edges: 0,
                avg_fan_in: fan_in,
                params,
            }],
            converged: conv.is_some(),
            episodes_to_convergence: conv,
        }
    }

    #[test]
    fn table_rows_and_missing_cells() {
        let runs = [
            run(AgentKind::Synaptic, Some(250), 250, Some(4.0), 1000),
            run(AgentKind::QTable, None, 10_000, None, 40_000),
            run(AgentKind::Synaptic, Some(300), 270, Some(3.5), 1080),
        ];
        let t = summary_table(&runs);
        assert_eq!(t.rows.len(), 2);
        let syn = &t.rows[0];
        assert_eq!(syn.episodes_to_convergence, Some(275.0));
        assert_eq!(syn.params, Some(1040.0));
        let csv = t.to_csv();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(
            lines[0],
            "agent,runs,converged,episodes_to_convergence,neurons,avg_fan_in,params"
        );
        assert_eq!(lines[1], "synaptic,2,2,275,260,3.750,1040");
        assert_eq!(lines[2], "qtable,1,0,n/a,10000,n/a,40000");
        let text = t.to_text();
        assert_eq!(text.lines().count(), 3);
        assert!(text.lines().nth(2).unwrap().contains("n/a"));
    }
}
