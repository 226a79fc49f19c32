//! CSV and JSON files written into run directories.

use anyhow::Result;
use bmu_lab_core::metrics::{format_cell, DegreeHistogram};
use bmu_lab_core::qtable::QTable;
use bmu_lab_core::trainer::{AggregateRow, EvalReport, RunMetrics};
use bmu_lab_core::{AgentKind, NetworkStats};
use serde::{Deserialize, Serialize};

fn to_string(w: csv::Writer<Vec<u8>>) -> Result<String> {
    Ok(String::from_utf8(w.into_inner()?)?)
}

pub const REWARDS_HEADER: [&str; 7] = [
    "episode",
    "reward",
    "moving_avg",
    "std",
    "neurons",
    "avg_fan_in",
    "params",
];

pub fn rewards_csv(run: &RunMetrics) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(REWARDS_HEADER)?;
    for e in &run.episodes {
        w.write_record([
            e.episode.to_string(),
            e.reward.to_string(),
            e.moving_avg.to_string(),
            e.std.to_string(),
            e.neurons.to_string(),
            e.avg_fan_in.map_or_else(|| "n/a".to_string(), |f| f.to_string()),
            e.params.to_string(),
        ])?;
    }
    to_string(w)
}

pub fn aggregate_csv(rows: &[AggregateRow]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["episode", "mean", "lo_band", "hi_band"])?;
    for r in rows {
        w.write_record([
            r.episode.to_string(),
            r.mean.to_string(),
            r.lo_band.to_string(),
            r.hi_band.to_string(),
        ])?;
    }
    to_string(w)
}

/// One row per step of every evaluation episode.
pub fn phase_csv(report: &EvalReport) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record([
        "episode",
        "t",
        "x",
        "x_dot",
        "theta",
        "theta_dot",
        "action",
        "reward",
        "terminated",
    ])?;
    for (i, ep) in report.episodes.iter().enumerate() {
        for r in &ep.trace {
            w.write_record([
                (i + 1).to_string(),
                r.t.to_string(),
                r.x.to_string(),
                r.x_dot.to_string(),
                r.theta.to_string(),
                r.theta_dot.to_string(),
                r.action.to_string(),
                r.reward.to_string(),
                r.terminated.to_string(),
            ])?;
        }
    }
    to_string(w)
}

pub fn degree_hist_csv(hist: &DegreeHistogram) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["degree", "count"])?;
    for (d, c) in &hist.counts {
        w.write_record([d.to_string(), c.to_string()])?;
    }
    to_string(w)
}

pub fn qtable_csv(table: &QTable) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["state_key", "action", "q"])?;
    for (s, a, q) in table.entries_iter() {
        w.write_record([s.key(), a.to_string(), q.to_string()])?;
    }
    to_string(w)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedSummary {
    pub seed: u64,
    pub converged: bool,
    pub episodes_to_convergence: Option<usize>,
    pub episodes: usize,
    pub final_reward: Option<f64>,
    pub final_moving_avg: Option<f64>,
    pub final_stats: NetworkStats,
    pub wall_clock_seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub agent: AgentKind,
    /// True only when every seed converged.
    pub converged: bool,
    pub converged_seeds: usize,
    pub median_episodes_to_convergence: Option<f64>,
    pub wall_clock_seconds: f64,
    pub seeds: Vec<SeedSummary>,
}

impl Summary {
    pub fn new(agent: AgentKind, runs: &[(RunMetrics, NetworkStats, f64)], wall_clock_seconds: f64) -> Self {
        let seeds: Vec<SeedSummary> = runs
            .iter()
            .map(|(r, stats, secs)| SeedSummary {
                seed: r.seed,
                converged: r.converged,
                episodes_to_convergence: r.episodes_to_convergence,
                episodes: r.episodes.len(),
                final_reward: r.last().map(|e| e.reward),
                final_moving_avg: r.last().map(|e| e.moving_avg),
                final_stats: *stats,
                wall_clock_seconds: *secs,
            })
            .collect();
        let mut conv: Vec<f64> = seeds
            .iter()
            .filter_map(|s| s.episodes_to_convergence)
            .map(|e| e as f64)
            .collect();
        conv.sort_by(f64::total_cmp);
        let median = match conv.len() {
            0 => None,
            n if n % 2 == 1 => Some(conv[n / 2]),
            n => Some((conv[n / 2 - 1] + conv[n / 2]) / 2.0),
        };
        Summary {
            agent,
            converged: seeds.iter().all(|s| s.converged),
            converged_seeds: conv.len(),
            median_episodes_to_convergence: median,
            wall_clock_seconds,
            seeds,
        }
    }

    /// One line per seed for the terminal.
    pub fn to_text(&self) -> String {
        let mut out = format!(
            "{}: {}/{} seeds converged, median episodes {}\n",
            self.agent,
            self.converged_seeds,
            self.seeds.len(),
            format_cell(self.median_episodes_to_convergence)
        );
        for s in &self.seeds {
            out.push_str(&format!(
                "  seed {:<4} converged={:<5} episodes={:<5} neurons={:<6} edges={:<6} fan_in={:<8} params={}\n",
                s.seed,
                s.converged,
                s.episodes,
                s.final_stats.neurons,
                s.final_stats.edges,
                format_cell(s.final_stats.avg_fan_in.map(|f| (f * 1000.0).round() / 1000.0)),
                s.final_stats.parameter_count
            ));
        }
        out
    }
}
