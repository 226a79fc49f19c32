//! Multi-seed training and the on-disk run directory.
//!
//! ```text
//! <run>/config.txt            resolved configuration, every key
//! <run>/summary.json          convergence and final stats per seed
//! <run>/rewards.csv           first seed's per-episode metrics
//! <run>/aggregate.csv         cross-seed moving-average band
//! <run>/neurons_aggregate.csv cross-seed neuron-count band
//! <run>/seed-<n>/rewards.csv  per-seed metrics
//! <run>/seed-<n>/metrics.json full RunMetrics
//! <run>/seed-<n>/agent.json   trained agent
//! <run>/seed-<n>/graph_ep<N>.{dot,gexf}, graph_final.{dot,gexf}
//! <run>/seed-<n>/qtable.csv   tabular agents only
//! ```

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, Context, Result};
use bmu_lab_core::trainer::{self, aggregate, RunMetrics};
use bmu_lab_core::{Agent, AnyAgent, GraphSnapshot, NetworkStats, TrainConfig};
use rayon::prelude::*;

use crate::formats::{self, Summary};
use crate::{config, graph_io};

pub struct SeedRun {
    pub metrics: RunMetrics,
    pub agent: AnyAgent,
    /// `(episode, snapshot)` at the configured cadence.
    pub snapshots: Vec<(usize, GraphSnapshot)>,
    pub seconds: f64,
}

pub fn train_seed(config: &TrainConfig, seed: u64) -> Result<SeedRun> {
    let start = Instant::now();
    let mut agent = config.build_agent(seed)?;
    let mut snapshots = Vec::new();
    let every = config.snapshot_every;
    let metrics = trainer::train(&mut agent, config, seed, |episode, a: &AnyAgent| {
        if every > 0 && episode % every == 0 {
            snapshots.push((episode, a.snapshot()));
        }
    })
    .with_context(|| format!("training seed {seed}"))?;
    Ok(SeedRun {
        metrics,
        agent,
        snapshots,
        seconds: start.elapsed().as_secs_f64(),
    })
}

/// Trains every configured seed on the rayon pool; results keep seed order.
pub fn train_all(config: &TrainConfig) -> Result<Vec<SeedRun>> {
    config.validate()?;
    config.seeds.par_iter().map(|&seed| train_seed(config, seed)).collect()
}

/// Creates `path` for a new output, refusing to reuse a non-empty directory.
pub fn fresh_dir(path: &Path) -> Result<()> {
    if path.exists() {
        if !path.is_dir() {
            bail!("{} exists and is not a directory", path.display());
        }
        if fs::read_dir(path)?.next().is_some() {
            bail!(
                "{} already exists and is not empty; choose a new output directory",
                path.display()
            );
        }
    }
    fs::create_dir_all(path).with_context(|| format!("creating {}", path.display()))
}

/// `<run>-<suffix>` next to the run directory.
pub fn sibling(run: &Path, suffix: &str) -> PathBuf {
    let name = run
        .file_name()
        .map_or_else(|| "run".into(), |n| n.to_string_lossy().into_owned());
    run.with_file_name(format!("{name}-{suffix}"))
}

pub fn seed_dir(run: &Path, seed: u64) -> PathBuf {
    run.join(format!("seed-{seed}"))
}

fn write(path: &Path, contents: &str) -> Result<()> {
    fs::write(path, contents).with_context(|| format!("writing {}", path.display()))
}

pub fn write_graph(dir: &Path, stem: &str, graph: &GraphSnapshot, name: &str) -> Result<()> {
    write(&dir.join(format!("{stem}.dot")), &graph_io::write_dot(graph, name))?;
    write(&dir.join(format!("{stem}.gexf")), &graph_io::write_gexf(graph, name))
}

/// Writes a complete run directory and returns its summary.
pub fn write_run(dir: &Path, config: &TrainConfig, runs: &[SeedRun], wall_clock: f64) -> Result<Summary> {
    fresh_dir(dir)?;
    write(&dir.join("config.txt"), &config::render(config))?;
    let metrics: Vec<RunMetrics> = runs.iter().map(|r| r.metrics.clone()).collect();
    if let Some(first) = metrics.first() {
        write(&dir.join("rewards.csv"), &formats::rewards_csv(first)?)?;
    }
    let agg = aggregate(&metrics);
    write(&dir.join("aggregate.csv"), &formats::aggregate_csv(&agg.rows)?)?;
    write(
        &dir.join("neurons_aggregate.csv"),
        &formats::aggregate_csv(&agg.neurons)?,
    )?;

    for run in runs {
        let sd = seed_dir(dir, run.metrics.seed);
        fs::create_dir_all(&sd)?;
        write(&sd.join("rewards.csv"), &formats::rewards_csv(&run.metrics)?)?;
        write(&sd.join("metrics.json"), &serde_json::to_string(&run.metrics)?)?;
        write(&sd.join("agent.json"), &serde_json::to_string(&run.agent)?)?;
        let kind = run.agent.kind();
        for (episode, snap) in &run.snapshots {
            write_graph(
                &sd,
                &format!("graph_ep{episode}"),
                snap,
                &format!("{kind} episode {episode}"),
            )?;
        }
        write_graph(&sd, "graph_final", &run.agent.snapshot(), &format!("{kind} final"))?;
        if let AnyAgent::QTable(t) = &run.agent {
            write(&sd.join("qtable.csv"), &formats::qtable_csv(&t.table)?)?;
        }
    }

    let with_stats: Vec<(RunMetrics, NetworkStats, f64)> = runs
        .iter()
        .map(|r| (r.metrics.clone(), r.agent.stats(), r.seconds))
        .collect();
    let kind = config.agent.kind;
    let summary = Summary::new(kind, &with_stats, wall_clock);
    write(&dir.join("summary.json"), &serde_json::to_string_pretty(&summary)?)?;
    Ok(summary)
}

/// Trains all seeds and writes the run directory.
pub fn train_to_dir(config: &TrainConfig, dir: &Path) -> Result<Summary> {
    let start = Instant::now();
    let runs = train_all(config)?;
    write_run(dir, config, &runs, start.elapsed().as_secs_f64())
}

fn require_run(run: &Path) -> Result<()> {
    if !run.join("config.txt").is_file() {
        bail!("{} is not a run directory (no config.txt)", run.display());
    }
    Ok(())
}

pub fn load_config(run: &Path) -> Result<TrainConfig> {
    require_run(run)?;
    Ok(config::load(&run.join("config.txt"))?)
}

pub fn load_summary(run: &Path) -> Result<Summary> {
    require_run(run)?;
    let path = run.join("summary.json");
    let text = fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

pub fn load_agent(run: &Path, seed: u64) -> Result<AnyAgent> {
    let path = seed_dir(run, seed).join("agent.json");
    let text = fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

pub fn load_metrics(run: &Path) -> Result<Vec<RunMetrics>> {
    let config = load_config(run)?;
    config
        .seeds
        .iter()
        .map(|&seed| {
            let path = seed_dir(run, seed).join("metrics.json");
            let text = fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
            serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
        })
        .collect()
}

/// Retrains `seed` up to `episode` and returns the graph at that point.
/// Training is deterministic, so this matches the original run; a run that
/// converged earlier yields its final graph and episode instead.
pub fn replay_snapshot(config: &TrainConfig, seed: u64, episode: usize) -> Result<(usize, GraphSnapshot)> {
    if episode == 0 {
        bail!("episode numbers start at 1");
    }
    let mut cfg = config.clone();
    cfg.max_episodes = episode;
    let mut agent = cfg.build_agent(seed)?;
    let metrics = trainer::train(&mut agent, &cfg, seed, |_, _| {})?;
    Ok((metrics.episodes.len(), agent.snapshot()))
}

/// Snapshot files of one seed, final graph last.
pub fn snapshot_files(run: &Path, seed: u64, ext: &str) -> Result<Vec<PathBuf>> {
    let dir = seed_dir(run, seed);
    let mut episodes: Vec<(usize, PathBuf)> = Vec::new();
    let mut last = None;
    for entry in fs::read_dir(&dir).with_context(|| format!("reading {}", dir.display()))? {
        let path = entry?.path();
        if path.extension().and_then(|e| e.to_str()) != Some(ext) {
            continue;
        }
        let stem = path
            .file_stem()
            .and_then(|s| s.to_str())
            .unwrap_or_default()
            .to_string();
        if stem == "graph_final" {
            last = Some(path);
        } else if let Some(n) = stem.strip_prefix("graph_ep").and_then(|n| n.parse().ok()) {
            episodes.push((n, path));
        }
    }
    episodes.sort();
    let mut out: Vec<PathBuf> = episodes.into_iter().map(|(_, p)| p).collect();
    out.extend(last);
    Ok(out)
}
