use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use bmu_lab_core::metrics::{degree_distribution, summary_table};
use bmu_lab_core::trainer::evaluate;
use bmu_lab_core::{AgentKind, TrainConfig};
use clap::{Args, Parser, Subcommand};

use crate::{config, formats, graph_io, run};

/// Environment variable holding the default base seed.
pub const SEED_ENV: &str = "BMU_LAB_SEED";

#[derive(Debug, Parser)]
#[command(
    name = "bmu-lab",
    version,
    about = "Synaptic Q-learning and Bellman memory units on cartpole"
)]
pub struct Cli {
    /// Suppress the text report on standard output.
    #[arg(short, long, global = true)]
    pub quiet: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train one agent kind over several seeds and write a run directory.
    Train(TrainArgs),
    /// Greedy rollouts of a trained agent; writes phase traces.
    Eval(EvalArgs),
    /// Graph of one seed at a given episode, as DOT and GEXF.
    ExportGraph(ExportArgs),
    /// Degree distribution of a run's exported graphs.
    Stats(StatsArgs),
    /// Comparison table over several runs.
    Table2(TableArgs),
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Flat key = value config file; flags below override it.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub agent: Option<AgentKind>,
    /// Number of seeds, counted up from the base seed.
    #[arg(long)]
    pub seeds: Option<u64>,
    /// First seed; defaults to $BMU_LAB_SEED, then 0.
    #[arg(long)]
    pub base_seed: Option<u64>,
    #[arg(long)]
    pub max_episodes: Option<usize>,
    #[arg(long)]
    pub gamma: Option<f64>,
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub n_bins: Option<u16>,
    #[arg(long)]
    pub epsilon: Option<f64>,
    #[arg(long)]
    pub snapshot_every: Option<usize>,
    /// Any config key, as KEY=VALUE; may be repeated.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub sets: Vec<String>,
    /// Output run directory; must not already hold files.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub run: PathBuf,
    #[arg(long, default_value_t = 5)]
    pub episodes: usize,
    /// Trained seed to evaluate; defaults to the run's first seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Seed for the evaluation start states; defaults to $BMU_LAB_SEED, then 0.
    #[arg(long)]
    pub eval_seed: Option<u64>,
    /// Defaults to `<run>-eval`.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ExportArgs {
    #[arg(long)]
    pub run: PathBuf,
    #[arg(long)]
    pub episode: usize,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Defaults to `<run>-graphs`.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct StatsArgs {
    #[arg(long)]
    pub run: PathBuf,
    /// Episode snapshot to analyse instead of the final graph.
    #[arg(long)]
    pub episode: Option<usize>,
    /// Defaults to `<run>-stats`.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TableArgs {
    #[arg(long, num_args = 1.., required = true)]
    pub runs: Vec<PathBuf>,
    #[arg(long, default_value = "table2")]
    pub out: PathBuf,
}

fn env_seed() -> Result<Option<u64>> {
    match std::env::var(SEED_ENV) {
        Ok(v) => v
            .trim()
            .parse()
            .map(Some)
            .with_context(|| format!("{SEED_ENV}={v:?} is not an unsigned integer")),
        Err(_) => Ok(None),
    }
}

pub fn train_config(args: &TrainArgs) -> Result<TrainConfig> {
    let mut cfg = match &args.config {
        Some(path) => config::load(path)?,
        None => TrainConfig::default(),
    };
    let mut set = |key: &str, value: Option<String>| -> Result<()> {
        if let Some(v) = value {
            config::apply(&mut cfg, key, &v)?;
        }
        Ok(())
    };
    set("agent", args.agent.map(|a| a.to_string()))?;
    set("max_episodes", args.max_episodes.map(|v| v.to_string()))?;
    set("gamma", args.gamma.map(|v| v.to_string()))?;
    set("alpha", args.alpha.map(|v| v.to_string()))?;
    set("n_bins", args.n_bins.map(|v| v.to_string()))?;
    set("epsilon", args.epsilon.map(|v| v.to_string()))?;
    set("snapshot_every", args.snapshot_every.map(|v| v.to_string()))?;
    for kv in &args.sets {
        let (k, v) = kv
            .split_once('=')
            .with_context(|| format!("--set expects KEY=VALUE, got {kv:?}"))?;
        config::apply(&mut cfg, k.trim(), v)?;
    }
    let base = match args.base_seed {
        Some(b) => Some(b),
        None => env_seed()?,
    };
    match (args.seeds, base) {
        (Some(n), b) => {
            let b = b.unwrap_or(0);
            cfg.seeds = (b..b + n).collect();
        }
        (None, Some(b)) if args.config.is_none() => {
            let n = cfg.seeds.len() as u64;
            cfg.seeds = (b..b + n).collect();
        }
        _ => {}
    }
    cfg.validate()?;
    Ok(cfg)
}

fn first_seed(cfg: &TrainConfig, seed: Option<u64>) -> Result<u64> {
    match seed {
        Some(s) if cfg.seeds.contains(&s) => Ok(s),
        Some(s) => bail!("seed {s} is not part of this run (seeds {:?})", cfg.seeds),
        None => Ok(cfg.seeds[0]),
    }
}

fn write(path: &Path, contents: &str) -> Result<()> {
    fs::write(path, contents).with_context(|| format!("writing {}", path.display()))
}

pub fn execute(cli: &Cli) -> Result<String> {
    match &cli.command {
        Command::Train(args) => {
            let cfg = train_config(args)?;
            let summary = run::train_to_dir(&cfg, &args.out)?;
            Ok(format!("{}wrote {}\n", summary.to_text(), args.out.display()))
        }
        Command::Eval(args) => {
            let cfg = run::load_config(&args.run)?;
            let seed = first_seed(&cfg, args.seed)?;
            let agent = run::load_agent(&args.run, seed)?;
            let eval_seed = match args.eval_seed {
                Some(s) => s,
                None => env_seed()?.unwrap_or(0),
            };
            let report = evaluate(&agent, &cfg, args.episodes, eval_seed)?;
            let out = args.out.clone().unwrap_or_else(|| run::sibling(&args.run, "eval"));
            run::fresh_dir(&out)?;
            write(&out.join("phase.csv"), &formats::phase_csv(&report)?)?;
            let rewards: Vec<f64> = report.episodes.iter().map(|e| e.reward).collect();
            let json = serde_json::json!({
                "seed": seed,
                "eval_seed": eval_seed,
                "episodes": rewards.len(),
                "rewards": rewards,
                "mean": report.mean,
                "min": report.min,
                "max": report.max,
            });
            write(&out.join("eval.json"), &serde_json::to_string_pretty(&json)?)?;
            Ok(format!(
                "seed {seed}: {} episodes, reward mean {} min {} max {}\nwrote {}\n",
                rewards.len(),
                report.mean,
                report.min,
                report.max,
                out.display()
            ))
        }
        Command::ExportGraph(args) => {
            let cfg = run::load_config(&args.run)?;
            let seed = first_seed(&cfg, args.seed)?;
            let (reached, graph) = run::replay_snapshot(&cfg, seed, args.episode)?;
            let out = args.out.clone().unwrap_or_else(|| run::sibling(&args.run, "graphs"));
            run::fresh_dir(&out)?;
            let stem = format!("graph_ep{reached}");
            run::write_graph(
                &out,
                &stem,
                &graph,
                &format!("{} seed {seed} episode {reached}", cfg.agent.kind),
            )?;
            let note = if reached < args.episode {
                format!(" (training stopped at episode {reached})")
            } else {
                String::new()
            };
            Ok(format!(
                "seed {seed} episode {reached}{note}: {} nodes, {} edges\nwrote {}\n",
                graph.node_count(),
                graph.edge_count(),
                out.join(format!("{stem}.{{dot,gexf}}")).display()
            ))
        }
        Command::Stats(args) => {
            let cfg = run::load_config(&args.run)?;
            let out = args.out.clone().unwrap_or_else(|| run::sibling(&args.run, "stats"));
            let stem = args
                .episode
                .map_or_else(|| "graph_final".to_string(), |e| format!("graph_ep{e}"));
            let mut report = String::new();
            let mut rows = Vec::new();
            for (i, &seed) in cfg.seeds.iter().enumerate() {
                let path = run::seed_dir(&args.run, seed).join(format!("{stem}.gexf"));
                let graph = graph_io::read_path(&path)?;
                let hist = degree_distribution(&graph);
                if hist.degree_sum() != 2 * graph.edge_count() {
                    bail!(
                        "{}: degree sum {} != 2 x {} edges",
                        path.display(),
                        hist.degree_sum(),
                        graph.edge_count()
                    );
                }
                if i == 0 {
                    run::fresh_dir(&out)?;
                    write(&out.join("degree_hist.csv"), &formats::degree_hist_csv(&hist)?)?;
                }
                write(
                    &out.join(format!("degree_hist_seed-{seed}.csv")),
                    &formats::degree_hist_csv(&hist)?,
                )?;
                report.push_str(&format!(
                    "seed {seed}: {} nodes, {} edges, average degree {:.3}, max degree {}\n",
                    graph.node_count(),
                    graph.edge_count(),
                    hist.average,
                    hist.max
                ));
                rows.push(serde_json::json!({
                    "seed": seed,
                    "nodes": graph.node_count(),
                    "edges": graph.edge_count(),
                    "average_degree": hist.average,
                    "max_degree": hist.max,
                }));
            }
            write(&out.join("stats.json"), &serde_json::to_string_pretty(&rows)?)?;
            report.push_str(&format!("wrote {}\n", out.display()));
            Ok(report)
        }
        Command::Table2(args) => {
            let mut runs = Vec::new();
            for dir in &args.runs {
                runs.extend(run::load_metrics(dir)?);
            }
            let table = summary_table(&runs);
            run::fresh_dir(&args.out)?;
            write(&args.out.join("table2.csv"), &table.to_csv())?;
            Ok(format!(
                "{}wrote {}\n",
                table.to_text(),
                args.out.join("table2.csv").display()
            ))
        }
    }
}
