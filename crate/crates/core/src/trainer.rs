//! Episode loop, convergence detection and run metrics.

use alloc::format;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::agent::{Agent, AgentKind, AgentSpec, AnyAgent, Transition};
use crate::cartpole::{self, CartState, EnvParams, Push};
use crate::discretize::BinSpec;
use crate::error::{Error, Result};
use crate::policy::Exploration;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub agent: AgentSpec,
    pub env: EnvParams,
    pub bins: BinSpec,
    pub convergence_reward: f64,
    pub convergence_window: usize,
    pub max_episodes: usize,
    pub seeds: Vec<u64>,
    pub exploration: Exploration,
    /// Take a graph snapshot every this many episodes; 0 disables.
    pub snapshot_every: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            agent: AgentSpec::default(),
            env: EnvParams::default(),
            bins: BinSpec::default(),
            convergence_reward: 200.0,
            convergence_window: 20,
            max_episodes: 1000,
            seeds: (0..10).collect(),
            exploration: Exploration::default(),
            snapshot_every: 50,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        self.agent.validate()?;
        self.env.validate()?;
        self.bins.validate()?;
        self.exploration.validate()?;
        if self.agent.actions != 2 {
            return Err(Error::config(
                "actions",
                format!("cartpole has 2 actions, not {}", self.agent.actions),
            ));
        }
        if self.convergence_window == 0 {
            return Err(Error::config("convergence_window", "must be at least 1"));
        }
        let best = f64::from(self.env.max_steps) * self.env.step_reward;
        if self.convergence_reward.is_nan() || self.convergence_reward > best {
            return Err(Error::config(
                "convergence_reward",
                format!(
                    "{} exceeds the best possible episode reward {best}",
                    self.convergence_reward
                ),
            ));
        }
        if self.max_episodes == 0 {
            return Err(Error::config("max_episodes", "must be at least 1"));
        }
        if self.seeds.is_empty() {
            return Err(Error::config("seeds", "at least one seed is required"));
        }
        Ok(())
    }

    pub fn build_agent(&self, seed: u64) -> Result<AnyAgent> {
        self.agent.build(self.bins.n_bins, seed)
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed for the initial state of `episode` (0-based) in the run `run_seed`.
pub fn episode_seed(run_seed: u64, episode: usize) -> u64 {
    splitmix64(splitmix64(run_seed) ^ episode as u64)
}

const EXPLORATION_STREAM: u64 = 0x6578_706C_6F72_6521;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpisodeRecord {
    pub total_reward: f64,
    pub steps: u32,
    /// Units spawned during the episode.
    pub spawned: usize,
    pub terminated: bool,
}

/// Plays one learning episode from the initial state drawn with `env_seed`.
pub fn run_episode<A, R>(
    agent: &mut A,
    config: &TrainConfig,
    episode: usize,
    env_seed: u64,
    explore_rng: &mut R,
) -> Result<EpisodeRecord>
where
    A: Agent + ?Sized,
    R: Rng + ?Sized,
{
    let mut cart = cartpole::reset(env_seed);
    let mut state = config.bins.discretize(&cart);
    let mut spawned = usize::from(agent.ensure(state)?);
    let mut total_reward = 0.0;
    loop {
        let forced = config.exploration.sample(episode, agent.actions(), explore_rng);
        let action = agent.act(&state, forced)?;
        let outcome = cartpole::step(&cart, Push::from_index(action)?, &config.env)?;
        let next_state = config.bins.discretize(&outcome.next_state);
        spawned += usize::from(agent.ensure(next_state)?);
        agent.learn(&Transition {
            state,
            action,
            reward: outcome.reward,
            next_state,
            terminal: outcome.terminated,
        })?;
        total_reward += outcome.reward;
        cart = outcome.next_state;
        state = next_state;
        if outcome.done() {
            return Ok(EpisodeRecord {
                total_reward,
                steps: cart.t,
                spawned,
                terminated: outcome.terminated,
            });
        }
    }
}

/// Tracks the run of consecutive episodes at or above a reward threshold.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConvergenceDetector {
    threshold: f64,
    window: usize,
    streak: usize,
}

impl ConvergenceDetector {
    pub fn new(threshold: f64, window: usize) -> Self {
        ConvergenceDetector {
            threshold,
            window,
            streak: 0,
        }
    }

    /// Adds an episode reward; `true` once the last `window` episodes all met
    /// the threshold.
    pub fn push(&mut self, reward: f64) -> bool {
        if reward >= self.threshold {
            self.streak += 1;
        } else {
            self.streak = 0;
        }
        self.converged()
    }

    pub fn converged(&self) -> bool {
        self.streak >= self.window
    }

    pub fn streak(&self) -> usize {
        self.streak
    }
}

/// Mean and sample standard deviation; a single value has zero spread.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (0.0, 0.0);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1) as f64;
    (mean, libm::sqrt(var))
}

/// Moving mean and std over the trailing `min(i + 1, window)` values at each index.
pub fn trailing_stats(values: &[f64], window: usize) -> Vec<(f64, f64)> {
    (0..values.len())
        .map(|i| {
            let start = (i + 1).saturating_sub(window);
            mean_std(&values[start..=i])
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpisodeMetrics {
    /// 1-based episode number.
    pub episode: usize,
    pub reward: f64,
    pub moving_avg: f64,
    pub std: f64,
    pub steps: u32,
    pub spawned: usize,
    pub neurons: usize,
    pub edges: usize,
    pub avg_fan_in: Option<f64>,
    pub params: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMetrics {
    pub agent: AgentKind,
    pub seed: u64,
    pub episodes: Vec<EpisodeMetrics>,
    pub converged: bool,
    /// Episode at which the convergence window was first filled.
    pub episodes_to_convergence: Option<usize>,
}

impl RunMetrics {
    pub fn rewards(&self) -> Vec<f64> {
        self.episodes.iter().map(|e| e.reward).collect()
    }

    pub fn last(&self) -> Option<&EpisodeMetrics> {
        self.episodes.last()
    }

    pub fn total_spawned(&self) -> usize {
        self.episodes.iter().map(|e| e.spawned).sum()
    }
}

/// Trains until convergence or `max_episodes`. `on_episode` sees the agent
/// after every episode with the 1-based episode number.
pub fn train<A, F>(agent: &mut A, config: &TrainConfig, seed: u64, mut on_episode: F) -> Result<RunMetrics>
where
    A: Agent + ?Sized,
    F: FnMut(usize, &A),
{
    config.validate()?;
    let mut explore_rng = ChaCha8Rng::seed_from_u64(seed ^ EXPLORATION_STREAM);
    let mut detector = ConvergenceDetector::new(config.convergence_reward, config.convergence_window);
    let mut rewards = Vec::new();
    let mut episodes = Vec::new();
    let mut episodes_to_convergence = None;

    for episode in 0..config.max_episodes {
        let record = run_episode(agent, config, episode, episode_seed(seed, episode), &mut explore_rng)?;
        rewards.push(record.total_reward);
        let start = rewards.len().saturating_sub(config.convergence_window);
        let (moving_avg, std) = mean_std(&rewards[start..]);
        let stats = agent.stats();
        episodes.push(EpisodeMetrics {
            episode: episode + 1,
            reward: record.total_reward,
            moving_avg,
            std,
            steps: record.steps,
            spawned: record.spawned,
            neurons: stats.neurons,
            edges: stats.edges,
            avg_fan_in: stats.avg_fan_in,
            params: stats.parameter_count,
        });
        on_episode(episode + 1, agent);
        if detector.push(record.total_reward) {
            episodes_to_convergence = Some(episode + 1);
            break;
        }
    }

    Ok(RunMetrics {
        agent: agent.kind(),
        seed,
        episodes,
        converged: episodes_to_convergence.is_some(),
        episodes_to_convergence,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AggregateRow {
    pub episode: usize,
    pub mean: f64,
    pub lo_band: f64,
    pub hi_band: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateMetrics {
    /// Cross-seed mean of the moving-average reward with a ±2σ band.
    pub rows: Vec<AggregateRow>,
    /// Same band over the neuron count.
    pub neurons: Vec<AggregateRow>,
    pub convergence: Vec<(u64, Option<usize>)>,
}

fn band(runs: &[RunMetrics], pick: impl Fn(&EpisodeMetrics) -> f64) -> Vec<AggregateRow> {
    let len = runs.iter().map(|r| r.episodes.len()).max().unwrap_or(0);
    (0..len)
        .map(|i| {
            // Runs that stopped early hold their last value.
            let column: Vec<f64> = runs
                .iter()
                .filter_map(|r| r.episodes.get(i).or(r.episodes.last()).map(&pick))
                .collect();
            let (mean, sd) = mean_std(&column);
            AggregateRow {
                episode: i + 1,
                mean,
                lo_band: mean - 2.0 * sd,
                hi_band: mean + 2.0 * sd,
            }
        })
        .collect()
}

pub fn aggregate(runs: &[RunMetrics]) -> AggregateMetrics {
    AggregateMetrics {
        rows: band(runs, |e| e.moving_avg),
        neurons: band(runs, |e| e.neurons as f64),
        convergence: runs.iter().map(|r| (r.seed, r.episodes_to_convergence)).collect(),
    }
}

/// Trains one fresh agent per configured seed, one after another.
pub fn multi_seed(config: &TrainConfig) -> Result<(Vec<RunMetrics>, AggregateMetrics)> {
    config.validate()?;
    let runs = config
        .seeds
        .iter()
        .map(|&seed| {
            let mut agent = config.build_agent(seed)?;
            train(&mut agent, config, seed, |_, _| {})
        })
        .collect::<Result<Vec<_>>>()?;
    let agg = aggregate(&runs);
    Ok((runs, agg))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub t: u32,
    pub x: f64,
    pub x_dot: f64,
    pub theta: f64,
    pub theta_dot: f64,
    pub action: usize,
    pub reward: f64,
    pub terminated: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalEpisode {
    pub seed: u64,
    pub reward: f64,
    pub trace: Vec<TraceRow>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub episodes: Vec<EvalEpisode>,
    pub mean: f64,
    pub min: f64,
    pub max: f64,
}

/// Greedy rollouts with learning disabled. Each trace row holds the state
/// the action was taken in together with that step's reward.
pub fn evaluate<A: Agent + ?Sized>(
    agent: &A,
    config: &TrainConfig,
    n_episodes: usize,
    seed: u64,
) -> Result<EvalReport> {
    let mut episodes = Vec::with_capacity(n_episodes);
    for i in 0..n_episodes {
        let env_seed = episode_seed(seed, i);
        let mut cart: CartState = cartpole::reset(env_seed);
        let mut trace = Vec::new();
        let mut reward = 0.0;
        loop {
            let action = agent.greedy_action(&config.bins.discretize(&cart));
            let out = cartpole::step(&cart, Push::from_index(action)?, &config.env)?;
            trace.push(TraceRow {
                t: cart.t,
                x: cart.x,
                x_dot: cart.x_dot,
                theta: cart.theta,
                theta_dot: cart.theta_dot,
                action,
                reward: out.reward,
                terminated: out.terminated,
            });
            reward += out.reward;
            cart = out.next_state;
            if out.done() {
                break;
            }
        }
        episodes.push(EvalEpisode {
            seed: env_seed,
            reward,
            trace,
        });
    }
    let rewards: Vec<f64> = episodes.iter().map(|e| e.reward).collect();
    let (mean, _) = mean_std(&rewards);
    Ok(EvalReport {
        episodes,
        mean,
        min: rewards.iter().copied().fold(f64::INFINITY, f64::min),
        max: rewards.iter().copied().fold(f64::NEG_INFINITY, f64::max),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::discretize::DiscreteState;
    use crate::topology::{GraphSnapshot, NetworkStats};
    use alloc::vec;

    /// Always pushes left.
    struct Scripted;

    impl Agent for Scripted {
        fn kind(&self) -> AgentKind {
            AgentKind::QTable
        }
        fn actions(&self) -> usize {
            2
        }
        fn ensure(&mut self, _: DiscreteState) -> Result<bool> {
            Ok(false)
        }
        fn act(&mut self, _: &DiscreteState, _: Option<usize>) -> Result<usize> {
            Ok(0)
        }
        fn learn(&mut self, _: &Transition) -> Result<()> {
            Ok(())
        }
        fn greedy_action(&self, _: &DiscreteState) -> usize {
            0
        }
        fn q_values(&self, _: &DiscreteState) -> Option<Vec<f64>> {
            None
        }
        fn stats(&self) -> NetworkStats {
            NetworkStats::default()
        }
        fn snapshot(&self) -> GraphSnapshot {
            GraphSnapshot::default()
        }
    }

    #[test]
    fn detector_window_and_reset() {
        let mut d = ConvergenceDetector::new(200.0, 20);
        for i in 0..19 {
            assert!(!d.push(250.0), "{i}");
        }
        assert!(d.push(250.0));

        let mut d = ConvergenceDetector::new(200.0, 3);
        let seq = [250.0, 250.0, 199.0, 250.0, 250.0, 250.0];
        let hits: Vec<bool> = seq.iter().map(|&r| d.push(r)).collect();
        assert_eq!(hits, vec![false, false, false, false, false, true]);
    }

    #[test]
    fn alternating_rewards_never_converge() {
        let mut d = ConvergenceDetector::new(200.0, 20);
        assert!((0..1000).all(|i| !d.push(if i % 2 == 0 { 250.0 } else { 5.0 })));
    }

    #[test]
    fn trailing_window_sizes() {
        let v: Vec<f64> = (1..=5).map(f64::from).collect();
        let stats = trailing_stats(&v, 3);
        assert_eq!(stats[0], (1.0, 0.0));
        assert_eq!(stats[1].0, 1.5);
        assert_eq!(stats[4].0, 4.0);
        assert!((stats[4].1 - 1.0).abs() < 1e-15);
    }

    #[test]
    fn episode_seeds_are_distinct() {
        let mut seen = alloc::collections::BTreeSet::new();
        for run in 0..10 {
            for ep in 0..100 {
                assert!(seen.insert(episode_seed(run, ep)));
            }
        }
    }

    #[test]
    fn scripted_agent_reward_accounting() {
        let cfg = TrainConfig::default();
        let mut agent = Scripted;
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        // Always pushing left fails; reward is (k - 1) steps of +1 and one -10.
        let rec = run_episode(&mut agent, &cfg, 0, 7, &mut rng).unwrap();
        assert!(rec.terminated);
        assert_eq!(rec.total_reward, f64::from(rec.steps - 1) - 10.0);
    }

    #[test]
    fn aggregate_band_of_identical_runs_is_flat() {
        let cfg = TrainConfig {
            max_episodes: 15,
            seeds: vec![3],
            ..TrainConfig::default()
        };
        let mut runs = Vec::new();
        for _ in 0..3 {
            let mut agent = cfg.build_agent(3).unwrap();
            runs.push(train(&mut agent, &cfg, 3, |_, _| {}).unwrap());
        }
        let agg = aggregate(&runs);
        assert_eq!(agg.rows.len(), 15);
        for (r, e) in agg.rows.iter().zip(&runs[0].episodes) {
            assert!((r.mean - e.moving_avg).abs() < 1e-12);
            assert!(r.hi_band - r.lo_band < 1e-12);
        }
        let single = aggregate(&runs[..1]);
        assert!(single.rows.iter().all(|r| r.hi_band - r.lo_band == 0.0));
    }

    #[test]
    fn band_pads_short_runs() {
        let mk = |seed, n: usize, value: f64| RunMetrics {
            agent: AgentKind::QTable,
            seed,
            episodes: (0..n)
                .map(|i| EpisodeMetrics {
                    episode: i + 1,
                    reward: value,
                    moving_avg: value,
                    std: 0.0,
                    steps: 0,
                    spawned: 0,
                    neurons: 0,
                    edges: 0,
                    avg_fan_in: None,
                    params: 0,
                })
                .collect(),
            converged: false,
            episodes_to_convergence: None,
        };
        let agg = aggregate(&[mk(0, 2, 10.0), mk(1, 4, 20.0)]);
        assert_eq!(agg.rows.len(), 4);
        assert_eq!(agg.rows[3].mean, 15.0);
        let sd = libm::sqrt(50.0);
        assert!((agg.rows[3].hi_band - (15.0 + 2.0 * sd)).abs() < 1e-12);
    }

    #[test]
    fn config_validation() {
        assert!(TrainConfig::default().validate().is_ok());
        let mut cfg = TrainConfig::default();
        cfg.agent.gamma = 1.5;
        assert!(matches!(cfg.validate(), Err(Error::Config { key: "gamma", .. })));
        let cfg = TrainConfig {
            convergence_reward: 300.0,
            ..TrainConfig::default()
        };
        assert!(cfg.validate().is_err());
        let cfg = TrainConfig {
            convergence_window: 0,
            ..TrainConfig::default()
        };
        assert!(cfg.validate().is_err());
    }
}
