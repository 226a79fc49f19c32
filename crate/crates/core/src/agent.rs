//! Common interface over the four learners.
//!
//! The trainer drives every agent through the same cycle: make sure the
//! current state has a unit (`ensure`), pick an action (`act`), make sure
//! the next state has a unit, then `learn` from the transition.

use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::bmu::{ActionTable, BmuPopulation, Tuning};
use crate::discretize::DiscreteState;
use crate::error::{Error, Result};
use crate::pool::{NeuronPool, Overflow, DEFAULT_CAPACITY};
use crate::qtable::{QTable, TableMode};
use crate::synaptic::SynapticGraph;
use crate::topology::{GraphSnapshot, NetworkStats};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AgentKind {
    Synaptic,
    Bmu,
    BmuPool,
    #[serde(rename = "qtable")]
    QTable,
}

impl AgentKind {
    pub const ALL: [AgentKind; 4] = [
        AgentKind::Synaptic,
        AgentKind::Bmu,
        AgentKind::BmuPool,
        AgentKind::QTable,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            AgentKind::Synaptic => "synaptic",
            AgentKind::Bmu => "bmu",
            AgentKind::BmuPool => "bmu-pool",
            AgentKind::QTable => "qtable",
        }
    }
}

impl fmt::Display for AgentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for AgentKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        AgentKind::ALL.into_iter().find(|k| k.as_str() == s).ok_or_else(|| {
            Error::config(
                "agent",
                alloc::format!("unknown agent {s:?} (expected synaptic, bmu, bmu-pool or qtable)"),
            )
        })
    }
}

/// Initial Q values for synaptic neurons.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub enum QInit {
    #[default]
    Zero,
    /// i.i.d. uniform in `[0, max)`.
    Uniform { max: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Transition {
    pub state: DiscreteState,
    pub action: usize,
    pub reward: f64,
    pub next_state: DiscreteState,
    pub terminal: bool,
}

pub trait Agent {
    fn kind(&self) -> AgentKind;

    fn actions(&self) -> usize;

    /// Looks up or spawns the unit for `state`; `true` when spawned.
    fn ensure(&mut self, state: DiscreteState) -> Result<bool>;

    /// Chooses the action for `state`, or commits to `forced` when given.
    /// `state` must have been ensured.
    fn act(&mut self, state: &DiscreteState, forced: Option<usize>) -> Result<usize>;

    /// Connects and updates after `act`. Both states must have been ensured.
    fn learn(&mut self, transition: &Transition) -> Result<()>;

    /// Greedy choice without side effects; unseen states pick action 0.
    fn greedy_action(&self, state: &DiscreteState) -> usize;

    fn q_values(&self, state: &DiscreteState) -> Option<Vec<f64>>;

    fn stats(&self) -> NetworkStats;

    fn snapshot(&self) -> GraphSnapshot;
}

fn check_forced(forced: Option<usize>, actions: usize) -> Result<Option<usize>> {
    match forced {
        Some(action) if action >= actions => Err(Error::ActionOutOfRange { action, actions }),
        other => Ok(other),
    }
}

fn unknown(state: &DiscreteState) -> Error {
    Error::UnknownState(state.key())
}

/// Stores a ChaCha generator as its seed, stream and word position.
mod rng_state {
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    #[derive(Serialize, Deserialize)]
    struct State {
        seed: [u8; 32],
        stream: u64,
        word_pos_hi: u64,
        word_pos_lo: u64,
    }

    pub fn serialize<S: Serializer>(rng: &ChaCha8Rng, s: S) -> Result<S::Ok, S::Error> {
        let pos = rng.get_word_pos();
        State {
            seed: rng.get_seed(),
            stream: rng.get_stream(),
            word_pos_hi: (pos >> 64) as u64,
            word_pos_lo: pos as u64,
        }
        .serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<ChaCha8Rng, D::Error> {
        let st = State::deserialize(d)?;
        let mut rng = ChaCha8Rng::from_seed(st.seed);
        rng.set_stream(st.stream);
        rng.set_word_pos((u128::from(st.word_pos_hi) << 64) | u128::from(st.word_pos_lo));
        Ok(rng)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynapticAgent {
    pub graph: SynapticGraph,
    pub alpha: f64,
    pub gamma: f64,
    pub frequency_gain: f64,
    pub q_init: QInit,
    #[serde(with = "rng_state")]
    rng: ChaCha8Rng,
}

impl SynapticAgent {
    pub fn new(actions: usize, alpha: f64, gamma: f64, frequency_gain: f64, q_init: QInit, seed: u64) -> Result<Self> {
        Ok(SynapticAgent {
            graph: SynapticGraph::new(actions, gamma)?,
            alpha,
            gamma,
            frequency_gain,
            q_init,
            rng: ChaCha8Rng::seed_from_u64(seed),
        })
    }
}

impl Agent for SynapticAgent {
    fn kind(&self) -> AgentKind {
        AgentKind::Synaptic
    }

    fn actions(&self) -> usize {
        self.graph.actions()
    }

    fn ensure(&mut self, state: DiscreteState) -> Result<bool> {
        if self.graph.lookup(&state).is_some() {
            return Ok(false);
        }
        match self.q_init {
            QInit::Zero => self.graph.spawn_neuron(state)?,
            QInit::Uniform { max } => {
                let q: Vec<f64> = (0..self.graph.actions()).map(|_| self.rng.gen::<f64>() * max).collect();
                self.graph.spawn_neuron_with(state, &q)?
            }
        };
        Ok(true)
    }

    fn act(&mut self, state: &DiscreteState, forced: Option<usize>) -> Result<usize> {
        let id = self.graph.lookup(state).ok_or_else(|| unknown(state))?;
        match check_forced(forced, self.actions())? {
            Some(action) => {
                self.graph.open_gate(id, action)?;
                Ok(action)
            }
            None => Ok(self.graph.forward_select(id, self.frequency_gain).action),
        }
    }

    fn learn(&mut self, t: &Transition) -> Result<()> {
        let source = self.graph.lookup(&t.state).ok_or_else(|| unknown(&t.state))?;
        let target = self.graph.lookup(&t.next_state).ok_or_else(|| unknown(&t.next_state))?;
        self.graph.connect(source, t.action, target)?;
        let next_value = if t.terminal { 0.0 } else { self.graph.value(target) };
        self.graph
            .bellman_update(source, t.action, t.reward, next_value, self.alpha, self.gamma)?;
        Ok(())
    }

    fn greedy_action(&self, state: &DiscreteState) -> usize {
        self.graph.greedy_action(state)
    }

    fn q_values(&self, state: &DiscreteState) -> Option<Vec<f64>> {
        self.graph.lookup(state).map(|id| self.graph.neuron(id).q_values())
    }

    fn stats(&self) -> NetworkStats {
        self.graph.stats()
    }

    fn snapshot(&self) -> GraphSnapshot {
        self.graph.snapshot()
    }
}

/// Ensemble agent for a one-dimensional action space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BmuAgent {
    pub population: BmuPopulation,
    pub alpha: f64,
    pub gamma: f64,
    #[serde(with = "rng_state")]
    rng: ChaCha8Rng,
}

impl BmuAgent {
    pub fn new(actions: usize, alpha: f64, gamma: f64, tuning: Tuning, seed: u64) -> Result<Self> {
        let values = (0..actions).map(|a| a as f64).collect();
        Ok(BmuAgent {
            population: BmuPopulation::new(ActionTable::new(actions, 1, values)?, tuning),
            alpha,
            gamma,
            rng: ChaCha8Rng::seed_from_u64(seed),
        })
    }
}

impl Agent for BmuAgent {
    fn kind(&self) -> AgentKind {
        AgentKind::Bmu
    }

    fn actions(&self) -> usize {
        self.population.action_table().bins()
    }

    fn ensure(&mut self, state: DiscreteState) -> Result<bool> {
        if self.population.lookup(&state).is_some() {
            return Ok(false);
        }
        self.population.spawn_ensemble(state, &mut self.rng)?;
        Ok(true)
    }

    fn act(&mut self, state: &DiscreteState, forced: Option<usize>) -> Result<usize> {
        let idx = self.population.lookup(state).ok_or_else(|| unknown(state))?;
        match check_forced(forced, self.actions())? {
            Some(action) => Ok(action),
            None => Ok(self.population.select_action(idx).bins[0]),
        }
    }

    fn learn(&mut self, t: &Transition) -> Result<()> {
        let idx = self.population.lookup(&t.state).ok_or_else(|| unknown(&t.state))?;
        let next = self
            .population
            .lookup(&t.next_state)
            .ok_or_else(|| unknown(&t.next_state))?;
        self.population
            .bmu_update(idx, &[t.action], t.reward, next, t.terminal, self.alpha, self.gamma)
    }

    fn greedy_action(&self, state: &DiscreteState) -> usize {
        self.population
            .lookup(state)
            .map_or(0, |idx| self.population.select_action(idx).bins[0])
    }

    fn q_values(&self, state: &DiscreteState) -> Option<Vec<f64>> {
        self.population
            .lookup(state)
            .map(|idx| self.population.ensemble(idx).column(0))
    }

    fn stats(&self) -> NetworkStats {
        self.population.stats()
    }

    fn snapshot(&self) -> GraphSnapshot {
        self.population.snapshot()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoolAgent {
    pub pool: NeuronPool,
    pub alpha: f64,
    pub gamma: f64,
}

impl PoolAgent {
    pub fn new(capacity: usize, actions: usize, overflow: Overflow, alpha: f64, gamma: f64) -> Result<Self> {
        Ok(PoolAgent {
            pool: NeuronPool::new(capacity, actions, overflow)?,
            alpha,
            gamma,
        })
    }
}

impl Agent for PoolAgent {
    fn kind(&self) -> AgentKind {
        AgentKind::BmuPool
    }

    fn actions(&self) -> usize {
        self.pool.actions()
    }

    fn ensure(&mut self, state: DiscreteState) -> Result<bool> {
        if self.pool.neuron_of(&state).is_some() {
            return Ok(false);
        }
        self.pool.pool_assign(state)?;
        Ok(true)
    }

    fn act(&mut self, state: &DiscreteState, forced: Option<usize>) -> Result<usize> {
        let greedy = self.pool.pool_select(state)?;
        Ok(check_forced(forced, self.actions())?.unwrap_or(greedy))
    }

    fn learn(&mut self, t: &Transition) -> Result<()> {
        self.pool.pool_update(
            &t.state,
            t.action,
            t.reward,
            &t.next_state,
            t.terminal,
            self.alpha,
            self.gamma,
        )
    }

    fn greedy_action(&self, state: &DiscreteState) -> usize {
        self.pool.greedy_action(state)
    }

    fn q_values(&self, state: &DiscreteState) -> Option<Vec<f64>> {
        self.pool.neuron_of(state).map(|n| self.pool.weights(n).to_vec())
    }

    fn stats(&self) -> NetworkStats {
        self.pool.stats()
    }

    fn snapshot(&self) -> GraphSnapshot {
        self.pool.snapshot()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QTableAgent {
    pub table: QTable,
    pub alpha: f64,
    pub gamma: f64,
}

impl QTableAgent {
    pub fn new(mode: TableMode, n_bins: u16, actions: usize, alpha: f64, gamma: f64) -> Result<Self> {
        Ok(QTableAgent {
            table: QTable::new(mode, n_bins, actions)?,
            alpha,
            gamma,
        })
    }
}

impl Agent for QTableAgent {
    fn kind(&self) -> AgentKind {
        AgentKind::QTable
    }

    fn actions(&self) -> usize {
        self.table.actions()
    }

    fn ensure(&mut self, state: DiscreteState) -> Result<bool> {
        self.table.visit(state)
    }

    fn act(&mut self, state: &DiscreteState, forced: Option<usize>) -> Result<usize> {
        Ok(check_forced(forced, self.actions())?.unwrap_or_else(|| self.table.qtable_select(state)))
    }

    fn learn(&mut self, t: &Transition) -> Result<()> {
        self.table.qtable_update(
            t.state,
            t.action,
            t.reward,
            &t.next_state,
            self.alpha,
            self.gamma,
            t.terminal,
        )?;
        Ok(())
    }

    fn greedy_action(&self, state: &DiscreteState) -> usize {
        self.table.qtable_select(state)
    }

    fn q_values(&self, state: &DiscreteState) -> Option<Vec<f64>> {
        Some(self.table.q_values(state))
    }

    fn stats(&self) -> NetworkStats {
        self.table.stats()
    }

    fn snapshot(&self) -> GraphSnapshot {
        self.table.snapshot()
    }
}

/// Everything needed to build a fresh agent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentSpec {
    pub kind: AgentKind,
    pub actions: usize,
    pub alpha: f64,
    pub gamma: f64,
    /// Spike frequency per unit of Q.
    pub frequency_gain: f64,
    pub q_init: QInit,
    pub tuning: Tuning,
    pub pool_capacity: usize,
    pub pool_overflow: Overflow,
    pub table_mode: TableMode,
}

impl Default for AgentSpec {
    fn default() -> Self {
        AgentSpec {
            kind: AgentKind::Synaptic,
            actions: 2,
            alpha: 0.9,
            gamma: 0.99,
            frequency_gain: 1.0,
            q_init: QInit::Zero,
            tuning: Tuning::Identity,
            pool_capacity: DEFAULT_CAPACITY,
            pool_overflow: Overflow::Error,
            table_mode: TableMode::Sparse,
        }
    }
}

impl AgentSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return Err(Error::config(
                "gamma",
                alloc::format!("{} is outside (0, 1)", self.gamma),
            ));
        }
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            return Err(Error::config(
                "alpha",
                alloc::format!("{} is outside (0, 1]", self.alpha),
            ));
        }
        if self.actions == 0 {
            return Err(Error::config("actions", "at least one action is required"));
        }
        if !self.frequency_gain.is_finite() || self.frequency_gain <= 0.0 {
            return Err(Error::config(
                "frequency_gain",
                alloc::format!("{} must be positive", self.frequency_gain),
            ));
        }
        if let QInit::Uniform { max } = self.q_init {
            if !(max.is_finite() && max > 0.0) {
                return Err(Error::config(
                    "q_init",
                    alloc::format!("uniform bound {max} must be positive"),
                ));
            }
        }
        if self.pool_capacity == 0 {
            return Err(Error::config("pool_capacity", "must be at least 1"));
        }
        Ok(())
    }

    pub fn build(&self, n_bins: u16, seed: u64) -> Result<AnyAgent> {
        self.validate()?;
        Ok(match self.kind {
            AgentKind::Synaptic => AnyAgent::Synaptic(SynapticAgent::new(
                self.actions,
                self.alpha,
                self.gamma,
                self.frequency_gain,
                self.q_init,
                seed,
            )?),
            AgentKind::Bmu => AnyAgent::Bmu(BmuAgent::new(self.actions, self.alpha, self.gamma, self.tuning, seed)?),
            AgentKind::BmuPool => AnyAgent::BmuPool(PoolAgent::new(
                self.pool_capacity,
                self.actions,
                self.pool_overflow,
                self.alpha,
                self.gamma,
            )?),
            AgentKind::QTable => AnyAgent::QTable(QTableAgent::new(
                self.table_mode,
                n_bins,
                self.actions,
                self.alpha,
                self.gamma,
            )?),
        })
    }
}

/// Any of the four agents; serializable for persistence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AnyAgent {
    Synaptic(SynapticAgent),
    Bmu(BmuAgent),
    BmuPool(PoolAgent),
    #[serde(rename = "qtable")]
    QTable(QTableAgent),
}

macro_rules! dispatch {
    ($self:expr, $a:ident => $body:expr) => {
        match $self {
            AnyAgent::Synaptic($a) => $body,
            AnyAgent::Bmu($a) => $body,
            AnyAgent::BmuPool($a) => $body,
            AnyAgent::QTable($a) => $body,
        }
    };
}

impl Agent for AnyAgent {
    fn kind(&self) -> AgentKind {
        dispatch!(self, a => a.kind())
    }

    fn actions(&self) -> usize {
        dispatch!(self, a => a.actions())
    }

    fn ensure(&mut self, state: DiscreteState) -> Result<bool> {
        dispatch!(self, a => a.ensure(state))
    }

    fn act(&mut self, state: &DiscreteState, forced: Option<usize>) -> Result<usize> {
        dispatch!(self, a => a.act(state, forced))
    }

    fn learn(&mut self, transition: &Transition) -> Result<()> {
        dispatch!(self, a => a.learn(transition))
    }

    fn greedy_action(&self, state: &DiscreteState) -> usize {
        dispatch!(self, a => a.greedy_action(state))
    }

    fn q_values(&self, state: &DiscreteState) -> Option<Vec<f64>> {
        dispatch!(self, a => a.q_values(state))
    }

    fn stats(&self) -> NetworkStats {
        dispatch!(self, a => a.stats())
    }

    fn snapshot(&self) -> GraphSnapshot {
        dispatch!(self, a => a.snapshot())
    }
}
