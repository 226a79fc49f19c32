//! Synaptic Q-learning and Bellman memory units on cartpole.
//!
//! Everything here is `no_std` with `alloc`; file formats, the command line
//! and parallel seed runs live in the `bmu-lab` crate.

#![cfg_attr(not(test), no_std)]

extern crate alloc;

pub mod agent;
pub mod bmu;
pub mod cartpole;
pub mod discretize;
pub mod error;
pub mod filter;
pub mod metrics;
pub mod policy;
pub mod pool;
pub mod qtable;
pub mod synaptic;
pub mod topology;
pub mod trainer;

pub use agent::{Agent, AgentKind, AgentSpec, AnyAgent, QInit, Transition};
pub use cartpole::{CartPole, CartState, EnvParams, Push, StepOutcome};
pub use discretize::{BinSpec, DiscreteState};
pub use error::{Error, Result};
pub use topology::{GraphSnapshot, NetworkStats};
pub use trainer::{RunMetrics, TrainConfig};
