//! Cartpole dynamics.
//!
//! A rigid pole hinged on a cart that slides on a frictionless track. The cart
//! is pushed with a constant-magnitude force to the left or right each step
//! and the state is advanced with explicit Euler at a fixed `dt`, the same
//! scheme as the CartPole-v1 reference environment.
//!
//! An episode fails when the pole angle or the cart position leaves its
//! limit. The failing step is rewarded with `fail_reward` instead of the
//! per-step `step_reward`; reaching `max_steps` truncates the episode.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Half-width of the uniform box initial states are drawn from.
pub const RESET_SPREAD: f64 = 0.05;

/// Pole angle limit used by the CartPole-v1 reference environment (12°).
pub const REFERENCE_THETA_LIMIT: f64 = 0.2095;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct CartState {
    /// Cart position (m).
    pub x: f64,
    /// Cart velocity (m/s).
    pub x_dot: f64,
    /// Pole angle from upright (rad).
    pub theta: f64,
    /// Pole angular velocity (rad/s).
    pub theta_dot: f64,
    /// Steps taken since reset.
    pub t: u32,
}

impl CartState {
    pub fn new(x: f64, x_dot: f64, theta: f64, theta_dot: f64) -> Self {
        CartState {
            x,
            x_dot,
            theta,
            theta_dot,
            t: 0,
        }
    }

    pub fn components(&self) -> [f64; 4] {
        [self.x, self.x_dot, self.theta, self.theta_dot]
    }

    /// Mirror image of the state (all four components negated).
    pub fn mirrored(&self) -> Self {
        CartState {
            x: -self.x,
            x_dot: -self.x_dot,
            theta: -self.theta,
            theta_dot: -self.theta_dot,
            t: self.t,
        }
    }

    pub fn is_finite(&self) -> bool {
        self.components().iter().all(|v| v.is_finite())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Push {
    Left,
    Right,
}

impl Push {
    pub fn from_index(action: usize) -> Result<Self> {
        match action {
            0 => Ok(Push::Left),
            1 => Ok(Push::Right),
            _ => Err(Error::ActionOutOfRange { action, actions: 2 }),
        }
    }

    pub fn index(self) -> usize {
        match self {
            Push::Left => 0,
            Push::Right => 1,
        }
    }

    pub fn opposite(self) -> Self {
        match self {
            Push::Left => Push::Right,
            Push::Right => Push::Left,
        }
    }

    fn sign(self) -> f64 {
        match self {
            Push::Left => -1.0,
            Push::Right => 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnvParams {
    pub gravity: f64,
    pub mass_cart: f64,
    pub mass_pole: f64,
    /// Half the pole length (m).
    pub pole_half_length: f64,
    pub force_mag: f64,
    pub dt: f64,
    pub max_steps: u32,
    pub theta_limit: f64,
    pub x_limit: f64,
    pub fail_reward: f64,
    pub step_reward: f64,
}

impl Default for EnvParams {
    fn default() -> Self {
        EnvParams {
            gravity: 9.8,
            mass_cart: 1.0,
            mass_pole: 0.1,
            pole_half_length: 0.5,
            force_mag: 10.0,
            dt: 0.02,
            max_steps: 250,
            theta_limit: 0.418,
            x_limit: 2.4,
            fail_reward: -10.0,
            step_reward: 1.0,
        }
    }
}

impl EnvParams {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("gravity", self.gravity),
            ("mass_cart", self.mass_cart),
            ("mass_pole", self.mass_pole),
            ("pole_half_length", self.pole_half_length),
            ("force_mag", self.force_mag),
            ("dt", self.dt),
            ("theta_limit", self.theta_limit),
            ("x_limit", self.x_limit),
        ];
        for (key, value) in positive {
            if !(value.is_finite() && value > 0.0) {
                return Err(Error::config(key, alloc::format!("{value} must be positive")));
            }
        }
        if self.max_steps < 200 {
            return Err(Error::config(
                "max_steps",
                alloc::format!("{} is below the minimum of 200", self.max_steps),
            ));
        }
        if !self.fail_reward.is_finite() {
            return Err(Error::config("fail_reward", "must be finite"));
        }
        if !self.step_reward.is_finite() {
            return Err(Error::config("step_reward", "must be finite"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepOutcome {
    pub next_state: CartState,
    pub reward: f64,
    pub terminated: bool,
    pub truncated: bool,
}

impl StepOutcome {
    pub fn done(&self) -> bool {
        self.terminated || self.truncated
    }
}

/// Draws an initial state with every component uniform in ±[`RESET_SPREAD`].
pub fn reset(seed: u64) -> CartState {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut draw = || rng.gen_range(-RESET_SPREAD..=RESET_SPREAD);
    CartState::new(draw(), draw(), draw(), draw())
}

pub fn is_terminal(state: &CartState, params: &EnvParams) -> bool {
    state.theta.abs() > params.theta_limit || state.x.abs() > params.x_limit
}

/// Advances the cart one `dt` under a push of `force_mag` newtons.
pub fn step(state: &CartState, action: Push, params: &EnvParams) -> Result<StepOutcome> {
    if is_terminal(state, params) {
        return Err(Error::TerminalStep);
    }
    let next_state = integrate(state, action.sign() * params.force_mag, params);
    let terminated = is_terminal(&next_state, params);
    let truncated = !terminated && next_state.t >= params.max_steps;
    let reward = if terminated {
        params.fail_reward
    } else {
        params.step_reward
    };
    Ok(StepOutcome {
        next_state,
        reward,
        terminated,
        truncated,
    })
}

fn integrate(s: &CartState, force: f64, p: &EnvParams) -> CartState {
    let total_mass = p.mass_cart + p.mass_pole;
    let pole_mass_length = p.mass_pole * p.pole_half_length;
    let (sin, cos) = (libm::sin(s.theta), libm::cos(s.theta));

    let temp = (force + pole_mass_length * s.theta_dot * s.theta_dot * sin) / total_mass;
    let theta_acc =
        (p.gravity * sin - cos * temp) / (p.pole_half_length * (4.0 / 3.0 - p.mass_pole * cos * cos / total_mass));
    let x_acc = temp - pole_mass_length * theta_acc * cos / total_mass;

    CartState {
        x: s.x + p.dt * s.x_dot,
        x_dot: s.x_dot + p.dt * x_acc,
        theta: s.theta + p.dt * s.theta_dot,
        theta_dot: s.theta_dot + p.dt * theta_acc,
        t: s.t + 1,
    }
}

/// A cartpole instance owning its current state.
#[derive(Debug, Clone)]
pub struct CartPole {
    params: EnvParams,
    state: CartState,
    done: bool,
}

impl CartPole {
    pub fn new(params: EnvParams) -> Self {
        CartPole {
            params,
            state: CartState::default(),
            done: false,
        }
    }

    pub fn params(&self) -> &EnvParams {
        &self.params
    }

    pub fn state(&self) -> &CartState {
        &self.state
    }

    pub fn reset(&mut self, seed: u64) -> CartState {
        self.state = reset(seed);
        self.done = false;
        self.state
    }

    pub fn step(&mut self, action: Push) -> Result<StepOutcome> {
        if self.done {
            return Err(Error::TerminalStep);
        }
        let outcome = step(&self.state, action, &self.params)?;
        self.state = outcome.next_state;
        self.done = outcome.done();
        Ok(outcome)
    }
}
