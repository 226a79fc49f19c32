//! Flat `key = value` run configuration.
//!
//! Blank lines and `#` comments are ignored. Every key maps onto one field
//! of [`TrainConfig`]; unknown keys are errors. [`render`] writes every key
//! so that `parse(&render(c)) == c`.

use std::fmt::Write as _;
use std::path::Path;

use bmu_lab_core::bmu::Tuning;
use bmu_lab_core::pool::Overflow;
use bmu_lab_core::qtable::TableMode;
use bmu_lab_core::{QInit, TrainConfig};

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("line {line}: expected `key = value`, found {text:?}")]
    Syntax { line: usize, text: String },
    #[error("unknown config key `{key}`")]
    UnknownKey { key: String },
    #[error("config key `{key}`: cannot use {value:?}: {reason}")]
    BadValue { key: String, value: String, reason: String },
    #[error("config key `{key}` is set twice")]
    Duplicate { key: String },
    #[error(transparent)]
    Invalid(#[from] bmu_lab_core::Error),
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
}

pub const KEYS: [&str; 34] = [
    "agent",
    "actions",
    "alpha",
    "gamma",
    "frequency_gain",
    "q_init",
    "tuning",
    "pool_capacity",
    "pool_overflow",
    "table_mode",
    "gravity",
    "mass_cart",
    "mass_pole",
    "pole_half_length",
    "force_mag",
    "dt",
    "max_steps",
    "theta_limit",
    "x_limit",
    "fail_reward",
    "step_reward",
    "n_bins",
    "x_bound",
    "x_dot_bound",
    "theta_bound",
    "theta_dot_bound",
    "convergence_reward",
    "convergence_window",
    "max_episodes",
    "seeds",
    "epsilon",
    "epsilon_decay",
    "epsilon_min",
    "snapshot_every",
];

fn bad(key: &str, value: &str, reason: impl ToString) -> ConfigError {
    ConfigError::BadValue {
        key: key.to_string(),
        value: value.to_string(),
        reason: reason.to_string(),
    }
}

fn num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T, ConfigError>
where
    T::Err: std::fmt::Display,
{
    value.parse().map_err(|e| bad(key, value, e))
}

fn bound(key: &str, value: &str) -> Result<(f64, f64), ConfigError> {
    match value.split_once(':') {
        Some((lo, hi)) => Ok((num(key, lo.trim())?, num(key, hi.trim())?)),
        None => {
            let w: f64 = num(key, value)?;
            Ok((-w, w))
        }
    }
}

fn render_bound(lo: f64, hi: f64) -> String {
    if lo == -hi {
        format!("{hi}")
    } else {
        format!("{lo}:{hi}")
    }
}

/// Sets one key on `config`. Values are checked for syntax here and for
/// domain by [`TrainConfig::validate`].
pub fn apply(config: &mut TrainConfig, key: &str, value: &str) -> Result<(), ConfigError> {
    let value = value.trim();
    let agent = &mut config.agent;
    let env = &mut config.env;
    let dim = |k: &str| {
        ["x_bound", "x_dot_bound", "theta_bound", "theta_dot_bound"]
            .iter()
            .position(|d| *d == k)
    };
    match key {
        "agent" => agent.kind = value.parse().map_err(|e: bmu_lab_core::Error| bad(key, value, e))?,
        "actions" => agent.actions = num(key, value)?,
        "alpha" => agent.alpha = num(key, value)?,
        "gamma" => agent.gamma = num(key, value)?,
        "frequency_gain" => agent.frequency_gain = num(key, value)?,
        "q_init" => {
            agent.q_init = match value.split_once(':') {
                None if value == "zero" => QInit::Zero,
                Some(("uniform", max)) => QInit::Uniform { max: num(key, max)? },
                _ => return Err(bad(key, value, "expected `zero` or `uniform:<max>`")),
            }
        }
        "tuning" => {
            let parts: Vec<&str> = value.split(':').collect();
            agent.tuning = match parts.as_slice() {
                ["identity"] => Tuning::Identity,
                ["rectified"] => Tuning::Rectified,
                ["lif", rc, rf] => Tuning::Lif {
                    tau_rc: num(key, rc)?,
                    tau_ref: num(key, rf)?,
                },
                _ => {
                    return Err(bad(
                        key,
                        value,
                        "expected identity, rectified or lif:<tau_rc>:<tau_ref>",
                    ))
                }
            }
        }
        "pool_capacity" => agent.pool_capacity = num(key, value)?,
        "pool_overflow" => {
            agent.pool_overflow = match value {
                "error" => Overflow::Error,
                "evict" => Overflow::EvictLeastRecent,
                _ => return Err(bad(key, value, "expected `error` or `evict`")),
            }
        }
        "table_mode" => {
            agent.table_mode = match value {
                "sparse" => TableMode::Sparse,
                "dense" => TableMode::Dense,
                _ => return Err(bad(key, value, "expected `sparse` or `dense`")),
            }
        }
        "gravity" => env.gravity = num(key, value)?,
        "mass_cart" => env.mass_cart = num(key, value)?,
        "mass_pole" => env.mass_pole = num(key, value)?,
        "pole_half_length" => env.pole_half_length = num(key, value)?,
        "force_mag" => env.force_mag = num(key, value)?,
        "dt" => env.dt = num(key, value)?,
        "max_steps" => env.max_steps = num(key, value)?,
        "theta_limit" => env.theta_limit = num(key, value)?,
        "x_limit" => env.x_limit = num(key, value)?,
        "fail_reward" => env.fail_reward = num(key, value)?,
        "step_reward" => env.step_reward = num(key, value)?,
        "n_bins" => config.bins.n_bins = num(key, value)?,
        k if dim(k).is_some() => {
            let d = dim(k).unwrap_or_default();
            let (lo, hi) = bound(key, value)?;
            config.bins.lower[d] = lo;
            config.bins.upper[d] = hi;
        }
        "convergence_reward" => config.convergence_reward = num(key, value)?,
        "convergence_window" => config.convergence_window = num(key, value)?,
        "max_episodes" => config.max_episodes = num(key, value)?,
        "seeds" => {
            config.seeds = value.split(',').map(|s| num(key, s.trim())).collect::<Result<_, _>>()?;
        }
        "epsilon" => config.exploration.epsilon = num(key, value)?,
        "epsilon_decay" => config.exploration.decay = num(key, value)?,
        "epsilon_min" => config.exploration.min_epsilon = num(key, value)?,
        "snapshot_every" => config.snapshot_every = num(key, value)?,
        _ => return Err(ConfigError::UnknownKey { key: key.to_string() }),
    }
    Ok(())
}

/// Parses config text on top of the defaults and validates the result.
pub fn parse(text: &str) -> Result<TrainConfig, ConfigError> {
    let mut config = TrainConfig::default();
    let mut seen = std::collections::BTreeSet::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| ConfigError::Syntax {
            line: i + 1,
            text: raw.to_string(),
        })?;
        let key = key.trim();
        if !seen.insert(key.to_string()) {
            return Err(ConfigError::Duplicate { key: key.to_string() });
        }
        apply(&mut config, key, value)?;
    }
    config.validate()?;
    Ok(config)
}

pub fn load(path: &Path) -> Result<TrainConfig, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse(&text)
}

/// Every key with its current value, in [`KEYS`] order.
pub fn render(config: &TrainConfig) -> String {
    let a = &config.agent;
    let e = &config.env;
    let b = &config.bins;
    let mut out = String::new();
    let mut put = |k: &str, v: String| {
        let _ = writeln!(out, "{k} = {v}");
    };
    put("agent", a.kind.to_string());
    put("actions", a.actions.to_string());
    put("alpha", a.alpha.to_string());
    put("gamma", a.gamma.to_string());
    put("frequency_gain", a.frequency_gain.to_string());
    put(
        "q_init",
        match a.q_init {
            QInit::Zero => "zero".into(),
            QInit::Uniform { max } => format!("uniform:{max}"),
        },
    );
    put(
        "tuning",
        match a.tuning {
            Tuning::Identity => "identity".into(),
            Tuning::Rectified => "rectified".into(),
            Tuning::Lif { tau_rc, tau_ref } => format!("lif:{tau_rc}:{tau_ref}"),
        },
    );
    put("pool_capacity", a.pool_capacity.to_string());
    put(
        "pool_overflow",
        match a.pool_overflow {
            Overflow::Error => "error",
            Overflow::EvictLeastRecent => "evict",
        }
        .into(),
    );
    put(
        "table_mode",
        match a.table_mode {
            TableMode::Sparse => "sparse",
            TableMode::Dense => "dense",
        }
        .into(),
    );
    put("gravity", e.gravity.to_string());
    put("mass_cart", e.mass_cart.to_string());
    put("mass_pole", e.mass_pole.to_string());
    put("pole_half_length", e.pole_half_length.to_string());
    put("force_mag", e.force_mag.to_string());
    put("dt", e.dt.to_string());
    put("max_steps", e.max_steps.to_string());
    put("theta_limit", e.theta_limit.to_string());
    put("x_limit", e.x_limit.to_string());
    put("fail_reward", e.fail_reward.to_string());
    put("step_reward", e.step_reward.to_string());
    put("n_bins", b.n_bins.to_string());
    for (d, k) in ["x_bound", "x_dot_bound", "theta_bound", "theta_dot_bound"]
        .iter()
        .enumerate()
    {
        put(k, render_bound(b.lower[d], b.upper[d]));
    }
    put("convergence_reward", config.convergence_reward.to_string());
    put("convergence_window", config.convergence_window.to_string());
    put("max_episodes", config.max_episodes.to_string());
    put(
        "seeds",
        config.seeds.iter().map(u64::to_string).collect::<Vec<_>>().join(","),
    );
    put("epsilon", config.exploration.epsilon.to_string());
    put("epsilon_decay", config.exploration.decay.to_string());
    put("epsilon_min", config.exploration.min_epsilon.to_string());
    put("snapshot_every", config.snapshot_every.to_string());
    out
}
