use alloc::string::String;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("cannot step a terminal cartpole state")]
    TerminalStep,

    #[error("state {0} is already present in the population")]
    DuplicateState(String),

    #[error("state {0} is not present in the population")]
    UnknownState(String),

    #[error("gate {action} of neuron {state} is closed")]
    GateClosed { state: String, action: usize },

    #[error("action {action} out of range for {actions} actions")]
    ActionOutOfRange { action: usize, actions: usize },

    #[error("non-finite {0}")]
    NonFinite(&'static str),

    #[error("discount factor {0} is outside (0, 1)")]
    GammaDomain(f64),

    #[error("time constant {0} must be positive and finite")]
    TauDomain(f64),

    #[error("step index {t} is past the end of a spike train of length {len}")]
    SpikeIndex { t: usize, len: usize },

    #[error("malformed state key {key:?}: invalid token {token:?}")]
    ParseKey { key: String, token: String },

    #[error("neuron pool exhausted: all {capacity} neurons are assigned")]
    PoolExhausted { capacity: usize },

    #[error("invalid {key}: {reason}")]
    Config { key: &'static str, reason: String },
}

impl Error {
    pub(crate) fn config(key: &'static str, reason: impl Into<String>) -> Self {
        Error::Config {
            key,
            reason: reason.into(),
        }
    }
}

pub(crate) fn ensure_finite(value: f64, what: &'static str) -> Result<()> {
    if value.is_finite() {
        Ok(())
    } else {
        Err(Error::NonFinite(what))
    }
}
