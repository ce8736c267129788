use thiserror::Error;

use crate::engine::Micros;

/// Problems with a scenario or configuration, detected before a run starts.
#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("{field}: {reason}")]
    Invalid { field: String, reason: String },
    #[error("nodes {a} and {b} are {distance:.3} m apart, below the far-field minimum of {min} m")]
    TooClose {
        a: usize,
        b: usize,
        distance: f64,
        min: f64,
    },
    #[error("{target} is not achievable: {reason}")]
    Infeasible { target: String, reason: String },
    #[error("failed to parse {what}: {source}")]
    Parse {
        what: String,
        #[source]
        source: Box<dyn std::error::Error + Send + Sync>,
    },
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl ConfigError {
    pub fn invalid(field: impl Into<String>, reason: impl Into<String>) -> Self {
        ConfigError::Invalid {
            field: field.into(),
            reason: reason.into(),
        }
    }
}

/// Violations detected while a simulation is running.
#[derive(Debug, Error)]
pub enum SimError {
    #[error("event scheduled at {at} us but the clock is already at {now} us")]
    ScheduleInPast { at: Micros, now: Micros },
    #[error("invariant violated at {at} us: {what}")]
    Invariant { at: Micros, what: String },
    #[error(transparent)]
    Config(#[from] ConfigError),
}
