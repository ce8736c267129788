//! Discrete-event simulation of 802.11ax spatial reuse with adaptive
//! OBSS/PD thresholds.
//!
//! The pieces, bottom up: [`engine`] (event queue, seeded streams),
//! [`phy`] (Friis channel, preamble detection, SINR reception), [`mac`]
//! (DCF and colour-aware CCA), [`rate`] (Minstrel and Thompson MCS
//! selection), [`control`] (RACEBOT and the beacon-offset baselines),
//! [`scenario`] (topologies, traffic), [`metrics`] and [`sim`], which ties
//! them together.

pub mod config;
pub mod control;
pub mod engine;
pub mod error;
pub mod mac;
pub mod metrics;
pub mod phy;
pub mod rate;
pub mod scenario;
pub mod sim;
pub mod trace;
pub mod units;

pub use config::SimConfig;
pub use control::{Controller, ControllerKind};
pub use error::{ConfigError, SimError};
pub use rate::RateSelectorKind;
pub use scenario::ScenarioSpec;
pub use units::Dbm;
