use serde::{Deserialize, Serialize};

use crate::control::ControllerParams;
use crate::engine::{secs_to_micros, Micros};
use crate::error::ConfigError;
use crate::mac::DcfParams;
use crate::phy::{McsTable, PhyParams, Propagation};
use crate::rate::RateParams;

/// Everything about a run that is not topology or algorithm choice.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimConfig {
    pub horizon_s: f64,
    pub t_step_s: f64,
    pub propagation: Propagation,
    pub phy: PhyParams,
    pub dcf: DcfParams,
    pub controllers: ControllerParams,
    pub rate: RateParams,
    #[serde(flatten)]
    pub mcs: McsTable,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            horizon_s: 50.0,
            t_step_s: 1.0,
            propagation: Propagation::default(),
            phy: PhyParams::default(),
            dcf: DcfParams::default(),
            controllers: ControllerParams::default(),
            rate: RateParams::default(),
            mcs: McsTable::default(),
        }
    }
}

impl SimConfig {
    pub fn horizon_us(&self) -> Micros {
        secs_to_micros(self.horizon_s)
    }

    pub fn t_step_us(&self) -> Micros {
        secs_to_micros(self.t_step_s)
    }

    pub fn n_steps(&self) -> u64 {
        self.horizon_us() / self.t_step_us()
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if !(self.horizon_s > 0.0) || !self.horizon_s.is_finite() {
            return Err(ConfigError::invalid("sim.horizon_s", "must be a positive number"));
        }
        if !(self.t_step_s > 0.0) || self.t_step_us() == 0 {
            return Err(ConfigError::invalid("sim.t_step_s", "must be positive"));
        }
        if self.horizon_us() % self.t_step_us() != 0 {
            return Err(ConfigError::invalid(
                "sim.horizon_s",
                format!("{} s is not a whole number of {} s steps", self.horizon_s, self.t_step_s),
            ));
        }
        if !(self.propagation.frequency_hz > 0.0) {
            return Err(ConfigError::invalid("sim.propagation.frequency_hz", "must be positive"));
        }
        if !(self.propagation.min_distance_m > 0.0) {
            return Err(ConfigError::invalid("sim.propagation.min_distance_m", "must be positive"));
        }
        self.dcf.validate()?;
        self.controllers.racebot.validate()?;
        self.rate.validate()?;
        self.mcs.validate()?;
        if self.mcs.lowest().min_rssi_dbm != self.phy.rx_sensitivity_dbm {
            return Err(ConfigError::invalid(
                "mcs[0].min_rssi_dbm",
                format!(
                    "{} must equal phy.rx_sensitivity_dbm ({})",
                    self.mcs.lowest().min_rssi_dbm,
                    self.phy.rx_sensitivity_dbm
                ),
            ));
        }
        Ok(())
    }
}
