//! DCF building blocks: BSS colors, contention-window rules, backoff
//! bookkeeping and OBSS/PD-aware clear channel assessment.

use serde::{Deserialize, Serialize};

use crate::engine::Micros;
use crate::error::ConfigError;
use crate::phy::{detect_preamble, Verdict};
use crate::units::Dbm;

/// 6-bit BSS color carried in the HE preamble. Zero is reserved.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub struct BssColor(u8);

impl BssColor {
    pub fn new(value: u8) -> Result<Self, ConfigError> {
        if (1..=63).contains(&value) {
            Ok(Self(value))
        } else {
            Err(ConfigError::invalid("color", format!("{value} outside 1..=63")))
        }
    }

    pub fn value(self) -> u8 {
        self.0
    }
}

impl TryFrom<u8> for BssColor {
    type Error = ConfigError;
    fn try_from(v: u8) -> Result<Self, ConfigError> {
        BssColor::new(v)
    }
}

impl From<BssColor> for u8 {
    fn from(c: BssColor) -> u8 {
        c.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DcfParams {
    pub slot_us: Micros,
    pub sifs_us: Micros,
    pub difs_us: Micros,
    pub cw_min: u32,
    pub cw_max: u32,
    pub retry_limit: u32,
    /// MAC header plus FCS bytes added to each data payload.
    pub mac_overhead_bytes: u64,
    pub ack_bytes: u64,
    pub beacon_bytes: u64,
    pub beacon_interval_us: Micros,
    pub queue_capacity: u32,
}

impl Default for DcfParams {
    fn default() -> Self {
        Self {
            slot_us: 9,
            sifs_us: 16,
            difs_us: 34,
            cw_min: 15,
            cw_max: 1023,
            retry_limit: 7,
            mac_overhead_bytes: 38,
            ack_bytes: 14,
            beacon_bytes: 120,
            beacon_interval_us: 102_400,
            queue_capacity: 500,
        }
    }
}

fn is_cw_form(cw: u32) -> bool {
    (cw + 1).is_power_of_two()
}

impl DcfParams {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if !is_cw_form(self.cw_min) || !is_cw_form(self.cw_max) || self.cw_min > self.cw_max {
            return Err(ConfigError::invalid(
                "dcf.cw_min/cw_max",
                "must be of the form 2^k - 1 with cw_min <= cw_max",
            ));
        }
        if self.slot_us == 0 || self.difs_us <= self.sifs_us {
            return Err(ConfigError::invalid("dcf.difs_us", "must exceed sifs_us; slot_us must be > 0"));
        }
        if self.beacon_interval_us == 0 {
            return Err(ConfigError::invalid("dcf.beacon_interval_us", "must be > 0"));
        }
        if self.queue_capacity == 0 {
            return Err(ConfigError::invalid("dcf.queue_capacity", "must be > 0"));
        }
        Ok(())
    }

    /// Next contention window after a failed attempt.
    pub fn grow_cw(&self, cw: u32) -> u32 {
        (2 * (cw + 1) - 1).min(self.cw_max)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    /// Nothing to send.
    Idle,
    /// Waiting for the medium with `slots` of backoff left.
    Deferring { slots: u32 },
    /// Medium idle since `since`; counting DIFS and then `slots` slots.
    Backoff { slots: u32, since: Micros },
    Transmitting,
    AwaitingAck,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AckResult {
    Delivered,
    Retry,
    Dropped,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MacState {
    pub phase: Phase,
    pub cw: u32,
    pub retries: u32,
}

impl MacState {
    pub fn new(dcf: &DcfParams) -> Self {
        Self {
            phase: Phase::Idle,
            cw: dcf.cw_min,
            retries: 0,
        }
    }

    /// Applies the outcome of an acknowledged transmission. On success or
    /// when the retry limit is exhausted the head-of-line payload leaves the
    /// queue and the window resets.
    pub fn on_ack_outcome(&mut self, success: bool, dcf: &DcfParams) -> AckResult {
        if success {
            self.cw = dcf.cw_min;
            self.retries = 0;
            return AckResult::Delivered;
        }
        self.retries += 1;
        if self.retries > dcf.retry_limit {
            self.cw = dcf.cw_min;
            self.retries = 0;
            AckResult::Dropped
        } else {
            self.cw = dcf.grow_cw(self.cw);
            AckResult::Retry
        }
    }

    /// Freezes a running countdown at `now`, keeping only whole idle slots
    /// that elapsed after DIFS.
    pub fn pause(&mut self, now: Micros, dcf: &DcfParams) {
        if let Phase::Backoff { slots, since } = self.phase {
            let elapsed = now.saturating_sub(since);
            let consumed = if elapsed > dcf.difs_us {
                ((elapsed - dcf.difs_us) / dcf.slot_us) as u32
            } else {
                0
            };
            self.phase = Phase::Deferring {
                slots: slots - consumed.min(slots),
            };
        }
    }

    /// Starts counting from `now`; returns the time the countdown completes.
    pub fn resume(&mut self, now: Micros, dcf: &DcfParams) -> Option<Micros> {
        if let Phase::Deferring { slots } = self.phase {
            self.phase = Phase::Backoff { slots, since: now };
            Some(now + dcf.difs_us + slots as Micros * dcf.slot_us)
        } else {
            None
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ChannelState {
    Idle,
    Busy,
}

/// What a node's clear channel assessment looks at.
#[derive(Debug, Clone, Copy)]
pub struct CcaView<'a> {
    pub color: u8,
    pub obss_pd: Dbm,
    pub preamble_detection: Dbm,
    pub energy_detect: Dbm,
    /// (RSSI, color) of frames whose preamble the node detected.
    pub detected: &'a [(Dbm, u8)],
    /// Total in-band power from all ongoing frames.
    pub energy: Dbm,
}

/// Busy if a detected frame defers the node (intra-BSS, or inter-BSS at or
/// above OBSS/PD), or if raw energy reaches the energy-detect level.
pub fn channel_assessment(view: &CcaView<'_>) -> ChannelState {
    if view.energy >= view.energy_detect {
        return ChannelState::Busy;
    }
    let defers = view.detected.iter().any(|&(rssi, color)| {
        detect_preamble(rssi, color, view.color, view.obss_pd, view.preamble_detection).defers()
    });
    if defers {
        ChannelState::Busy
    } else {
        ChannelState::Idle
    }
}

/// Whether a verdict leaves the frame invisible to carrier sensing.
pub fn ignorable(verdict: Verdict) -> bool {
    !verdict.defers()
}
