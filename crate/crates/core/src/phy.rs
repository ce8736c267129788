//! Free-space propagation, preamble detection and frame reception.

use serde::{Deserialize, Serialize};

use crate::error::ConfigError;
use crate::units::{power_sum, Dbm};

pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Position {
    pub x: f64,
    pub y: f64,
}

impl Position {
    pub fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn distance(&self, other: &Position) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }
}

/// Friis free-space loss in dB at `distance` meters and `frequency` Hz.
pub fn path_loss(distance: f64, frequency: f64) -> f64 {
    20.0 * distance.log10()
        + 20.0 * frequency.log10()
        + 20.0 * (4.0 * std::f64::consts::PI / SPEED_OF_LIGHT).log10()
}

/// Distance at which the Friis loss equals `loss_db`.
pub fn distance_for_loss(loss_db: f64, frequency: f64) -> f64 {
    10f64.powf((loss_db - path_loss(1.0, frequency)) / 20.0)
}

/// Static Friis channel at a single carrier frequency.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Propagation {
    pub frequency_hz: f64,
    /// Closest allowed node separation; Friis only holds in the far field.
    pub min_distance_m: f64,
}

impl Default for Propagation {
    fn default() -> Self {
        Self {
            frequency_hz: 5.0e9,
            min_distance_m: 1.0,
        }
    }
}

impl Propagation {
    pub fn loss(&self, distance: f64) -> f64 {
        path_loss(distance, self.frequency_hz)
    }

    pub fn rssi(&self, tx_power: Dbm, from: &Position, to: &Position) -> Dbm {
        tx_power - self.loss(from.distance(to))
    }
}

/// One row of the rate table.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McsEntry {
    pub index: u8,
    pub rate_mbps: f64,
    pub min_rssi_dbm: f64,
    pub min_sinr_db: f64,
}

impl McsEntry {
    pub fn min_rssi(&self) -> Dbm {
        Dbm(self.min_rssi_dbm)
    }
}

/// Ordered MCS table; index `i` is stored at position `i`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct McsTable {
    #[serde(rename = "mcs")]
    entries: Vec<McsEntry>,
}

impl Default for McsTable {
    /// HE rates for 20 MHz, one spatial stream, 0.8 us guard interval.
    fn default() -> Self {
        const ROWS: [(f64, f64, f64); 12] = [
            (8.6, -82.0, 3.0),
            (17.2, -80.0, 6.0),
            (25.8, -78.0, 9.0),
            (34.4, -76.0, 11.0),
            (51.6, -74.0, 15.0),
            (68.8, -72.0, 18.0),
            (77.4, -70.0, 20.0),
            (86.0, -68.0, 22.0),
            (103.2, -66.0, 25.0),
            (114.7, -64.0, 27.0),
            (129.0, -61.0, 30.0),
            (143.4, -59.0, 32.0),
        ];
        let entries = ROWS
            .iter()
            .enumerate()
            .map(|(i, &(rate, rssi, sinr))| McsEntry {
                index: i as u8,
                rate_mbps: rate,
                min_rssi_dbm: rssi,
                min_sinr_db: sinr,
            })
            .collect();
        Self { entries }
    }
}

impl McsTable {
    pub fn new(entries: Vec<McsEntry>) -> Result<Self, ConfigError> {
        let table = Self { entries };
        table.validate()?;
        Ok(table)
    }

    /// Parses the TOML table format (`[[mcs]]` records).
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        let table: McsTable = toml::from_str(text).map_err(|e| ConfigError::Parse {
            what: "MCS table".into(),
            source: Box::new(e),
        })?;
        table.validate()?;
        Ok(table)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("MCS table serializes")
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.entries.is_empty() {
            return Err(ConfigError::invalid("mcs", "table is empty"));
        }
        for (i, e) in self.entries.iter().enumerate() {
            if e.index as usize != i {
                return Err(ConfigError::invalid(
                    format!("mcs[{i}].index"),
                    format!("expected {i}, found {}", e.index),
                ));
            }
            if !(e.rate_mbps > 0.0) {
                return Err(ConfigError::invalid(format!("mcs[{i}].rate_mbps"), "must be positive"));
            }
        }
        for w in self.entries.windows(2) {
            if w[1].rate_mbps <= w[0].rate_mbps {
                return Err(ConfigError::invalid(
                    format!("mcs[{}].rate_mbps", w[1].index),
                    "rates must strictly increase with index",
                ));
            }
            if w[1].min_rssi_dbm <= w[0].min_rssi_dbm {
                return Err(ConfigError::invalid(
                    format!("mcs[{}].min_rssi_dbm", w[1].index),
                    "minimum RSSI must strictly increase with index",
                ));
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, index: u8) -> &McsEntry {
        &self.entries[index as usize]
    }

    pub fn entries(&self) -> &[McsEntry] {
        &self.entries
    }

    pub fn rates(&self) -> Vec<f64> {
        self.entries.iter().map(|e| e.rate_mbps).collect()
    }

    pub fn lowest(&self) -> &McsEntry {
        &self.entries[0]
    }

    pub fn highest(&self) -> &McsEntry {
        self.entries.last().expect("non-empty")
    }
}

/// Receiver-side thresholds and frame timing constants.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PhyParams {
    pub preamble_detection_dbm: f64,
    pub rx_sensitivity_dbm: f64,
    pub cca_ed_dbm: f64,
    pub noise_floor_dbm: f64,
    pub preamble_us: u64,
    /// SERVICE plus tail bits added to every PSDU.
    pub service_tail_bits: u64,
}

impl Default for PhyParams {
    fn default() -> Self {
        Self {
            preamble_detection_dbm: -82.0,
            rx_sensitivity_dbm: -82.0,
            cca_ed_dbm: -62.0,
            // -174 dBm/Hz + 10 log10(20 MHz) + 7 dB noise figure
            noise_floor_dbm: -94.0,
            preamble_us: 40,
            service_tail_bits: 22,
        }
    }
}

impl PhyParams {
    /// On-air duration of a PSDU of `bytes` at `rate_mbps`, in whole microseconds.
    pub fn airtime_us(&self, bytes: u64, rate_mbps: f64) -> u64 {
        let bits = (self.service_tail_bits + 8 * bytes) as f64;
        self.preamble_us + (bits / rate_mbps).ceil() as u64
    }
}

/// How a receiver classifies a preamble at the start of a frame.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    NotHeard,
    IntraBss,
    InterBssAboveThreshold,
    InterBssIgnorable,
}

impl Verdict {
    pub fn is_heard(self) -> bool {
        self != Verdict::NotHeard
    }

    /// Whether the frame holds the medium busy for carrier sensing.
    pub fn defers(self) -> bool {
        matches!(self, Verdict::IntraBss | Verdict::InterBssAboveThreshold)
    }
}

/// Classifies a frame by its received power and BSS color against the
/// receiver's own color and OBSS/PD threshold.
pub fn detect_preamble(
    rssi: Dbm,
    frame_color: u8,
    rx_color: u8,
    rx_obss_pd: Dbm,
    preamble_detection: Dbm,
) -> Verdict {
    if rssi < preamble_detection {
        Verdict::NotHeard
    } else if frame_color == rx_color {
        Verdict::IntraBss
    } else if rssi < rx_obss_pd {
        Verdict::InterBssIgnorable
    } else {
        Verdict::InterBssAboveThreshold
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    Success,
    Corrupted,
}

/// SINR in dB of `rssi` against the power sum of `interferers` plus noise.
pub fn sinr_db(rssi: Dbm, interferers: &[Dbm], noise_floor: Dbm) -> f64 {
    let denom = power_sum(interferers.iter().copied().chain(std::iter::once(noise_floor)));
    rssi - denom
}

/// Step-function reception: both the sensitivity and SINR floors of the MCS
/// must be met.
pub fn reception_outcome(rssi: Dbm, interferers: &[Dbm], noise_floor: Dbm, mcs: &McsEntry) -> Outcome {
    if rssi >= mcs.min_rssi() && sinr_db(rssi, interferers, noise_floor) >= mcs.min_sinr_db {
        Outcome::Success
    } else {
        Outcome::Corrupted
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    // Evaluated independently (Python, c = 299 792 458 m/s).
    const FRIIS_10M_5GHZ: f64 = 66.42718330860373;

    #[test]
    fn friis_at_ten_meters() {
        assert_abs_diff_eq!(path_loss(10.0, 5e9), FRIIS_10M_5GHZ, epsilon = 1e-9);
    }

    #[test]
    fn doubling_distance_or_frequency_adds_six_db() {
        let six = 20.0 * 2f64.log10();
        assert_abs_diff_eq!(path_loss(40.0, 5e9) - path_loss(20.0, 5e9), six, epsilon = 1e-9);
        assert_abs_diff_eq!(path_loss(20.0, 10e9) - path_loss(20.0, 5e9), six, epsilon = 1e-9);
    }

    #[test]
    fn loss_nonnegative_beyond_one_meter() {
        assert!(path_loss(1.0, 5e9) > 0.0);
    }

    #[test]
    fn distance_for_loss_inverts() {
        let d = distance_for_loss(96.0, 5e9);
        assert_abs_diff_eq!(path_loss(d, 5e9), 96.0, epsilon = 1e-9);
        assert_abs_diff_eq!(d, 301.0515271270574, epsilon = 1e-6);
    }

    #[test]
    fn rssi_at_ten_meters() {
        let p = Propagation::default();
        let rssi = p.rssi(Dbm(21.0), &Position::new(0.0, 0.0), &Position::new(10.0, 0.0));
        assert_abs_diff_eq!(rssi.0, 21.0 - FRIIS_10M_5GHZ, epsilon = 1e-9);
        let lower = p.rssi(Dbm(18.0), &Position::new(0.0, 0.0), &Position::new(10.0, 0.0));
        assert_abs_diff_eq!(rssi - lower, 3.0, epsilon = 1e-12);
    }

    #[test]
    fn preamble_verdicts() {
        let pd = Dbm(-82.0);
        assert_eq!(detect_preamble(Dbm(-90.0), 2, 1, Dbm(-82.0), pd), Verdict::NotHeard);
        assert_eq!(detect_preamble(Dbm(-75.0), 2, 1, Dbm(-72.0), pd), Verdict::InterBssIgnorable);
        assert_eq!(
            detect_preamble(Dbm(-75.0), 2, 1, Dbm(-82.0), pd),
            Verdict::InterBssAboveThreshold
        );
        assert_eq!(detect_preamble(Dbm(-75.0), 1, 1, Dbm(-62.0), pd), Verdict::IntraBss);
    }

    #[test]
    fn reception_clear_channel() {
        let table = McsTable::default();
        let noise = Dbm(-94.0);
        assert_eq!(reception_outcome(Dbm(-60.0), &[], noise, table.get(0)), Outcome::Success);
        assert_eq!(reception_outcome(Dbm(-83.0), &[], noise, table.get(0)), Outcome::Corrupted);
    }

    #[test]
    fn equal_power_overlap_corrupts() {
        // Oracle: 10 log10(1e-6) - 10 log10(1e-6 + 10^-9.4) = -0.0017286 dB.
        let sinr = sinr_db(Dbm(-60.0), &[Dbm(-60.0)], Dbm(-94.0));
        assert_abs_diff_eq!(sinr, -0.0017286134099094852, epsilon = 1e-9);
        let mcs0 = McsTable::default().get(0).to_owned();
        assert_eq!(reception_outcome(Dbm(-60.0), &[Dbm(-60.0)], Dbm(-94.0), &mcs0), Outcome::Corrupted);
    }

    #[test]
    fn airtime_for_full_payload_at_mcs7() {
        // (22 + 8 * (1024 + 38)) / 86.0 = 99.05 -> 100 us, plus 40 us preamble.
        let phy = PhyParams::default();
        assert_eq!(phy.airtime_us(1024 + 38, McsTable::default().get(7).rate_mbps), 140);
    }

    #[test]
    fn default_table_is_valid_and_anchored_at_sensitivity() {
        let t = McsTable::default();
        t.validate().unwrap();
        assert_eq!(t.len(), 12);
        assert_eq!(t.lowest().min_rssi_dbm, PhyParams::default().rx_sensitivity_dbm);
        assert_eq!(t.highest().rate_mbps, 143.4);
        assert_eq!(t.highest().min_rssi_dbm, -59.0);
    }

    #[test]
    fn table_toml_round_trip_and_validation() {
        let t = McsTable::default();
        assert_eq!(McsTable::from_toml(&t.to_toml()).unwrap(), t);
        let bad = "[[mcs]]\nindex = 0\nrate_mbps = 10.0\nmin_rssi_dbm = -80.0\nmin_sinr_db = 3.0\n\
                   [[mcs]]\nindex = 1\nrate_mbps = 9.0\nmin_rssi_dbm = -78.0\nmin_sinr_db = 5.0\n";
        assert!(McsTable::from_toml(bad).is_err());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn rssi_decreases_with_distance(d in 1.0f64..2000.0, extra in 0.01f64..500.0, p in -10.0f64..30.0) {
                let prop = Propagation::default();
                let o = Position::new(0.0, 0.0);
                let near = prop.rssi(Dbm(p), &o, &Position::new(d, 0.0));
                let far = prop.rssi(Dbm(p), &o, &Position::new(d + extra, 0.0));
                prop_assert!(far < near);
            }

            #[test]
            fn rssi_is_reciprocal(ax in -500.0f64..500.0, ay in -500.0f64..500.0,
                                  bx in -500.0f64..500.0, by in -500.0f64..500.0) {
                let (a, b) = (Position::new(ax, ay), Position::new(bx, by));
                prop_assume!(a.distance(&b) >= 1.0);
                let prop = Propagation::default();
                prop_assert_eq!(prop.rssi(Dbm(21.0), &a, &b), prop.rssi(Dbm(21.0), &b, &a));
            }

            #[test]
            fn lowering_threshold_never_makes_frames_ignorable(
                rssi in -100.0f64..-40.0, hi in -82.0f64..-62.0, drop in 0.0f64..20.0,
            ) {
                let pd = Dbm(-82.0);
                let before = detect_preamble(Dbm(rssi), 2, 1, Dbm(hi), pd);
                let after = detect_preamble(Dbm(rssi), 2, 1, Dbm(hi - drop), pd);
                if before == Verdict::InterBssAboveThreshold {
                    prop_assert_eq!(after, Verdict::InterBssAboveThreshold);
                }
            }
        }
    }
}
