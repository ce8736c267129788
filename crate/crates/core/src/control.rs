//! OBSS/PD threshold controllers and the threshold/transmit-power coupling.
//!
//! Every controller keeps `tx_power + obss_pd` equal to `txpow_ref + min`
//! of the active bandwidth bounds, and keeps `obss_pd` inside the bounds.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::engine::{secs_to_micros, Micros};
use crate::error::ConfigError;
use crate::units::Dbm;

/// Floor the RACEBOT goal is reset to at the start of each update period.
pub const GOAL_FLOOR: Dbm = Dbm(-101.0);

/// Per-bandwidth OBSS/PD limits and the reference transmit power.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ObssPdBounds {
    pub bandwidth_mhz: u32,
    pub min: Dbm,
    pub max: Dbm,
    pub txpow_ref: Dbm,
}

impl ObssPdBounds {
    pub fn for_bandwidth(bandwidth_mhz: u32) -> Result<Self, ConfigError> {
        let (min, max, txpow_ref) = match bandwidth_mhz {
            20 => (-82.0, -62.0, 21.0),
            40 => (-79.0, -59.0, 18.0),
            80 => (-76.0, -56.0, 15.0),
            160 => (-73.0, -53.0, 12.0),
            other => {
                return Err(ConfigError::invalid(
                    "bandwidth_mhz",
                    format!("{other} is not one of 20, 40, 80, 160"),
                ))
            }
        };
        Ok(Self {
            bandwidth_mhz,
            min: Dbm(min),
            max: Dbm(max),
            txpow_ref: Dbm(txpow_ref),
        })
    }

    pub fn clamp(&self, level: Dbm) -> Dbm {
        level.clamp(self.min, self.max)
    }

    pub fn contains(&self, level: Dbm) -> bool {
        level >= self.min && level <= self.max
    }

    /// The constant `tx_power + obss_pd` every controller maintains.
    pub fn coupling_sum(&self) -> f64 {
        self.txpow_ref.0 + self.min.0
    }
}

/// Transmit power that pairs with `obss_pd`: raising the threshold by x dB
/// lowers the power by x dB from the reference.
///
/// Computed as `(txpow_ref + min) - obss_pd`. For in-bounds thresholds the
/// subtraction is exact in binary floating point, so `tx + obss_pd` recovers
/// the coupling constant bit for bit.
pub fn txpow_from_threshold(obss_pd: Dbm, bounds: &ObssPdBounds) -> Dbm {
    debug_assert!(bounds.contains(obss_pd), "threshold {obss_pd} out of bounds");
    Dbm(bounds.coupling_sum() - obss_pd.0)
}

/// One step of an exponentially weighted moving average.
pub fn ofc_ewma_update(prev: f64, sample: f64, alpha: f64) -> f64 {
    alpha * sample + (1.0 - alpha) * prev
}

/// Exponentially weighted average of a stream of samples, empty until the
/// first sample arrives.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Ewma {
    alpha: f64,
    value: Option<f64>,
}

impl Ewma {
    pub fn new(alpha: f64) -> Self {
        Self { alpha, value: None }
    }

    pub fn update(&mut self, sample: f64) {
        self.value = Some(match self.value {
            None => sample,
            Some(prev) => ofc_ewma_update(prev, sample, self.alpha),
        });
    }

    pub fn get(&self) -> Option<f64> {
        self.value
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RacebotParams {
    pub margin_db: f64,
    pub gamma: f64,
    pub alpha: f64,
    pub update_period_s: f64,
    pub ofc_threshold: f64,
    pub bin_width_db: f64,
}

impl Default for RacebotParams {
    fn default() -> Self {
        Self {
            margin_db: 5.0,
            gamma: 0.7,
            alpha: 0.5,
            update_period_s: 1.0,
            ofc_threshold: 10.0,
            bin_width_db: 1.0,
        }
    }
}

impl RacebotParams {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if !(self.margin_db > 0.0) {
            return Err(ConfigError::invalid("racebot.margin_db", "must be > 0"));
        }
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return Err(ConfigError::invalid("racebot.gamma", "must lie in (0, 1)"));
        }
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(ConfigError::invalid("racebot.alpha", "must lie in [0, 1]"));
        }
        if !(self.update_period_s > 0.0) {
            return Err(ConfigError::invalid("racebot.update_period_s", "must be > 0"));
        }
        if !(self.ofc_threshold > 0.0) {
            return Err(ConfigError::invalid("racebot.ofc_threshold", "must be > 0"));
        }
        if !(self.bin_width_db > 0.0) {
            return Err(ConfigError::invalid("racebot.bin_width_db", "must be > 0"));
        }
        Ok(())
    }

    pub fn update_period_us(&self) -> Micros {
        secs_to_micros(self.update_period_s)
    }

    /// Histogram bin of an RSSI sample: nearest multiple of the bin width.
    pub fn bin_of(&self, rssi: Dbm) -> i64 {
        (rssi.0 / self.bin_width_db).round() as i64
    }

    pub fn bin_level(&self, bin: i64) -> Dbm {
        Dbm(bin as f64 * self.bin_width_db)
    }
}

/// OBSS frame counts at one RSSI level.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct OfcBin {
    pub count: u64,
    pub ewma: f64,
}

/// Which adjustment rule a controller step applied.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Branch {
    /// Average MCS held up: move toward the goal.
    NoDrop,
    /// Average MCS fell by more than `1 - gamma`: back off toward the BSS link.
    Drop,
    /// As `Drop`, but the rule produced a higher threshold than before.
    DropRaised,
    /// No BSS RSSI estimate yet; threshold left unchanged.
    Hold,
    /// Non-adaptive controller.
    Fixed,
}

impl Branch {
    pub fn as_str(self) -> &'static str {
        match self {
            Branch::NoDrop => "no_drop",
            Branch::Drop => "drop",
            Branch::DropRaised => "drop_raised",
            Branch::Hold => "hold",
            Branch::Fixed => "fixed",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "no_drop" => Branch::NoDrop,
            "drop" => Branch::Drop,
            "drop_raised" => Branch::DropRaised,
            "hold" => Branch::Hold,
            "fixed" => Branch::Fixed,
            _ => return None,
        })
    }
}

impl fmt::Display for Branch {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Per-node state of the rate-adaptive dynamic threshold algorithm.
#[derive(Debug, Clone, PartialEq)]
pub struct RacebotState {
    pub obss_pd: Dbm,
    pub goal: Dbm,
    pub bins: BTreeMap<i64, OfcBin>,
    pub bss_rssi: Ewma,
    pub mcs_ewma_prev: f64,
    pub timer_us: Micros,
}

impl RacebotState {
    pub fn new(params: &RacebotParams, bounds: &ObssPdBounds) -> Self {
        Self {
            obss_pd: bounds.min,
            goal: GOAL_FLOOR,
            bins: BTreeMap::new(),
            bss_rssi: Ewma::new(params.alpha),
            mcs_ewma_prev: 0.0,
            timer_us: 0,
        }
    }

    pub fn record_obss(&mut self, rssi: Dbm, params: &RacebotParams) {
        self.bins.entry(params.bin_of(rssi)).or_default().count += 1;
    }

    pub fn record_bss_rssi(&mut self, rssi: Dbm) {
        self.bss_rssi.update(rssi.0);
    }

    /// Folds this period's counts into the per-bin averages.
    pub fn fold_counts(&mut self, params: &RacebotParams) {
        for bin in self.bins.values_mut() {
            bin.ewma = ofc_ewma_update(bin.ewma, bin.count as f64, params.alpha);
        }
    }

    /// Recomputes the goal from bins whose averaged count exceeds the
    /// threshold, scanning in ascending RSSI order, then clears the period
    /// counts and the timer. Without a BSS RSSI estimate the goal stays at
    /// the floor.
    pub fn periodic_goal(&mut self, params: &RacebotParams) {
        self.timer_us = 0;
        self.goal = GOAL_FLOOR;
        if let Some(bss) = self.bss_rssi.get() {
            for (&bin, ofc) in &self.bins {
                let level = params.bin_level(bin);
                if ofc.ewma > params.ofc_threshold && level > self.goal {
                    self.goal = (level + params.margin_db).min(Dbm(bss) - params.margin_db);
                }
            }
        }
        for bin in self.bins.values_mut() {
            bin.count = 0;
        }
    }

    /// One adjustment step given the current average MCS.
    pub fn step_adjust(&mut self, mcs_ewma_now: f64, params: &RacebotParams, bounds: &ObssPdBounds) -> Branch {
        let dropped = self.mcs_ewma_prev * params.gamma > mcs_ewma_now;
        let branch = if dropped {
            match self.bss_rssi.get() {
                Some(bss) => {
                    let before = self.obss_pd;
                    let target = Dbm((self.obss_pd.0 + bss - params.margin_db) / 2.0);
                    self.obss_pd = bounds.clamp(target.max(bounds.min));
                    self.goal = self.obss_pd.midpoint(self.goal);
                    if self.obss_pd > before {
                        Branch::DropRaised
                    } else {
                        Branch::Drop
                    }
                }
                None => Branch::Hold,
            }
        } else {
            let target = self.obss_pd.midpoint(self.goal).min(bounds.max);
            self.obss_pd = bounds.clamp(target);
            Branch::NoDrop
        };
        self.mcs_ewma_prev = mcs_ewma_now;
        branch
    }

    /// Advances the period timer by `dt_us`, runs the goal update when the
    /// timer exceeds the update period, then adjusts the threshold.
    pub fn on_step(
        &mut self,
        dt_us: Micros,
        mcs_ewma_now: f64,
        params: &RacebotParams,
        bounds: &ObssPdBounds,
    ) -> Branch {
        self.timer_us += dt_us;
        if self.timer_us > params.update_period_us() {
            self.fold_counts(params);
            self.periodic_goal(params);
        }
        self.step_adjust(mcs_ewma_now, params, bounds)
    }
}

/// Threshold from the BSS link RSSI minus a fixed offset, clamped to bounds.
/// Both baseline controllers share this form with different offsets.
pub fn beacon_offset_threshold(bss_rssi: Dbm, offset_db: f64, bounds: &ObssPdBounds) -> Dbm {
    bounds.clamp(bss_rssi - offset_db)
}

pub fn dsc_step(bss_rssi: Dbm, margin_db: f64, bounds: &ObssPdBounds) -> Dbm {
    beacon_offset_threshold(bss_rssi, margin_db, bounds)
}

pub fn rtot_step(bss_rssi: Dbm, offset_db: f64, bounds: &ObssPdBounds) -> Dbm {
    beacon_offset_threshold(bss_rssi, offset_db, bounds)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum ControllerKind {
    Racebot,
    Dsc,
    Rtot,
    NoObsspd,
    /// Holds a fixed threshold for the whole run.
    Static { obss_pd_dbm: f64 },
}

impl ControllerKind {
    pub fn name(&self) -> String {
        match self {
            ControllerKind::Racebot => "racebot".into(),
            ControllerKind::Dsc => "dsc".into(),
            ControllerKind::Rtot => "rtot".into(),
            ControllerKind::NoObsspd => "no-obsspd".into(),
            ControllerKind::Static { obss_pd_dbm } => format!("static{obss_pd_dbm}"),
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s.to_ascii_lowercase().as_str() {
            "racebot" => Some(ControllerKind::Racebot),
            "dsc" => Some(ControllerKind::Dsc),
            "rtot" => Some(ControllerKind::Rtot),
            "no-obsspd" | "no_obsspd" | "noobsspd" | "none" => Some(ControllerKind::NoObsspd),
            other => other
                .strip_prefix("static:")
                .and_then(|v| v.parse().ok())
                .map(|obss_pd_dbm| ControllerKind::Static { obss_pd_dbm }),
        }
    }

    pub const BASELINE_SET: [ControllerKind; 4] = [
        ControllerKind::Racebot,
        ControllerKind::Dsc,
        ControllerKind::Rtot,
        ControllerKind::NoObsspd,
    ];
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ControllerParams {
    pub racebot: RacebotParams,
    pub dsc_margin_db: f64,
    pub rtot_offset_db: f64,
}

impl Default for ControllerParams {
    fn default() -> Self {
        Self {
            racebot: RacebotParams::default(),
            dsc_margin_db: 20.0,
            rtot_offset_db: 10.0,
        }
    }
}

/// Snapshot emitted after every controller step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepRecord {
    pub obss_pd: Dbm,
    pub goal: Option<Dbm>,
    pub tx_power: Dbm,
    pub mcs_ewma: f64,
    pub branch: Branch,
}

#[derive(Debug, Clone, PartialEq)]
enum Policy {
    Racebot(RacebotState),
    BeaconOffset { offset_db: f64, bss_rssi: Ewma },
    Fixed,
}

/// A node's threshold controller together with its current operating point.
#[derive(Debug, Clone, PartialEq)]
pub struct Controller {
    kind: ControllerKind,
    policy: Policy,
    params: ControllerParams,
    bounds: ObssPdBounds,
    obss_pd: Dbm,
}

impl Controller {
    pub fn new(kind: ControllerKind, params: &ControllerParams, bounds: ObssPdBounds) -> Result<Self, ConfigError> {
        let alpha = params.racebot.alpha;
        let (policy, obss_pd) = match kind {
            ControllerKind::Racebot => {
                let s = RacebotState::new(&params.racebot, &bounds);
                let pd = s.obss_pd;
                (Policy::Racebot(s), pd)
            }
            ControllerKind::Dsc => (
                Policy::BeaconOffset {
                    offset_db: params.dsc_margin_db,
                    bss_rssi: Ewma::new(alpha),
                },
                bounds.min,
            ),
            ControllerKind::Rtot => (
                Policy::BeaconOffset {
                    offset_db: params.rtot_offset_db,
                    bss_rssi: Ewma::new(alpha),
                },
                bounds.min,
            ),
            ControllerKind::NoObsspd => (Policy::Fixed, bounds.min),
            ControllerKind::Static { obss_pd_dbm } => {
                let pd = Dbm(obss_pd_dbm);
                if !bounds.contains(pd) {
                    return Err(ConfigError::invalid(
                        "controller.obss_pd_dbm",
                        format!("{obss_pd_dbm} outside [{}, {}]", bounds.min.0, bounds.max.0),
                    ));
                }
                (Policy::Fixed, pd)
            }
        };
        Ok(Self {
            kind,
            policy,
            params: *params,
            bounds,
            obss_pd,
        })
    }

    pub fn kind(&self) -> ControllerKind {
        self.kind
    }

    pub fn bounds(&self) -> &ObssPdBounds {
        &self.bounds
    }

    pub fn obss_pd(&self) -> Dbm {
        self.obss_pd
    }

    pub fn tx_power(&self) -> Dbm {
        txpow_from_threshold(self.obss_pd, &self.bounds)
    }

    pub fn racebot(&self) -> Option<&RacebotState> {
        match &self.policy {
            Policy::Racebot(s) => Some(s),
            _ => None,
        }
    }

    /// An inter-BSS frame was heard at `rssi`.
    pub fn observe_obss(&mut self, rssi: Dbm) {
        if let Policy::Racebot(s) = &mut self.policy {
            s.record_obss(rssi, &self.params.racebot);
        }
    }

    /// An RSSI sample of the node's own BSS link (beacon of the associated
    /// AP, or for an AP, uplink data from its stations).
    pub fn observe_bss_rssi(&mut self, rssi: Dbm) {
        match &mut self.policy {
            Policy::Racebot(s) => s.record_bss_rssi(rssi),
            Policy::BeaconOffset { bss_rssi, .. } => bss_rssi.update(rssi.0),
            Policy::Fixed => {}
        }
    }

    /// Runs one controller step covering `dt_us` of simulated time.
    pub fn step(&mut self, dt_us: Micros, mcs_ewma_now: f64) -> StepRecord {
        let (branch, goal) = match &mut self.policy {
            Policy::Racebot(s) => {
                let b = s.on_step(dt_us, mcs_ewma_now, &self.params.racebot, &self.bounds);
                self.obss_pd = s.obss_pd;
                (b, Some(s.goal))
            }
            Policy::BeaconOffset { offset_db, bss_rssi } => match bss_rssi.get() {
                Some(bss) => {
                    self.obss_pd = beacon_offset_threshold(Dbm(bss), *offset_db, &self.bounds);
                    (Branch::Fixed, None)
                }
                None => (Branch::Hold, None),
            },
            Policy::Fixed => (Branch::Fixed, None),
        };
        StepRecord {
            obss_pd: self.obss_pd,
            goal,
            tx_power: self.tx_power(),
            mcs_ewma: mcs_ewma_now,
            branch,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn b20() -> ObssPdBounds {
        ObssPdBounds::for_bandwidth(20).unwrap()
    }

    fn params(margin: f64) -> RacebotParams {
        RacebotParams {
            margin_db: margin,
            ..Default::default()
        }
    }

    #[test]
    fn table_bounds() {
        let rows = [(20, -82.0, -62.0, 21.0), (40, -79.0, -59.0, 18.0), (80, -76.0, -56.0, 15.0), (160, -73.0, -53.0, 12.0)];
        for (bw, min, max, tx) in rows {
            let b = ObssPdBounds::for_bandwidth(bw).unwrap();
            assert_eq!((b.min.0, b.max.0, b.txpow_ref.0), (min, max, tx));
        }
        assert!(ObssPdBounds::for_bandwidth(30).is_err());
    }

    #[test]
    fn txpower_coupling_examples() {
        assert_eq!(txpow_from_threshold(Dbm(-82.0), &b20()), Dbm(21.0));
        assert_eq!(txpow_from_threshold(Dbm(-62.0), &b20()), Dbm(1.0));
        let b160 = ObssPdBounds::for_bandwidth(160).unwrap();
        assert_eq!(txpow_from_threshold(Dbm(-73.0), &b160), Dbm(12.0));
    }

    #[test]
    fn ewma_degenerate_weights() {
        assert_eq!(ofc_ewma_update(0.0, 10.0, 0.5), 5.0);
        assert_eq!(ofc_ewma_update(3.0, 10.0, 1.0), 10.0);
        assert_eq!(ofc_ewma_update(3.0, 10.0, 0.0), 3.0);
    }

    fn state_with_bins(bins: &[(i64, f64)], bss: f64) -> RacebotState {
        let p = RacebotParams::default();
        let mut s = RacebotState::new(&p, &b20());
        for &(level, ewma) in bins {
            s.bins.insert(level, OfcBin { count: 3, ewma });
        }
        s.record_bss_rssi(Dbm(bss));
        s
    }

    #[test]
    fn goal_prunes_rare_levels() {
        let mut s = state_with_bins(&[(-80, 15.0), (-60, 2.0)], -40.0);
        s.periodic_goal(&params(5.0));
        assert_eq!(s.goal, Dbm(-75.0));
        assert!(s.bins.values().all(|b| b.count == 0));
        assert_eq!(s.timer_us, 0);
    }

    #[test]
    fn goal_limited_by_bss_link() {
        let mut s = state_with_bins(&[(-70, 20.0)], -68.0);
        s.periodic_goal(&params(5.0));
        assert_eq!(s.goal, Dbm(-73.0));
    }

    #[test]
    fn goal_without_frequent_levels_stays_at_floor() {
        let mut s = state_with_bins(&[(-70, 10.0), (-65, 4.0)], -40.0);
        s.periodic_goal(&params(5.0));
        assert_eq!(s.goal, GOAL_FLOOR);
        let mut empty = state_with_bins(&[], -40.0);
        empty.periodic_goal(&params(5.0));
        assert_eq!(empty.goal, GOAL_FLOOR);
    }

    #[test]
    fn no_drop_moves_halfway_to_goal() {
        let mut s = state_with_bins(&[], -40.0);
        s.goal = Dbm(-72.0);
        let b = s.step_adjust(0.0, &params(5.0), &b20());
        assert_eq!(b, Branch::NoDrop);
        assert_eq!(s.obss_pd, Dbm(-77.0));
    }

    #[test]
    fn no_drop_toward_floor_goal_is_clamped_at_min() {
        // (-82 + -101) / 2 = -91.5 undershoots the table minimum.
        let mut s = state_with_bins(&[], -40.0);
        s.step_adjust(0.0, &params(5.0), &b20());
        assert_eq!(s.obss_pd, Dbm(-82.0));
    }

    #[test]
    fn drop_branch_averages_with_bss_link() {
        let mut s = state_with_bins(&[], -60.0);
        s.obss_pd = Dbm(-70.0);
        s.goal = Dbm(-72.0);
        s.mcs_ewma_prev = 8.0;
        let b = s.step_adjust(5.0, &params(5.0), &b20());
        assert_eq!(s.obss_pd, Dbm(-67.5));
        assert_eq!(b, Branch::DropRaised);
        assert_eq!(s.goal, Dbm((-67.5 + -72.0) / 2.0));
        assert_eq!(s.mcs_ewma_prev, 5.0);
    }

    #[test]
    fn drop_is_detected_at_seventy_percent() {
        let mut s = state_with_bins(&[], -90.0);
        s.obss_pd = Dbm(-70.0);
        s.goal = Dbm(-70.0);
        s.mcs_ewma_prev = 10.0;
        // 10 * 0.7 = 7 is not > 7: no drop.
        assert_eq!(s.step_adjust(7.0, &params(5.0), &b20()), Branch::NoDrop);
        s.mcs_ewma_prev = 10.0;
        assert_eq!(s.step_adjust(6.9, &params(5.0), &b20()), Branch::Drop);
        // (-70 + -95) / 2 = -82.5 -> clamped to min.
        assert_eq!(s.obss_pd, Dbm(-82.0));
    }

    #[test]
    fn drop_branch_upper_clamp() {
        let mut s = state_with_bins(&[], -20.0);
        s.obss_pd = Dbm(-64.0);
        s.mcs_ewma_prev = 10.0;
        s.step_adjust(1.0, &params(5.0), &b20());
        assert_eq!(s.obss_pd, Dbm(-62.0));
    }

    #[test]
    fn goal_update_waits_for_timer_to_exceed_period() {
        let p = RacebotParams::default();
        let mut s = RacebotState::new(&p, &b20());
        s.record_bss_rssi(Dbm(-40.0));
        for _ in 0..30 {
            s.record_obss(Dbm(-70.2), &p);
        }
        s.on_step(1_000_000, 0.0, &p, &b20());
        // Timer equals the period: not yet exceeded.
        assert_eq!(s.goal, GOAL_FLOOR);
        s.on_step(1_000_000, 0.0, &p, &b20());
        // ewma = 0.5 * 30 = 15 > 10, goal = min(-70 + 5, -40 - 5)
        assert_eq!(s.goal, Dbm(-65.0));
        assert_eq!(s.obss_pd, Dbm((-82.0 + -65.0) / 2.0));
    }

    #[test]
    fn baseline_examples() {
        let b = b20();
        assert_eq!(dsc_step(Dbm(-50.0), 20.0, &b), Dbm(-70.0));
        assert_eq!(dsc_step(Dbm(-75.0), 20.0, &b), Dbm(-82.0));
        assert_eq!(dsc_step(Dbm(-30.0), 20.0, &b), Dbm(-62.0));
        assert_eq!(rtot_step(Dbm(-50.0), 10.0, &b), Dbm(-62.0));
        assert_eq!(rtot_step(Dbm(-70.0), 10.0, &b), Dbm(-80.0));
        assert_eq!(rtot_step(Dbm(-78.0), 10.0, &b), Dbm(-82.0));
    }

    #[test]
    fn no_obsspd_is_pinned_to_min() {
        let mut c = Controller::new(ControllerKind::NoObsspd, &ControllerParams::default(), b20()).unwrap();
        c.observe_obss(Dbm(-60.0));
        c.observe_bss_rssi(Dbm(-30.0));
        let r = c.step(1_000_000, 3.0);
        assert_eq!(r.obss_pd, Dbm(-82.0));
        assert_eq!(r.tx_power, Dbm(21.0));
    }

    #[test]
    fn baseline_controller_holds_until_link_estimate() {
        let mut c = Controller::new(ControllerKind::Dsc, &ControllerParams::default(), b20()).unwrap();
        assert_eq!(c.step(1_000_000, 0.0).branch, Branch::Hold);
        c.observe_bss_rssi(Dbm(-50.0));
        let r = c.step(1_000_000, 0.0);
        assert_eq!(r.obss_pd, Dbm(-70.0));
        assert_eq!(r.tx_power, Dbm(9.0));
    }

    #[test]
    fn static_threshold_must_be_in_bounds() {
        let p = ControllerParams::default();
        assert!(Controller::new(ControllerKind::Static { obss_pd_dbm: -50.0 }, &p, b20()).is_err());
        let c = Controller::new(ControllerKind::Static { obss_pd_dbm: -72.0 }, &p, b20()).unwrap();
        assert_eq!(c.tx_power(), Dbm(11.0));
    }

    #[test]
    fn kind_names_parse_back() {
        for k in ControllerKind::BASELINE_SET {
            assert_eq!(ControllerKind::parse(&k.name()), Some(k));
        }
        assert_eq!(
            ControllerKind::parse("static:-72"),
            Some(ControllerKind::Static { obss_pd_dbm: -72.0 })
        );
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn observation() -> impl Strategy<Value = (Vec<f64>, Option<f64>, f64)> {
            (
                proptest::collection::vec(-95.0f64..-40.0, 0..40),
                proptest::option::of(-90.0f64..-20.0),
                0.0f64..11.0,
            )
        }

        proptest! {
            #[test]
            fn every_controller_keeps_bounds_and_coupling(
                kind in prop_oneof![
                    Just(ControllerKind::Racebot),
                    Just(ControllerKind::Dsc),
                    Just(ControllerKind::Rtot),
                    Just(ControllerKind::NoObsspd),
                ],
                bw in prop_oneof![Just(20u32), Just(40), Just(80), Just(160)],
                steps in proptest::collection::vec(observation(), 1..40),
            ) {
                let bounds = ObssPdBounds::for_bandwidth(bw).unwrap();
                let mut c = Controller::new(kind, &ControllerParams::default(), bounds).unwrap();
                for (obss, bss, mcs) in steps {
                    for r in obss {
                        c.observe_obss(Dbm(r));
                    }
                    if let Some(b) = bss {
                        c.observe_bss_rssi(Dbm(b));
                    }
                    let rec = c.step(500_000, mcs);
                    prop_assert!(bounds.contains(rec.obss_pd));
                    prop_assert_eq!(rec.tx_power.0 + rec.obss_pd.0, -61.0);
                    if let Some(g) = rec.goal {
                        prop_assert!(g >= GOAL_FLOOR);
                    }
                }
            }

            #[test]
            fn no_drop_contracts_toward_goal(
                goal in -82.0f64..-62.0,
                start in -82.0f64..-62.0,
                steps in 1usize..30,
            ) {
                let p = RacebotParams::default();
                let bounds = b20();
                let mut s = RacebotState::new(&p, &bounds);
                s.obss_pd = Dbm(start);
                s.goal = Dbm(goal);
                let mut gap = (start - goal).abs();
                for _ in 0..steps {
                    prop_assert_eq!(s.step_adjust(0.0, &p, &bounds), Branch::NoDrop);
                    let new_gap = (s.obss_pd.0 - goal).abs();
                    prop_assert!(new_gap <= gap / 2.0 + 1e-12);
                    gap = new_gap;
                }
            }

            #[test]
            fn rare_levels_never_set_the_goal(
                rare in proptest::collection::vec((-95i64..-40, 0.0f64..=10.0), 0..20),
                frequent in proptest::option::of((-95i64..-40, 10.01f64..100.0)),
                bss in -90.0f64..-20.0,
            ) {
                let p = RacebotParams::default();
                let mut with_rare = RacebotState::new(&p, &b20());
                let mut without = RacebotState::new(&p, &b20());
                for s in [&mut with_rare, &mut without] {
                    s.record_bss_rssi(Dbm(bss));
                    if let Some((lvl, e)) = frequent {
                        s.bins.insert(lvl, OfcBin { count: 0, ewma: e });
                    }
                }
                for (lvl, e) in rare {
                    with_rare.bins.entry(lvl).or_insert(OfcBin { count: 0, ewma: e });
                }
                with_rare.periodic_goal(&p);
                without.periodic_goal(&p);
                prop_assert_eq!(with_rare.goal, without.goal);
            }
        }
    }
}
