//! Scenario files, the built-in topologies and uplink traffic sources.
//!
//! A scenario lists BSS blocks. Each block has an AP position, a color and
//! its stations, given either as explicit positions (`stas`) or as a
//! uniform-disc rule (`placement`) that is expanded from the scenario seed.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp};
use serde::{Deserialize, Serialize};

use crate::config::SimConfig;
use crate::control::{ControllerKind, ObssPdBounds};
use crate::engine::{substream, Stream};
use crate::error::ConfigError;
use crate::mac::BssColor;
use crate::phy::{distance_for_loss, Position};
use crate::rate::RateSelectorKind;

/// Stations drawn uniformly over a disc centred on the AP.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DiscPlacement {
    pub count: usize,
    pub radius_m: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BssSpec {
    pub name: String,
    pub color: BssColor,
    pub ap: Position,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub stas: Vec<Position>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub placement: Option<DiscPlacement>,
    /// Overrides the scenario-wide controller for every node of this BSS.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub controller: Option<ControllerKind>,
}

impl BssSpec {
    pub fn sta_count(&self) -> usize {
        self.stas.len() + self.placement.map_or(0, |p| p.count)
    }
}

/// Per-station uplink offered load.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrafficSpec {
    pub rate_mbps: f64,
    pub payload_bytes: u64,
}

impl Default for TrafficSpec {
    fn default() -> Self {
        Self {
            rate_mbps: 300.0,
            payload_bytes: 1024,
        }
    }
}

fn default_bandwidth() -> u32 {
    20
}

fn default_controller() -> ControllerKind {
    ControllerKind::Racebot
}

fn default_rate() -> RateSelectorKind {
    RateSelectorKind::Thompson
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSpec {
    #[serde(default)]
    pub name: String,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_bandwidth")]
    pub bandwidth_mhz: u32,
    #[serde(default = "default_controller")]
    pub controller: ControllerKind,
    #[serde(default = "default_rate")]
    pub rate_selector: RateSelectorKind,
    #[serde(default)]
    pub traffic: TrafficSpec,
    #[serde(default)]
    pub sim: SimConfig,
    pub bss: Vec<BssSpec>,
}

/// A node of a resolved topology. APs and stations share one index space;
/// each BSS contributes its AP followed by its stations.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeSpec {
    pub id: usize,
    pub bss: usize,
    pub is_ap: bool,
    /// Index of the node's AP (itself for an AP).
    pub ap: usize,
    pub color: BssColor,
    pub position: Position,
    pub controller: ControllerKind,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Topology {
    pub nodes: Vec<NodeSpec>,
    pub aps: Vec<usize>,
}

impl Topology {
    pub fn n_stas(&self) -> usize {
        self.nodes.iter().filter(|n| !n.is_ap).count()
    }
}

impl ScenarioSpec {
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        let spec: ScenarioSpec = toml::from_str(text).map_err(|e| ConfigError::Parse {
            what: "scenario".into(),
            source: Box::new(e),
        })?;
        Ok(spec)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("scenario serializes")
    }

    pub fn bounds(&self) -> Result<ObssPdBounds, ConfigError> {
        ObssPdBounds::for_bandwidth(self.bandwidth_mhz)
    }

    /// Checks everything that can be checked without running.
    pub fn validate(&self) -> Result<(), ConfigError> {
        self.topology().map(|_| ())
    }

    /// Expands placement rules, assigns controllers and checks geometry,
    /// colors, association and parameter ranges.
    pub fn topology(&self) -> Result<Topology, ConfigError> {
        self.sim.validate()?;
        let bounds = self.bounds()?;
        if !(self.traffic.rate_mbps > 0.0) || !self.traffic.rate_mbps.is_finite() {
            return Err(ConfigError::invalid("traffic.rate_mbps", "must be positive"));
        }
        if self.traffic.payload_bytes == 0 {
            return Err(ConfigError::invalid("traffic.payload_bytes", "must be positive"));
        }
        if self.bss.is_empty() {
            return Err(ConfigError::invalid("bss", "at least one BSS is required"));
        }
        if let RateSelectorKind::Fixed { mcs } = self.rate_selector {
            if mcs as usize >= self.sim.mcs.len() {
                return Err(ConfigError::invalid("rate_selector.mcs", format!("no MCS {mcs} in the table")));
            }
        }
        for (i, a) in self.bss.iter().enumerate() {
            for b in &self.bss[i + 1..] {
                if a.color == b.color {
                    return Err(ConfigError::invalid(
                        "bss.color",
                        format!("{} and {} share color {}", a.name, b.name, a.color.value()),
                    ));
                }
            }
        }

        let mut rng = substream(self.seed, Stream::Topology);
        let mut nodes = Vec::new();
        let mut aps = Vec::new();
        for (bi, b) in self.bss.iter().enumerate() {
            let controller = b.controller.unwrap_or(self.controller);
            // Rejects out-of-range static thresholds early.
            crate::control::Controller::new(controller, &self.sim.controllers, bounds)?;
            let ap = nodes.len();
            aps.push(ap);
            let mut positions = vec![b.ap];
            positions.extend_from_slice(&b.stas);
            if let Some(p) = b.placement {
                if !(p.radius_m > 0.0) {
                    return Err(ConfigError::invalid("bss.placement.radius_m", "must be positive"));
                }
                for _ in 0..p.count {
                    positions.push(uniform_in_disc(&mut rng, b.ap, p.radius_m));
                }
            }
            for (k, position) in positions.into_iter().enumerate() {
                if !position.is_finite() {
                    return Err(ConfigError::invalid("bss.position", format!("non-finite coordinate in {}", b.name)));
                }
                nodes.push(NodeSpec {
                    id: nodes.len(),
                    bss: bi,
                    is_ap: k == 0,
                    ap,
                    color: b.color,
                    position,
                    controller,
                });
            }
        }

        let min = self.sim.propagation.min_distance_m;
        for (i, a) in nodes.iter().enumerate() {
            for b in &nodes[i + 1..] {
                let d = a.position.distance(&b.position);
                if d < min {
                    return Err(ConfigError::TooClose {
                        a: a.id,
                        b: b.id,
                        distance: d,
                        min,
                    });
                }
            }
        }
        for n in nodes.iter().filter(|n| !n.is_ap) {
            let own = n.position.distance(&nodes[n.ap].position);
            for &other in aps.iter().filter(|&&a| a != n.ap) {
                if n.position.distance(&nodes[other].position) <= own {
                    return Err(ConfigError::invalid(
                        "bss.stas",
                        format!(
                            "station {} of {} hears AP {} at least as strongly as its own AP",
                            n.id, self.bss[n.bss].name, other
                        ),
                    ));
                }
            }
        }
        Ok(Topology { nodes, aps })
    }
}

fn uniform_in_disc<R: Rng + ?Sized>(rng: &mut R, centre: Position, radius: f64) -> Position {
    let r = radius * rng.random::<f64>().sqrt();
    let theta = std::f64::consts::TAU * rng.random::<f64>();
    Position::new(centre.x + r * theta.cos(), centre.y + r * theta.sin())
}

/// Geometry knobs of the Box5 layout.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Box5Params {
    pub side_m: f64,
    pub stas_a: usize,
    pub stas_bc: usize,
    pub radius_a_m: f64,
    pub radius_bc_m: f64,
}

impl Default for Box5Params {
    fn default() -> Self {
        Self {
            side_m: 60.0,
            stas_a: 15,
            stas_bc: 5,
            radius_a_m: 30.0,
            radius_bc_m: 15.0,
        }
    }
}

const PLACEMENT_RETRIES: usize = 1000;

fn placement_ok(candidate: Position, own_ap: Position, aps: &[Position], placed: &[Position], min: f64) -> bool {
    let own = candidate.distance(&own_ap);
    let other_ap_closer = aps
        .iter()
        .filter(|&&ap| ap != own_ap)
        .any(|ap| candidate.distance(ap) <= own);
    !other_ap_closer && placed.iter().chain(aps).all(|p| candidate.distance(p) >= min)
}

fn box5_with(seed: u64, params: &Box5Params, rng: &mut ChaCha8Rng) -> Result<ScenarioSpec, ConfigError> {
    let s = params.side_m;
    let aps = [
        Position::new(0.0, 0.0),
        Position::new(s, 0.0),
        Position::new(s / 2.0, s * 3f64.sqrt() / 2.0),
    ];
    let layout = [
        ("A", params.stas_a, params.radius_a_m),
        ("B", params.stas_bc, params.radius_bc_m),
        ("C", params.stas_bc, params.radius_bc_m),
    ];
    let min = SimConfig::default().propagation.min_distance_m;
    let mut placed: Vec<Position> = Vec::new();
    let mut bss = Vec::new();
    for (i, (name, count, radius)) in layout.into_iter().enumerate() {
        let mut stas = Vec::with_capacity(count);
        for _ in 0..count {
            let pos = (0..PLACEMENT_RETRIES)
                .map(|_| uniform_in_disc(rng, aps[i], radius))
                .find(|&p| placement_ok(p, aps[i], &aps, &placed, min))
                .ok_or_else(|| ConfigError::Infeasible {
                    target: format!("Box5 BSS-{name}"),
                    reason: "no valid station position found".into(),
                })?;
            placed.push(pos);
            stas.push(pos);
        }
        bss.push(BssSpec {
            name: format!("BSS-{name}"),
            color: BssColor::new(i as u8 + 1).expect("valid color"),
            ap: aps[i],
            stas,
            placement: None,
            controller: None,
        });
    }
    Ok(ScenarioSpec {
        name: "box5".into(),
        seed,
        bandwidth_mhz: 20,
        controller: default_controller(),
        rate_selector: default_rate(),
        traffic: TrafficSpec::default(),
        sim: SimConfig::default(),
        bss,
    })
}

/// Three BSSs with APs on an equilateral triangle and stations scattered
/// around each AP.
pub fn build_box5(seed: u64) -> ScenarioSpec {
    build_box5_with(seed, &Box5Params::default()).expect("default Box5 geometry is feasible")
}

pub fn build_box5_with(seed: u64, params: &Box5Params) -> Result<ScenarioSpec, ConfigError> {
    let mut rng = substream(seed, Stream::Topology);
    box5_with(seed, params, &mut rng)
}

/// Box5 with every station moved uniformly within `jitter_m` of its Box5
/// position. Moves that break spacing or association are redrawn.
pub fn build_custom_box5(seed: u64, jitter_m: f64) -> Result<ScenarioSpec, ConfigError> {
    if !(jitter_m >= 0.0) || !jitter_m.is_finite() {
        return Err(ConfigError::invalid("jitter", "must be a finite, non-negative distance"));
    }
    let mut rng = substream(seed, Stream::Topology);
    let mut spec = box5_with(seed, &Box5Params::default(), &mut rng)?;
    spec.name = "custom-box5".into();
    if jitter_m == 0.0 {
        return Ok(spec);
    }
    let aps: Vec<Position> = spec.bss.iter().map(|b| b.ap).collect();
    let min = spec.sim.propagation.min_distance_m;
    let mut placed: Vec<Position> = Vec::new();
    for b in &mut spec.bss {
        for sta in &mut b.stas {
            let moved = (0..PLACEMENT_RETRIES)
                .map(|_| uniform_in_disc(&mut rng, *sta, jitter_m))
                .find(|&p| placement_ok(p, b.ap, &aps, &placed, min))
                .ok_or_else(|| ConfigError::Infeasible {
                    target: format!("jittered station of {}", b.name),
                    reason: format!("no valid position within {jitter_m} m"),
                })?;
            *sta = moved;
            placed.push(moved);
        }
    }
    Ok(spec)
}

/// AP-to-station distance used by the two-pair layout.
pub const EXPOSED_LINK_M: f64 = 5.0;

/// Two single-station BSSs on a line, AP1 - STA1 ... STA2 - AP2, with the
/// station gap solved so that each station hears the other at `target`
/// when transmitting at the reference power.
pub fn build_exposed_pair(target: f64) -> Result<ScenarioSpec, ConfigError> {
    let sim = SimConfig::default();
    let bounds = ObssPdBounds::for_bandwidth(20)?;
    let infeasible = |reason: String| ConfigError::Infeasible {
        target: format!("{target} dBm inter-BSS RSSI"),
        reason,
    };
    if !target.is_finite() {
        return Err(infeasible("not a finite level".into()));
    }
    let f = sim.propagation.frequency_hz;
    let loss = bounds.txpow_ref.0 - target;
    let gap = distance_for_loss(loss, f);
    // The other AP must stay farther than the own AP and the Friis far field
    // must hold between the stations.
    if gap < sim.propagation.min_distance_m {
        return Err(infeasible(format!(
            "needs a {gap:.3} m station gap, below the {} m far-field minimum",
            sim.propagation.min_distance_m
        )));
    }
    let link_rssi = bounds.txpow_ref.0 - sim.propagation.loss(EXPOSED_LINK_M);
    if link_rssi < sim.mcs.highest().min_rssi_dbm {
        return Err(infeasible("own-AP link cannot carry the top MCS".into()));
    }
    let sta1 = Position::new(EXPOSED_LINK_M, 0.0);
    let sta2 = Position::new(EXPOSED_LINK_M + gap, 0.0);
    let achieved = bounds.txpow_ref.0 - sim.propagation.loss(sta1.distance(&sta2));
    if (achieved - target).abs() > 0.1 {
        return Err(infeasible(format!("solved geometry gives {achieved} dBm")));
    }
    let pair = |name: &str, color: u8, ap: Position, sta: Position| BssSpec {
        name: name.into(),
        color: BssColor::new(color).expect("valid color"),
        ap,
        stas: vec![sta],
        placement: None,
        controller: None,
    };
    Ok(ScenarioSpec {
        name: "exposed-pair".into(),
        seed: 0,
        bandwidth_mhz: 20,
        controller: ControllerKind::NoObsspd,
        rate_selector: default_rate(),
        traffic: TrafficSpec::default(),
        sim,
        bss: vec![
            pair("BSS1", 1, Position::new(0.0, 0.0), sta1),
            pair("BSS2", 2, Position::new(2.0 * EXPOSED_LINK_M + gap, 0.0), sta2),
        ],
    })
}

/// Poisson arrivals of fixed-size payloads at a mean bit rate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrafficSource {
    pub payload_bytes: u64,
    pub rate_mbps: f64,
    exp: Exp<f64>,
}

impl TrafficSource {
    pub fn new(spec: &TrafficSpec) -> Result<Self, ConfigError> {
        let mean = spec.payload_bytes as f64 * 8.0 / spec.rate_mbps;
        let exp = Exp::new(1.0 / mean).map_err(|_| ConfigError::invalid("traffic", "invalid arrival rate"))?;
        Ok(Self {
            payload_bytes: spec.payload_bytes,
            rate_mbps: spec.rate_mbps,
            exp,
        })
    }

    /// Mean gap between arrivals in microseconds (bits over Mbit/s).
    pub fn mean_interarrival_us(&self) -> f64 {
        self.payload_bytes as f64 * 8.0 / self.rate_mbps
    }
}

/// Draws the gap in microseconds until the next payload arrives.
pub fn next_arrival<R: Rng + ?Sized>(source: &TrafficSource, rng: &mut R) -> f64 {
    source.exp.sample(rng)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn box5_counts_and_colors() {
        let s = build_box5(1);
        let t = s.topology().unwrap();
        assert_eq!(t.aps.len(), 3);
        assert_eq!(t.n_stas(), 25);
        let colors: Vec<u8> = s.bss.iter().map(|b| b.color.value()).collect();
        assert_eq!(colors, vec![1, 2, 3]);
        assert_eq!(s.bss[0].stas.len(), 15);
        assert_eq!(s.bss[1].stas.len(), 5);
    }

    #[test]
    fn box5_is_seed_deterministic() {
        assert_eq!(build_box5(9), build_box5(9));
        assert_ne!(build_box5(9), build_box5(10));
    }

    #[test]
    fn box5_triangle_side() {
        let s = build_box5(3);
        for (i, j) in [(0, 1), (1, 2), (0, 2)] {
            assert_relative_eq!(s.bss[i].ap.distance(&s.bss[j].ap), 60.0, max_relative = 1e-12);
        }
    }

    #[test]
    fn zero_jitter_is_box5() {
        let mut a = build_custom_box5(4, 0.0).unwrap();
        a.name = "box5".into();
        assert_eq!(a, build_box5(4));
    }

    #[test]
    fn jitter_keeps_counts_and_reproduces() {
        let a = build_custom_box5(4, 10.0).unwrap();
        assert_eq!(a, build_custom_box5(4, 10.0).unwrap());
        assert_ne!(a.bss[0].stas, build_box5(4).bss[0].stas);
        let t = a.topology().unwrap();
        assert_eq!((t.aps.len(), t.n_stas()), (3, 25));
        assert!(build_custom_box5(4, -1.0).is_err());
    }

    #[test]
    fn exposed_pair_solves_gap() {
        let s = build_exposed_pair(-75.0).unwrap();
        let gap = s.bss[0].stas[0].distance(&s.bss[1].stas[0]);
        assert_relative_eq!(gap, 301.0515271270574, max_relative = 1e-9);
        let rssi = 21.0 - s.sim.propagation.loss(gap);
        assert!((rssi + 75.0).abs() <= 0.1);
        s.validate().unwrap();
    }

    #[test]
    fn exposed_pair_rejects_unreachable_target() {
        assert!(build_exposed_pair(-10.0).is_err());
        assert!(build_exposed_pair(f64::NAN).is_err());
    }

    #[test]
    fn rejects_close_nodes() {
        let mut s = build_exposed_pair(-75.0).unwrap();
        s.bss[0].stas.push(Position::new(0.5, 0.0));
        assert!(matches!(s.validate(), Err(ConfigError::TooClose { .. })));
    }

    #[test]
    fn rejects_shared_colors() {
        let mut s = build_box5(1);
        s.bss[2].color = BssColor::new(1).unwrap();
        assert!(s.validate().unwrap_err().to_string().contains("color"));
    }

    #[test]
    fn rejects_misassociated_station() {
        let mut s = build_box5(1);
        // Right next to AP-B but listed under BSS-A.
        s.bss[0].stas.push(Position::new(58.0, 0.0));
        assert!(s.validate().is_err());
    }

    #[test]
    fn toml_round_trip() {
        for spec in [build_box5(2), build_exposed_pair(-75.0).unwrap()] {
            let text = spec.to_toml();
            assert_eq!(ScenarioSpec::from_toml(&text).unwrap(), spec);
        }
    }

    #[test]
    fn minimal_file_with_placement_rule() {
        let text = r#"
            name = "tiny"
            seed = 5
            controller = { kind = "dsc" }
            some_future_field = true

            [[bss]]
            name = "X"
            color = 7
            ap = { x = 0.0, y = 0.0 }
            placement = { count = 4, radius_m = 10.0 }
        "#;
        let spec = ScenarioSpec::from_toml(text).unwrap();
        assert_eq!(spec.controller, ControllerKind::Dsc);
        assert_eq!(spec.rate_selector, RateSelectorKind::Thompson);
        let t = spec.topology().unwrap();
        assert_eq!(t.nodes.len(), 5);
        assert!(t.nodes[1..].iter().all(|n| n.position.distance(&t.nodes[0].position) <= 10.0));
        assert_eq!(spec.topology().unwrap(), t);
    }

    #[test]
    fn static_override_is_bounds_checked() {
        let mut s = build_exposed_pair(-75.0).unwrap();
        s.bss[0].controller = Some(ControllerKind::Static { obss_pd_dbm: -50.0 });
        assert!(s.validate().is_err());
    }

    #[test]
    fn mean_interarrival() {
        let src = TrafficSource::new(&TrafficSpec::default()).unwrap();
        assert_relative_eq!(src.mean_interarrival_us(), 27.306666666666665, max_relative = 1e-12);
    }

    #[test]
    fn empirical_interarrival_mean() {
        let src = TrafficSource::new(&TrafficSpec::default()).unwrap();
        let mut rng = substream(11, Stream::Traffic);
        let n = 100_000;
        let mean = (0..n).map(|_| next_arrival(&src, &mut rng)).sum::<f64>() / n as f64;
        assert!((mean / src.mean_interarrival_us() - 1.0).abs() < 0.01, "{mean}");
    }
}
