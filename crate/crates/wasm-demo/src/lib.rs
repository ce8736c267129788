//! Browser bindings for three demo operations. Each returns a JSON string.
//!
//! The plain-Rust functions are usable natively; the `#[wasm_bindgen]`
//! wrappers only convert errors and serialise.

use obsspd::control::{ControllerParams, ObssPdBounds};
use obsspd::engine::secs_to_micros;
use obsspd::scenario::{build_box5, build_exposed_pair};
use obsspd::sim::{run, SimOptions};
use obsspd::trace::FrameKind;
use obsspd::units::Dbm;
use obsspd::{Controller, ControllerKind, RateSelectorKind, ScenarioSpec};
use serde::Serialize;
use wasm_bindgen::prelude::*;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PairResult {
    pub bss1_mbps: f64,
    pub bss2_mbps: f64,
    pub aggregate_mbps: f64,
    /// Data frames of one BSS that began while the other BSS was sending.
    pub staggered_overlaps: usize,
}

/// Two single-station BSSs at `gap_rssi_dbm` inter-BSS RSSI, both using a
/// fixed threshold.
pub fn exposed_pair(gap_rssi_dbm: f64, obss_pd_dbm: f64, horizon_s: f64) -> Result<PairResult, String> {
    let mut s = build_exposed_pair(gap_rssi_dbm).map_err(|e| e.to_string())?;
    s.sim.horizon_s = horizon_s;
    for b in &mut s.bss {
        b.controller = Some(ControllerKind::Static { obss_pd_dbm });
    }
    let out = run(&s, SimOptions::default()).map_err(|e| e.to_string())?;
    let mbps = |node: usize| out.metrics.node_total_bytes(node) as f64 * 8.0 / 1e6 / horizon_s;
    let aps = &out.topology.aps;
    let data: Vec<_> = out.events.iter().filter(|e| e.kind == FrameKind::Data).collect();
    let staggered_overlaps = data
        .iter()
        .filter(|a| a.color == 1)
        .flat_map(|a| data.iter().filter(|b| b.color == 2).map(move |b| (a, b)))
        .filter(|(a, b)| a.overlaps(b) && a.start_us != b.start_us)
        .count();
    let (bss1_mbps, bss2_mbps) = (mbps(aps[0]), mbps(aps[1]));
    Ok(PairResult {
        bss1_mbps,
        bss2_mbps,
        aggregate_mbps: bss1_mbps + bss2_mbps,
        staggered_overlaps,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TracePoint {
    pub step: usize,
    pub obss_pd: f64,
    pub goal: Option<f64>,
    pub tx_power: f64,
    pub mcs: f64,
    pub branch: String,
}

/// RACEBOT against a synthetic interferer heard at `interferer_dbm`. While
/// the threshold sits above `harm_dbm` the link falls from MCS 9 to MCS 3,
/// standing in for the damage concurrent frames would do.
pub fn racebot_trace(interferer_dbm: f64, link_dbm: f64, harm_dbm: f64, steps: usize) -> Result<Vec<TracePoint>, String> {
    let bounds = ObssPdBounds::for_bandwidth(20).map_err(|e| e.to_string())?;
    let mut c = Controller::new(ControllerKind::Racebot, &ControllerParams::default(), bounds).map_err(|e| e.to_string())?;
    let dt = secs_to_micros(1.0);
    let mut mcs_avg = 0.0;
    let mut out = Vec::with_capacity(steps);
    for step in 0..steps {
        for _ in 0..50 {
            c.observe_obss(Dbm(interferer_dbm));
        }
        c.observe_bss_rssi(Dbm(link_dbm));
        let mcs = if c.obss_pd().0 > harm_dbm { 3.0 } else { 9.0 };
        mcs_avg = 0.5 * mcs + 0.5 * mcs_avg;
        let r = c.step(dt, mcs_avg);
        out.push(TracePoint {
            step,
            obss_pd: r.obss_pd.0,
            goal: r.goal.map(|g| g.0),
            tx_power: r.tx_power.0,
            mcs: r.mcs_ewma,
            branch: r.branch.to_string(),
        });
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ControllerResult {
    pub controller: String,
    pub total_transfer_mbit: f64,
    pub series_mbps: Vec<f64>,
}

/// The four controllers on the same Box5 placement.
pub fn compare_box5(seed: u64, horizon_s: f64, minstrel: bool) -> Result<Vec<ControllerResult>, String> {
    let kinds = [
        ControllerKind::Racebot,
        ControllerKind::NoObsspd,
        ControllerKind::Rtot,
        ControllerKind::Dsc,
    ];
    kinds
        .iter()
        .map(|&kind| {
            let s = ScenarioSpec {
                controller: kind,
                rate_selector: if minstrel {
                    RateSelectorKind::Minstrel
                } else {
                    RateSelectorKind::Thompson
                },
                ..box5(seed, horizon_s)
            };
            let out = run(
                &s,
                SimOptions {
                    event_log: false,
                    record_observations: false,
                },
            )
            .map_err(|e| e.to_string())?;
            Ok(ControllerResult {
                controller: kind.name(),
                total_transfer_mbit: out.metrics.total_transfer(),
                series_mbps: out.metrics.aggregate_series(),
            })
        })
        .collect()
}

fn box5(seed: u64, horizon_s: f64) -> ScenarioSpec {
    let mut s = build_box5(seed);
    s.sim.horizon_s = horizon_s;
    s
}

fn to_js<T: Serialize>(r: Result<T, String>) -> Result<String, JsError> {
    let v = r.map_err(|e| JsError::new(&e))?;
    serde_json::to_string(&v).map_err(|e| JsError::new(&e.to_string()))
}

#[wasm_bindgen(js_name = exposedPair)]
pub fn exposed_pair_js(gap_rssi_dbm: f64, obss_pd_dbm: f64, horizon_s: f64) -> Result<String, JsError> {
    to_js(exposed_pair(gap_rssi_dbm, obss_pd_dbm, horizon_s))
}

#[wasm_bindgen(js_name = racebotTrace)]
pub fn racebot_trace_js(interferer_dbm: f64, link_dbm: f64, harm_dbm: f64, steps: usize) -> Result<String, JsError> {
    to_js(racebot_trace(interferer_dbm, link_dbm, harm_dbm, steps))
}

#[wasm_bindgen(js_name = compareBox5)]
pub fn compare_box5_js(seed: u64, horizon_s: f64, minstrel: bool) -> Result<String, JsError> {
    to_js(compare_box5(seed, horizon_s, minstrel))
}
