use obsspd::control::ObssPdBounds;
use obsspd::scenario::{build_box5, build_custom_box5, build_exposed_pair};
use obsspd::sim::{run, SimOptions, Simulation};
use obsspd::trace::{FrameKind, FrameOutcome};
use obsspd::{ControllerKind, RateSelectorKind, ScenarioSpec};
use proptest::prelude::*;

fn short_box5(seed: u64, controller: ControllerKind, rate: RateSelectorKind, horizon: f64) -> ScenarioSpec {
    let mut s = build_box5(seed);
    s.controller = controller;
    s.rate_selector = rate;
    s.sim.horizon_s = horizon;
    s
}

fn controller_strategy() -> impl Strategy<Value = ControllerKind> {
    prop_oneof![
        Just(ControllerKind::Racebot),
        Just(ControllerKind::Dsc),
        Just(ControllerKind::Rtot),
        Just(ControllerKind::NoObsspd),
    ]
}

fn rate_strategy() -> impl Strategy<Value = RateSelectorKind> {
    prop_oneof![Just(RateSelectorKind::Thompson), Just(RateSelectorKind::Minstrel)]
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 8, ..ProptestConfig::default() })]

    #[test]
    fn replay_is_bit_exact(seed in 0u64..1000, c in controller_strategy(), r in rate_strategy()) {
        let s = short_box5(seed, c, r, 1.0);
        let a = run(&s, SimOptions::default()).unwrap();
        let b = run(&s, SimOptions::default()).unwrap();
        prop_assert_eq!(a.metrics, b.metrics);
        prop_assert_eq!(a.trace, b.trace);
        prop_assert_eq!(a.events, b.events);
    }

    #[test]
    fn coupling_bounds_and_conservation(seed in 0u64..1000, c in controller_strategy(), r in rate_strategy()) {
        let out = run(&short_box5(seed, c, r, 3.0), SimOptions::default()).unwrap();
        let b = ObssPdBounds::for_bandwidth(20).unwrap();
        for row in &out.trace {
            prop_assert_eq!(row.tx_power.0 + row.obss_pd.0, -61.0);
            prop_assert!(b.contains(row.obss_pd));
        }
        let logged: u64 = out.events.iter().map(|e| e.rbytes).sum();
        prop_assert_eq!(logged, out.metrics.total_bytes());
        let oracle = logged as f64 * 8.0 / 1e6;
        prop_assert!((out.metrics.total_transfer() - oracle).abs() <= 1e-9 * oracle);
    }
}

#[test]
fn every_station_gets_service_in_box5() {
    let out = run(&short_box5(2, ControllerKind::NoObsspd, RateSelectorKind::Thompson, 3.0), SimOptions::default()).unwrap();
    for n in out.topology.nodes.iter().filter(|n| !n.is_ap) {
        assert!(out.stats[n.id].delivered > 0, "station {} starved", n.id);
    }
    // Only APs receive data.
    for n in out.topology.nodes.iter().filter(|n| !n.is_ap) {
        assert_eq!(out.metrics.node_total_bytes(n.id), 0);
    }
}

#[test]
fn frames_follow_dcf_timing() {
    let out = run(&short_box5(3, ControllerKind::Racebot, RateSelectorKind::Minstrel, 1.0), SimOptions::default()).unwrap();
    for ack in out.events.iter().filter(|e| e.kind == FrameKind::Ack) {
        let data = out
            .events
            .iter()
            .find(|d| d.kind == FrameKind::Data && d.end_us + 16 == ack.start_us && d.src == ack.dst.unwrap())
            .expect("every ACK answers a data frame one SIFS earlier");
        assert_eq!(data.dst, Some(ack.src));
        assert_eq!(data.outcome, FrameOutcome::Delivered);
    }
    for e in &out.events {
        assert!(e.start_us < e.end_us);
        if e.kind != FrameKind::Beacon {
            assert_ne!(e.outcome, FrameOutcome::Broadcast);
        }
    }
}

#[test]
fn box5_queues_saturate() {
    let s = short_box5(4, ControllerKind::NoObsspd, RateSelectorKind::Thompson, 2.0);
    let mut sim = Simulation::new(&s, SimOptions::default()).unwrap();
    sim.advance_steps(1).unwrap();
    for n in sim.topology().nodes.iter().filter(|n| !n.is_ap) {
        assert!(sim.queue_len(n.id) > 0, "station {} idle after warm-up", n.id);
    }
    sim.run_to_end().unwrap();
    assert!(sim.is_finished());
    assert_eq!(sim.metrics().n_steps(), 2);
}

#[test]
fn custom_box5_runs() {
    let mut s = build_custom_box5(6, 10.0).unwrap();
    s.sim.horizon_s = 1.0;
    let out = run(&s, SimOptions::default()).unwrap();
    assert!(out.metrics.total_bytes() > 0);
}

#[test]
fn default_thresholds_serialise_the_exposed_pair() {
    let mut s = build_exposed_pair(-75.0).unwrap();
    s.sim.horizon_s = 2.0;
    let out = run(&s, SimOptions::default()).unwrap();
    let data: Vec<_> = out.events.iter().filter(|e| e.kind == FrameKind::Data).collect();
    for a in data.iter().filter(|e| e.color == 1) {
        for b in data.iter().filter(|e| e.color == 2) {
            assert!(!a.overlaps(b) || a.start_us == b.start_us, "{a:?} {b:?}");
        }
    }
}

#[test]
fn invalid_scenarios_are_rejected_before_running() {
    let mut s = build_box5(1);
    s.sim.horizon_s = 2.5;
    assert!(Simulation::new(&s, SimOptions::default()).is_err());
    let mut s = build_box5(1);
    s.bandwidth_mhz = 30;
    assert!(Simulation::new(&s, SimOptions::default()).is_err());
}
