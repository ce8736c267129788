use obsspd_wasm_demo::{compare_box5, exposed_pair, racebot_trace};

#[test]
fn raised_thresholds_let_the_pair_overlap() {
    let low = exposed_pair(-75.0, -82.0, 1.0).unwrap();
    let high = exposed_pair(-75.0, -72.0, 1.0).unwrap();
    assert_eq!(low.staggered_overlaps, 0);
    assert!(high.staggered_overlaps > 0);
    assert!(high.aggregate_mbps > low.aggregate_mbps);
    assert!(exposed_pair(-75.0, -50.0, 1.0).is_err());
}

#[test]
fn racebot_trace_respects_coupling_and_harm_level() {
    let t = racebot_trace(-70.0, -50.0, -66.0, 40).unwrap();
    assert_eq!(t.len(), 40);
    for p in &t {
        assert_eq!(p.obss_pd + p.tx_power, -61.0);
        assert!((-82.0..=-62.0).contains(&p.obss_pd));
    }
    assert!(t.iter().any(|p| p.obss_pd > -82.0));
}

#[test]
fn box5_comparison_covers_four_controllers() {
    let r = compare_box5(1, 1.0, false).unwrap();
    let names: Vec<_> = r.iter().map(|c| c.controller.as_str()).collect();
    assert_eq!(names, ["racebot", "no-obsspd", "rtot", "dsc"]);
    assert!(r.iter().all(|c| c.total_transfer_mbit > 0.0 && c.series_mbps.len() == 1));
}
