use coopath_core::controller::clf_value;
use coopath_core::metrics::{compare, compute_metrics, summarize, to_csv};
use coopath_core::operator::OperatorKind;
use coopath_core::record::RunRecord;
use coopath_core::{run, Event, Mode, RunStatus, Scenario};

fn compliant(mut sc: Scenario) -> Scenario {
    sc.operator.kind = OperatorKind::Compliant;
    sc
}

#[test]
fn halving_the_timestep_keeps_lateral_rmse() {
    let coarse = compliant(Scenario::default_course());
    let mut fine = coarse.clone();
    fine.dt = coarse.dt / 2.0;
    let a = compute_metrics(&run(&coarse).unwrap()).unwrap().rmse_e2;
    let b = compute_metrics(&run(&fine).unwrap()).unwrap().rmse_e2;
    assert!(((b - a) / a).abs() < 0.05, "rmse_e2 {a} vs {b}");
}

#[test]
fn hands_off_run_completes_in_about_45_seconds() {
    let rec = run(&compliant(Scenario::default_course())).unwrap();
    assert_eq!(rec.status, Some(RunStatus::Completed));
    assert!((40.0..50.0).contains(&rec.terminal_time), "{}", rec.terminal_time);
    assert_eq!(rec.rows.len() as f64, (rec.terminal_time / rec.dt).round());
}

#[test]
fn cooperative_mode_tracks_better_than_manual() {
    let rows = compare(&Scenario::default_course(), &[1, 2, 3, 4, 5], 2).unwrap();
    let s = summarize(&rows).unwrap();
    assert_eq!(s.pairs, 5);
    assert_eq!(s.incomplete, 0);
    assert!(s.cc.mean_rmse_e2 < s.mc.mean_rmse_e2);
    assert!(s.cc_wins_e2 >= 4);
}

#[test]
fn compare_csv_is_reproducible() {
    let sc = Scenario::default_course();
    let a = to_csv(&compare(&sc, &[7, 8], 1).unwrap());
    let b = to_csv(&compare(&sc, &[8, 7], 4).unwrap());
    assert_eq!(a, b);
}

#[test]
fn jsonl_round_trip_is_exact() {
    let mut sc = Scenario::default_course();
    sc.max_duration = 25.0;
    let rec = run(&sc).unwrap();
    let text = rec.to_jsonl();
    let back = RunRecord::from_jsonl(&text).unwrap();
    assert_eq!(back, rec);
    assert_eq!(back.to_jsonl(), text);
    let header = text.lines().next().unwrap();
    assert!(header.contains(&sc.hash()));
}

#[test]
fn gaps_are_logged_with_true_errors() {
    let rec = run(&Scenario::default_course()).unwrap();
    let lost: Vec<_> = rec.rows.iter().filter(|r| !r.detected).collect();
    assert!(lost.iter().all(|r| r.u == 0.0 && r.beta == 0.0 && r.phi_d == 0.0));
    assert!(lost.iter().any(|r| r.e2 != 0.0 || r.e3 != 0.0));
    let losses = rec.rows.iter().filter(|r| r.events.contains(&Event::PathLost)).count();
    assert_eq!(losses, 3);
}

#[test]
fn manual_mode_never_assists() {
    let mut sc = Scenario::default_course();
    sc.mode = Mode::MC;
    let rec = run(&sc).unwrap();
    assert!(rec.rows.iter().all(|r| r.beta == 0.0 && r.force == 0.0));
}

#[test]
fn lyapunov_value_decays_from_combined_offset() {
    let mut sc = compliant(Scenario::straight(10.0));
    sc.vehicle.initial_errors = [0.3, -0.4];
    let rec = run(&sc).unwrap();
    let v0: Vec<f64> = rec.rows.iter().map(|r| clf_value(r.e2, r.e3, 1.0, 1.0)).collect();
    let last = *v0.last().unwrap();
    assert!(last < 1e-4 * v0[0], "{last}");
}

#[test]
fn timeout_is_reported() {
    let mut sc = Scenario::default_course();
    sc.max_duration = 0.1;
    let rec = run(&sc).unwrap();
    assert_eq!(rec.status, Some(RunStatus::Timeout));
    assert_eq!(rec.rows.len(), 10);
}
