use metagrad::bench::{run_sweep, ExperimentConfig, SweepSummary};
use metagrad::drivers::{read_csv, run_convex, ConvexOptions, WeightSchedule};
use metagrad::meta_learner::{BetaSchedule, ConstraintSet, MetaLearnerState};
use metagrad::problems::QuadraticProblem;
use metagrad::update_rules::UpdateRule;

#[test]
fn run_records_survive_a_file_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = ExperimentConfig::convex_quadratic();
    cfg.horizon = 25;
    cfg.seeds = vec![1, 3];
    let summary = run_sweep(&cfg, false, 0, Some(dir.path())).unwrap();
    let text = std::fs::read_to_string(dir.path().join("summary.json")).unwrap();
    let back = SweepSummary::from_json(&text).unwrap();
    assert_eq!(back, summary);
    assert_eq!(back.to_json().unwrap(), text);
    for (a, b) in back.records.iter().zip(&summary.records) {
        assert_eq!(a, b);
    }
}

#[test]
fn trajectory_csv_round_trips_every_row() {
    let p = QuadraticProblem::generate(3, 5).unwrap();
    let x0 = p.default_start();
    let meta = MetaLearnerState::with_center(
        ConstraintSet::unconstrained(3),
        BetaSchedule::constant(0.01),
        x0.clone(),
    )
    .unwrap();
    let traj = run_convex(
        &p,
        &UpdateRule::direct(3),
        WeightSchedule::Linear,
        meta,
        40,
        &x0,
        &x0,
        &ConvexOptions::default(),
    )
    .unwrap();
    let csv = traj.to_csv_string();
    let rows = read_csv(&csv).unwrap();
    assert_eq!(rows.len(), 40);
    for (row, rec) in rows.iter().zip(&traj.records) {
        assert_eq!(row.t, rec.t);
        assert_eq!(row.f_xbar, rec.f_xbar);
    }
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("t.csv");
    traj.write_csv(std::fs::File::create(&path).unwrap()).unwrap();
    assert_eq!(std::fs::read_to_string(&path).unwrap(), csv);
}

#[test]
fn config_toml_round_trips() {
    for cfg in [
        ExperimentConfig::convex_quadratic(),
        ExperimentConfig::appendix_c_surrogate(),
    ] {
        let text = cfg.to_toml().unwrap();
        assert_eq!(ExperimentConfig::from_toml(&text).unwrap(), cfg);
    }
}
