use std::sync::OnceLock;

use pdmpc::geometry::{ConvexPolygon, PolyUnion, Vec2};
use pdmpc::mpa::{build_mpa, build_reach_table, Compaction, Mpa, MpaState, ReachTable};
use pdmpc::partition::{compute_levels, LevelLimit};
use pdmpc::sim::{
    detect_collisions, random_scenario, run, single_vehicle_scenario, ConstraintMode, RefPath, Scenario, SimConfig,
    VehicleSpec,
};
use pdmpc::vehicle::VehicleState;

fn automaton() -> &'static (Mpa, ReachTable) {
    static CELL: OnceLock<(Mpa, ReachTable)> = OnceLock::new();
    CELL.get_or_init(|| {
        let mpa = build_mpa(single_vehicle_scenario().mpa_config()).unwrap();
        let table = build_reach_table(&mpa, Compaction::default());
        (mpa, table)
    })
}

fn square(cx: f64, cy: f64, side: f64) -> PolyUnion {
    ConvexPolygon::rectangle(Vec2::new(cx, cy), 0.0, side, side)
        .unwrap()
        .into()
}

/// `n` vehicles queued at standstill on one straight lane.
fn queue_scenario(n: usize, gap: f64) -> Scenario {
    let mut s = single_vehicle_scenario();
    s.name = "queue".into();
    s.vehicles = (0..n)
        .map(|i| VehicleSpec {
            initial: VehicleState::new(i as f64 * gap, 0.0, 0.0, 0.0),
            mpa_state: MpaState::new(0, 2),
            path: 0,
        })
        .collect();
    s
}

#[test]
fn lone_vehicle_drives_at_free_flow() {
    let (mpa, table) = automaton();
    let out = run(&single_vehicle_scenario(), mpa, table, SimConfig::default(), 15).unwrap();
    let m = &out.metrics;
    assert_eq!(m.normalized_avg_speed, 1.0);
    assert_eq!(m.max_levels_observed, 1);
    assert_eq!(m.collision_count, 0);
    assert!(m.avg_speed > 1.0, "vehicle should accelerate, got {}", m.avg_speed);
}

#[test]
fn queued_vehicles_form_a_chain_of_levels() {
    let (mpa, table) = automaton();
    let out = run(&queue_scenario(4, 0.5), mpa, table, SimConfig::default(), 1).unwrap();
    let rec = &out.log[0];
    assert_eq!(rec.max_level, 4);
    assert_eq!(rec.unpartitioned_levels, 4);
    // the leader plans first
    let mut by_level: Vec<usize> = rec.vehicles.iter().map(|v| v.level).collect();
    assert_eq!(by_level, vec![4, 3, 2, 1]);
    by_level.sort();
    assert_eq!(by_level, vec![1, 2, 3, 4]);
}

#[test]
fn level_limit_caps_observed_levels() {
    let (mpa, table) = automaton();
    for limit in [1, 2, 3] {
        let mut s = queue_scenario(4, 0.5);
        s.level_limit = LevelLimit::Finite(limit);
        let out = run(&s, mpa, table, SimConfig::default(), 3).unwrap();
        assert!(out.metrics.max_levels_observed <= limit);
        assert_eq!(out.metrics.collision_count, 0);
        for rec in &out.log {
            assert!(rec.vehicles.iter().all(|v| v.level <= limit));
        }
    }
}

#[test]
fn unbounded_levels_match_the_coupling_graph() {
    let (mpa, table) = automaton();
    let s = random_scenario(6, 3).unwrap();
    let out = run(&s, mpa, table, SimConfig::default(), 4).unwrap();
    for rec in &out.log {
        let levels = compute_levels(rec.graph.n_vehicles, &rec.graph.edge_pairs()).unwrap();
        assert_eq!(rec.max_level, levels.max_levels());
        assert!(rec.partition.parallel_edges.is_empty());
    }
}

#[test]
fn single_level_plans_everyone_in_parallel() {
    let (mpa, table) = automaton();
    let mut s = queue_scenario(3, 0.5);
    s.level_limit = LevelLimit::Finite(1);
    let out = run(&s, mpa, table, SimConfig::default(), 2).unwrap();
    for rec in &out.log {
        assert!(rec.partition.sequential_edges.is_empty());
        assert_eq!(rec.cut_weight, rec.graph.edges.iter().map(|e| e.weight).sum::<f64>());
    }
}

#[test]
fn runs_are_deterministic() {
    let (mpa, table) = automaton();
    let mut s = random_scenario(6, 11).unwrap();
    s.level_limit = LevelLimit::Finite(2);
    let a = run(&s, mpa, table, SimConfig::default(), 4).unwrap();
    let b = run(&s, mpa, table, SimConfig::default(), 4).unwrap();
    assert_eq!(
        serde_json::to_string(&a.log).unwrap(),
        serde_json::to_string(&b.log).unwrap()
    );
    assert_eq!(a.metrics, b.metrics);
}

#[test]
fn previous_trajectory_mode_runs() {
    let (mpa, table) = automaton();
    let mut s = queue_scenario(3, 0.5);
    s.constraint_mode = ConstraintMode::PreviousTrajectory;
    s.level_limit = LevelLimit::Finite(1);
    let out = run(&s, mpa, table, SimConfig::default(), 3).unwrap();
    assert_eq!(out.log.len(), 3);
}

#[test]
fn collision_detection() {
    let a = square(0.0, 0.0, 1.0);
    assert_eq!(detect_collisions(&[a.clone(), square(0.5, 0.5, 1.0)]), vec![(0, 1)]);
    // 1 mm gap
    assert!(detect_collisions(&[a.clone(), square(1.001, 0.0, 1.0)]).is_empty());
    // shared edge counts as contact
    assert_eq!(detect_collisions(&[a.clone(), square(1.0, 0.0, 1.0)]), vec![(0, 1)]);
    let many = [a, square(5.0, 0.0, 1.0), square(0.2, 0.0, 0.5), square(5.3, 0.3, 1.0)];
    assert_eq!(detect_collisions(&many), vec![(0, 2), (1, 3)]);
    assert!(detect_collisions(&[PolyUnion::empty(), square(0.0, 0.0, 1.0)]).is_empty());
}

#[test]
fn ref_path_projection_and_lookup() {
    let open = RefPath {
        points: vec![Vec2::new(0.0, 0.0), Vec2::new(2.0, 0.0), Vec2::new(2.0, 2.0)],
        closed: false,
        speed_limit: 1.0,
    };
    assert_eq!(open.length(), 4.0);
    assert!((open.project(Vec2::new(1.0, 0.3)) - 1.0).abs() < 1e-12);
    assert!((open.project(Vec2::new(2.5, 1.5)) - 3.5).abs() < 1e-12);
    assert_eq!(open.point_at(3.0), Vec2::new(2.0, 1.0));
    assert_eq!(open.point_at(10.0), Vec2::new(2.0, 2.0));
    assert_eq!(open.point_at(-1.0), Vec2::new(0.0, 0.0));

    let closed = RefPath { closed: true, ..open };
    assert!((closed.length() - (4.0 + 8f64.sqrt())).abs() < 1e-12);
    let p = closed.point_at(closed.length() + 1.0);
    assert!(p.dist(Vec2::new(1.0, 0.0)) < 1e-12);
}

#[test]
fn scenario_json_round_trip() {
    for s in [single_vehicle_scenario(), random_scenario(5, 2).unwrap()] {
        let text = serde_json::to_string(&s).unwrap();
        let back: Scenario = serde_json::from_str(&text).unwrap();
        assert_eq!(back, s);
        assert_eq!(back.hash(), s.hash());
    }
    let mut s = single_vehicle_scenario();
    s.level_limit = LevelLimit::Unbounded;
    assert!(serde_json::to_string(&s).unwrap().contains("\"level_limit\":\"inf\""));
}

#[test]
fn invalid_scenarios_are_rejected() {
    let (mpa, table) = automaton();
    let overlapping = queue_scenario(2, 0.1);
    assert!(overlapping.validate().is_err());
    assert!(run(&overlapping, mpa, table, SimConfig::default(), 1).is_err());

    let mut off_road = single_vehicle_scenario();
    off_road.vehicles[0].initial.y = 5.0;
    assert!(off_road.validate().is_err());

    let mut bad_path = single_vehicle_scenario();
    bad_path.vehicles[0].path = 3;
    assert!(bad_path.validate().is_err());

    assert!(run(&single_vehicle_scenario(), mpa, table, SimConfig::default(), 0).is_err());
}
