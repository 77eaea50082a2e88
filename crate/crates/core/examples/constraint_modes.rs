//! Three vehicles meet at an intersection, all planning in parallel
//! (level limit 1). With previous-trajectory constraints the neighbours'
//! plans go stale and vehicles collide or get stuck; with reachable-set
//! constraints they stay clear.
//!
//! ```bash
//! cargo run --release -p pdmpc --example constraint_modes
//! ```

use pdmpc::mpa::{build_mpa, build_reach_table, Compaction};
use pdmpc::partition::LevelLimit;
use pdmpc::sim::{intersection_scenario, run, ConstraintMode, PlanStatus, SimConfig};

fn main() -> pdmpc::Result<()> {
    let base = intersection_scenario();
    let mpa = build_mpa(base.mpa_config())?;
    let table = build_reach_table(&mpa, Compaction::default());
    for mode in [ConstraintMode::PreviousTrajectory, ConstraintMode::ReachableSets] {
        let mut s = base.clone();
        s.level_limit = LevelLimit::Finite(1);
        s.constraint_mode = mode;
        let out = run(&s, &mpa, &table, SimConfig::default(), 20)?;
        println!("mode {mode}");
        for rec in &out.log {
            let statuses: Vec<String> = rec
                .vehicles
                .iter()
                .map(|v| match v.status {
                    PlanStatus::Planned => format!("{:.2}", v.state.speed),
                    other => format!("{other:?}"),
                })
                .collect();
            let hits: Vec<String> = rec.collisions.iter().map(|(a, b)| format!("{a}-{b}")).collect();
            println!("  k={:>2}  {}  {}", rec.step, statuses.join(" "), hits.join(" "));
        }
        let m = &out.metrics;
        println!(
            "  collisions {}  infeasible {}  normalized speed {:.3}",
            m.collision_count, m.infeasible_count, m.normalized_avg_speed
        );
    }
    Ok(())
}
