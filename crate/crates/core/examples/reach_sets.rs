//! Builds the default motion-primitive automaton, precomputes its one-step
//! reachable sets and prints how large they are.
//!
//! ```bash
//! cargo run --release -p pdmpc --example reach_sets
//! ```

use std::time::Instant;

use pdmpc::geometry::Vec2;
use pdmpc::mpa::{build_mpa, build_reach_table, reachable_set, Compaction, MpaConfig, MpaState};
use pdmpc::vehicle::Pose;

fn main() -> pdmpc::Result<()> {
    let mpa = build_mpa(MpaConfig::default())?;
    println!(
        "automaton: {} states, {} primitives, horizon {}",
        mpa.n_states(),
        mpa.primitives.len(),
        mpa.horizon()
    );

    let t0 = Instant::now();
    let table = build_reach_table(&mpa, Compaction::default());
    println!(
        "reach table built in {:.2?}: {} convex parts in total",
        t0.elapsed(),
        table.total_parts()
    );

    let cruising = MpaState::new(mpa.config.speed_levels.len() - 1, mpa.zero_steering());
    for (h, entry) in table.entries(cruising)?.iter().enumerate() {
        let b = entry.aabb().expect("non-empty entry");
        println!(
            "  step {h}: {:3} parts, x in [{:+.2}, {:+.2}] m, y in [{:+.2}, {:+.2}] m",
            entry.parts().len(),
            b.min.x,
            b.max.x,
            b.min.y,
            b.max.y
        );
    }

    // the same set for a vehicle at (2, 1) heading north
    let pose = Pose::new(2.0, 1.0, std::f64::consts::FRAC_PI_2);
    let last = reachable_set(&table, cruising, &pose, mpa.horizon() - 1)?;
    let probe = Vec2::new(2.0, 2.5);
    println!(
        "vehicle at (2, 1) heading north can occupy {probe:?} in the last step: {}",
        last.contains_point(probe)
    );
    Ok(())
}
