//! Couples three vehicles through their reachable sets, assigns priorities
//! and partitions the coupling graph into a limited number of levels.
//!
//! ```bash
//! cargo run --release -p pdmpc --example priorities
//! ```

use std::f64::consts::PI;

use pdmpc::coupling::{assign_priorities, assign_priorities_reach_order, couplings_from_sets, orient_and_weight};
use pdmpc::mpa::{build_mpa, build_reach_table, reachable_sets, Compaction, MpaConfig, MpaState};
use pdmpc::partition::{partition_exact, partition_greedy, LevelLimit};
use pdmpc::vehicle::Pose;

fn main() -> pdmpc::Result<()> {
    let mpa = build_mpa(MpaConfig::default())?;
    let table = build_reach_table(&mpa, Compaction::default());
    let horizon = mpa.horizon();
    let cruise = MpaState::new(2, mpa.zero_steering());

    // a follower, its leader and an oncoming vehicle
    let vehicles = [
        (cruise, Pose::new(0.0, 0.0, 0.0)),
        (cruise, Pose::new(0.6, 0.0, 0.0)),
        (cruise, Pose::new(2.5, 0.25, PI)),
    ];
    let sets = vehicles
        .iter()
        .map(|(s, p)| reachable_sets(&table, *s, p))
        .collect::<pdmpc::Result<Vec<_>>>()?;
    let couplings = couplings_from_sets(&sets);
    for c in &couplings {
        println!("vehicles {} and {} first meet at step {}", c.a, c.b, c.earliest_step);
    }

    let earliest = assign_priorities(&couplings, vehicles.len(), horizon);
    let reach = assign_priorities_reach_order(&couplings, &sets, horizon);
    println!("planning order by earliest coupling: {:?}", earliest.order());
    println!("planning order by reach order:       {:?}", reach.order());

    let graph = orient_and_weight(&couplings, &reach, horizon);
    for e in &graph.edges {
        println!("edge {} -> {} weight {:.3}", e.from, e.to, e.weight);
    }
    for limit in [LevelLimit::Finite(1), LevelLimit::Finite(2), LevelLimit::Unbounded] {
        let greedy = partition_greedy(&graph, limit)?;
        let exact = partition_exact(&graph, limit)?;
        println!(
            "limit {limit}: levels {:?}, cut weight {:.3} (exact {:.3})",
            greedy.levels.level_of,
            greedy.cut_weight(&graph),
            exact.cut_weight(&graph)
        );
    }
    Ok(())
}
