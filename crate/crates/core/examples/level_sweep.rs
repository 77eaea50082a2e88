//! Runs the 20-vehicle loop scenario for several computation level limits
//! and prints normalized speed, observed levels and collisions.
//!
//! ```bash
//! cargo run --release -p pdmpc --example level_sweep -- [seeds] [steps]
//! ```

use std::time::Instant;

use pdmpc::cli::cache_dir;
use pdmpc::mpa::{build_mpa, load_or_build, Compaction};
use pdmpc::partition::LevelLimit;
use pdmpc::sim::{loop_scenario, run, SimConfig};

fn main() -> pdmpc::Result<()> {
    let mut args = std::env::args().skip(1);
    let seeds: u64 = args.next().and_then(|s| s.parse().ok()).unwrap_or(2);
    let steps: usize = args.next().and_then(|s| s.parse().ok()).unwrap_or(40);

    let base = loop_scenario(20, 0)?;
    let mpa = build_mpa(base.mpa_config())?;
    let table = load_or_build(&mpa, Compaction::default(), &cache_dir())?;

    println!("limit  seed  speed  levels  collisions  infeasible  forced  time");
    for limit in [LevelLimit::Finite(1), LevelLimit::Finite(4), LevelLimit::Unbounded] {
        for seed in 0..seeds {
            let mut s = loop_scenario(20, seed)?;
            s.level_limit = limit;
            let t0 = Instant::now();
            let out = run(&s, &mpa, &table, SimConfig::default(), steps)?;
            let m = &out.metrics;
            println!(
                "{:>5}  {seed:>4}  {:.3}  {:>6}  {:>10}  {:>10}  {:>6}  {:.1?}",
                limit.to_string(),
                m.normalized_avg_speed,
                m.max_levels_observed,
                m.collision_count,
                m.infeasible_count,
                m.forced_count,
                t0.elapsed()
            );
        }
    }
    Ok(())
}
