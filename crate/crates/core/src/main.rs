use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use pdmpc::cli::{
    cmd_build_mpa, cmd_compare_constraints, cmd_run, cmd_sweep_levels, parse_seeds, RunConfig, SWEEP_LIMITS,
};
use pdmpc::partition::LevelLimit;
use pdmpc::sim::ConstraintMode;

/// Prioritized distributed trajectory planning simulator.
///
/// Reach tables are cached in $PDMPC_CACHE_DIR (default target/pdmpc-cache).
#[derive(Parser)]
#[command(version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build and cache the reach table of the scenario's automaton.
    BuildMpa(Common),
    /// Run every seed and write logs, metrics JSON and metrics.csv.
    Run(Common),
    /// Run the first seed with previous-trajectory and reachable-set constraints.
    Compare(Common),
    /// Run every seed at several level limits and summarize per limit.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// Comma-separated limits, e.g. 1,4,inf.
        #[arg(long, value_delimiter = ',')]
        limits: Option<Vec<LevelLimit>>,
    },
}

#[derive(Clone)]
struct Seeds(Vec<u64>);

#[derive(Args)]
struct Common {
    /// Built-in scenario (single, intersection, loop, random) or JSON file.
    #[arg(long, default_value = "loop")]
    scenario: String,
    #[arg(long, default_value_t = 7)]
    horizon: usize,
    #[arg(long, default_value_t = 0.2)]
    dt: f64,
    /// Integer or "inf"; defaults to the scenario's setting.
    #[arg(long)]
    level_limit: Option<LevelLimit>,
    /// reach or prev; defaults to the scenario's setting.
    #[arg(long)]
    mode: Option<ConstraintMode>,
    #[arg(long, default_value_t = 30)]
    steps: usize,
    /// One seed, a list (0,3,7) or a range (0..10).
    #[arg(long, default_value = "0", value_parser = |s: &str| parse_seeds(s).map(Seeds))]
    seeds: Seeds,
    #[arg(long)]
    margin: Option<f64>,
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

impl Common {
    fn config(self) -> RunConfig {
        RunConfig {
            horizon: Some(self.horizon),
            dt: Some(self.dt),
            level_limit: self.level_limit,
            constraint_mode: self.mode,
            margin: self.margin,
            n_steps: self.steps,
            seeds: self.seeds.0,
            ..RunConfig::new(self.scenario, self.out)
        }
    }
}

fn main() -> ExitCode {
    match execute(Cli::parse().command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

fn execute(command: Command) -> pdmpc::Result<()> {
    match command {
        Command::BuildMpa(c) => {
            let report = cmd_build_mpa(&c.config())?;
            println!("wrote {}", report.path.display());
            for ((speed, steering), parts) in &report.parts {
                println!("state ({speed}, {steering}) parts per step {parts:?}");
            }
        }
        Command::Run(c) => {
            let config = c.config();
            let rows = cmd_run(&config)?;
            for r in &rows {
                let m = &r.metrics;
                println!(
                    "seed {} limit {} speed {:.3} levels {} collisions {}",
                    r.seed, r.level_limit, m.normalized_avg_speed, m.max_levels_observed, m.collision_count
                );
            }
            println!("wrote {}", config.out.join("metrics.csv").display());
        }
        Command::Compare(c) => {
            let report = cmd_compare_constraints(&c.config())?;
            for m in &report.modes {
                println!(
                    "{}: collisions {} infeasible {} speed {:.3}",
                    m.mode, m.collision_count, m.infeasible_count, m.normalized_avg_speed
                );
            }
        }
        Command::Sweep { common, limits } => {
            let config = common.config();
            let limits = limits.unwrap_or_else(|| SWEEP_LIMITS.to_vec());
            let report = cmd_sweep_levels(&config, &limits)?;
            for r in &report.summary {
                println!(
                    "limit {:>3}: median speed {:.3} (q1 {:.3}, q3 {:.3}), median levels {}, collisions {}",
                    r.level_limit.to_string(),
                    r.speed[1],
                    r.speed[0],
                    r.speed[2],
                    r.levels[1],
                    r.collisions_total
                );
            }
        }
    }
    Ok(())
}
