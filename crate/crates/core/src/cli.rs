//! Commands behind the `pdmpc` binary. Each command takes a [`RunConfig`],
//! writes its files below `RunConfig::out` and returns what it wrote.
//!
//! Output layout:
//!
//! | command | files |
//! |---|---|
//! | build-mpa | `<cache>/reach-<key>.json` |
//! | run | `logs/seed_<s>.jsonl`, `metrics/seed_<s>.json`, `metrics.csv` |
//! | compare | `compare.json`, `compare.csv` |
//! | sweep | `sweep/limit_<l>_seed_<s>.json`, `sweep_runs.csv`, `sweep.csv` |
//!
//! CSV columns, in order:
//!
//! - `metrics.csv`, `sweep_runs.csv`: `seed,level_limit,normalized_avg_speed,max_levels,collisions`
//! - `sweep.csv`: `level_limit,runs,speed_q1,speed_median,speed_q3,levels_q1,levels_median,levels_q3,collisions_total,collisions_max`
//! - `compare.csv`: `mode,step,collisions,infeasible,plan_conflict`
//!
//! Floats are printed with six decimals. Every file is written to a
//! temporary name and renamed into place.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mpa::{
    build_mpa, build_reach_table, cache_path, load_or_build, save_reach_table, table_key, Compaction, Mpa, ReachTable,
};
use crate::partition::LevelLimit;
use crate::sim::{builtin_scenario, run, ConstraintMode, PlanStatus, RunMetrics, RunOutput, Scenario, SimConfig};

/// Environment variable naming the reach-table cache directory.
pub const CACHE_ENV: &str = "PDMPC_CACHE_DIR";
pub const DEFAULT_CACHE_DIR: &str = "target/pdmpc-cache";

/// Level limits visited by [`cmd_sweep_levels`] unless overridden.
pub const SWEEP_LIMITS: [LevelLimit; 6] = [
    LevelLimit::Finite(1),
    LevelLimit::Finite(2),
    LevelLimit::Finite(3),
    LevelLimit::Finite(4),
    LevelLimit::Finite(5),
    LevelLimit::Unbounded,
];

pub const METRICS_HEADER: &str = "seed,level_limit,normalized_avg_speed,max_levels,collisions";
pub const SWEEP_HEADER: &str =
    "level_limit,runs,speed_q1,speed_median,speed_q3,levels_q1,levels_median,levels_q3,collisions_total,collisions_max";
pub const COMPARE_HEADER: &str = "mode,step,collisions,infeasible,plan_conflict";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    /// Built-in scenario name or path to a scenario JSON file.
    pub scenario: String,
    pub dt: Option<f64>,
    pub horizon: Option<usize>,
    pub level_limit: Option<LevelLimit>,
    pub constraint_mode: Option<ConstraintMode>,
    pub margin: Option<f64>,
    pub n_steps: usize,
    pub seeds: Vec<u64>,
    pub out: PathBuf,
    pub sim: SimConfig,
}

impl RunConfig {
    pub fn new(scenario: impl Into<String>, out: impl Into<PathBuf>) -> Self {
        Self {
            scenario: scenario.into(),
            dt: None,
            horizon: None,
            level_limit: None,
            constraint_mode: None,
            margin: None,
            n_steps: 30,
            seeds: vec![0],
            out: out.into(),
            sim: SimConfig::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.horizon == Some(0) {
            return Err(Error::Config("horizon must be at least 1".into()));
        }
        if let Some(dt) = self.dt {
            if !(dt > 0.0 && dt.is_finite()) {
                return Err(Error::Config(format!("time step {dt} must be positive")));
            }
        }
        if self.margin.is_some_and(|m| !(m >= 0.0)) {
            return Err(Error::Config("margin must be non-negative".into()));
        }
        if self.seeds.is_empty() {
            return Err(Error::Config("at least one seed is required".into()));
        }
        if self.n_steps == 0 {
            return Err(Error::Config("at least one step is required".into()));
        }
        Ok(())
    }

    /// The scenario for `seed` with all overrides applied, validated.
    pub fn scenario_for(&self, seed: u64) -> Result<Scenario> {
        let path = Path::new(&self.scenario);
        let mut s = if path.extension().is_some_and(|e| e == "json") || path.is_file() {
            let mut s: Scenario = serde_json::from_slice(&std::fs::read(path)?)?;
            s.seed = seed;
            s
        } else {
            builtin_scenario(&self.scenario, seed)?
        };
        if let Some(dt) = self.dt {
            s.dt = dt;
        }
        if let Some(h) = self.horizon {
            s.horizon = h;
        }
        if let Some(l) = self.level_limit {
            s.level_limit = l;
        }
        if let Some(m) = self.constraint_mode {
            s.constraint_mode = m;
        }
        if let Some(m) = self.margin {
            s.margin = m;
        }
        s.validate()?;
        Ok(s)
    }
}

/// Cache directory from the environment, else [`DEFAULT_CACHE_DIR`].
pub fn cache_dir() -> PathBuf {
    std::env::var_os(CACHE_ENV).map_or_else(|| PathBuf::from(DEFAULT_CACHE_DIR), PathBuf::from)
}

/// Writes `bytes` next to `path` under a temporary name, then renames.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir)?;
    }
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    std::fs::write(&tmp, bytes)?;
    std::fs::rename(&tmp, path)?;
    Ok(())
}

/// Automata and reach tables for scenarios, built once per configuration.
#[derive(Default)]
pub struct Automata {
    tables: BTreeMap<String, (Mpa, ReachTable)>,
}

impl Automata {
    pub fn get(&mut self, scenario: &Scenario) -> Result<&(Mpa, ReachTable)> {
        let mpa = build_mpa(scenario.mpa_config())?;
        let key = table_key(&mpa, Compaction::default());
        if !self.tables.contains_key(&key) {
            let table = load_or_build(&mpa, Compaction::default(), &cache_dir())?;
            self.tables.insert(key.clone(), (mpa, table));
        }
        Ok(&self.tables[&key])
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BuildReport {
    pub path: PathBuf,
    pub key: String,
    /// Per automaton state (speed index, steering index) the number of
    /// convex parts at each horizon step.
    pub parts: Vec<((usize, usize), Vec<usize>)>,
}

/// Builds the reach table for the configured scenario and stores it in the
/// cache directory, replacing any previous file.
pub fn cmd_build_mpa(config: &RunConfig) -> Result<BuildReport> {
    config.validate()?;
    let scenario = config.scenario_for(config.seeds[0])?;
    let mpa = build_mpa(scenario.mpa_config())?;
    let table = build_reach_table(&mpa, Compaction::default());
    let dir = cache_dir();
    std::fs::create_dir_all(&dir)?;
    let path = cache_path(&dir, &table.key);
    save_reach_table(&table, &path)?;
    let parts = mpa
        .states()
        .map(|s| {
            let counts = table.entries(s).map(|e| e.iter().map(|u| u.parts().len()).collect());
            counts.map(|c| ((s.speed, s.steering), c))
        })
        .collect::<Result<_>>()?;
    Ok(BuildReport {
        path,
        key: table.key.clone(),
        parts,
    })
}

/// One line of `metrics.csv`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunRow {
    pub seed: u64,
    pub level_limit: LevelLimit,
    pub metrics: RunMetrics,
}

impl RunRow {
    fn csv_line(&self) -> String {
        format!(
            "{},{},{:.6},{},{}\n",
            self.seed,
            self.level_limit,
            self.metrics.normalized_avg_speed,
            self.metrics.max_levels_observed,
            self.metrics.collision_count
        )
    }
}

pub fn metrics_csv(rows: &[RunRow]) -> String {
    let mut out = format!("{METRICS_HEADER}\n");
    for r in rows {
        out.push_str(&r.csv_line());
    }
    out
}

fn run_seeds(config: &RunConfig, seeds: &[u64], level_limit: Option<LevelLimit>) -> Result<Vec<(Scenario, RunOutput)>> {
    let scenarios = seeds
        .iter()
        .map(|&seed| {
            let mut s = config.scenario_for(seed)?;
            if let Some(l) = level_limit {
                s.level_limit = l;
            }
            Ok(s)
        })
        .collect::<Result<Vec<_>>>()?;
    let mut automata = Automata::default();
    for s in &scenarios {
        automata.get(s)?;
    }
    let automata = &automata;
    scenarios
        .into_par_iter()
        .map(|s| {
            let key = table_key(&build_mpa(s.mpa_config())?, Compaction::default());
            let (mpa, table) = &automata.tables[&key];
            let out = run(&s, mpa, table, config.sim, config.n_steps)?;
            Ok((s, out))
        })
        .collect()
}

/// Runs every seed; writes a JSON-lines log and a metrics file per seed,
/// then the merged `metrics.csv`.
pub fn cmd_run(config: &RunConfig) -> Result<Vec<RunRow>> {
    config.validate()?;
    let runs = run_seeds(config, &config.seeds, None)?;
    let mut rows = Vec::with_capacity(runs.len());
    for (s, out) in runs {
        let mut log = String::new();
        for rec in &out.log {
            log.push_str(&serde_json::to_string(rec)?);
            log.push('\n');
        }
        write_atomic(
            &config.out.join("logs").join(format!("seed_{}.jsonl", s.seed)),
            log.as_bytes(),
        )?;
        let row = RunRow {
            seed: s.seed,
            level_limit: s.level_limit,
            metrics: out.metrics,
        };
        write_atomic(
            &config.out.join("metrics").join(format!("seed_{}.json", s.seed)),
            &serde_json::to_vec_pretty(&row)?,
        )?;
        rows.push(row);
    }
    write_atomic(&config.out.join("metrics.csv"), metrics_csv(&rows).as_bytes())?;
    Ok(rows)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModeReport {
    pub mode: ConstraintMode,
    pub collision_count: usize,
    pub infeasible_count: usize,
    pub normalized_avg_speed: f64,
    /// Per step: distinct colliding pairs, infeasible vehicles and whether
    /// two coupled vehicles' final plans intersect.
    pub steps: Vec<(usize, usize, bool)>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CompareReport {
    pub seed: u64,
    pub modes: Vec<ModeReport>,
}

/// Runs the first seed of the scenario in both constraint modes.
pub fn cmd_compare_constraints(config: &RunConfig) -> Result<CompareReport> {
    config.validate()?;
    let seed = config.seeds[0];
    let mut automata = Automata::default();
    let mut modes = Vec::new();
    let mut csv = format!("{COMPARE_HEADER}\n");
    for mode in [ConstraintMode::PreviousTrajectory, ConstraintMode::ReachableSets] {
        let mut s = config.scenario_for(seed)?;
        s.constraint_mode = mode;
        let (mpa, table) = automata.get(&s)?;
        let out = run(&s, mpa, table, config.sim, config.n_steps)?;
        let steps: Vec<(usize, usize, bool)> = out
            .log
            .iter()
            .map(|r| {
                let infeasible = r.vehicles.iter().filter(|v| v.status == PlanStatus::Infeasible).count();
                (r.collisions.len(), infeasible, !r.plan_conflicts.is_empty())
            })
            .collect();
        for (k, (c, i, p)) in steps.iter().enumerate() {
            writeln!(csv, "{mode},{k},{c},{i},{}", u8::from(*p)).expect("writing to a string");
        }
        modes.push(ModeReport {
            mode,
            collision_count: out.metrics.collision_count,
            infeasible_count: out.metrics.infeasible_count,
            normalized_avg_speed: out.metrics.normalized_avg_speed,
            steps,
        });
    }
    let report = CompareReport { seed, modes };
    write_atomic(&config.out.join("compare.json"), &serde_json::to_vec_pretty(&report)?)?;
    write_atomic(&config.out.join("compare.csv"), csv.as_bytes())?;
    Ok(report)
}

/// Linear-interpolation quantile of sorted data.
pub fn quantile(sorted: &[f64], q: f64) -> f64 {
    assert!(!sorted.is_empty(), "quantile of empty data");
    let pos = q.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let (lo, hi) = (pos.floor() as usize, pos.ceil() as usize);
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub level_limit: LevelLimit,
    pub runs: usize,
    /// First quartile, median and third quartile.
    pub speed: [f64; 3],
    pub levels: [f64; 3],
    pub collisions_total: usize,
    pub collisions_max: usize,
}

impl SweepRow {
    fn from_runs(level_limit: LevelLimit, rows: &[&RunRow]) -> Self {
        let quartiles = |mut v: Vec<f64>| {
            v.sort_by(f64::total_cmp);
            [quantile(&v, 0.25), quantile(&v, 0.5), quantile(&v, 0.75)]
        };
        Self {
            level_limit,
            runs: rows.len(),
            speed: quartiles(rows.iter().map(|r| r.metrics.normalized_avg_speed).collect()),
            levels: quartiles(rows.iter().map(|r| r.metrics.max_levels_observed as f64).collect()),
            collisions_total: rows.iter().map(|r| r.metrics.collision_count).sum(),
            collisions_max: rows.iter().map(|r| r.metrics.collision_count).max().unwrap_or(0),
        }
    }

    fn csv_line(&self) -> String {
        let [s1, s2, s3] = self.speed;
        let [l1, l2, l3] = self.levels;
        format!(
            "{},{},{s1:.6},{s2:.6},{s3:.6},{l1:.6},{l2:.6},{l3:.6},{},{}\n",
            self.level_limit, self.runs, self.collisions_total, self.collisions_max
        )
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub runs: Vec<RunRow>,
    pub summary: Vec<SweepRow>,
}

pub fn sweep_csv(summary: &[SweepRow]) -> String {
    let mut out = format!("{SWEEP_HEADER}\n");
    for r in summary {
        out.push_str(&r.csv_line());
    }
    out
}

/// Runs every seed at every limit in `limits` and summarizes per limit.
pub fn cmd_sweep_levels(config: &RunConfig, limits: &[LevelLimit]) -> Result<SweepReport> {
    config.validate()?;
    if limits.is_empty() {
        return Err(Error::Config("no level limits to sweep".into()));
    }
    let mut runs = Vec::new();
    let mut summary = Vec::new();
    for &limit in limits {
        let outs = run_seeds(config, &config.seeds, Some(limit))?;
        let rows: Vec<RunRow> = outs
            .into_iter()
            .map(|(s, out)| RunRow {
                seed: s.seed,
                level_limit: limit,
                metrics: out.metrics,
            })
            .collect();
        for r in &rows {
            write_atomic(
                &config
                    .out
                    .join("sweep")
                    .join(format!("limit_{limit}_seed_{}.json", r.seed)),
                &serde_json::to_vec_pretty(r)?,
            )?;
        }
        summary.push(SweepRow::from_runs(limit, &rows.iter().collect::<Vec<_>>()));
        runs.extend(rows);
    }
    write_atomic(&config.out.join("sweep_runs.csv"), metrics_csv(&runs).as_bytes())?;
    write_atomic(&config.out.join("sweep.csv"), sweep_csv(&summary).as_bytes())?;
    Ok(SweepReport { runs, summary })
}

/// Parses `3`, `0,2,5` or `0..10` (end exclusive).
pub fn parse_seeds(s: &str) -> Result<Vec<u64>> {
    let bad = || Error::Config(format!("cannot parse seeds {s:?}"));
    if let Some((a, b)) = s.split_once("..") {
        let (a, b): (u64, u64) = (
            a.trim().parse().map_err(|_| bad())?,
            b.trim().parse().map_err(|_| bad())?,
        );
        if a >= b {
            return Err(bad());
        }
        return Ok((a..b).collect());
    }
    s.split(',').map(|p| p.trim().parse().map_err(|_| bad())).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quantiles_interpolate() {
        let v = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(quantile(&v, 0.5), 2.5);
        assert_eq!(quantile(&v, 0.25), 1.75);
        assert_eq!(quantile(&v, 1.0), 4.0);
        assert_eq!(quantile(&[7.0], 0.75), 7.0);
    }

    #[test]
    fn seed_lists() {
        assert_eq!(parse_seeds("3").unwrap(), vec![3]);
        assert_eq!(parse_seeds("0, 2,5").unwrap(), vec![0, 2, 5]);
        assert_eq!(parse_seeds("2..5").unwrap(), vec![2, 3, 4]);
        assert!(parse_seeds("5..5").is_err());
        assert!(parse_seeds("x").is_err());
    }

    #[test]
    fn config_validation() {
        let mut c = RunConfig::new("single", "out");
        assert!(c.validate().is_ok());
        c.seeds.clear();
        assert!(c.validate().is_err());
        let mut c = RunConfig::new("single", "out");
        c.horizon = Some(0);
        assert!(c.validate().is_err());
        let mut c = RunConfig::new("single", "out");
        c.dt = Some(0.0);
        assert!(c.validate().is_err());
    }

    #[test]
    fn overrides_apply() {
        let mut c = RunConfig::new("intersection", "out");
        c.horizon = Some(3);
        c.level_limit = Some(LevelLimit::Finite(2));
        c.constraint_mode = Some(ConstraintMode::PreviousTrajectory);
        let s = c.scenario_for(0).unwrap();
        assert_eq!(s.horizon, 3);
        assert_eq!(s.level_limit, LevelLimit::Finite(2));
        assert_eq!(s.constraint_mode, ConstraintMode::PreviousTrajectory);
        assert!(RunConfig::new("nowhere", "out").scenario_for(0).is_err());
    }
}
