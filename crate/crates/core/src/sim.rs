//! Scenarios, the per-step planning pipeline and run metrics.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::f64::consts::{PI, TAU};
use std::str::FromStr;
use std::sync::{Mutex, OnceLock};
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::coupling::{
    assign_priorities, assign_priorities_reach_order, couplings_from_sets, orient_and_weight, CouplingGraph,
    PriorityRule,
};
use crate::error::{Error, Result};
use crate::geometry::{contains, intersects, ConvexPolygon, PolyUnion, Vec2};
use crate::mpa::{reachable_sets, Mpa, MpaConfig, MpaState, ReachTable};
use crate::partition::{compute_levels, partition_greedy, LevelLimit, Partition};
use crate::planner::{
    brake_plan, build_constraints, fallback, plan, PlanOutcome, PlannerConfig, ReferenceTrajectory,
    TrajectoryPrediction,
};
use crate::vehicle::{footprint, Pose, VehicleParams, VehicleState};

/// What parallel (same-step) neighbours contribute as obstacles.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ConstraintMode {
    /// The neighbour's one-step reachable sets.
    ReachableSets,
    /// The neighbour's previous plan, shifted by one step.
    PreviousTrajectory,
}

impl FromStr for ConstraintMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "reach" | "reachable-sets" => Ok(ConstraintMode::ReachableSets),
            "prev" | "previous-trajectory" => Ok(ConstraintMode::PreviousTrajectory),
            other => Err(Error::Config(format!(
                "unknown constraint mode {other:?} (use reach or prev)"
            ))),
        }
    }
}

impl std::fmt::Display for ConstraintMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            ConstraintMode::ReachableSets => "reach",
            ConstraintMode::PreviousTrajectory => "prev",
        })
    }
}

/// Polyline the vehicle is asked to follow.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RefPath {
    pub points: Vec<Vec2>,
    /// The last point connects back to the first.
    pub closed: bool,
    pub speed_limit: f64,
}

impl RefPath {
    fn segments(&self) -> impl Iterator<Item = (Vec2, Vec2)> + '_ {
        let n = self.points.len();
        let count = if self.closed { n } else { n - 1 };
        (0..count).map(move |i| (self.points[i], self.points[(i + 1) % n]))
    }

    pub fn length(&self) -> f64 {
        self.segments().map(|(a, b)| a.dist(b)).sum()
    }

    /// Arc length of the point on the path closest to `p`.
    pub fn project(&self, p: Vec2) -> f64 {
        let mut best = (f64::INFINITY, 0.0);
        let mut s = 0.0;
        for (a, b) in self.segments() {
            let d = b - a;
            let len = d.norm();
            let t = if len > 0.0 {
                ((p - a).dot(d) / (len * len)).clamp(0.0, 1.0)
            } else {
                0.0
            };
            let dist = p.dist(a + d * t);
            if dist < best.0 {
                best = (dist, s + t * len);
            }
            s += len;
        }
        best.1
    }

    /// Point at arc length `s`; wraps on closed paths, clamps on open ones.
    pub fn point_at(&self, s: f64) -> Vec2 {
        let total = self.length();
        let mut s = if self.closed {
            s.rem_euclid(total)
        } else {
            s.clamp(0.0, total)
        };
        let mut last = self.points[0];
        for (a, b) in self.segments() {
            let len = a.dist(b);
            if s <= len && len > 0.0 {
                return a + (b - a) * (s / len);
            }
            s -= len;
            last = b;
        }
        last
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VehicleSpec {
    pub initial: VehicleState,
    pub mpa_state: MpaState,
    pub path: usize,
}

fn default_speed_levels() -> Vec<f64> {
    MpaConfig::default().speed_levels
}

fn default_steering_levels() -> Vec<f64> {
    MpaConfig::default().steering_levels
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub name: String,
    pub drivable_area: PolyUnion,
    pub paths: Vec<RefPath>,
    pub vehicles: Vec<VehicleSpec>,
    pub params: VehicleParams,
    pub dt: f64,
    pub horizon: usize,
    pub level_limit: LevelLimit,
    pub constraint_mode: ConstraintMode,
    pub margin: f64,
    pub seed: u64,
    #[serde(default = "default_speed_levels")]
    pub speed_levels: Vec<f64>,
    #[serde(default = "default_steering_levels")]
    pub steering_levels: Vec<f64>,
}

impl Scenario {
    pub fn mpa_config(&self) -> MpaConfig {
        MpaConfig {
            speed_levels: self.speed_levels.clone(),
            steering_levels: self.steering_levels.clone(),
            params: self.params,
            dt: self.dt,
            margin: self.margin,
            horizon: self.horizon,
            ..MpaConfig::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Scenario(format!("{}: {m}", self.name)));
        if self.horizon == 0 {
            return bad("horizon must be at least 1".into());
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return bad(format!("time step {} must be positive", self.dt));
        }
        if self.margin < 0.0 {
            return bad(format!("negative margin {}", self.margin));
        }
        self.params.validate()?;
        for (i, p) in self.paths.iter().enumerate() {
            if p.points.len() < 2 || p.length() <= 0.0 || p.speed_limit <= 0.0 {
                return bad(format!("path {i} needs two distinct points and a positive speed limit"));
            }
        }
        let mut prints = Vec::with_capacity(self.vehicles.len());
        for (i, v) in self.vehicles.iter().enumerate() {
            if v.path >= self.paths.len() {
                return bad(format!("vehicle {i} refers to missing path {}", v.path));
            }
            if v.mpa_state.speed >= self.speed_levels.len() || v.mpa_state.steering >= self.steering_levels.len() {
                return bad(format!("vehicle {i} has an unknown automaton state"));
            }
            if (self.speed_levels[v.mpa_state.speed] - v.initial.speed).abs() > 1e-9 {
                return bad(format!("vehicle {i} speed does not match its automaton state"));
            }
            let fp = footprint(&v.initial, &self.params);
            if !contains(&self.drivable_area, &fp) {
                return bad(format!("vehicle {i} starts outside the drivable area"));
            }
            if let Some(j) = prints.iter().position(|q| intersects(&fp, q)) {
                return bad(format!("vehicles {j} and {i} overlap initially"));
            }
            prints.push(fp);
        }
        Ok(())
    }

    /// Stable hash of the full scenario description.
    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(serde_json::to_vec(self).expect("serializable scenario")))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub planner: PlannerConfig,
    pub priority_rule: PriorityRule,
    /// Record planner wall time in the log (makes logs non-reproducible).
    pub record_timing: bool,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            planner: PlannerConfig {
                terminal_standstill: true,
                ..PlannerConfig::default()
            },
            priority_rule: PriorityRule::default(),
            record_timing: false,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PlanStatus {
    /// Search found a plan.
    Planned,
    /// Search failed; the vehicle keeps its previous plan.
    Infeasible,
    /// Kept its previous plan because a lower-priority neighbour did.
    Forced,
    /// Stopped after a collision.
    Frozen,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VehicleRecord {
    pub id: usize,
    pub level: usize,
    pub status: PlanStatus,
    /// State after executing the first step.
    pub state: VehicleState,
    pub mpa_state: MpaState,
    pub primitives: Vec<usize>,
    pub cost: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub wall_time_us: Option<u64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub step: usize,
    pub priorities: Vec<usize>,
    pub graph: CouplingGraph,
    pub partition: Partition,
    pub cut_weight: f64,
    pub max_level: usize,
    /// Level count of the whole coupling graph planned sequentially.
    pub unpartitioned_levels: usize,
    pub vehicles: Vec<VehicleRecord>,
    /// Coupled pairs whose final plans intersect at some step.
    pub plan_conflicts: Vec<(usize, usize)>,
    pub collisions: Vec<(usize, usize)>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunMetrics {
    pub normalized_avg_speed: f64,
    pub avg_speed: f64,
    pub free_flow_speed: f64,
    pub max_levels_observed: usize,
    pub collision_count: usize,
    pub infeasible_count: usize,
    pub forced_count: usize,
    pub levels_per_step: Vec<usize>,
}

#[derive(Clone, Debug)]
pub struct RunOutput {
    pub metrics: RunMetrics,
    pub log: Vec<StepRecord>,
}

struct Vehicle {
    pose: Pose,
    state: MpaState,
    path: usize,
    commitment: TrajectoryPrediction,
    collided: bool,
}

/// Steps a scenario forward one planning cycle at a time.
pub struct Simulator<'a> {
    scenario: &'a Scenario,
    mpa: &'a Mpa,
    table: &'a ReachTable,
    config: SimConfig,
    /// When false every vehicle plans alone (free flow).
    interactions: bool,
    vehicles: Vec<Vehicle>,
    k: usize,
    seen_collisions: BTreeSet<(usize, usize)>,
}

struct Decision {
    status: PlanStatus,
    plan: TrajectoryPrediction,
    wall_time_us: Option<u64>,
}

impl<'a> Simulator<'a> {
    pub fn new(scenario: &'a Scenario, mpa: &'a Mpa, table: &'a ReachTable, config: SimConfig) -> Result<Self> {
        scenario.validate()?;
        if mpa.config != scenario.mpa_config() {
            return Err(Error::Config("automaton does not match the scenario".into()));
        }
        if table.key != crate::mpa::table_key(mpa, table.compaction) {
            return Err(Error::Config("reach table does not match the automaton".into()));
        }
        let vehicles = scenario
            .vehicles
            .iter()
            .map(|v| {
                let start = (v.initial.pose(), v.mpa_state);
                Vehicle {
                    pose: start.0,
                    state: start.1,
                    path: v.path,
                    commitment: brake_plan(start, mpa, scenario.horizon),
                    collided: false,
                }
            })
            .collect();
        Ok(Self {
            scenario,
            mpa,
            table,
            config,
            interactions: true,
            vehicles,
            k: 0,
            seen_collisions: BTreeSet::new(),
        })
    }

    /// Same scenario with every vehicle ignoring the others.
    pub fn free_flow(scenario: &'a Scenario, mpa: &'a Mpa, table: &'a ReachTable, config: SimConfig) -> Result<Self> {
        let mut sim = Self::new(scenario, mpa, table, config)?;
        sim.interactions = false;
        Ok(sim)
    }

    pub fn reference(&self, v: usize) -> ReferenceTrajectory {
        let veh = &self.vehicles[v];
        let path = &self.scenario.paths[veh.path];
        let top = *self.scenario.speed_levels.last().expect("validated levels");
        let v_ref = top.min(path.speed_limit);
        let s0 = path.project(veh.pose.position());
        ReferenceTrajectory {
            points: (0..self.scenario.horizon)
                .map(|h| path.point_at(s0 + (h + 1) as f64 * v_ref * self.scenario.dt))
                .collect(),
        }
    }

    pub fn step(&mut self) -> Result<StepRecord> {
        let n = self.vehicles.len();
        let horizon = self.scenario.horizon;
        let starts: Vec<(Pose, MpaState)> = self.vehicles.iter().map(|v| (v.pose, v.state)).collect();

        let (graph, priorities, reach) = if self.interactions {
            let reach = starts
                .iter()
                .map(|(p, s)| reachable_sets(self.table, *s, p))
                .collect::<Result<Vec<_>>>()?;
            let couplings = couplings_from_sets(&reach);
            let prio = match self.config.priority_rule {
                PriorityRule::EarliestCoupling => assign_priorities(&couplings, n, horizon),
                PriorityRule::ReachOrder => assign_priorities_reach_order(&couplings, &reach, horizon),
            };
            (orient_and_weight(&couplings, &prio, horizon), prio.rank, reach)
        } else {
            (
                CouplingGraph {
                    n_vehicles: n,
                    edges: Vec::new(),
                },
                (1..=n).collect(),
                Vec::new(),
            )
        };
        let partition = partition_greedy(&graph, self.scenario.level_limit)?;
        let unpartitioned_levels = compute_levels(n, &graph.edge_pairs())?.max_levels();
        let max_level = partition.levels.max_levels();
        let parallel_sets: Vec<Vec<PolyUnion>> = match self.scenario.constraint_mode {
            _ if !self.interactions => Vec::new(),
            ConstraintMode::ReachableSets => reach,
            ConstraintMode::PreviousTrajectory => self
                .vehicles
                .iter()
                .map(|v| v.commitment.shifted_occupancies())
                .collect(),
        };
        let refs: Vec<ReferenceTrajectory> = (0..n).map(|v| self.reference(v)).collect();
        let mut by_level: Vec<Vec<usize>> = vec![Vec::new(); max_level];
        for v in 0..n {
            by_level[partition.levels.level_of[v] - 1].push(v);
        }

        // Plan level by level. In reachable-set mode an infeasible vehicle
        // keeps its previous plan, which its higher-priority neighbours did
        // not take into account this step; they keep theirs as well and the
        // levels are replanned until no new vehicle fails.
        let propagate = self.interactions && self.scenario.constraint_mode == ConstraintMode::ReachableSets;
        let mut forced: BTreeSet<usize> = BTreeSet::new();
        let mut decisions: Vec<Option<Decision>> = (0..n).map(|_| None).collect();
        let mut dirty = vec![true; n];
        loop {
            let mut published: BTreeMap<usize, TrajectoryPrediction> = BTreeMap::new();
            let mut changed = vec![false; n];
            for members in &by_level {
                let todo: Vec<usize> = members
                    .iter()
                    .copied()
                    .filter(|&v| {
                        let settled = forced.contains(&v)
                            && decisions[v].as_ref().is_some_and(|d| d.status != PlanStatus::Planned);
                        !settled && dirty[v]
                            || !settled
                                && graph
                                    .in_edges(v)
                                    .any(|e| partition.is_sequential(e) && changed[graph.edges[e].from])
                    })
                    .collect();
                let results = todo
                    .par_iter()
                    .map(|&v| {
                        self.decide(
                            v,
                            &graph,
                            &partition,
                            &parallel_sets,
                            &published,
                            &refs[v],
                            forced.contains(&v),
                        )
                    })
                    .collect::<Result<Vec<_>>>()?;
                for (v, d) in todo.into_iter().zip(results) {
                    changed[v] = true;
                    decisions[v] = Some(d);
                }
                for &v in members {
                    published.insert(v, decisions[v].as_ref().expect("decided").plan.clone());
                }
            }
            let failed: Vec<usize> = (0..n)
                .filter(|&v| {
                    !forced.contains(&v)
                        && decisions[v]
                            .as_ref()
                            .is_some_and(|d| d.status == PlanStatus::Infeasible)
                })
                .collect();
            if !propagate || failed.is_empty() {
                break;
            }
            dirty = vec![false; n];
            let mut stack = failed;
            while let Some(v) = stack.pop() {
                if !forced.insert(v) {
                    continue;
                }
                if decisions[v]
                    .as_ref()
                    .is_some_and(|d| d.status != PlanStatus::Infeasible)
                {
                    dirty[v] = true;
                }
                for e in graph.in_edges(v) {
                    stack.push(graph.edges[e].from);
                }
            }
        }

        let decisions: Vec<Decision> = decisions
            .into_iter()
            .map(|d| d.expect("every vehicle decided"))
            .collect();
        let plan_conflicts = graph
            .edges
            .iter()
            .filter(|e| {
                let (a, b) = (&decisions[e.from].plan, &decisions[e.to].plan);
                a.steps
                    .iter()
                    .zip(&b.steps)
                    .any(|(x, y)| intersects(&x.occupancy, &y.occupancy))
            })
            .map(|e| (e.from.min(e.to), e.from.max(e.to)))
            .collect();

        // execute the first step of every plan
        let executed: Vec<ConvexPolygon> = decisions
            .iter()
            .map(|d| {
                let s = &d.plan.steps[0];
                self.mpa.primitives[s.primitive]
                    .raw_sweep
                    .transformed(&s.start.transform())
            })
            .collect();
        let mut collisions = Vec::new();
        if self.interactions {
            for a in 0..n {
                for b in a + 1..n {
                    if intersects(&executed[a], &executed[b]) {
                        collisions.push((a, b));
                    }
                }
            }
        }
        for &(a, b) in &collisions {
            self.vehicles[a].collided = true;
            self.vehicles[b].collided = true;
            self.seen_collisions.insert((a, b));
        }
        let mut records = Vec::with_capacity(n);
        for (v, d) in decisions.into_iter().enumerate() {
            let first = &d.plan.steps[0];
            let veh = &mut self.vehicles[v];
            veh.pose = first.end;
            veh.state = first.state;
            veh.commitment = d.plan;
            records.push(VehicleRecord {
                id: v,
                level: partition.levels.level_of[v],
                status: d.status,
                state: VehicleState::new(veh.pose.x, veh.pose.y, veh.pose.yaw, self.mpa.speed_of(veh.state)),
                mpa_state: veh.state,
                primitives: veh.commitment.steps.iter().map(|s| s.primitive).collect(),
                cost: veh.commitment.cost,
                wall_time_us: d.wall_time_us,
            });
        }
        let record = StepRecord {
            step: self.k,
            priorities,
            cut_weight: partition.cut_weight(&graph),
            graph,
            partition,
            max_level,
            unpartitioned_levels,
            vehicles: records,
            plan_conflicts,
            collisions,
        };
        self.k += 1;
        Ok(record)
    }

    #[allow(clippy::too_many_arguments)]
    fn decide(
        &self,
        v: usize,
        graph: &CouplingGraph,
        partition: &Partition,
        parallel_sets: &[Vec<PolyUnion>],
        published: &BTreeMap<usize, TrajectoryPrediction>,
        reference: &ReferenceTrajectory,
        forced: bool,
    ) -> Result<Decision> {
        let veh = &self.vehicles[v];
        if veh.collided {
            let stopped = MpaState::new(0, veh.state.steering);
            return Ok(Decision {
                status: PlanStatus::Frozen,
                plan: brake_plan((veh.pose, stopped), self.mpa, self.scenario.horizon),
                wall_time_us: None,
            });
        }
        if forced {
            return Ok(Decision {
                status: PlanStatus::Forced,
                plan: fallback(&veh.commitment, self.mpa),
                wall_time_us: None,
            });
        }
        let t0 = Instant::now();
        let cons = build_constraints(
            v,
            graph,
            partition,
            parallel_sets,
            published,
            Some(&self.scenario.drivable_area),
            self.scenario.horizon,
        )?;
        let outcome = plan(
            (veh.pose, veh.state),
            reference,
            self.mpa,
            &cons,
            self.scenario.horizon,
            &self.config.planner,
        )?;
        let wall_time_us = self.config.record_timing.then(|| t0.elapsed().as_micros() as u64);
        Ok(match outcome {
            PlanOutcome::Feasible(p) => Decision {
                status: PlanStatus::Planned,
                plan: p,
                wall_time_us,
            },
            PlanOutcome::Infeasible { .. } => Decision {
                status: PlanStatus::Infeasible,
                plan: fallback(&veh.commitment, self.mpa),
                wall_time_us,
            },
        })
    }

    pub fn distinct_collisions(&self) -> usize {
        self.seen_collisions.len()
    }
}

fn mean_speed(log: &[StepRecord]) -> f64 {
    let (sum, count) = log
        .iter()
        .flat_map(|r| &r.vehicles)
        .fold((0.0, 0usize), |(s, c), v| (s + v.state.speed, c + 1));
    if count == 0 {
        0.0
    } else {
        sum / count as f64
    }
}

fn run_steps(mut sim: Simulator<'_>, n_steps: usize) -> Result<(Vec<StepRecord>, usize)> {
    let mut log = Vec::with_capacity(n_steps);
    for _ in 0..n_steps {
        log.push(sim.step()?);
    }
    Ok((log, sim.distinct_collisions()))
}

fn free_flow_cache() -> &'static Mutex<HashMap<String, f64>> {
    static CACHE: OnceLock<Mutex<HashMap<String, f64>>> = OnceLock::new();
    CACHE.get_or_init(|| Mutex::new(HashMap::new()))
}

/// Mean executed speed of the free-flow run, cached per scenario.
pub fn free_flow_speed(
    scenario: &Scenario,
    mpa: &Mpa,
    table: &ReachTable,
    config: SimConfig,
    n_steps: usize,
) -> Result<f64> {
    // the limit and constraint mode do not matter without interactions
    let mut base = scenario.clone();
    base.level_limit = LevelLimit::Unbounded;
    base.constraint_mode = ConstraintMode::ReachableSets;
    let mut cfg = config;
    cfg.record_timing = false;
    let key = hex::encode(Sha256::digest(
        serde_json::to_vec(&(&base, cfg, n_steps, &table.key)).expect("serializable"),
    ));
    if let Some(v) = free_flow_cache().lock().expect("cache lock").get(&key) {
        return Ok(*v);
    }
    let (log, _) = run_steps(Simulator::free_flow(&base, mpa, table, cfg)?, n_steps)?;
    let speed = mean_speed(&log);
    free_flow_cache().lock().expect("cache lock").insert(key, speed);
    Ok(speed)
}

pub fn run(scenario: &Scenario, mpa: &Mpa, table: &ReachTable, config: SimConfig, n_steps: usize) -> Result<RunOutput> {
    if n_steps == 0 {
        return Err(Error::Config("at least one step is required".into()));
    }
    let (log, collisions) = run_steps(Simulator::new(scenario, mpa, table, config)?, n_steps)?;
    let avg_speed = mean_speed(&log);
    let free = free_flow_speed(scenario, mpa, table, config, n_steps)?;
    let normalized_avg_speed = if free > 0.0 {
        avg_speed / free
    } else if avg_speed == 0.0 {
        1.0
    } else {
        f64::INFINITY
    };
    let count = |s: PlanStatus| log.iter().flat_map(|r| &r.vehicles).filter(|v| v.status == s).count();
    let levels_per_step: Vec<usize> = log.iter().map(|r| r.max_level).collect();
    let metrics = RunMetrics {
        normalized_avg_speed,
        avg_speed,
        free_flow_speed: free,
        max_levels_observed: levels_per_step.iter().copied().max().unwrap_or(0),
        collision_count: collisions,
        infeasible_count: count(PlanStatus::Infeasible),
        forced_count: count(PlanStatus::Forced),
        levels_per_step,
    };
    Ok(RunOutput { metrics, log })
}

/// Pairs of uninflated occupancies that intersect.
pub fn detect_collisions(occupancies: &[PolyUnion]) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    for a in 0..occupancies.len() {
        for b in a + 1..occupancies.len() {
            if crate::geometry::union_intersects(&occupancies[a], &occupancies[b]) {
                out.push((a, b));
            }
        }
    }
    out
}

fn base_scenario(name: &str, seed: u64) -> Scenario {
    let mpa = MpaConfig::default();
    Scenario {
        name: name.into(),
        drivable_area: PolyUnion::empty(),
        paths: Vec::new(),
        vehicles: Vec::new(),
        params: mpa.params,
        dt: mpa.dt,
        horizon: mpa.horizon,
        level_limit: LevelLimit::Unbounded,
        constraint_mode: ConstraintMode::ReachableSets,
        margin: mpa.margin,
        seed,
        speed_levels: mpa.speed_levels,
        steering_levels: mpa.steering_levels,
    }
}

fn rect(x0: f64, x1: f64, y0: f64, y1: f64) -> ConvexPolygon {
    ConvexPolygon::rectangle(Vec2::new(0.5 * (x0 + x1), 0.5 * (y0 + y1)), 0.0, x1 - x0, y1 - y0)
        .expect("positive extent")
}

fn standstill(x: f64, y: f64, yaw: f64, path: usize) -> VehicleSpec {
    VehicleSpec {
        initial: VehicleState::new(x, y, yaw, 0.0),
        mpa_state: MpaState::new(0, MpaConfig::default().steering_levels.len() / 2),
        path,
    }
}

fn straight_path(from: Vec2, to: Vec2) -> RefPath {
    RefPath {
        points: vec![from, to],
        closed: false,
        speed_limit: 1.5,
    }
}

/// One vehicle on a straight road.
pub fn single_vehicle_scenario() -> Scenario {
    let mut s = base_scenario("single", 0);
    s.drivable_area = rect(-1.0, 12.0, -0.3, 0.3).into();
    s.paths.push(straight_path(Vec2::new(-0.5, 0.0), Vec2::new(11.5, 0.0)));
    s.vehicles.push(standstill(0.0, 0.0, 0.0, 0));
    s
}

/// Three vehicles on straight crossing paths through a four-way
/// intersection, timed to meet in the middle.
pub fn intersection_scenario() -> Scenario {
    let mut s = base_scenario("intersection", 0);
    let arm = 5.0;
    let half = 0.3;
    s.drivable_area = PolyUnion::new(vec![rect(-arm, arm, -half, half), rect(-half, half, -arm, arm)]);
    let lane = 0.15;
    let start = 2.0;
    s.paths = vec![
        straight_path(Vec2::new(-arm + 0.2, -lane), Vec2::new(arm - 0.2, -lane)),
        straight_path(Vec2::new(lane, -arm + 0.2), Vec2::new(lane, arm - 0.2)),
        straight_path(Vec2::new(arm - 0.2, lane), Vec2::new(-arm + 0.2, lane)),
    ];
    s.vehicles = vec![
        standstill(-start, -lane, 0.0, 0),
        standstill(lane, -start, PI / 2.0, 1),
        standstill(start, lane, PI, 2),
    ];
    s
}

/// Centre and radius of the two overlapping ring roads.
pub const LOOP_CENTRES: [(f64, f64); 2] = [(-1.4, 0.0), (1.4, 0.0)];
pub const LOOP_RADIUS: f64 = 2.0;
const LOOP_WIDTH: f64 = 0.36;
const LOOP_SEGMENTS: usize = 72;

fn ring(c: Vec2, r: f64, width: f64, segments: usize) -> Vec<ConvexPolygon> {
    let (inner, outer) = (r - width / 2.0, r + width / 2.0);
    // outer chords cut into the circle; push them out to keep the full width
    let outer = outer / (PI / segments as f64).cos();
    (0..segments)
        .map(|i| {
            let a0 = TAU * i as f64 / segments as f64;
            let a1 = TAU * (i + 1) as f64 / segments as f64;
            let u0 = Vec2::new(a0.cos(), a0.sin());
            let u1 = Vec2::new(a1.cos(), a1.sin());
            ConvexPolygon::new(vec![c + u0 * inner, c + u0 * outer, c + u1 * outer, c + u1 * inner])
                .expect("ring segment is convex")
        })
        .collect()
}

fn circle_path(c: Vec2, r: f64, segments: usize) -> RefPath {
    RefPath {
        points: (0..segments)
            .map(|i| {
                let a = TAU * i as f64 / segments as f64;
                c + Vec2::new(a.cos(), a.sin()) * r
            })
            .collect(),
        closed: true,
        speed_limit: 1.5,
    }
}

/// Two ring roads that cross each other twice, vehicles driving
/// counter-clockwise, half of them on each ring at seeded random positions.
pub fn loop_scenario(n_vehicles: usize, seed: u64) -> Result<Scenario> {
    let mut s = base_scenario("loop", seed);
    let mut parts = Vec::new();
    for &(cx, cy) in &LOOP_CENTRES {
        let c = Vec2::new(cx, cy);
        parts.extend(ring(c, LOOP_RADIUS, LOOP_WIDTH, LOOP_SEGMENTS));
        s.paths.push(circle_path(c, LOOP_RADIUS, 4 * LOOP_SEGMENTS));
    }
    s.drivable_area = PolyUnion::new(parts);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let per_ring = [n_vehicles.div_ceil(2), n_vehicles / 2];
    for _attempt in 0..1000 {
        s.vehicles.clear();
        for (ring_id, &count) in per_ring.iter().enumerate() {
            let (cx, cy) = LOOP_CENTRES[ring_id];
            let offset = rng.gen_range(0.0..TAU);
            let slot = TAU / count.max(1) as f64;
            for i in 0..count {
                let a = offset + slot * (i as f64 + rng.gen_range(-0.3..0.3));
                let p = Vec2::new(cx, cy) + Vec2::new(a.cos(), a.sin()) * (LOOP_RADIUS - 0.07);
                s.vehicles.push(standstill(p.x, p.y, a + PI / 2.0, ring_id));
            }
        }
        if s.validate().is_ok() {
            return Ok(s);
        }
    }
    Err(Error::Scenario(format!(
        "could not place {n_vehicles} vehicles on the loops"
    )))
}

/// Vehicles crossing a square arena on random straight paths.
pub fn random_scenario(n_vehicles: usize, seed: u64) -> Result<Scenario> {
    let mut s = base_scenario("random", seed);
    let half = 3.0;
    s.drivable_area = rect(-half, half, -half, half).into();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _attempt in 0..1000 {
        s.vehicles.clear();
        s.paths.clear();
        for i in 0..n_vehicles {
            let a = rng.gen_range(0.0..TAU);
            let from = Vec2::new(a.cos(), a.sin()) * (half - 0.5);
            let aim = Vec2::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
            let dir = aim - from;
            let yaw = dir.y.atan2(dir.x);
            let to = from + Vec2::new(yaw.cos(), yaw.sin()) * (2.0 * half);
            let clamp = |v: f64| v.clamp(-half + 0.3, half - 0.3);
            s.paths.push(straight_path(from, Vec2::new(clamp(to.x), clamp(to.y))));
            s.vehicles.push(standstill(from.x, from.y, yaw, i));
        }
        if s.validate().is_ok() {
            return Ok(s);
        }
    }
    Err(Error::Scenario(format!(
        "could not place {n_vehicles} vehicles in the arena"
    )))
}

/// Built-in scenario by name: `single`, `intersection`, `loop` (20
/// vehicles) or `random` (8 vehicles).
pub fn builtin_scenario(name: &str, seed: u64) -> Result<Scenario> {
    match name {
        "single" => Ok(single_vehicle_scenario()),
        "intersection" => Ok(intersection_scenario()),
        "loop" => loop_scenario(20, seed),
        "random" => random_scenario(8, seed),
        other => Err(Error::Scenario(format!("unknown built-in scenario {other:?}"))),
    }
}
