//! Receding-horizon graph search over motion-primitive sequences.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BinaryHeap, HashMap};

use serde::{Deserialize, Serialize};

use crate::coupling::CouplingGraph;
use crate::error::{Error, Result};
use crate::geometry::{contains, intersects, polygon_intersects_union, Aabb, ConvexPolygon, PolyUnion, Vec2};
use crate::mpa::{Mpa, MpaState};
use crate::partition::Partition;
use crate::vehicle::{Pose, VehicleState};

/// One point per horizon step: where the vehicle should be at the end of
/// that step.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReferenceTrajectory {
    pub points: Vec<Vec2>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlanStep {
    pub start: Pose,
    pub primitive: usize,
    /// Automaton state after the step.
    pub state: MpaState,
    pub end: Pose,
    /// Inflated sweep at `start`.
    pub occupancy: ConvexPolygon,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryPrediction {
    pub start_state: MpaState,
    pub steps: Vec<PlanStep>,
    /// Accumulated stage cost; absent for fallback plans.
    pub cost: Option<f64>,
}

impl TrajectoryPrediction {
    pub fn start_pose(&self) -> Pose {
        self.steps[0].start
    }

    pub fn final_state(&self) -> MpaState {
        self.steps.last().map_or(self.start_state, |s| s.state)
    }

    /// Vehicle state at the end of every step.
    pub fn states(&self, mpa: &Mpa) -> Vec<VehicleState> {
        self.steps
            .iter()
            .map(|s| VehicleState::new(s.end.x, s.end.y, s.end.yaw, mpa.speed_of(s.state)))
            .collect()
    }

    pub fn occupancies(&self) -> Vec<PolyUnion> {
        self.steps
            .iter()
            .map(|s| PolyUnion::from(s.occupancy.clone()))
            .collect()
    }

    /// Occupancies delayed by one step, the last one repeated.
    pub fn shifted_occupancies(&self) -> Vec<PolyUnion> {
        let n = self.steps.len();
        (0..n)
            .map(|h| PolyUnion::from(self.steps[(h + 1).min(n - 1)].occupancy.clone()))
            .collect()
    }
}

/// Obstacles per horizon step and the area the vehicle must stay inside.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ConstraintSet {
    pub parallel_obstacles: Vec<Vec<PolyUnion>>,
    pub sequential_obstacles: Vec<Vec<PolyUnion>>,
    pub drivable_area: Option<PolyUnion>,
}

impl ConstraintSet {
    pub fn empty(horizon: usize) -> Self {
        Self {
            parallel_obstacles: vec![Vec::new(); horizon],
            sequential_obstacles: vec![Vec::new(); horizon],
            drivable_area: None,
        }
    }

    /// True iff `occupancy` at step `h` hits an obstacle or leaves the
    /// drivable area.
    pub fn violated(&self, h: usize, occupancy: &ConvexPolygon) -> bool {
        let hits = |lists: &Vec<Vec<PolyUnion>>| {
            lists
                .get(h)
                .is_some_and(|l| l.iter().any(|u| polygon_intersects_union(occupancy, u)))
        };
        hits(&self.parallel_obstacles)
            || hits(&self.sequential_obstacles)
            || self.drivable_area.as_ref().is_some_and(|d| !contains(d, occupancy))
    }
}

/// Constraints for vehicle `me`: every parallel in-edge contributes the
/// neighbour's `parallel_sets` (its reachable sets, or its shifted previous
/// plan in the baseline mode), every sequential in-edge contributes the plan
/// that neighbour published this step.
pub fn build_constraints(
    me: usize,
    g: &CouplingGraph,
    part: &Partition,
    parallel_sets: &[Vec<PolyUnion>],
    received: &BTreeMap<usize, TrajectoryPrediction>,
    drivable: Option<&PolyUnion>,
    horizon: usize,
) -> Result<ConstraintSet> {
    let mut cons = ConstraintSet::empty(horizon);
    cons.drivable_area = drivable.cloned();
    for i in g.in_edges(me) {
        let j = g.edges[i].from;
        if part.is_sequential(i) {
            let plan = received.get(&j).ok_or(Error::MissingPlan {
                vehicle: me,
                predecessor: j,
            })?;
            for (h, occ) in plan.occupancies().into_iter().enumerate().take(horizon) {
                cons.sequential_obstacles[h].push(occ);
            }
        } else {
            for (h, set) in parallel_sets[j].iter().enumerate().take(horizon) {
                cons.parallel_obstacles[h].push(set.clone());
            }
        }
    }
    Ok(cons)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PoseGrid {
    pub position: f64,
    pub yaw: f64,
}

impl Default for PoseGrid {
    fn default() -> Self {
        Self {
            position: 1e-3,
            yaw: 0.5f64.to_radians(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlannerConfig {
    /// Require the plan to end at speed level zero.
    pub terminal_standstill: bool,
    /// Nodes of the same step and automaton state in the same pose cell are
    /// merged, keeping the cheapest. `None` searches the full tree.
    pub pose_grid: Option<PoseGrid>,
    /// Search budget; exhausting it counts as infeasible.
    pub max_expansions: usize,
}

impl Default for PlannerConfig {
    fn default() -> Self {
        Self {
            terminal_standstill: false,
            pose_grid: Some(PoseGrid::default()),
            max_expansions: 200_000,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "outcome", rename_all = "kebab-case")]
pub enum PlanOutcome {
    Feasible(TrajectoryPrediction),
    Infeasible { expansions: usize, exhausted: bool },
}

impl PlanOutcome {
    pub fn plan(&self) -> Option<&TrajectoryPrediction> {
        match self {
            PlanOutcome::Feasible(p) => Some(p),
            PlanOutcome::Infeasible { .. } => None,
        }
    }
}

/// Obstacle parts of one step, bucketed on a uniform grid.
struct StepObstacles<'a> {
    parts: Vec<&'a ConvexPolygon>,
    bounds: Option<Aabb>,
    cell: f64,
    nx: usize,
    ny: usize,
    buckets: Vec<Vec<u32>>,
}

impl<'a> StepObstacles<'a> {
    const MAX_CELLS: usize = 128;

    fn new(lists: [&'a [PolyUnion]; 2]) -> Self {
        let parts: Vec<&ConvexPolygon> = lists.iter().flat_map(|l| l.iter()).flat_map(|u| u.parts()).collect();
        let bounds = parts.iter().map(|p| *p.aabb()).reduce(Aabb::merge);
        let Some(b) = bounds else {
            return Self {
                parts,
                bounds,
                cell: 1.0,
                nx: 0,
                ny: 0,
                buckets: Vec::new(),
            };
        };
        let extent = (b.max.x - b.min.x).max(b.max.y - b.min.y);
        let cell = (extent / Self::MAX_CELLS as f64).max(0.25);
        let nx = ((b.max.x - b.min.x) / cell).floor() as usize + 1;
        let ny = ((b.max.y - b.min.y) / cell).floor() as usize + 1;
        let mut idx = Self {
            parts,
            bounds,
            cell,
            nx,
            ny,
            buckets: vec![Vec::new(); nx * ny],
        };
        for i in 0..idx.parts.len() {
            let (x0, x1, y0, y1) = idx.cell_range(idx.parts[i].aabb());
            for y in y0..=y1 {
                for x in x0..=x1 {
                    idx.buckets[y * nx + x].push(i as u32);
                }
            }
        }
        idx
    }

    fn cell_range(&self, a: &Aabb) -> (usize, usize, usize, usize) {
        let b = self.bounds.as_ref().expect("non-empty index");
        let clamp = |v: f64, n: usize| (v.floor().max(0.0) as usize).min(n - 1);
        (
            clamp((a.min.x - b.min.x) / self.cell, self.nx),
            clamp((a.max.x - b.min.x) / self.cell, self.nx),
            clamp((a.min.y - b.min.y) / self.cell, self.ny),
            clamp((a.max.y - b.min.y) / self.cell, self.ny),
        )
    }

    fn hits(&self, p: &ConvexPolygon) -> bool {
        match &self.bounds {
            Some(b) if b.overlaps(p.aabb()) => {}
            _ => return false,
        }
        let (x0, x1, y0, y1) = self.cell_range(p.aabb());
        if x0 == x1 && y0 == y1 {
            return self.buckets[y0 * self.nx + x0]
                .iter()
                .any(|&i| intersects(p, self.parts[i as usize]));
        }
        let mut candidates: Vec<u32> = Vec::new();
        for y in y0..=y1 {
            for x in x0..=x1 {
                candidates.extend_from_slice(&self.buckets[y * self.nx + x]);
            }
        }
        candidates.sort_unstable();
        candidates.dedup();
        candidates.iter().any(|&i| intersects(p, self.parts[i as usize]))
    }
}

struct Node {
    depth: usize,
    state: MpaState,
    pose: Pose,
    g: f64,
    parent: usize,
    primitive: usize,
}

#[derive(PartialEq)]
struct Entry {
    f: f64,
    g: f64,
    primitive: usize,
    node: usize,
}

impl Eq for Entry {}

impl Ord for Entry {
    fn cmp(&self, o: &Self) -> Ordering {
        // reversed: BinaryHeap pops the maximum
        o.f.total_cmp(&self.f)
            .then(o.g.total_cmp(&self.g))
            .then(o.primitive.cmp(&self.primitive))
            .then(o.node.cmp(&self.node))
    }
}

impl PartialOrd for Entry {
    fn partial_cmp(&self, o: &Self) -> Option<Ordering> {
        Some(self.cmp(o))
    }
}

/// `travel[s][j]`: upper bound on the displacement over `j` steps from speed
/// level `s`.
fn travel_bounds(mpa: &Mpa, horizon: usize) -> Vec<Vec<f64>> {
    let n = mpa.config.speed_levels.len();
    let mut step = vec![vec![0.0f64; n]; n];
    for p in &mpa.primitives {
        let d = &mut step[p.from.speed][p.to.speed];
        *d = d.max(p.end.position().norm());
    }
    let mut travel = vec![vec![0.0f64; horizon + 1]; n];
    for j in 1..=horizon {
        for s in 0..n {
            let lo = s.saturating_sub(1);
            let hi = (s + 1).min(n - 1);
            travel[s][j] = (lo..=hi).map(|t| step[s][t] + travel[t][j - 1]).fold(0.0, f64::max);
        }
    }
    travel
}

fn stage_cost(p: Vec2, r: Vec2) -> f64 {
    (p - r).norm_sq()
}

/// Best-first search for the cheapest `horizon`-step primitive sequence.
/// Stage cost is the squared distance between the end of step `h` and
/// `reference.points[h]`; the heuristic bounds each remaining stage from
/// below by how far the vehicle can still travel.
pub fn plan(
    start: (Pose, MpaState),
    reference: &ReferenceTrajectory,
    mpa: &Mpa,
    cons: &ConstraintSet,
    horizon: usize,
    config: &PlannerConfig,
) -> Result<PlanOutcome> {
    mpa.state_index(start.1)?;
    if reference.points.len() < horizon {
        return Err(Error::InvalidInput(format!(
            "reference has {} points for horizon {horizon}",
            reference.points.len()
        )));
    }
    let travel = travel_bounds(mpa, horizon);
    let heuristic = |depth: usize, state: MpaState, p: Vec2| -> f64 {
        let mut sum = 0.0;
        for t in depth..horizon {
            let gap = (p.dist(reference.points[t]) - travel[state.speed][t + 1 - depth]).max(0.0);
            sum += gap * gap;
        }
        // stay strictly below the true remainder despite rounding
        sum * (1.0 - 1e-9)
    };

    let empty: Vec<PolyUnion> = Vec::new();
    let obstacles: Vec<StepObstacles> = (0..horizon)
        .map(|h| {
            StepObstacles::new([
                cons.parallel_obstacles.get(h).unwrap_or(&empty),
                cons.sequential_obstacles.get(h).unwrap_or(&empty),
            ])
        })
        .collect();
    let outside = |p: &ConvexPolygon| cons.drivable_area.as_ref().is_some_and(|d| !contains(d, p));

    let mut nodes = vec![Node {
        depth: 0,
        state: start.1,
        pose: start.0,
        g: 0.0,
        parent: usize::MAX,
        primitive: usize::MAX,
    }];
    let mut heap = BinaryHeap::new();
    heap.push(Entry {
        f: heuristic(0, start.1, start.0.position()),
        g: 0.0,
        primitive: 0,
        node: 0,
    });
    let mut best_g: HashMap<(usize, MpaState, i64, i64, i64), f64> = HashMap::new();
    let mut expansions = 0;

    while let Some(entry) = heap.pop() {
        let idx = entry.node;
        if nodes[idx].depth == horizon {
            return Ok(PlanOutcome::Feasible(reconstruct(&nodes, idx, start.1, mpa)));
        }
        if let Some(grid) = &config.pose_grid {
            let n = &nodes[idx];
            if best_g
                .get(&cell(n.depth, n.state, &n.pose, grid))
                .is_some_and(|&g| g < n.g)
            {
                continue;
            }
        }
        expansions += 1;
        if expansions > config.max_expansions {
            return Ok(PlanOutcome::Infeasible {
                expansions,
                exhausted: true,
            });
        }
        let (depth, state, pose, g) = {
            let n = &nodes[idx];
            (n.depth, n.state, n.pose, n.g)
        };
        let t = pose.transform();
        // one test on the hull of all successors often clears them all
        let fan = mpa.fan(state)?.transformed(&t);
        let fan_clear = !obstacles[depth].hits(&fan);
        let fan_inside = !outside(&fan);
        for &pid in mpa.outgoing(state)? {
            let prim = &mpa.primitives[pid];
            let child_depth = depth + 1;
            if config.terminal_standstill && prim.to.speed > horizon - child_depth {
                continue;
            }
            let occupancy = prim.sweep.transformed(&t);
            if (!fan_clear && obstacles[depth].hits(&occupancy)) || (!fan_inside && outside(&occupancy)) {
                continue;
            }
            let end = pose.then(&prim.end);
            let child_g = g + stage_cost(end.position(), reference.points[depth]);
            if let Some(grid) = &config.pose_grid {
                let key = cell(child_depth, prim.to, &end, grid);
                match best_g.get(&key) {
                    Some(&old) if old <= child_g => continue,
                    _ => {
                        best_g.insert(key, child_g);
                    }
                }
            }
            let f = child_g + heuristic(child_depth, prim.to, end.position());
            nodes.push(Node {
                depth: child_depth,
                state: prim.to,
                pose: end,
                g: child_g,
                parent: idx,
                primitive: pid,
            });
            heap.push(Entry {
                f,
                g: child_g,
                primitive: pid,
                node: nodes.len() - 1,
            });
        }
    }
    Ok(PlanOutcome::Infeasible {
        expansions,
        exhausted: false,
    })
}

fn cell(depth: usize, state: MpaState, pose: &Pose, grid: &PoseGrid) -> (usize, MpaState, i64, i64, i64) {
    (
        depth,
        state,
        (pose.x / grid.position).round() as i64,
        (pose.y / grid.position).round() as i64,
        (pose.yaw / grid.yaw).round() as i64,
    )
}

fn reconstruct(nodes: &[Node], goal: usize, start_state: MpaState, mpa: &Mpa) -> TrajectoryPrediction {
    let mut chain = Vec::new();
    let mut i = goal;
    while nodes[i].parent != usize::MAX {
        chain.push(i);
        i = nodes[i].parent;
    }
    chain.reverse();
    let steps = chain
        .iter()
        .map(|&c| {
            let n = &nodes[c];
            let start = nodes[n.parent].pose;
            let prim = &mpa.primitives[n.primitive];
            PlanStep {
                start,
                primitive: n.primitive,
                state: n.state,
                end: n.pose,
                occupancy: prim.sweep.transformed(&start.transform()),
            }
        })
        .collect();
    TrajectoryPrediction {
        start_state,
        steps,
        cost: Some(nodes[goal].g),
    }
}

/// Applies primitive `id` at the end of `steps` (or at `start`).
fn push_step(steps: &mut Vec<PlanStep>, start: (Pose, MpaState), id: usize, mpa: &Mpa) {
    let (pose, _) = steps.last().map_or(start, |s| (s.end, s.state));
    let prim = &mpa.primitives[id];
    steps.push(PlanStep {
        start: pose,
        primitive: id,
        state: prim.to,
        end: pose.then(&prim.end),
        occupancy: prim.sweep.transformed(&pose.transform()),
    });
}

/// `horizon` braking steps from `start`; all standstill if already stopped.
pub fn brake_plan(start: (Pose, MpaState), mpa: &Mpa, horizon: usize) -> TrajectoryPrediction {
    let mut steps = Vec::with_capacity(horizon);
    for _ in 0..horizon {
        let from = steps.last().map_or(start.1, |s: &PlanStep| s.state);
        push_step(&mut steps, start, mpa.brake_primitive(from).id, mpa);
    }
    TrajectoryPrediction {
        start_state: start.1,
        steps,
        cost: None,
    }
}

/// Previous plan advanced by one step with one braking step appended.
pub fn fallback(previous: &TrajectoryPrediction, mpa: &Mpa) -> TrajectoryPrediction {
    let first = &previous.steps[0];
    let mut steps: Vec<PlanStep> = previous.steps[1..].to_vec();
    let last_state = previous.final_state();
    let start = (first.end, first.state);
    let id = mpa.brake_primitive(last_state).id;
    push_step(&mut steps, start, id, mpa);
    TrajectoryPrediction {
        start_state: first.state,
        steps,
        cost: None,
    }
}

/// Independent re-check of a plan: chained dynamics, occupancies and
/// constraints.
pub fn verify_plan(plan: &TrajectoryPrediction, start: (Pose, MpaState), mpa: &Mpa, cons: &ConstraintSet) -> bool {
    let (mut pose, mut state) = start;
    for (h, s) in plan.steps.iter().enumerate() {
        let prim = &mpa.primitives[s.primitive];
        if prim.from != state || s.state != prim.to {
            return false;
        }
        let end = pose.then(&prim.end);
        if s.start.position().dist(pose.position()) > 1e-9 || s.end.position().dist(end.position()) > 1e-9 {
            return false;
        }
        let occ = prim.sweep.transformed(&pose.transform());
        if cons.violated(h, &occ) {
            return false;
        }
        pose = end;
        state = prim.to;
    }
    true
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coupling::Edge;
    use crate::mpa::{build_mpa, MpaConfig};
    use crate::partition::compute_levels;
    use std::f64::consts::FRAC_PI_2;

    fn small_mpa(horizon: usize) -> Mpa {
        build_mpa(MpaConfig {
            speed_levels: vec![0.0, 0.5, 1.0],
            steering_levels: vec![-0.3, 0.0, 0.3],
            horizon,
            samples: 8,
            substeps_per_sample: 4,
            ..MpaConfig::default()
        })
        .unwrap()
    }

    fn straight_ref(speed: f64, dt: f64, n: usize) -> ReferenceTrajectory {
        ReferenceTrajectory {
            points: (0..n).map(|h| Vec2::new(speed * dt * (h + 1) as f64, 0.0)).collect(),
        }
    }

    /// Exhaustive minimum over every primitive sequence.
    fn brute_force(
        start: (Pose, MpaState),
        r: &ReferenceTrajectory,
        mpa: &Mpa,
        cons: &ConstraintSet,
        n: usize,
    ) -> Option<f64> {
        #[allow(clippy::too_many_arguments)]
        fn rec(
            d: usize,
            pose: Pose,
            s: MpaState,
            g: f64,
            r: &ReferenceTrajectory,
            mpa: &Mpa,
            cons: &ConstraintSet,
            n: usize,
            best: &mut Option<f64>,
        ) {
            if d == n {
                if best.is_none_or(|b| g < b) {
                    *best = Some(g);
                }
                return;
            }
            for &id in mpa.outgoing(s).unwrap() {
                let p = &mpa.primitives[id];
                if cons.violated(d, &p.sweep.transformed(&pose.transform())) {
                    continue;
                }
                let end = pose.then(&p.end);
                rec(
                    d + 1,
                    end,
                    p.to,
                    g + (end.position() - r.points[d]).norm_sq(),
                    r,
                    mpa,
                    cons,
                    n,
                    best,
                );
            }
        }
        let mut best = None;
        rec(0, start.0, start.1, 0.0, r, mpa, cons, n, &mut best);
        best
    }

    fn no_grid() -> PlannerConfig {
        PlannerConfig {
            pose_grid: None,
            ..PlannerConfig::default()
        }
    }

    #[test]
    fn straight_lane_without_obstacles() {
        let mpa = small_mpa(3);
        let start = (Pose::ORIGIN, MpaState::new(1, 1));
        let r = straight_ref(0.5, 0.2, 3);
        let cons = ConstraintSet::empty(3);
        let out = plan(start, &r, &mpa, &cons, 3, &no_grid()).unwrap();
        let p = out.plan().unwrap();
        for s in &p.steps {
            assert_eq!(mpa.primitives[s.primitive].to.steering, 1);
        }
        let end = p.steps.last().unwrap().end.position();
        assert!(end.dist(r.points[2]) <= mpa.max_step_distance());
        assert_eq!(p.cost, brute_force(start, &r, &mpa, &cons, 3));
        assert!(verify_plan(p, start, &mpa, &cons));
    }

    /// Boxes hugging the standstill sweep at the origin on step 0, optionally
    /// with one more box over the vehicle itself.
    fn blocking_cons(cover_vehicle: bool, horizon: usize) -> ConstraintSet {
        let rect = |x0: f64, x1: f64, y0: f64, y1: f64| {
            ConvexPolygon::rectangle(Vec2::new(0.5 * (x0 + x1), 0.5 * (y0 + y1)), 0.0, x1 - x0, y1 - y0).unwrap()
        };
        let mut parts = vec![
            rect(0.125, 1.0, -1.0, 1.0),
            rect(-1.0, -0.125, -1.0, 1.0),
            rect(-0.125, 0.125, 0.07, 1.0),
            rect(-0.125, 0.125, -1.0, -0.07),
        ];
        if cover_vehicle {
            parts.push(rect(-0.05, 0.05, -0.02, 0.02));
        }
        let mut cons = ConstraintSet::empty(horizon);
        cons.parallel_obstacles[0].push(PolyUnion::new(parts));
        cons
    }

    #[test]
    fn boxed_in_vehicle_stands_still() {
        let mpa = small_mpa(3);
        let start = (Pose::ORIGIN, MpaState::new(0, 1));
        let r = straight_ref(1.0, 0.2, 3);
        let cons = blocking_cons(false, 3);
        let p = plan(start, &r, &mpa, &cons, 3, &no_grid()).unwrap();
        let p = p.plan().unwrap();
        assert_eq!(p.steps[0].state.speed, 0);
        assert_eq!(p.cost, brute_force(start, &r, &mpa, &cons, 3));
        let none = plan(start, &r, &mpa, &blocking_cons(true, 3), 3, &no_grid()).unwrap();
        assert!(none.plan().is_none());
        assert_eq!(brute_force(start, &r, &mpa, &blocking_cons(true, 3), 3), None);
    }

    #[test]
    fn obstacle_on_every_step_forces_standstill() {
        let mpa = small_mpa(3);
        let start = (Pose::ORIGIN, MpaState::new(0, 1));
        let mut cons = blocking_cons(false, 3);
        let ring = cons.parallel_obstacles[0].clone();
        cons.parallel_obstacles = vec![ring; 3];
        let p = plan(start, &straight_ref(1.0, 0.2, 3), &mpa, &cons, 3, &no_grid()).unwrap();
        let p = p.plan().unwrap();
        assert!(p
            .steps
            .iter()
            .all(|s| s.state.speed == 0 && s.end.position().norm() < 1e-12));
    }

    #[test]
    fn terminal_standstill_plans_stop() {
        let mpa = small_mpa(4);
        let start = (Pose::ORIGIN, MpaState::new(2, 1));
        let cfg = PlannerConfig {
            terminal_standstill: true,
            ..PlannerConfig::default()
        };
        let p = plan(
            start,
            &straight_ref(1.0, 0.2, 4),
            &mpa,
            &ConstraintSet::empty(4),
            4,
            &cfg,
        )
        .unwrap();
        assert_eq!(p.plan().unwrap().final_state().speed, 0);
    }

    #[test]
    fn plan_is_invariant_under_rigid_motion() {
        let mpa = small_mpa(3);
        let start = (Pose::new(0.1, 0.0, 0.2), MpaState::new(1, 1));
        let r = ReferenceTrajectory {
            points: vec![Vec2::new(0.2, 0.05), Vec2::new(0.35, 0.15), Vec2::new(0.5, 0.3)],
        };
        let obstacle = ConvexPolygon::rectangle(Vec2::new(0.45, -0.05), 0.0, 0.1, 0.1).unwrap();
        let mut cons = ConstraintSet::empty(3);
        cons.parallel_obstacles[2].push(obstacle.clone().into());
        let a = plan(start, &r, &mpa, &cons, 3, &no_grid()).unwrap();

        let t = Pose::new(3.0, -1.0, FRAC_PI_2).transform();
        let moved = |p: &Pose| Pose::new(t.apply(p.position()).x, t.apply(p.position()).y, p.yaw + FRAC_PI_2);
        let start_b = (moved(&start.0), start.1);
        let r_b = ReferenceTrajectory {
            points: r.points.iter().map(|p| t.apply(*p)).collect(),
        };
        let mut cons_b = ConstraintSet::empty(3);
        cons_b.parallel_obstacles[2].push(obstacle.transformed(&t).into());
        let b = plan(start_b, &r_b, &mpa, &cons_b, 3, &no_grid()).unwrap();

        let (a, b) = (a.plan().unwrap(), b.plan().unwrap());
        assert!((a.cost.unwrap() - b.cost.unwrap()).abs() < 1e-9);
        for (sa, sb) in a.steps.iter().zip(&b.steps) {
            assert_eq!(sa.primitive, sb.primitive);
            assert!(t.apply(sa.end.position()).dist(sb.end.position()) < 1e-9);
        }
    }

    #[test]
    fn fallback_shifts_and_brakes() {
        let mpa = small_mpa(4);
        let start = (Pose::ORIGIN, MpaState::new(0, 1));
        let still = brake_plan(start, &mpa, 4);
        assert!(still.steps.iter().all(|s| s.state.speed == 0 && s.end == Pose::ORIGIN));
        let fb = fallback(&still, &mpa);
        assert!(fb.steps.iter().all(|s| s.state.speed == 0 && s.end == Pose::ORIGIN));

        // a plan cruising at speed level 2 to the end of the horizon
        let fast = (Pose::ORIGIN, MpaState::new(2, 1));
        let cruise = mpa.find(fast.1, fast.1).unwrap().id;
        let mut steps = Vec::new();
        for _ in 0..4 {
            push_step(&mut steps, fast, cruise, &mpa);
        }
        let prev = TrajectoryPrediction {
            start_state: fast.1,
            steps,
            cost: None,
        };
        let fb1 = fallback(&prev, &mpa);
        assert_eq!(fb1.steps.len(), 4);
        assert_eq!(fb1.final_state().speed, 1);
        let fb2 = fallback(&fb1, &mpa);
        assert_eq!(fb2.final_state().speed, 0);
        assert_eq!(fallback(&fb2, &mpa).final_state().speed, 0);
        assert!(verify_plan(
            &fb1,
            (prev.steps[0].end, prev.steps[0].state),
            &mpa,
            &ConstraintSet::empty(4)
        ));
    }

    #[test]
    fn constraints_from_graph() {
        let mpa = small_mpa(3);
        let edges = vec![
            Edge {
                from: 0,
                to: 2,
                weight: 1.0,
                earliest_step: 0,
            },
            Edge {
                from: 1,
                to: 2,
                weight: 0.5,
                earliest_step: 1,
            },
        ];
        let g = CouplingGraph { n_vehicles: 3, edges };
        let levels = compute_levels(3, &[(0, 2)]).unwrap();
        let part = Partition {
            sequential_edges: vec![0],
            parallel_edges: vec![1],
            levels,
        };
        let sets: Vec<Vec<PolyUnion>> = (0..3)
            .map(|i| {
                vec![
                    ConvexPolygon::rectangle(Vec2::new(i as f64, 0.0), 0.0, 0.3, 0.3)
                        .unwrap()
                        .into();
                    3
                ]
            })
            .collect();
        let mut received = BTreeMap::new();
        assert!(matches!(
            build_constraints(2, &g, &part, &sets, &received, None, 3),
            Err(Error::MissingPlan {
                vehicle: 2,
                predecessor: 0
            })
        ));
        received.insert(0, brake_plan((Pose::ORIGIN, MpaState::new(0, 1)), &mpa, 3));
        let cons = build_constraints(2, &g, &part, &sets, &received, None, 3).unwrap();
        for h in 0..3 {
            assert_eq!(cons.parallel_obstacles[h].len(), 1);
            assert_eq!(cons.sequential_obstacles[h].len(), 1);
        }
        let none = build_constraints(0, &g, &part, &sets, &received, None, 3).unwrap();
        assert!(none
            .parallel_obstacles
            .iter()
            .chain(&none.sequential_obstacles)
            .all(|l| l.is_empty()));
    }

    #[test]
    fn pose_grid_keeps_optimum_on_open_road() {
        let mpa = small_mpa(3);
        let start = (Pose::ORIGIN, MpaState::new(1, 1));
        let r = straight_ref(0.9, 0.2, 3);
        let cons = ConstraintSet::empty(3);
        let a = plan(start, &r, &mpa, &cons, 3, &PlannerConfig::default()).unwrap();
        assert_eq!(a.plan().unwrap().cost, brute_force(start, &r, &mpa, &cons, 3));
    }
}
