//! Motion-primitive automaton and offline one-step reachable sets.
//!
//! Every primitive starts at the origin with zero yaw. Online, a vehicle's
//! reachable set for step `h` is the precomputed entry for its automaton state
//! moved to its pose, which is valid because the model is invariant under
//! planar rigid motions.

use std::collections::{BTreeMap, HashSet};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::geometry::{apply_transform, convex_hull, simplify_outer, ConvexPolygon, PolyUnion, Vec2};
use crate::vehicle::{footprint, integrate_trajectory, Pose, VehicleInput, VehicleParams, VehicleState};

const CACHE_VERSION: u32 = 2;

/// Discrete (speed, steering) level pair.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct MpaState {
    pub speed: usize,
    pub steering: usize,
}

impl MpaState {
    pub const fn new(speed: usize, steering: usize) -> Self {
        Self { speed, steering }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MpaConfig {
    pub speed_levels: Vec<f64>,
    pub steering_levels: Vec<f64>,
    pub params: VehicleParams,
    pub dt: f64,
    /// Planning margin added around every sweep.
    pub margin: f64,
    pub horizon: usize,
    /// Footprint samples per primitive.
    pub samples: usize,
    /// Euler substeps per footprint sample.
    pub substeps_per_sample: usize,
}

impl Default for MpaConfig {
    fn default() -> Self {
        Self {
            speed_levels: vec![0.0, 0.375, 0.75, 1.125, 1.5],
            steering_levels: vec![-0.4, -0.2, 0.0, 0.2, 0.4],
            params: VehicleParams::default(),
            dt: 0.2,
            margin: 0.01,
            horizon: 7,
            samples: 20,
            substeps_per_sample: 5,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MotionPrimitive {
    pub id: usize,
    pub from: MpaState,
    pub to: MpaState,
    /// States over one sample time in the primitive's local frame.
    pub samples: Vec<VehicleState>,
    /// End pose relative to the start pose.
    pub end: Pose,
    /// Hull of all sampled footprints, inflated by the planning margin.
    pub sweep: ConvexPolygon,
    /// Same hull without the margin; ground truth for collision checks.
    pub raw_sweep: ConvexPolygon,
}

#[derive(Clone, Debug)]
pub struct Mpa {
    pub config: MpaConfig,
    pub primitives: Vec<MotionPrimitive>,
    outgoing: Vec<Vec<usize>>,
    /// Per state, hull of the sweeps of all outgoing primitives.
    fans: Vec<ConvexPolygon>,
}

impl Mpa {
    pub fn n_states(&self) -> usize {
        self.config.speed_levels.len() * self.config.steering_levels.len()
    }

    pub fn horizon(&self) -> usize {
        self.config.horizon
    }

    pub fn state_index(&self, s: MpaState) -> Result<usize> {
        let n_steer = self.config.steering_levels.len();
        if s.speed >= self.config.speed_levels.len() || s.steering >= n_steer {
            return Err(Error::UnknownState {
                speed: s.speed,
                steering: s.steering,
            });
        }
        Ok(s.speed * n_steer + s.steering)
    }

    pub fn state_at(&self, index: usize) -> MpaState {
        let n_steer = self.config.steering_levels.len();
        MpaState::new(index / n_steer, index % n_steer)
    }

    pub fn states(&self) -> impl Iterator<Item = MpaState> + '_ {
        (0..self.n_states()).map(|i| self.state_at(i))
    }

    /// Primitive ids leaving `s`, in ascending id order.
    pub fn outgoing(&self, s: MpaState) -> Result<&[usize]> {
        Ok(&self.outgoing[self.state_index(s)?])
    }

    /// Hull of every sweep leaving `s`, in the local frame.
    pub fn fan(&self, s: MpaState) -> Result<&ConvexPolygon> {
        Ok(&self.fans[self.state_index(s)?])
    }

    pub fn primitive(&self, id: usize) -> &MotionPrimitive {
        &self.primitives[id]
    }

    pub fn speed_of(&self, s: MpaState) -> f64 {
        self.config.speed_levels[s.speed]
    }

    pub fn steering_of(&self, s: MpaState) -> f64 {
        self.config.steering_levels[s.steering]
    }

    pub fn zero_steering(&self) -> usize {
        self.config.steering_levels.len() / 2
    }

    /// Primitive `from → to`, if the transition exists.
    pub fn find(&self, from: MpaState, to: MpaState) -> Option<&MotionPrimitive> {
        let out = self.outgoing(from).ok()?;
        out.iter().map(|&id| &self.primitives[id]).find(|p| p.to == to)
    }

    /// One braking transition: speed one level down, steering one level toward zero.
    pub fn brake_primitive(&self, from: MpaState) -> &MotionPrimitive {
        let zero = self.zero_steering();
        let steering = match from.steering.cmp(&zero) {
            std::cmp::Ordering::Less => from.steering + 1,
            std::cmp::Ordering::Equal => zero,
            std::cmp::Ordering::Greater => from.steering - 1,
        };
        let to = MpaState::new(from.speed.saturating_sub(1), steering);
        self.find(from, to).expect("adjacent transitions always exist")
    }

    /// Largest displacement of the reference point over one primitive.
    pub fn max_step_distance(&self) -> f64 {
        self.primitives
            .iter()
            .map(|p| p.end.position().norm())
            .fold(0.0, f64::max)
    }

    /// State matching a vehicle's speed, with straight steering.
    pub fn state_for_speed(&self, speed: f64) -> Option<MpaState> {
        self.config
            .speed_levels
            .iter()
            .position(|v| (v - speed).abs() < 1e-9)
            .map(|i| MpaState::new(i, self.zero_steering()))
    }
}

fn validate_config(c: &MpaConfig) -> Result<()> {
    c.params.validate()?;
    let bad = |m: String| Err(Error::InvalidMpa(m));
    if c.speed_levels.len() < 2 {
        return bad("need at least two speed levels".into());
    }
    if c.speed_levels[0] != 0.0 {
        return bad("the lowest speed level must be 0".into());
    }
    if c.speed_levels.windows(2).any(|w| !(w[1] > w[0])) {
        return bad("speed levels must be strictly increasing".into());
    }
    let st = &c.steering_levels;
    if st.is_empty() || st.len().is_multiple_of(2) {
        return bad("steering levels must be an odd-sized list containing 0".into());
    }
    if st.windows(2).any(|w| !(w[1] > w[0])) {
        return bad("steering levels must be strictly increasing".into());
    }
    let n = st.len();
    if (0..n).any(|i| (st[i] + st[n - 1 - i]).abs() > 1e-12) {
        return bad("steering levels must be symmetric about 0".into());
    }
    if !(c.dt > 0.0) || c.horizon == 0 || c.samples == 0 || c.substeps_per_sample == 0 {
        return bad("dt, horizon and sampling counts must be positive".into());
    }
    if !(c.margin >= 0.0) {
        return Err(Error::NegativeMargin(c.margin));
    }
    Ok(())
}

/// Builds the automaton: every state connects to the states at most one
/// speed level and one steering level away.
pub fn build_mpa(config: MpaConfig) -> Result<Mpa> {
    validate_config(&config)?;
    let n_speed = config.speed_levels.len();
    let n_steer = config.steering_levels.len();
    let mut primitives = Vec::new();
    let mut outgoing = vec![Vec::new(); n_speed * n_steer];

    for (from_idx, out) in outgoing.iter_mut().enumerate() {
        let from = MpaState::new(from_idx / n_steer, from_idx % n_steer);
        for ds in -1i64..=1 {
            for dj in -1i64..=1 {
                let (ts, tj) = (from.speed as i64 + ds, from.steering as i64 + dj);
                if ts < 0 || tj < 0 || ts >= n_speed as i64 || tj >= n_steer as i64 {
                    continue;
                }
                let to = MpaState::new(ts as usize, tj as usize);
                let id = primitives.len();
                primitives.push(build_primitive(&config, id, from, to)?);
                out.push(id);
            }
        }
    }
    let fans = outgoing
        .iter()
        .map(|ids| {
            let pts: Vec<Vec2> = ids
                .iter()
                .flat_map(|&id: &usize| primitives[id].sweep.vertices().to_vec())
                .collect();
            ConvexPolygon::hull(&pts)
        })
        .collect::<Result<_>>()?;
    Ok(Mpa {
        config,
        primitives,
        outgoing,
        fans,
    })
}

fn build_primitive(c: &MpaConfig, id: usize, from: MpaState, to: MpaState) -> Result<MotionPrimitive> {
    let start = VehicleState::new(0.0, 0.0, 0.0, c.speed_levels[from.speed]);
    let input = VehicleInput {
        steering_angle: c.steering_levels[to.steering],
        target_speed: c.speed_levels[to.speed],
    };
    let samples = integrate_trajectory(
        &start,
        &input,
        &c.params,
        c.dt,
        c.samples * c.substeps_per_sample,
        c.samples,
    )
    .map_err(|e| Error::InvalidMpa(format!("primitive {from:?} -> {to:?}: {e}")))?;
    let corners: Vec<Vec2> = samples
        .iter()
        .flat_map(|s| footprint(s, &c.params).vertices().to_vec())
        .collect();
    let raw_sweep = ConvexPolygon::hull(&corners)?;
    let sweep = raw_sweep.inflated(c.margin)?;
    let last = samples.last().expect("non-empty trajectory");
    Ok(MotionPrimitive {
        id,
        from,
        to,
        end: last.pose(),
        samples,
        sweep,
        raw_sweep,
    })
}

/// How one-step reachable sets are enumerated and stored.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum Compaction {
    /// Enumerate every primitive sequence and keep each distinct transformed
    /// sweep. Exponential in the horizon; meant for small automata.
    Exact,
    /// Propagate sets of poses instead of single poses. A frontier element is
    /// an automaton state, a heading interval no wider than `yaw_bin` and a
    /// convex hull of positions. Rotation over an interval is enclosed by the
    /// triangle spanned by the rotated endpoints and the tangent
    /// intersection, so every element over-approximates the poses it
    /// absorbs. Output parts are merged into hulls keyed by heading
    /// (`out_yaw_bin`) and distance from the origin (`radial_bin`), then
    /// enlarged to drop edges while no boundary moves out more than
    /// `simplify_tol`.
    Interval {
        yaw_bin: f64,
        out_yaw_bin: f64,
        radial_bin: f64,
        simplify_tol: f64,
    },
}

impl Default for Compaction {
    fn default() -> Self {
        Compaction::Interval {
            yaw_bin: 2f64.to_radians(),
            out_yaw_bin: 10f64.to_radians(),
            radial_bin: 0.25,
            simplify_tol: 0.01,
        }
    }
}

/// Per automaton state, `horizon` one-step reachable occupancies for a
/// vehicle at the origin with zero yaw.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReachTable {
    pub key: String,
    pub horizon: usize,
    pub n_speed: usize,
    pub n_steer: usize,
    pub compaction: Compaction,
    per_state: Vec<Vec<PolyUnion>>,
}

impl ReachTable {
    pub fn entry(&self, state: MpaState, h: usize) -> Result<&PolyUnion> {
        if state.speed >= self.n_speed || state.steering >= self.n_steer {
            return Err(Error::UnknownState {
                speed: state.speed,
                steering: state.steering,
            });
        }
        if h >= self.horizon {
            return Err(Error::StepOutOfRange {
                h,
                horizon: self.horizon,
            });
        }
        Ok(&self.per_state[state.speed * self.n_steer + state.steering][h])
    }

    pub fn entries(&self, state: MpaState) -> Result<&[PolyUnion]> {
        self.entry(state, 0)?;
        Ok(&self.per_state[state.speed * self.n_steer + state.steering])
    }

    pub fn total_parts(&self) -> usize {
        self.per_state.iter().flatten().map(|u| u.parts().len()).sum()
    }
}

/// Cache key of a table built from `mpa` with `compaction`.
pub fn table_key(mpa: &Mpa, compaction: Compaction) -> String {
    let payload = serde_json::to_vec(&(CACHE_VERSION, &mpa.config, compaction)).expect("serializable config");
    hex::encode(Sha256::digest(&payload))
}

/// Unites, for every start state and step `h`, the sweeps of all primitives
/// that can be taken at step `h`, each moved to the pose where it starts.
pub fn build_reach_table(mpa: &Mpa, compaction: Compaction) -> ReachTable {
    let per_state = (0..mpa.n_states())
        .into_par_iter()
        .map(|i| {
            let start = mpa.state_at(i);
            match compaction {
                Compaction::Exact => exact_entries(mpa, start),
                Compaction::Interval {
                    yaw_bin,
                    out_yaw_bin,
                    radial_bin,
                    simplify_tol,
                } => interval_entries(mpa, start, yaw_bin, out_yaw_bin, radial_bin, simplify_tol),
            }
        })
        .collect();
    ReachTable {
        key: table_key(mpa, compaction),
        horizon: mpa.horizon(),
        n_speed: mpa.config.speed_levels.len(),
        n_steer: mpa.config.steering_levels.len(),
        compaction,
        per_state,
    }
}

fn quantize(v: f64) -> i64 {
    (v * 1e9).round() as i64
}

/// Breadth-first enumeration of (state, pose) pairs; pairs whose poses agree
/// to 1e-9 are merged.
fn exact_entries(mpa: &Mpa, start: MpaState) -> Vec<PolyUnion> {
    let mut frontier: Vec<(MpaState, Pose)> = vec![(start, Pose::ORIGIN)];
    let mut entries = Vec::with_capacity(mpa.horizon());
    for h in 0..mpa.horizon() {
        let mut parts = Vec::new();
        let mut parts_seen = HashSet::new();
        let mut next = Vec::new();
        let mut seen = HashSet::new();
        let last = h + 1 == mpa.horizon();
        for (state, pose) in &frontier {
            let t = pose.transform();
            for &id in mpa.outgoing(*state).expect("frontier states are valid") {
                let prim = &mpa.primitives[id];
                let sweep = prim.sweep.transformed(&t);
                let key: Vec<(i64, i64)> = sweep
                    .vertices()
                    .iter()
                    .map(|v| (quantize(v.x), quantize(v.y)))
                    .collect();
                if parts_seen.insert(key) {
                    parts.push(sweep);
                }
                if !last {
                    let end = pose.then(&prim.end);
                    if seen.insert((prim.to, quantize(end.x), quantize(end.y), quantize(end.yaw))) {
                        next.push((prim.to, end));
                    }
                }
            }
        }
        entries.push(PolyUnion::new(parts));
        frontier = next;
    }
    entries
}

/// Poses with automaton state `state`, unwrapped heading in `[yaw_lo, yaw_hi]`
/// and position inside the convex hull `positions` (1 or 2 points allowed).
struct PoseSet {
    yaw_lo: f64,
    yaw_hi: f64,
    positions: Vec<Vec2>,
}

/// Points whose hull contains `{R(θ) p : θ ∈ [lo, hi], p ∈ pts}`.
fn rotated_over(pts: &[Vec2], lo: f64, hi: f64) -> Vec<Vec2> {
    let width = hi - lo;
    if width <= 1e-12 {
        return pts.iter().map(|p| p.rotate(lo)).collect();
    }
    debug_assert!(width < std::f64::consts::PI);
    let mid = 0.5 * (lo + hi);
    let stretch = 1.0 / (0.5 * width).cos();
    pts.iter()
        .flat_map(|p| [p.rotate(lo), p.rotate(hi), p.rotate(mid) * stretch])
        .collect()
}

fn interval_entries(
    mpa: &Mpa,
    start: MpaState,
    yaw_bin: f64,
    out_yaw_bin: f64,
    radial_bin: f64,
    simplify_tol: f64,
) -> Vec<PolyUnion> {
    let fans: Vec<&[Vec2]> = mpa.fans.iter().map(|f| f.vertices()).collect();

    let mut frontier: BTreeMap<(usize, i64), PoseSet> = BTreeMap::new();
    frontier.insert(
        (mpa.state_index(start).expect("valid state"), 0),
        PoseSet {
            yaw_lo: 0.0,
            yaw_hi: 0.0,
            positions: vec![Vec2::ZERO],
        },
    );
    let mut entries = Vec::with_capacity(mpa.horizon());
    for h in 0..mpa.horizon() {
        let mut groups: BTreeMap<(i64, i64), Vec<Vec2>> = BTreeMap::new();
        let mut next: BTreeMap<(usize, i64), PoseSet> = BTreeMap::new();
        let last = h + 1 == mpa.horizon();
        for (&(state_idx, _), set) in &frontier {
            let fan = rotated_over(fans[state_idx], set.yaw_lo, set.yaw_hi);
            let part = minkowski_sum(&set.positions, &convex_hull(&fan));
            let mid = 0.5 * (set.yaw_lo + set.yaw_hi);
            let centre = set.positions.iter().fold(Vec2::ZERO, |a, p| a + *p) * (1.0 / set.positions.len() as f64);
            let key = (
                (mid / out_yaw_bin).floor() as i64,
                (centre.norm() / radial_bin).floor() as i64,
            );
            let acc = groups.entry(key).or_default();
            acc.extend(part);
            if acc.len() > 512 {
                *acc = convex_hull(acc);
            }
            if last {
                continue;
            }
            for &id in mpa.outgoing(mpa.state_at(state_idx)).expect("valid state") {
                let prim = &mpa.primitives[id];
                let offsets = convex_hull(&rotated_over(&[prim.end.position()], set.yaw_lo, set.yaw_hi));
                let moved = minkowski_sum(&set.positions, &offsets);
                let lo = set.yaw_lo + prim.end.yaw;
                let hi = set.yaw_hi + prim.end.yaw;
                let to = mpa.state_index(prim.to).expect("valid state");
                let first = (lo / yaw_bin).floor() as i64;
                let last_bin = (hi / yaw_bin).floor() as i64;
                for bin in first..=last_bin {
                    let b_lo = lo.max(bin as f64 * yaw_bin);
                    let b_hi = hi.min((bin + 1) as f64 * yaw_bin);
                    match next.get_mut(&(to, bin)) {
                        Some(existing) => {
                            existing.yaw_lo = existing.yaw_lo.min(b_lo);
                            existing.yaw_hi = existing.yaw_hi.max(b_hi);
                            let mut pts = std::mem::take(&mut existing.positions);
                            pts.extend_from_slice(&moved);
                            existing.positions = convex_hull(&pts);
                        }
                        None => {
                            next.insert(
                                (to, bin),
                                PoseSet {
                                    yaw_lo: b_lo,
                                    yaw_hi: b_hi,
                                    positions: moved.clone(),
                                },
                            );
                        }
                    }
                }
            }
        }
        entries.push(PolyUnion::new(
            groups
                .into_values()
                .map(|pts| simplify_outer(&ConvexPolygon::hull(&pts).expect("sweeps have area"), simplify_tol))
                .collect(),
        ));
        frontier = next;
    }
    entries
}

/// Minkowski sum of two convex point sets given as hulls (degenerate hulls
/// with one or two points are allowed).
fn minkowski_sum(a: &[Vec2], b: &[Vec2]) -> Vec<Vec2> {
    if a.len() < 3 || b.len() < 3 {
        let pts: Vec<Vec2> = a.iter().flat_map(|p| b.iter().map(move |q| *p + *q)).collect();
        return convex_hull(&pts);
    }
    let lowest = |p: &[Vec2]| {
        (0..p.len())
            .min_by(|&i, &j| p[i].y.total_cmp(&p[j].y).then(p[i].x.total_cmp(&p[j].x)))
            .expect("non-empty")
    };
    let (ia, ib) = (lowest(a), lowest(b));
    let (n, m) = (a.len(), b.len());
    let pa = |k: usize| a[(ia + k) % n];
    let pb = |k: usize| b[(ib + k) % m];
    let mut out = Vec::with_capacity(n + m);
    let (mut i, mut j) = (0, 0);
    while i < n || j < m {
        out.push(pa(i) + pb(j));
        let cross = (pa(i + 1) - pa(i)).cross(pb(j + 1) - pb(j));
        if cross >= 0.0 && i < n {
            i += 1;
        }
        if cross <= 0.0 && j < m {
            j += 1;
        }
    }
    convex_hull(&out)
}

/// Reachable occupancy of a vehicle in automaton state `state` at `pose`
/// for the step interval `[h, h+1]`.
pub fn reachable_set(table: &ReachTable, state: MpaState, pose: &Pose, h: usize) -> Result<PolyUnion> {
    Ok(apply_transform(table.entry(state, h)?, &pose.transform()))
}

/// All `horizon` reachable sets of a vehicle.
pub fn reachable_sets(table: &ReachTable, state: MpaState, pose: &Pose) -> Result<Vec<PolyUnion>> {
    let t = pose.transform();
    Ok(table.entries(state)?.iter().map(|u| apply_transform(u, &t)).collect())
}

#[derive(Serialize, Deserialize)]
struct CacheFile {
    version: u32,
    table: ReachTable,
}

pub fn save_reach_table(table: &ReachTable, path: &Path) -> Result<()> {
    let file = CacheFile {
        version: CACHE_VERSION,
        table: table.clone(),
    };
    let tmp = path.with_extension("tmp");
    std::fs::write(&tmp, serde_json::to_vec(&file)?)?;
    std::fs::rename(&tmp, path)?;
    Ok(())
}

/// Loads a cached table; fails if the file was built for a different key.
pub fn load_reach_table(path: &Path, expected_key: &str) -> Result<ReachTable> {
    let bytes = std::fs::read(path)?;
    let file: CacheFile = serde_json::from_slice(&bytes)?;
    if file.version != CACHE_VERSION {
        return Err(Error::Cache(format!("version {} != {}", file.version, CACHE_VERSION)));
    }
    if file.table.key != expected_key {
        return Err(Error::Cache(format!(
            "stale key {} (expected {})",
            file.table.key, expected_key
        )));
    }
    Ok(file.table)
}

pub fn cache_path(dir: &Path, key: &str) -> PathBuf {
    dir.join(format!("reach-{}.json", &key[..16]))
}

/// Returns the cached table for `mpa` from `dir`, rebuilding (and rewriting
/// the cache) when it is missing, unreadable or stale.
pub fn load_or_build(mpa: &Mpa, compaction: Compaction, dir: &Path) -> Result<ReachTable> {
    let key = table_key(mpa, compaction);
    let path = cache_path(dir, &key);
    if let Ok(table) = load_reach_table(&path, &key) {
        return Ok(table);
    }
    let table = build_reach_table(mpa, compaction);
    std::fs::create_dir_all(dir)?;
    save_reach_table(&table, &path)?;
    Ok(table)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{contains, signed_area};

    fn small_config(horizon: usize) -> MpaConfig {
        MpaConfig {
            speed_levels: vec![0.0, 0.75, 1.5],
            steering_levels: vec![-0.4, 0.0, 0.4],
            horizon,
            samples: 10,
            substeps_per_sample: 4,
            ..MpaConfig::default()
        }
    }

    #[test]
    fn transition_counts() {
        let mpa = build_mpa(small_config(2)).unwrap();
        assert_eq!(mpa.n_states(), 9);
        for s in mpa.states() {
            let n = mpa.outgoing(s).unwrap().len();
            let speeds = if s.speed == 1 { 3 } else { 2 };
            let steers = if s.steering == 1 { 3 } else { 2 };
            assert_eq!(n, speeds * steers, "state {s:?}");
            assert!((1..=9).contains(&n));
        }
        assert_eq!(mpa.primitives.len(), 49);
    }

    #[test]
    fn standstill_sweep_is_inflated_footprint() {
        let mpa = build_mpa(small_config(2)).unwrap();
        let still = mpa.find(MpaState::new(0, 1), MpaState::new(0, 1)).unwrap();
        let fp = footprint(&VehicleState::new(0.0, 0.0, 0.0, 0.0), &mpa.config.params)
            .inflated(mpa.config.margin)
            .unwrap();
        assert!((still.sweep.area() - fp.area()).abs() < 1e-12);
        for v in fp.vertices() {
            assert!(still.sweep.vertices().iter().any(|w| w.dist(*v) < 1e-12));
        }
        assert_eq!(still.end, Pose::ORIGIN);
    }

    #[test]
    fn straight_sweep_covers_swept_rectangle() {
        let mpa = build_mpa(MpaConfig {
            speed_levels: vec![0.0, 1.0],
            steering_levels: vec![-0.2, 0.0, 0.2],
            ..MpaConfig::default()
        })
        .unwrap();
        let p = mpa.find(MpaState::new(1, 1), MpaState::new(1, 1)).unwrap();
        let swept = ConvexPolygon::new(vec![
            Vec2::new(-0.11, -0.0535),
            Vec2::new(0.31, -0.0535),
            Vec2::new(0.31, 0.0535),
            Vec2::new(-0.11, 0.0535),
        ])
        .unwrap();
        assert!(contains(&PolyUnion::from(p.sweep.clone()), &swept));
        assert!((p.raw_sweep.area() - swept.area()).abs() < 1e-9);
    }

    #[test]
    fn primitive_invariants() {
        let mpa = build_mpa(small_config(2)).unwrap();
        for p in &mpa.primitives {
            let first = p.samples[0];
            assert_eq!((first.x, first.y, first.yaw), (0.0, 0.0, 0.0));
            assert_eq!(first.speed, mpa.speed_of(p.from));
            assert_eq!(p.samples.last().unwrap().speed, mpa.speed_of(p.to));
            let sweep = PolyUnion::from(p.sweep.clone());
            for s in &p.samples {
                assert!(contains(&sweep, &footprint(s, &mpa.config.params)));
            }
        }
    }

    #[test]
    fn rejects_bad_levels() {
        let mut c = small_config(2);
        c.speed_levels = vec![0.5, 1.0];
        assert!(build_mpa(c).is_err());
        let mut c = small_config(2);
        c.speed_levels = vec![0.0];
        assert!(build_mpa(c).is_err());
        let mut c = small_config(2);
        c.steering_levels = vec![-0.4, 0.0, 0.3];
        assert!(build_mpa(c).is_err());
        let mut c = small_config(2);
        c.steering_levels = vec![-0.8, 0.0, 0.8];
        assert!(matches!(build_mpa(c), Err(Error::InvalidMpa(_))));
        let mut c = small_config(2);
        c.speed_levels = vec![0.0, 2.0];
        assert!(build_mpa(c).is_err());
    }

    #[test]
    fn every_state_brakes_to_stop() {
        let mpa = build_mpa(small_config(2)).unwrap();
        for s in mpa.states() {
            let mut cur = s;
            for _ in 0..s.speed {
                cur = mpa.brake_primitive(cur).to;
            }
            assert_eq!(cur.speed, 0);
        }
    }

    #[test]
    fn horizon_one_is_union_of_outgoing_sweeps() {
        let mpa = build_mpa(small_config(1)).unwrap();
        let table = build_reach_table(&mpa, Compaction::Exact);
        for s in mpa.states() {
            let entries = table.entries(s).unwrap();
            assert_eq!(entries.len(), 1);
            let out = mpa.outgoing(s).unwrap();
            let mut distinct: Vec<&ConvexPolygon> = Vec::new();
            for &id in out {
                let sw = &mpa.primitives[id].sweep;
                if !distinct.contains(&sw) {
                    distinct.push(sw);
                }
            }
            assert_eq!(entries[0].parts().len(), distinct.len());
            for &id in out {
                assert!(entries[0].parts().contains(&mpa.primitives[id].sweep));
            }
        }
    }

    #[test]
    fn standstill_only_automaton() {
        let mpa = build_mpa(MpaConfig {
            speed_levels: vec![0.0, 0.5],
            steering_levels: vec![0.0],
            horizon: 4,
            ..MpaConfig::default()
        })
        .unwrap();
        // restricted to the standstill primitive, every step sees the same footprint
        let still = mpa.find(MpaState::new(0, 0), MpaState::new(0, 0)).unwrap();
        let fp = footprint(&VehicleState::new(0.0, 0.0, 0.0, 0.0), &mpa.config.params)
            .inflated(mpa.config.margin)
            .unwrap();
        assert!((still.sweep.area() - fp.area()).abs() < 1e-12);
        let table = build_reach_table(&mpa, Compaction::Exact);
        for h in 0..4 {
            let e = table.entry(MpaState::new(0, 0), h).unwrap();
            assert!(e.parts().contains(&still.sweep));
        }
    }

    #[test]
    fn reachable_set_transforms_entry() {
        let mpa = build_mpa(small_config(2)).unwrap();
        let table = build_reach_table(&mpa, Compaction::default());
        let s = MpaState::new(1, 1);
        let at_origin = reachable_set(&table, s, &Pose::ORIGIN, 1).unwrap();
        assert_eq!(&at_origin, table.entry(s, 1).unwrap());
        let shifted = reachable_set(&table, s, &Pose::new(1.0, 1.0, 0.0), 1).unwrap();
        for (a, b) in at_origin.parts().iter().zip(shifted.parts()) {
            for (p, q) in a.vertices().iter().zip(b.vertices()) {
                assert!((q.x - p.x - 1.0).abs() < 1e-12 && (q.y - p.y - 1.0).abs() < 1e-12);
            }
        }
        let rotated = reachable_set(&table, s, &Pose::new(0.0, 0.0, std::f64::consts::FRAC_PI_2), 1).unwrap();
        for (a, b) in at_origin.parts().iter().zip(rotated.parts()) {
            for (p, q) in a.vertices().iter().zip(b.vertices()) {
                assert!((q.x + p.y).abs() < 1e-12 && (q.y - p.x).abs() < 1e-12);
            }
        }
        assert!(matches!(
            reachable_set(&table, MpaState::new(5, 0), &Pose::ORIGIN, 0),
            Err(Error::UnknownState { .. })
        ));
        assert!(matches!(
            reachable_set(&table, s, &Pose::ORIGIN, 2),
            Err(Error::StepOutOfRange { .. })
        ));
    }

    #[test]
    fn interval_compaction_covers_exact_sweeps() {
        let mpa = build_mpa(small_config(4)).unwrap();
        let exact = build_reach_table(&mpa, Compaction::Exact);
        let coarse = build_reach_table(&mpa, Compaction::default());
        for s in mpa.states() {
            for h in 0..4 {
                let outer = coarse.entry(s, h).unwrap();
                for part in exact.entry(s, h).unwrap().parts() {
                    assert!(contains(outer, part), "state {s:?} step {h}");
                }
            }
        }
    }

    #[test]
    fn minkowski_sum_of_squares() {
        let sq = vec![
            Vec2::new(0.0, 0.0),
            Vec2::new(1.0, 0.0),
            Vec2::new(1.0, 1.0),
            Vec2::new(0.0, 1.0),
        ];
        let sum = minkowski_sum(&sq, &sq);
        assert!((signed_area(&sum) - 4.0).abs() < 1e-12);
        let seg = minkowski_sum(&[Vec2::ZERO], &[Vec2::new(2.0, 0.0), Vec2::new(3.0, 1.0)]);
        assert_eq!(seg.len(), 2);
    }

    #[test]
    fn cache_round_trip_and_stale_key() {
        let dir = tempfile::tempdir().unwrap();
        let mpa = build_mpa(small_config(2)).unwrap();
        let table = load_or_build(&mpa, Compaction::default(), dir.path()).unwrap();
        let path = cache_path(dir.path(), &table.key);
        assert!(path.exists());
        let again = load_reach_table(&path, &table.key).unwrap();
        assert_eq!(again, table);
        assert!(matches!(load_reach_table(&path, "other"), Err(Error::Cache(_))));

        let other = build_mpa(small_config(3)).unwrap();
        assert_ne!(table_key(&other, Compaction::default()), table.key);
    }
}
