//! Planar convex-polygon primitives.
//!
//! Every occupancy in the planner (vehicle sweeps, reachable sets, drivable
//! area) is a [`PolyUnion`]: a possibly overlapping union of convex parts.
//! Pairwise tests use the separating-axis theorem, so they are exact up to
//! the tolerance [`EPS`]. Touching boundaries count as intersecting.

use std::f64::consts::PI;
use std::ops::{Add, AddAssign, Mul, Neg, Sub};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Length tolerance in meters.
pub const EPS: f64 = 1e-9;

/// Pieces of a clipped difference with less area than this are numerical slivers.
const SLIVER_AREA: f64 = 1e-9;

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(from = "[f64; 2]", into = "[f64; 2]")]
pub struct Vec2 {
    pub x: f64,
    pub y: f64,
}

impl Vec2 {
    pub const ZERO: Vec2 = Vec2 { x: 0.0, y: 0.0 };

    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn dot(self, o: Vec2) -> f64 {
        self.x * o.x + self.y * o.y
    }

    pub fn cross(self, o: Vec2) -> f64 {
        self.x * o.y - self.y * o.x
    }

    pub fn norm(self) -> f64 {
        self.x.hypot(self.y)
    }

    pub fn norm_sq(self) -> f64 {
        self.dot(self)
    }

    /// Counterclockwise perpendicular.
    pub fn perp(self) -> Vec2 {
        Vec2::new(-self.y, self.x)
    }

    pub fn rotate(self, angle: f64) -> Vec2 {
        let (s, c) = angle.sin_cos();
        Vec2::new(c * self.x - s * self.y, s * self.x + c * self.y)
    }

    pub fn dist(self, o: Vec2) -> f64 {
        (self - o).norm()
    }
}

impl From<[f64; 2]> for Vec2 {
    fn from(a: [f64; 2]) -> Self {
        Vec2::new(a[0], a[1])
    }
}

impl From<Vec2> for [f64; 2] {
    fn from(v: Vec2) -> Self {
        [v.x, v.y]
    }
}

impl Add for Vec2 {
    type Output = Vec2;
    fn add(self, o: Vec2) -> Vec2 {
        Vec2::new(self.x + o.x, self.y + o.y)
    }
}

impl AddAssign for Vec2 {
    fn add_assign(&mut self, o: Vec2) {
        self.x += o.x;
        self.y += o.y;
    }
}

impl Sub for Vec2 {
    type Output = Vec2;
    fn sub(self, o: Vec2) -> Vec2 {
        Vec2::new(self.x - o.x, self.y - o.y)
    }
}

impl Mul<f64> for Vec2 {
    type Output = Vec2;
    fn mul(self, s: f64) -> Vec2 {
        Vec2::new(self.x * s, self.y * s)
    }
}

impl Neg for Vec2 {
    type Output = Vec2;
    fn neg(self) -> Vec2 {
        Vec2::new(-self.x, -self.y)
    }
}

/// Wraps an angle into (−π, π].
pub fn normalize_angle(a: f64) -> f64 {
    let mut r = a % (2.0 * PI);
    if r <= -PI {
        r += 2.0 * PI;
    } else if r > PI {
        r -= 2.0 * PI;
    }
    r
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Aabb {
    pub min: Vec2,
    pub max: Vec2,
}

impl Aabb {
    pub fn from_points(points: &[Vec2]) -> Option<Aabb> {
        let first = *points.first()?;
        let mut b = Aabb { min: first, max: first };
        for p in &points[1..] {
            b.min.x = b.min.x.min(p.x);
            b.min.y = b.min.y.min(p.y);
            b.max.x = b.max.x.max(p.x);
            b.max.y = b.max.y.max(p.y);
        }
        Some(b)
    }

    pub fn merge(self, o: Aabb) -> Aabb {
        Aabb {
            min: Vec2::new(self.min.x.min(o.min.x), self.min.y.min(o.min.y)),
            max: Vec2::new(self.max.x.max(o.max.x), self.max.y.max(o.max.y)),
        }
    }

    /// Overlap test that treats boxes within `EPS` of each other as touching.
    pub fn overlaps(&self, o: &Aabb) -> bool {
        self.min.x <= o.max.x + EPS
            && o.min.x <= self.max.x + EPS
            && self.min.y <= o.max.y + EPS
            && o.min.y <= self.max.y + EPS
    }

    pub fn contains_box(&self, o: &Aabb) -> bool {
        self.min.x <= o.min.x + EPS
            && self.min.y <= o.min.y + EPS
            && o.max.x <= self.max.x + EPS
            && o.max.y <= self.max.y + EPS
    }
}

/// Strictly convex polygon with counterclockwise vertices.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Vec2>", into = "Vec<Vec2>")]
pub struct ConvexPolygon {
    vertices: Vec<Vec2>,
    aabb: Aabb,
}

impl TryFrom<Vec<Vec2>> for ConvexPolygon {
    type Error = Error;
    fn try_from(v: Vec<Vec2>) -> Result<Self> {
        ConvexPolygon::new(v)
    }
}

impl From<ConvexPolygon> for Vec<Vec2> {
    fn from(p: ConvexPolygon) -> Self {
        p.vertices
    }
}

impl ConvexPolygon {
    /// Validates vertex count, orientation, convexity and duplicate vertices.
    pub fn new(vertices: Vec<Vec2>) -> Result<Self> {
        let n = vertices.len();
        if n < 3 {
            return Err(Error::InvalidPolygon(format!("{n} vertices, need at least 3")));
        }
        for i in 0..n {
            let a = vertices[i];
            let b = vertices[(i + 1) % n];
            let c = vertices[(i + 2) % n];
            if a.dist(b) <= EPS {
                return Err(Error::InvalidPolygon(format!("duplicate vertex at index {i}")));
            }
            if (b - a).cross(c - b) < -1e-12 {
                return Err(Error::InvalidPolygon(format!(
                    "not convex counterclockwise at vertex {}",
                    (i + 1) % n
                )));
            }
        }
        if signed_area(&vertices) <= 0.0 {
            return Err(Error::InvalidPolygon("zero or negative area".into()));
        }
        Ok(Self::from_raw(vertices))
    }

    /// Caller guarantees the vertices already satisfy the invariants (e.g. a
    /// rigid motion of a valid polygon).
    fn from_raw(vertices: Vec<Vec2>) -> Self {
        let aabb = Aabb::from_points(&vertices).expect("non-empty polygon");
        Self { vertices, aabb }
    }

    /// Convex hull of a point cloud (Andrew's monotone chain); collinear
    /// points are dropped.
    pub fn hull(points: &[Vec2]) -> Result<Self> {
        let hull = convex_hull(points);
        if hull.len() < 3 {
            return Err(Error::InvalidPolygon("degenerate point set".into()));
        }
        Ok(Self::from_raw(hull))
    }

    /// Rectangle of `length` along the heading and `width` across it,
    /// centered on `center`.
    pub fn rectangle(center: Vec2, yaw: f64, length: f64, width: f64) -> Result<Self> {
        if !(length > EPS && width > EPS) {
            return Err(Error::InvalidPolygon(format!("rectangle {length} x {width}")));
        }
        let (hl, hw) = (length / 2.0, width / 2.0);
        let corners = [
            Vec2::new(-hl, -hw),
            Vec2::new(hl, -hw),
            Vec2::new(hl, hw),
            Vec2::new(-hl, hw),
        ];
        Ok(Self::from_raw(corners.iter().map(|c| c.rotate(yaw) + center).collect()))
    }

    pub fn vertices(&self) -> &[Vec2] {
        &self.vertices
    }

    pub fn aabb(&self) -> &Aabb {
        &self.aabb
    }

    pub fn area(&self) -> f64 {
        signed_area(&self.vertices)
    }

    pub fn centroid(&self) -> Vec2 {
        let n = self.vertices.len() as f64;
        self.vertices.iter().fold(Vec2::ZERO, |acc, v| acc + *v) * (1.0 / n)
    }

    /// Point membership with boundary tolerance `EPS`.
    pub fn contains_point(&self, p: Vec2) -> bool {
        let n = self.vertices.len();
        (0..n).all(|i| {
            let a = self.vertices[i];
            let b = self.vertices[(i + 1) % n];
            let e = b - a;
            e.cross(p - a) >= -EPS * e.norm()
        })
    }

    pub fn transformed(&self, t: &RigidTransform) -> ConvexPolygon {
        Self::from_raw(self.vertices.iter().map(|v| t.apply(*v)).collect())
    }

    /// Outward offset by moving every vertex along its corner bisector so
    /// each edge ends up exactly `margin` further out.
    pub fn inflated(&self, margin: f64) -> Result<ConvexPolygon> {
        if margin < 0.0 {
            return Err(Error::NegativeMargin(margin));
        }
        if margin == 0.0 {
            return Ok(self.clone());
        }
        let n = self.vertices.len();
        let normals: Vec<Vec2> = (0..n)
            .map(|i| {
                let e = self.vertices[(i + 1) % n] - self.vertices[i];
                let len = e.norm();
                Vec2::new(e.y / len, -e.x / len)
            })
            .collect();
        let out = (0..n)
            .map(|i| {
                let n_prev = normals[(i + n - 1) % n];
                let n_next = normals[i];
                let denom = 1.0 + n_prev.dot(n_next);
                self.vertices[i] + (n_prev + n_next) * (margin / denom)
            })
            .collect();
        Ok(Self::from_raw(out))
    }
}

/// Union of convex parts. An empty union is the empty set.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(from = "Vec<ConvexPolygon>", into = "Vec<ConvexPolygon>")]
pub struct PolyUnion {
    parts: Vec<ConvexPolygon>,
    aabb: Option<Aabb>,
}

impl From<Vec<ConvexPolygon>> for PolyUnion {
    fn from(parts: Vec<ConvexPolygon>) -> Self {
        PolyUnion::new(parts)
    }
}

impl From<PolyUnion> for Vec<ConvexPolygon> {
    fn from(u: PolyUnion) -> Self {
        u.parts
    }
}

impl From<ConvexPolygon> for PolyUnion {
    fn from(p: ConvexPolygon) -> Self {
        PolyUnion::new(vec![p])
    }
}

impl PolyUnion {
    pub fn new(parts: Vec<ConvexPolygon>) -> Self {
        let aabb = parts.iter().map(|p| p.aabb).reduce(Aabb::merge);
        Self { parts, aabb }
    }

    pub fn empty() -> Self {
        Self::default()
    }

    pub fn parts(&self) -> &[ConvexPolygon] {
        &self.parts
    }

    pub fn is_empty(&self) -> bool {
        self.parts.is_empty()
    }

    pub fn aabb(&self) -> Option<&Aabb> {
        self.aabb.as_ref()
    }

    pub fn contains_point(&self, p: Vec2) -> bool {
        self.parts.iter().any(|part| part.contains_point(p))
    }

    pub fn extend(&mut self, other: PolyUnion) {
        for p in other.parts {
            self.push(p);
        }
    }

    pub fn push(&mut self, p: ConvexPolygon) {
        self.aabb = Some(match self.aabb {
            Some(b) => b.merge(p.aabb),
            None => p.aabb,
        });
        self.parts.push(p);
    }
}

/// Planar rigid motion: rotate counterclockwise about the origin, then translate.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RigidTransform {
    pub translation: Vec2,
    pub rotation: f64,
}

impl Default for RigidTransform {
    fn default() -> Self {
        Self::IDENTITY
    }
}

impl RigidTransform {
    pub const IDENTITY: RigidTransform = RigidTransform {
        translation: Vec2::ZERO,
        rotation: 0.0,
    };

    pub fn new(translation: Vec2, rotation: f64) -> Self {
        Self {
            translation,
            rotation: normalize_angle(rotation),
        }
    }

    pub fn apply(&self, p: Vec2) -> Vec2 {
        p.rotate(self.rotation) + self.translation
    }

    /// `self ∘ other`: apply `other` first.
    pub fn compose(&self, other: &RigidTransform) -> RigidTransform {
        RigidTransform::new(self.apply(other.translation), self.rotation + other.rotation)
    }

    pub fn inverse(&self) -> RigidTransform {
        RigidTransform::new((-self.translation).rotate(-self.rotation), -self.rotation)
    }
}

/// Separating-axis test over the edge normals of both polygons.
pub fn intersects(a: &ConvexPolygon, b: &ConvexPolygon) -> bool {
    if !a.aabb.overlaps(&b.aabb) {
        return false;
    }
    !has_separating_axis(&a.vertices, &b.vertices) && !has_separating_axis(&b.vertices, &a.vertices)
}

fn has_separating_axis(reference: &[Vec2], other: &[Vec2]) -> bool {
    let n = reference.len();
    for i in 0..n {
        let a = reference[i];
        let e = reference[(i + 1) % n] - a;
        let len = e.norm();
        // outward normal of a counterclockwise polygon
        let normal = Vec2::new(e.y / len, -e.x / len);
        let ref_max = normal.dot(a);
        let other_min = other.iter().map(|p| normal.dot(*p)).fold(f64::INFINITY, f64::min);
        if other_min > ref_max + EPS {
            return true;
        }
    }
    false
}

pub fn union_intersects(a: &PolyUnion, b: &PolyUnion) -> bool {
    let (Some(ba), Some(bb)) = (a.aabb(), b.aabb()) else {
        return false;
    };
    if !ba.overlaps(bb) {
        return false;
    }
    a.parts
        .iter()
        .any(|p| p.aabb.overlaps(bb) && b.parts.iter().any(|q| intersects(p, q)))
}

/// Convex part against a union.
pub fn polygon_intersects_union(p: &ConvexPolygon, u: &PolyUnion) -> bool {
    match u.aabb() {
        Some(b) if b.overlaps(&p.aabb) => u.parts.iter().any(|q| intersects(p, q)),
        _ => false,
    }
}

pub fn apply_transform(u: &PolyUnion, t: &RigidTransform) -> PolyUnion {
    PolyUnion::new(u.parts.iter().map(|p| p.transformed(t)).collect())
}

pub fn inflate(u: &PolyUnion, margin: f64) -> Result<PolyUnion> {
    if margin < 0.0 {
        return Err(Error::NegativeMargin(margin));
    }
    Ok(PolyUnion::new(
        u.parts.iter().map(|p| p.inflated(margin)).collect::<Result<_>>()?,
    ))
}

/// Outer approximation with fewer vertices. An edge is dropped by extending
/// its two neighbours until they meet, as long as the meeting point lies
/// within `tol` of the dropped edge. The result always contains `p`.
pub fn simplify_outer(p: &ConvexPolygon, tol: f64) -> ConvexPolygon {
    let mut v = p.vertices.clone();
    while v.len() > 3 {
        let n = v.len();
        let mut best: Option<(f64, usize, Vec2)> = None;
        for i in 0..n {
            let a = v[(i + n - 1) % n];
            let b = v[i];
            let c = v[(i + 1) % n];
            let d = v[(i + 2) % n];
            let (d1, d2) = (b - a, d - c);
            let denom = d1.cross(d2);
            if denom <= 1e-12 {
                continue;
            }
            let t = (c - b).cross(d2) / denom;
            if t < 0.0 {
                continue;
            }
            let q = b + d1 * t;
            let e = c - b;
            let height = -e.cross(q - b) / e.norm();
            if height <= tol && best.is_none_or(|(h, ..)| height < h) {
                best = Some((height, i, q));
            }
        }
        let Some((_, i, q)) = best else { break };
        v[i] = q;
        v.remove((i + 1) % n);
    }
    ConvexPolygon::from_raw(v)
}

/// True iff `inner` minus the union is empty, computed by clipping `inner`
/// against every part and discarding sliver pieces.
pub fn contains(outer: &PolyUnion, inner: &ConvexPolygon) -> bool {
    match outer.aabb() {
        Some(b) if b.contains_box(&inner.aabb) => {}
        _ => return false,
    }
    let inside_one = |part: &ConvexPolygon| {
        part.aabb.contains_box(&inner.aabb) && inner.vertices.iter().all(|v| part.contains_point(*v))
    };
    if outer.parts.iter().any(inside_one) {
        return true;
    }
    let mut remaining: Vec<Vec<Vec2>> = vec![inner.vertices.clone()];
    for part in &outer.parts {
        if remaining.is_empty() {
            break;
        }
        if !part.aabb.overlaps(&inner.aabb) {
            continue;
        }
        let mut next = Vec::new();
        for piece in remaining {
            if piece.iter().all(|v| part.contains_point(*v)) {
                continue;
            }
            let bounds = Aabb::from_points(&piece).expect("non-empty piece");
            if !bounds.overlaps(&part.aabb) || has_separating_axis(&part.vertices, &piece) {
                next.push(piece);
                continue;
            }
            subtract_convex(piece, part, &mut next);
        }
        remaining = next;
    }
    remaining.is_empty()
}

/// Appends the convex pieces of `piece \ cutter` to `out`.
fn subtract_convex(mut piece: Vec<Vec2>, cutter: &ConvexPolygon, out: &mut Vec<Vec<Vec2>>) {
    let n = cutter.vertices.len();
    for i in 0..n {
        let a = cutter.vertices[i];
        let b = cutter.vertices[(i + 1) % n];
        let outside = clip_halfplane(&piece, a, b, false);
        if signed_area(&outside) > SLIVER_AREA {
            out.push(outside);
        }
        piece = clip_halfplane(&piece, a, b, true);
        if signed_area(&piece) <= SLIVER_AREA {
            return;
        }
    }
}

/// Keeps the part of a convex polygon left of (or right of) the directed line a→b.
fn clip_halfplane(poly: &[Vec2], a: Vec2, b: Vec2, keep_left: bool) -> Vec<Vec2> {
    let dir = b - a;
    let side = |p: Vec2| {
        let s = dir.cross(p - a);
        if keep_left {
            s
        } else {
            -s
        }
    };
    let n = poly.len();
    let mut out = Vec::with_capacity(n + 1);
    for i in 0..n {
        let p = poly[i];
        let q = poly[(i + 1) % n];
        let sp = side(p);
        let sq = side(q);
        if sp >= 0.0 {
            out.push(p);
        }
        if (sp >= 0.0) != (sq >= 0.0) {
            let t = sp / (sp - sq);
            out.push(p + (q - p) * t);
        }
    }
    out
}

pub fn signed_area(pts: &[Vec2]) -> f64 {
    let n = pts.len();
    if n < 3 {
        return 0.0;
    }
    let mut s = 0.0;
    for i in 0..n {
        s += pts[i].cross(pts[(i + 1) % n]);
    }
    s / 2.0
}

/// Counterclockwise hull without collinear points.
pub fn convex_hull(points: &[Vec2]) -> Vec<Vec2> {
    let mut pts: Vec<Vec2> = points.to_vec();
    pts.sort_by(|a, b| a.x.total_cmp(&b.x).then(a.y.total_cmp(&b.y)));
    pts.dedup_by(|a, b| a.dist(*b) <= EPS);
    if pts.len() < 3 {
        return pts;
    }
    let turns_left = |h: &[Vec2], p: Vec2| {
        let a = h[h.len() - 2];
        let b = h[h.len() - 1];
        (b - a).cross(p - b) > 1e-14
    };
    let mut hull: Vec<Vec2> = Vec::with_capacity(pts.len() + 1);
    for &p in &pts {
        while hull.len() >= 2 && !turns_left(&hull, p) {
            hull.pop();
        }
        hull.push(p);
    }
    let lower_len = hull.len() + 1;
    for &p in pts.iter().rev().skip(1) {
        while hull.len() >= lower_len && !turns_left(&hull, p) {
            hull.pop();
        }
        hull.push(p);
    }
    hull.pop();
    hull
}
