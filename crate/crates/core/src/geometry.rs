//! Exact 2-D primitives used to represent barrier regions.
//!
//! Regions are unions of closed convex polygons. All predicates use the
//! absolute tolerance [`EPS`]; task coordinates are O(10) so a fixed epsilon
//! is adequate.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Absolute tolerance for orientation and containment predicates.
pub const EPS: f64 = 1e-9;

/// Arc segments inserted per vertex when dilating a polygon.
pub const DILATE_ARC_SEGMENTS: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Point2 {
    pub x: f64,
    pub y: f64,
}

impl Point2 {
    pub const fn new(x: f64, y: f64) -> Self {
        Point2 { x, y }
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }

    pub fn sub(self, o: Point2) -> Point2 {
        Point2::new(self.x - o.x, self.y - o.y)
    }

    pub fn add(self, o: Point2) -> Point2 {
        Point2::new(self.x + o.x, self.y + o.y)
    }

    pub fn scale(self, s: f64) -> Point2 {
        Point2::new(self.x * s, self.y * s)
    }

    pub fn dot(self, o: Point2) -> f64 {
        self.x * o.x + self.y * o.y
    }

    pub fn cross(self, o: Point2) -> f64 {
        self.x * o.y - self.y * o.x
    }

    pub fn norm(self) -> f64 {
        self.x.hypot(self.y)
    }

    pub fn dist(self, o: Point2) -> f64 {
        self.sub(o).norm()
    }

    pub fn lerp(self, o: Point2, t: f64) -> Point2 {
        Point2::new(self.x + (o.x - self.x) * t, self.y + (o.y - self.y) * t)
    }
}

/// Axis-aligned bounding box.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bounds {
    pub min: Point2,
    pub max: Point2,
}

impl Bounds {
    pub fn width(&self) -> f64 {
        self.max.x - self.min.x
    }

    pub fn height(&self) -> f64 {
        self.max.y - self.min.y
    }

    pub fn union(&self, o: &Bounds) -> Bounds {
        Bounds {
            min: Point2::new(self.min.x.min(o.min.x), self.min.y.min(o.min.y)),
            max: Point2::new(self.max.x.max(o.max.x), self.max.y.max(o.max.y)),
        }
    }

    /// Cell-centred `n × n` probe points covering the box.
    pub fn probe_grid(&self, n: usize) -> Vec<Point2> {
        let mut pts = Vec::with_capacity(n * n);
        for i in 0..n {
            for j in 0..n {
                pts.push(Point2::new(
                    self.min.x + self.width() * (i as f64 + 0.5) / n as f64,
                    self.min.y + self.height() * (j as f64 + 0.5) / n as f64,
                ));
            }
        }
        pts
    }

    /// Grows the box by `margin` on every side.
    pub fn expand(&self, margin: f64) -> Bounds {
        Bounds {
            min: Point2::new(self.min.x - margin, self.min.y - margin),
            max: Point2::new(self.max.x + margin, self.max.y + margin),
        }
    }
}

/// Strictly convex polygon with counter-clockwise vertices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Point2>", into = "Vec<Point2>")]
pub struct ConvexPolygon {
    vertices: Vec<Point2>,
}

impl TryFrom<Vec<Point2>> for ConvexPolygon {
    type Error = Error;

    fn try_from(v: Vec<Point2>) -> Result<Self> {
        ConvexPolygon::new(v)
    }
}

impl From<ConvexPolygon> for Vec<Point2> {
    fn from(p: ConvexPolygon) -> Self {
        p.vertices
    }
}

impl ConvexPolygon {
    /// Validates and wraps a vertex list. Clockwise input is rejected rather
    /// than silently reversed.
    pub fn new(vertices: Vec<Point2>) -> Result<Self> {
        if vertices.len() < 3 {
            return Err(Error::InvalidPolygon("fewer than 3 vertices".into()));
        }
        if vertices.iter().any(|p| !p.is_finite()) {
            return Err(Error::InvalidPolygon("non-finite vertex".into()));
        }
        let n = vertices.len();
        for i in 0..n {
            let a = vertices[i];
            let b = vertices[(i + 1) % n];
            let c = vertices[(i + 2) % n];
            if b.sub(a).cross(c.sub(b)) <= EPS {
                return Err(Error::InvalidPolygon(format!(
                    "vertices {}..{} are not a strict counter-clockwise turn",
                    i,
                    (i + 2) % n
                )));
            }
        }
        let poly = ConvexPolygon { vertices };
        if poly.signed_area() <= EPS {
            return Err(Error::InvalidPolygon("non-positive area".into()));
        }
        Ok(poly)
    }

    /// Axis-aligned rectangle `[x0, x1] × [y0, y1]`.
    pub fn rect(x0: f64, y0: f64, x1: f64, y1: f64) -> Result<Self> {
        let (x0, x1) = (x0.min(x1), x0.max(x1));
        let (y0, y1) = (y0.min(y1), y0.max(y1));
        ConvexPolygon::new(vec![
            Point2::new(x0, y0),
            Point2::new(x1, y0),
            Point2::new(x1, y1),
            Point2::new(x0, y1),
        ])
    }

    /// Rectangle of the given size centred at `c`.
    pub fn centered_rect(c: Point2, width: f64, height: f64) -> Result<Self> {
        Self::rect(
            c.x - width / 2.0,
            c.y - height / 2.0,
            c.x + width / 2.0,
            c.y + height / 2.0,
        )
    }

    /// Builds a polygon from the output of a clip or offset: drops repeated
    /// and collinear vertices. Returns `None` when nothing with positive area
    /// is left.
    pub(crate) fn from_clipped(points: Vec<Point2>) -> Option<Self> {
        let mut pts: Vec<Point2> = Vec::with_capacity(points.len());
        for p in points {
            if pts.last().is_none_or(|q: &Point2| q.dist(p) > EPS) {
                pts.push(p);
            }
        }
        while pts.len() > 1 && pts[0].dist(pts[pts.len() - 1]) <= EPS {
            pts.pop();
        }
        loop {
            let n = pts.len();
            if n < 3 {
                return None;
            }
            let mut removed = false;
            for i in 0..n {
                let a = pts[(i + n - 1) % n];
                let b = pts[i];
                let c = pts[(i + 1) % n];
                if b.sub(a).cross(c.sub(b)) <= EPS {
                    pts.remove(i);
                    removed = true;
                    break;
                }
            }
            if !removed {
                break;
            }
        }
        ConvexPolygon::new(pts).ok()
    }

    pub fn vertices(&self) -> &[Point2] {
        &self.vertices
    }

    fn signed_area(&self) -> f64 {
        let n = self.vertices.len();
        (0..n)
            .map(|i| self.vertices[i].cross(self.vertices[(i + 1) % n]))
            .sum::<f64>()
            / 2.0
    }

    /// Shoelace area.
    pub fn area(&self) -> f64 {
        self.signed_area().abs()
    }

    /// Area centroid.
    pub fn centroid(&self) -> Point2 {
        let n = self.vertices.len();
        let (mut cx, mut cy, mut a2) = (0.0, 0.0, 0.0);
        for i in 0..n {
            let p = self.vertices[i];
            let q = self.vertices[(i + 1) % n];
            let w = p.cross(q);
            cx += (p.x + q.x) * w;
            cy += (p.y + q.y) * w;
            a2 += w;
        }
        Point2::new(cx / (3.0 * a2), cy / (3.0 * a2))
    }

    pub fn bounds(&self) -> Bounds {
        let mut b = Bounds {
            min: self.vertices[0],
            max: self.vertices[0],
        };
        for p in &self.vertices[1..] {
            b.min.x = b.min.x.min(p.x);
            b.min.y = b.min.y.min(p.y);
            b.max.x = b.max.x.max(p.x);
            b.max.y = b.max.y.max(p.y);
        }
        b
    }

    /// Iterates `(start, end)` of each edge in order.
    pub fn edges(&self) -> impl Iterator<Item = (Point2, Point2)> + '_ {
        let n = self.vertices.len();
        (0..n).map(move |i| (self.vertices[i], self.vertices[(i + 1) % n]))
    }

    /// Closed containment: boundary points are inside.
    pub fn contains(&self, p: Point2) -> bool {
        self.edges().all(|(a, b)| b.sub(a).cross(p.sub(a)) >= -EPS)
    }

    /// Whether the closed segment `[a, b]` meets the closed polygon
    /// (Cyrus–Beck clipping of the segment parameter against every edge).
    pub fn segment_intersects(&self, a: Point2, b: Point2) -> bool {
        let d = b.sub(a);
        let (mut t0, mut t1) = (0.0_f64, 1.0_f64);
        for (p, q) in self.edges() {
            let e = q.sub(p);
            let len = e.norm();
            // Signed distance to the edge line, positive inside.
            let num = e.cross(a.sub(p)) / len + EPS;
            let den = e.cross(d) / len;
            if den.abs() <= f64::EPSILON * 16.0 {
                if num < 0.0 {
                    return false;
                }
                continue;
            }
            let t = -num / den;
            if den > 0.0 {
                t0 = t0.max(t);
            } else {
                t1 = t1.min(t);
            }
            if t0 > t1 {
                return false;
            }
        }
        true
    }

    /// Keeps the part of the polygon with `normal · p <= offset`.
    fn clip_halfplane(&self, normal: Point2, offset: f64) -> Option<ConvexPolygon> {
        clip_points(&self.vertices, normal, offset).and_then(ConvexPolygon::from_clipped)
    }

    /// Sutherland–Hodgman clip against a convex window.
    pub fn clip(&self, window: &ConvexPolygon) -> Option<ConvexPolygon> {
        let mut pts = self.vertices.clone();
        for (a, b) in window.edges() {
            let e = b.sub(a);
            // Outward normal of a counter-clockwise edge.
            let n = Point2::new(e.y, -e.x);
            pts = clip_points(&pts, n, n.dot(a))?;
        }
        ConvexPolygon::from_clipped(pts)
    }

    /// Minkowski sum with a disk of `radius`, over-approximated by tangent
    /// segments so the result contains the exact dilation.
    pub fn dilate(&self, radius: f64) -> ConvexPolygon {
        if radius <= 0.0 {
            return self.clone();
        }
        let n = self.vertices.len();
        let normal_angle = |a: Point2, b: Point2| {
            let e = b.sub(a);
            (-e.x).atan2(e.y) // outward normal (e.y, -e.x) of a CCW edge
        };
        let mut out = Vec::with_capacity(n * DILATE_ARC_SEGMENTS);
        for i in 0..n {
            let prev = self.vertices[(i + n - 1) % n];
            let v = self.vertices[i];
            let next = self.vertices[(i + 1) % n];
            let phi_in = normal_angle(prev, v);
            let mut turn = normal_angle(v, next) - phi_in;
            while turn <= 0.0 {
                turn += std::f64::consts::TAU;
            }
            let step = turn / DILATE_ARC_SEGMENTS as f64;
            let r = radius / (step / 2.0).cos();
            for j in 0..DILATE_ARC_SEGMENTS {
                let phi = phi_in + (j as f64 + 0.5) * step;
                out.push(Point2::new(v.x + r * phi.cos(), v.y + r * phi.sin()));
            }
        }
        ConvexPolygon::from_clipped(out).expect("dilation of a valid polygon is valid")
    }

    /// Splits along the perpendicular bisector of the bounding box's longer
    /// axis (x on ties). The low-coordinate half comes first.
    pub fn bisect(&self) -> Result<(ConvexPolygon, ConvexPolygon)> {
        let b = self.bounds();
        let (normal, mid) = if b.width() >= b.height() {
            (Point2::new(1.0, 0.0), (b.min.x + b.max.x) / 2.0)
        } else {
            (Point2::new(0.0, 1.0), (b.min.y + b.max.y) / 2.0)
        };
        let low = self.clip_halfplane(normal, mid);
        let high = self.clip_halfplane(normal.scale(-1.0), -mid);
        let min_area = self.area() * 1e-9;
        match (low, high) {
            (Some(l), Some(h)) if l.area() > min_area && h.area() > min_area => Ok((l, h)),
            _ => Err(Error::DegenerateCut),
        }
    }

    /// Largest distance from any vertex of `self` to the polygon `other`.
    pub fn hausdorff_from(&self, other: &ConvexPolygon) -> f64 {
        self.vertices
            .iter()
            .map(|&p| other.distance_to(p))
            .fold(0.0, f64::max)
    }

    /// Euclidean distance from `p` to the closed polygon (zero inside).
    pub fn distance_to(&self, p: Point2) -> f64 {
        if self.contains(p) {
            return 0.0;
        }
        self.edges()
            .map(|(a, b)| point_segment_distance(p, a, b))
            .fold(f64::INFINITY, f64::min)
    }
}

fn clip_points(pts: &[Point2], normal: Point2, offset: f64) -> Option<Vec<Point2>> {
    let mut out = Vec::with_capacity(pts.len() + 1);
    let n = pts.len();
    for i in 0..n {
        let p = pts[i];
        let q = pts[(i + 1) % n];
        let dp = normal.dot(p) - offset;
        let dq = normal.dot(q) - offset;
        if dp <= 0.0 {
            out.push(p);
        }
        if (dp < 0.0 && dq > 0.0) || (dp > 0.0 && dq < 0.0) {
            out.push(p.lerp(q, dp / (dp - dq)));
        }
    }
    if out.len() < 3 {
        None
    } else {
        Some(out)
    }
}

pub fn point_segment_distance(p: Point2, a: Point2, b: Point2) -> f64 {
    let d = b.sub(a);
    let len2 = d.dot(d);
    if len2 == 0.0 {
        return p.dist(a);
    }
    let t = (p.sub(a).dot(d) / len2).clamp(0.0, 1.0);
    p.dist(a.lerp(b, t))
}

/// Penalised region: a union of closed convex parts with penalty `M`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionSet {
    pub parts: Vec<ConvexPolygon>,
    pub penalty: f64,
}

impl RegionSet {
    pub fn new(parts: Vec<ConvexPolygon>, penalty: f64) -> Result<Self> {
        if !(penalty > 0.0 && penalty.is_finite()) {
            return Err(Error::InvalidRegion(format!(
                "penalty must be positive, got {penalty}"
            )));
        }
        Ok(RegionSet { parts, penalty })
    }

    pub fn single(part: ConvexPolygon, penalty: f64) -> Result<Self> {
        Self::new(vec![part], penalty)
    }

    pub fn empty(penalty: f64) -> Result<Self> {
        Self::new(Vec::new(), penalty)
    }

    pub fn is_empty(&self) -> bool {
        self.parts.is_empty()
    }

    pub fn contains(&self, p: Point2) -> bool {
        self.parts.iter().any(|poly| poly.contains(p))
    }

    pub fn segment_intersects(&self, a: Point2, b: Point2) -> bool {
        self.parts.iter().any(|poly| poly.segment_intersects(a, b))
    }

    /// Conservative Minkowski dilation of every part by `radius`.
    pub fn dilate(&self, radius: f64) -> RegionSet {
        RegionSet {
            parts: self.parts.iter().map(|p| p.dilate(radius)).collect(),
            penalty: self.penalty,
        }
    }

    /// Clips every part against `window`, dropping empty results.
    pub fn intersect_clip(&self, window: &ConvexPolygon) -> RegionSet {
        RegionSet {
            parts: self
                .parts
                .iter()
                .filter_map(|p| p.clip(window))
                .filter(|p| p.area() > EPS)
                .collect(),
            penalty: self.penalty,
        }
    }

    pub fn bounds(&self) -> Option<Bounds> {
        self.parts
            .iter()
            .map(|p| p.bounds())
            .reduce(|a, b| a.union(&b))
    }

    /// Sum of part areas (equals the union area when parts are disjoint).
    pub fn total_area(&self) -> f64 {
        self.parts.iter().map(|p| p.area()).sum()
    }
}

/// Penalised band of a scalar coordinate (joint angle in radians).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntervalSet {
    intervals: Vec<(f64, f64)>,
    pub penalty: f64,
}

impl IntervalSet {
    /// Sorts and merges overlapping intervals.
    pub fn new(mut intervals: Vec<(f64, f64)>, penalty: f64) -> Result<Self> {
        if !(penalty > 0.0 && penalty.is_finite()) {
            return Err(Error::InvalidRegion(format!(
                "penalty must be positive, got {penalty}"
            )));
        }
        if let Some(&(lo, hi)) = intervals
            .iter()
            .find(|(lo, hi)| !(lo.is_finite() && hi.is_finite() && lo < hi))
        {
            return Err(Error::InvalidRegion(format!("bad interval [{lo}, {hi}]")));
        }
        intervals.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut merged: Vec<(f64, f64)> = Vec::with_capacity(intervals.len());
        for (lo, hi) in intervals {
            match merged.last_mut() {
                Some(last) if lo <= last.1 => last.1 = last.1.max(hi),
                _ => merged.push((lo, hi)),
            }
        }
        Ok(IntervalSet {
            intervals: merged,
            penalty,
        })
    }

    pub fn intervals(&self) -> &[(f64, f64)] {
        &self.intervals
    }

    pub fn contains(&self, v: f64) -> bool {
        self.intervals.iter().any(|&(lo, hi)| v >= lo && v <= hi)
    }

    /// The band as horizontal strips in `(time, value)` space.
    pub fn as_strips(&self, t0: f64, t1: f64) -> RegionSet {
        RegionSet {
            parts: self
                .intervals
                .iter()
                .map(|&(lo, hi)| ConvexPolygon::rect(t0, lo, t1, hi).expect("valid strip"))
                .collect(),
            penalty: self.penalty,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit_square() -> ConvexPolygon {
        ConvexPolygon::rect(0.0, 0.0, 1.0, 1.0).unwrap()
    }

    fn region(p: ConvexPolygon) -> RegionSet {
        RegionSet::single(p, 1000.0).unwrap()
    }

    #[test]
    fn contains_examples() {
        let r = region(unit_square());
        assert!(r.contains(Point2::new(0.5, 0.5)));
        assert!(!r.contains(Point2::new(2.0, 0.0)));
        assert!(r.contains(Point2::new(1.0, 1.0)));
    }

    #[test]
    fn segment_examples() {
        let r = region(unit_square());
        assert!(r.segment_intersects(Point2::new(-1.0, 0.5), Point2::new(2.0, 0.5)));
        assert!(!r.segment_intersects(Point2::new(-1.0, 2.0), Point2::new(2.0, 2.0)));
        assert!(r.segment_intersects(Point2::new(-1.0, -1.0), Point2::new(0.0, 0.0)));
        // Degenerate segment.
        assert!(r.segment_intersects(Point2::new(0.5, 0.5), Point2::new(0.5, 0.5)));
        assert!(!r.segment_intersects(Point2::new(1.5, 0.5), Point2::new(1.5, 0.5)));
        // Parallel to an edge, just outside.
        assert!(!r.segment_intersects(Point2::new(-1.0, 1.001), Point2::new(2.0, 1.001)));
    }

    #[test]
    fn rejects_invalid_polygons() {
        assert!(ConvexPolygon::new(vec![Point2::new(0.0, 0.0), Point2::new(1.0, 0.0)]).is_err());
        // Clockwise.
        assert!(ConvexPolygon::new(vec![
            Point2::new(0.0, 0.0),
            Point2::new(0.0, 1.0),
            Point2::new(1.0, 1.0),
            Point2::new(1.0, 0.0)
        ])
        .is_err());
        // Collinear vertex.
        assert!(ConvexPolygon::new(vec![
            Point2::new(0.0, 0.0),
            Point2::new(0.5, 0.0),
            Point2::new(1.0, 0.0),
            Point2::new(1.0, 1.0)
        ])
        .is_err());
        assert!(RegionSet::new(vec![], 0.0).is_err());
    }

    #[test]
    fn bisect_examples() {
        let (l, r) = ConvexPolygon::rect(0.0, 0.0, 2.0, 1.0).unwrap().bisect().unwrap();
        assert_eq!(l, ConvexPolygon::rect(0.0, 0.0, 1.0, 1.0).unwrap().normalized_like(&l));
        assert!((l.area() - 1.0).abs() < 1e-12 && (r.area() - 1.0).abs() < 1e-12);
        assert!((r.bounds().min.x - 1.0).abs() < 1e-12);

        let (l, r) = unit_square().bisect().unwrap();
        assert!((l.bounds().width() - 0.5).abs() < 1e-12);
        assert!((l.bounds().height() - 1.0).abs() < 1e-12);
        assert!((r.bounds().min.x - 0.5).abs() < 1e-12);

        let tri = ConvexPolygon::new(vec![
            Point2::new(0.0, 0.0),
            Point2::new(4.0, 0.0),
            Point2::new(0.0, 2.0),
        ])
        .unwrap();
        let (l, r) = tri.bisect().unwrap();
        assert!((l.area() - 3.0).abs() < 1e-12);
        assert!((r.area() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn bisect_tall_cuts_y() {
        let (lo, hi) = ConvexPolygon::rect(0.0, 0.0, 1.0, 3.0).unwrap().bisect().unwrap();
        assert!((lo.bounds().max.y - 1.5).abs() < 1e-12);
        assert!((hi.bounds().min.y - 1.5).abs() < 1e-12);
    }

    #[test]
    fn dilate_examples() {
        let r = region(unit_square());
        let d0 = r.dilate(0.0);
        assert_eq!(d0, r);
        let d = r.dilate(0.5);
        assert!(d.contains(Point2::new(1.4, 0.5)));
        assert!(d.contains(Point2::new(1.3, 1.3)));
        assert!(!d.contains(Point2::new(1.6, 0.5)));
        // Over-approximation is bounded: corner tip at radius / cos(step/2).
        assert!(!d.contains(Point2::new(1.37, 1.37)));
    }

    #[test]
    fn clip_examples() {
        let sq = unit_square();
        let r = region(sq.clone());
        let same = r.intersect_clip(&sq);
        assert_eq!(same.parts.len(), 1);
        assert!((same.parts[0].area() - 1.0).abs() < 1e-12);

        let far = ConvexPolygon::rect(5.0, 5.0, 6.0, 6.0).unwrap();
        assert!(r.intersect_clip(&far).is_empty());

        let big = region(ConvexPolygon::rect(0.0, 0.0, 2.0, 2.0).unwrap());
        let shifted = ConvexPolygon::rect(1.5, 1.5, 2.5, 2.5).unwrap();
        let c = big.intersect_clip(&shifted);
        assert_eq!(c.parts.len(), 1);
        assert!((c.parts[0].area() - 0.25).abs() < 1e-12);
    }

    #[test]
    fn interval_set_normalizes() {
        let s = IntervalSet::new(vec![(2.0, 3.0), (0.0, 1.0), (0.5, 1.5)], 10.0).unwrap();
        assert_eq!(s.intervals(), &[(0.0, 1.5), (2.0, 3.0)]);
        assert!(s.contains(1.5));
        assert!(!s.contains(1.7));
        assert!(IntervalSet::new(vec![(1.0, 1.0)], 10.0).is_err());
    }

    #[test]
    fn centroid_and_distance() {
        let c = unit_square().centroid();
        assert!((c.x - 0.5).abs() < 1e-12 && (c.y - 0.5).abs() < 1e-12);
        assert!((unit_square().distance_to(Point2::new(2.0, 0.5)) - 1.0).abs() < 1e-12);
        assert_eq!(unit_square().distance_to(Point2::new(0.2, 0.5)), 0.0);
    }

    impl ConvexPolygon {
        /// Rotates the vertex list so it starts where `other` starts, for
        /// order-insensitive comparisons in tests.
        fn normalized_like(&self, other: &ConvexPolygon) -> ConvexPolygon {
            let start = other.vertices[0];
            let k = self
                .vertices
                .iter()
                .position(|p| p.dist(start) < 1e-12)
                .unwrap_or(0);
            let mut v = self.vertices.clone();
            v.rotate_left(k);
            ConvexPolygon { vertices: v }
        }
    }
}
