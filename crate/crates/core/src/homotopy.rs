//! Trajectory topology: the collision oracle, crossing-parity class
//! signatures, arc-length resampling and the sup-over-time ground metric.
//!
//! A class signature carries one bit per barrier part. The bit is the parity
//! of crossings between the anchored trajectory and a ray cast straight down
//! from the part's centroid. Two start-to-goal paths that avoid a convex part
//! are homotopic around it exactly when their parities agree (Z2 homology of
//! the punctured plane).

use std::fmt;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Point2, RegionSet};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    states: Vec<Point2>,
    raw_states: Option<Vec<Vec<f64>>>,
}

impl Trajectory {
    pub fn new(states: Vec<Point2>) -> Result<Self> {
        Self::with_raw(states, None)
    }

    pub fn with_raw(states: Vec<Point2>, raw_states: Option<Vec<Vec<f64>>>) -> Result<Self> {
        if states.len() < 2 {
            return Err(Error::InvalidTrajectory(format!(
                "need at least 2 states, got {}",
                states.len()
            )));
        }
        if states.iter().any(|p| !p.is_finite()) {
            return Err(Error::InvalidTrajectory("non-finite state".into()));
        }
        if let Some(raw) = &raw_states {
            if raw.len() != states.len() {
                return Err(Error::InvalidTrajectory(format!(
                    "{} raw states for {} positions",
                    raw.len(),
                    states.len()
                )));
            }
        }
        Ok(Trajectory { states, raw_states })
    }

    pub fn states(&self) -> &[Point2] {
        &self.states
    }

    pub fn raw_states(&self) -> Option<&[Vec<f64>]> {
        self.raw_states.as_deref()
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn first(&self) -> Point2 {
        self.states[0]
    }

    pub fn last(&self) -> Point2 {
        self.states[self.states.len() - 1]
    }

    /// Total polyline length.
    pub fn arc_length(&self) -> f64 {
        self.states.windows(2).map(|w| w[0].dist(w[1])).sum()
    }

    pub fn segments(&self) -> impl Iterator<Item = (Point2, Point2)> + '_ {
        self.states.windows(2).map(|w| (w[0], w[1]))
    }

    /// Writes `t,x,y[,s0,s1,…]` rows.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(w);
        let raw_dim = self
            .raw_states
            .as_ref()
            .and_then(|r| r.first())
            .map_or(0, |r| r.len());
        let mut header = vec!["t".to_string(), "x".into(), "y".into()];
        header.extend((0..raw_dim).map(|i| format!("s{i}")));
        wtr.write_record(&header)?;
        for (t, p) in self.states.iter().enumerate() {
            let mut row = vec![t.to_string(), fmt_f64(p.x), fmt_f64(p.y)];
            if let Some(raw) = &self.raw_states {
                row.extend(raw[t].iter().map(|v| fmt_f64(*v)));
            }
            wtr.write_record(&row)?;
        }
        wtr.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(r: R) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(r);
        let mut states = Vec::new();
        let mut raw = Vec::new();
        for rec in rdr.records() {
            let rec = rec?;
            let vals = parse_row(&rec)?;
            if vals.len() < 3 {
                return Err(Error::InvalidTrajectory("row needs t,x,y".into()));
            }
            states.push(Point2::new(vals[1], vals[2]));
            raw.push(vals[3..].to_vec());
        }
        let raw = if raw.iter().all(|r| r.is_empty()) {
            None
        } else {
            Some(raw)
        };
        Trajectory::with_raw(states, raw)
    }
}

pub(crate) fn fmt_f64(v: f64) -> String {
    // `{}` on f64 is the shortest round-trip representation.
    format!("{v}")
}

fn parse_row(rec: &csv::StringRecord) -> Result<Vec<f64>> {
    rec.iter()
        .map(|s| {
            s.trim()
                .parse::<f64>()
                .map_err(|e| Error::InvalidTrajectory(format!("bad number `{s}`: {e}")))
        })
        .collect()
}

/// Writes a set of trajectories as `sample,t,x,y` rows.
pub fn write_trajectory_set<W: Write>(trajs: &[Trajectory], w: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record(["sample", "t", "x", "y"])?;
    for (i, traj) in trajs.iter().enumerate() {
        for (t, p) in traj.states().iter().enumerate() {
            wtr.write_record([i.to_string(), t.to_string(), fmt_f64(p.x), fmt_f64(p.y)])?;
        }
    }
    wtr.flush()?;
    Ok(())
}

pub fn read_trajectory_set<R: Read>(r: R) -> Result<Vec<Trajectory>> {
    let mut rdr = csv::Reader::from_reader(r);
    let mut groups: Vec<(u64, Vec<Point2>)> = Vec::new();
    for rec in rdr.records() {
        let vals = parse_row(&rec?)?;
        if vals.len() < 4 {
            return Err(Error::InvalidTrajectory("row needs sample,t,x,y".into()));
        }
        let id = vals[0] as u64;
        let p = Point2::new(vals[2], vals[3]);
        match groups.last_mut() {
            Some((last, pts)) if *last == id => pts.push(p),
            _ => groups.push((id, vec![p])),
        }
    }
    groups.into_iter().map(|(_, pts)| Trajectory::new(pts)).collect()
}

/// Per-part crossing parities; `false` reads as "right", `true` as "left".
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ClassSignature {
    pub side_bits: Vec<bool>,
}

impl ClassSignature {
    /// `L`/`R` per part, e.g. `"LR"`.
    pub fn label(&self) -> String {
        self.side_bits
            .iter()
            .map(|&b| if b { 'L' } else { 'R' })
            .collect()
    }
}

impl fmt::Display for ClassSignature {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.label())
    }
}

/// Fixed endpoints that every trajectory is extended to before its
/// signature is computed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Anchors {
    pub start: Point2,
    pub goal: Point2,
}

/// Collision oracle: does any segment of `traj` touch `region`?
pub fn collides(traj: &Trajectory, region: &RegionSet) -> bool {
    traj.segments().any(|(a, b)| region.segment_intersects(a, b))
}

/// Homotopy class signature of a non-colliding trajectory.
pub fn signature(traj: &Trajectory, barriers: &RegionSet, anchors: Anchors) -> Result<ClassSignature> {
    if collides(traj, barriers) {
        return Err(Error::CollidingTrajectory);
    }
    Ok(parity_signature(traj, barriers, anchors))
}

/// Crossing parities without the non-collision precondition. Meaningful as
/// long as the trajectory stays clear of every part's centroid.
pub fn parity_signature(traj: &Trajectory, barriers: &RegionSet, anchors: Anchors) -> ClassSignature {
    let mut path = Vec::with_capacity(traj.len() + 2);
    path.push(anchors.start);
    path.extend_from_slice(traj.states());
    path.push(anchors.goal);
    let side_bits = barriers
        .parts
        .iter()
        .map(|part| ray_crossing_parity(&path, part.centroid()))
        .collect();
    ClassSignature { side_bits }
}

/// Parity of crossings of the polyline with the downward vertical ray from
/// `c`. Half-open on x so vertices lying on the ray are counted once.
fn ray_crossing_parity(path: &[Point2], c: Point2) -> bool {
    let mut parity = false;
    for w in path.windows(2) {
        let (p, q) = (w[0], w[1]);
        if (p.x < c.x) != (q.x < c.x) {
            let y = p.y + (c.x - p.x) * (q.y - p.y) / (q.x - p.x);
            if y < c.y {
                parity = !parity;
            }
        }
    }
    parity
}

/// `true` when both trajectories lie in the same class w.r.t. `barriers`.
pub fn same_class(t1: &Trajectory, t2: &Trajectory, barriers: &RegionSet, anchors: Anchors) -> Result<bool> {
    Ok(signature(t1, barriers, anchors)? == signature(t2, barriers, anchors)?)
}

/// Homotopy-class checker used when searching for the first curriculum set:
/// `true` if `region` puts the two trajectories in different classes.
/// Unlike [`same_class`] this tolerates grazing contact with the region.
pub fn divides(t1: &Trajectory, t2: &Trajectory, region: &RegionSet, anchors: Anchors) -> bool {
    parity_signature(t1, region, anchors) != parity_signature(t2, region, anchors)
}

/// Arc-length-uniform resampling to exactly `length` states. Raw state
/// vectors are not carried over.
pub fn resample(traj: &Trajectory, length: usize) -> Result<Trajectory> {
    if length < 2 {
        return Err(Error::InvalidTrajectory(format!(
            "resample length must be >= 2, got {length}"
        )));
    }
    let pts = traj.states();
    let mut cum = Vec::with_capacity(pts.len());
    cum.push(0.0);
    for w in pts.windows(2) {
        cum.push(cum[cum.len() - 1] + w[0].dist(w[1]));
    }
    let total = cum[cum.len() - 1];
    if total == 0.0 {
        return Trajectory::new(vec![pts[0]; length]);
    }
    let mut out = Vec::with_capacity(length);
    let mut seg = 0;
    for i in 0..length {
        if i == length - 1 {
            out.push(pts[pts.len() - 1]);
            break;
        }
        let s = total * i as f64 / (length - 1) as f64;
        while seg + 1 < cum.len() - 1 && cum[seg + 1] < s {
            seg += 1;
        }
        let span = cum[seg + 1] - cum[seg];
        let t = if span > 0.0 { (s - cum[seg]) / span } else { 0.0 };
        out.push(pts[seg].lerp(pts[seg + 1], t.clamp(0.0, 1.0)));
    }
    Trajectory::new(out)
}

/// Sup over time of the Euclidean distance between matched states.
pub fn traj_distance(t1: &Trajectory, t2: &Trajectory) -> Result<f64> {
    if t1.len() != t2.len() {
        return Err(Error::LengthMismatch(t1.len(), t2.len()));
    }
    Ok(t1
        .states()
        .iter()
        .zip(t2.states())
        .map(|(a, b)| a.dist(*b))
        .fold(0.0, f64::max))
}
