//! Search for the first penalised subset: halve the barrier toward the
//! relaxed trajectory, then grow the kept piece until it touches it.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{ConvexPolygon, RegionSet};
use crate::homotopy::{collides, divides, Anchors, Trajectory};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FindSb1Config {
    /// Dilation radius of one inflation step.
    pub epsilon: f64,
    pub max_halvings: usize,
    pub max_inflations: usize,
}

impl Default for FindSb1Config {
    fn default() -> Self {
        FindSb1Config {
            epsilon: 0.25,
            max_halvings: 12,
            max_inflations: 20,
        }
    }
}

impl FindSb1Config {
    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon > 0.0) || self.max_halvings == 0 || self.max_inflations == 0 {
            return Err(Error::config(
                "find_sb1",
                "epsilon, max_halvings and max_inflations must be positive",
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sb1 {
    pub region: RegionSet,
    pub halvings: usize,
    pub inflations: usize,
}

/// Finds a subset of the single-part `barrier` that separates `source`
/// from `relaxed` and intersects `relaxed`.
pub fn find_sb1(
    source: &Trajectory,
    relaxed: &Trajectory,
    barrier: &RegionSet,
    anchors: Anchors,
    cfg: &FindSb1Config,
) -> Result<Sb1> {
    cfg.validate()?;
    let [part] = barrier.parts.as_slice() else {
        return Err(Error::PreconditionViolated(format!(
            "barrier has {} parts; the subset search needs exactly one",
            barrier.parts.len()
        )));
    };
    if !collides(relaxed, barrier) {
        return Err(Error::PreconditionViolated(
            "relaxed trajectory misses the barrier; source and target share a class".into(),
        ));
    }
    if collides(source, barrier) {
        return Err(Error::PreconditionViolated(
            "source trajectory collides with the barrier".into(),
        ));
    }
    let wrap = |p: ConvexPolygon| RegionSet {
        parts: vec![p],
        penalty: barrier.penalty,
    };
    let hits = |p: &ConvexPolygon| collides(relaxed, &wrap(p.clone()));

    let (kept, halvings) = halve(part, cfg.max_halvings, &hits, &|p| {
        divides(source, relaxed, &wrap(p.clone()), anchors)
    })?;
    let (region, inflations) = inflate(wrap(kept), barrier, relaxed, cfg)?;

    if !divides(source, relaxed, &region, anchors) || !collides(relaxed, &region) {
        return Err(Error::BudgetExhausted(
            "inflated subset no longer separates the trajectories".into(),
        ));
    }
    Ok(Sb1 {
        region,
        halvings,
        inflations,
    })
}

/// Halving loop. Keeps the low half while the relaxed path still crosses
/// it, stops at the low half once it separates the paths, otherwise moves
/// to the high half. Returns the kept piece and the number of cuts.
fn halve(
    start: &ConvexPolygon,
    max_halvings: usize,
    hits: &dyn Fn(&ConvexPolygon) -> bool,
    separates: &dyn Fn(&ConvexPolygon) -> bool,
) -> Result<(ConvexPolygon, usize)> {
    let mut current = start.clone();
    for cut in 1..=max_halvings {
        let (low, high) = current.bisect()?;
        debug_assert!(low.area() < current.area() && high.area() < current.area());
        if hits(&low) {
            current = low;
        } else if separates(&low) {
            return Ok((low, cut));
        } else if hits(&high) {
            current = high;
        } else {
            return Ok((high, cut));
        }
    }
    Err(Error::BudgetExhausted(format!(
        "no separating piece after {max_halvings} halvings"
    )))
}

/// Grows `region` by `epsilon`-dilations clipped to `barrier` until it
/// intersects `relaxed`. Returns the grown region and the number of
/// dilations applied (zero when it already intersects).
pub fn inflate(
    mut region: RegionSet,
    barrier: &RegionSet,
    relaxed: &Trajectory,
    cfg: &FindSb1Config,
) -> Result<(RegionSet, usize)> {
    let mut steps = 0;
    while !collides(relaxed, &region) {
        if steps == cfg.max_inflations {
            return Err(Error::BudgetExhausted(format!(
                "subset still misses the relaxed trajectory after {steps} inflations"
            )));
        }
        let grown = region.dilate(cfg.epsilon);
        let mut parts = Vec::new();
        for window in &barrier.parts {
            parts.extend(grown.intersect_clip(window).parts);
        }
        region = RegionSet {
            parts,
            penalty: region.penalty,
        };
        steps += 1;
    }
    Ok((region, steps))
}
