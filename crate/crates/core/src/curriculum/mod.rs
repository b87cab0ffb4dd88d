//! Ease-in-ease-out transfer: a relaxed stage without the barrier penalty,
//! then a curriculum that reintroduces it by weight or by region.

mod sb1;
mod transfer;

use serde::{Deserialize, Serialize};

pub use sb1::{find_sb1, inflate, FindSb1Config, Sb1};
pub use transfer::{
    baseline_transfer, ease_in_ease_out, mean_trajectory, relax_stage, run_curriculum, transfer,
    BarrierStages, CurriculumRun, Method, Plan, StageRecord, TransferJob, TransferOutcome,
    TransferReport,
};

use crate::envs::Barrier;
use crate::error::{Error, Result};
use crate::geometry::{Bounds, Point2, RegionSet};

/// Probe resolution used to check subset relations between regions.
pub const PROBE_GRID: usize = 200;

/// Validated stage list for one curriculum.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Schedule {
    /// Penalty weights `0 < α_1 < … < α_K = 1` on the full barrier.
    RewardWeight { alphas: Vec<f64> },
    /// Nested penalised subsets `S_1 ⊂ … ⊂ S_K = S_b` at full weight.
    BarrierSet { subsets: Vec<RegionSet> },
}

impl Schedule {
    pub fn len(&self) -> usize {
        match self {
            Schedule::RewardWeight { alphas } => alphas.len(),
            Schedule::BarrierSet { subsets } => subsets.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Checks the ordering contract against the full barrier.
    pub fn validate(&self, barrier: &Barrier) -> Result<()> {
        match self {
            Schedule::RewardWeight { alphas } => validate_alphas(alphas),
            Schedule::BarrierSet { subsets } => {
                let Some(full) = barrier.as_regions() else {
                    return Err(Error::InvalidSchedule(
                        "barrier-set schedules need a polygonal barrier".into(),
                    ));
                };
                validate_subsets(subsets, full)
            }
        }
    }
}

pub fn validate_alphas(alphas: &[f64]) -> Result<()> {
    if alphas.is_empty() {
        return Err(Error::InvalidSchedule("no stages".into()));
    }
    if alphas.iter().any(|a| !(*a > 0.0 && *a <= 1.0)) {
        return Err(Error::InvalidSchedule("every alpha must lie in (0, 1]".into()));
    }
    if alphas.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidSchedule("alphas must be strictly increasing".into()));
    }
    if *alphas.last().expect("non-empty") != 1.0 {
        return Err(Error::InvalidSchedule("last alpha must be 1".into()));
    }
    Ok(())
}

fn probe_points(full: &RegionSet, subsets: &[RegionSet]) -> Vec<Point2> {
    let bounds = subsets
        .iter()
        .filter_map(RegionSet::bounds)
        .fold(full.bounds(), |acc: Option<Bounds>, b| {
            Some(acc.map_or(b, |a| a.union(&b)))
        });
    bounds
        .map(|b| b.expand(0.05 * b.width().max(b.height())).probe_grid(PROBE_GRID))
        .unwrap_or_default()
}

/// Nesting, containment in the barrier, and equality of the last stage
/// with the barrier, all on a probe grid.
pub fn validate_subsets(subsets: &[RegionSet], full: &RegionSet) -> Result<()> {
    if subsets.is_empty() {
        return Err(Error::InvalidSchedule("no stages".into()));
    }
    let probes = probe_points(full, subsets);
    for (k, s) in subsets.iter().enumerate() {
        if s.is_empty() {
            return Err(Error::InvalidSchedule(format!("stage {} is empty", k + 1)));
        }
        if let Some(p) = probes.iter().find(|p| s.contains(**p) && !full.contains(**p)) {
            return Err(Error::InvalidSchedule(format!(
                "stage {} leaves the barrier at ({}, {})",
                k + 1,
                p.x,
                p.y
            )));
        }
    }
    for (k, w) in subsets.windows(2).enumerate() {
        if let Some(p) = probes.iter().find(|p| w[0].contains(**p) && !w[1].contains(**p)) {
            return Err(Error::InvalidSchedule(format!(
                "stage {} is not contained in stage {} at ({}, {})",
                k + 1,
                k + 2,
                p.x,
                p.y
            )));
        }
    }
    let last = subsets.last().expect("non-empty");
    if let Some(p) = probes.iter().find(|p| full.contains(**p) != last.contains(**p)) {
        return Err(Error::InvalidSchedule(format!(
            "last stage differs from the barrier at ({}, {})",
            p.x, p.y
        )));
    }
    Ok(())
}

/// Nested stages from `first` out to `full`: intermediate stage `k` of `K`
/// is `first` dilated by `H · (k−1)/(K−1)` and clipped to `full`, where `H`
/// is the Hausdorff distance from `first` to `full`. Equal steps keep every
/// stage boundary the same distance from the previous one.
pub fn auto_barrier_stages(first: &RegionSet, full: &RegionSet, stages: usize) -> Result<Vec<RegionSet>> {
    if stages == 0 {
        return Err(Error::InvalidSchedule("need at least one stage".into()));
    }
    if stages == 1 {
        return Ok(vec![full.clone()]);
    }
    let reach = first
        .parts
        .iter()
        .flat_map(|a| full.parts.iter().map(move |b| (a, b)))
        .map(|(a, b)| b.hausdorff_from(a))
        .fold(0.0, f64::max);
    let mut out = vec![first.clone()];
    for k in 2..stages {
        let radius = reach * (k - 1) as f64 / (stages - 1) as f64;
        let grown = first.dilate(radius);
        let mut parts = Vec::new();
        for window in &full.parts {
            parts.extend(grown.intersect_clip(window).parts);
        }
        out.push(RegionSet {
            parts,
            penalty: full.penalty,
        });
    }
    out.push(full.clone());
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::ConvexPolygon;

    fn rect(x0: f64, x1: f64) -> RegionSet {
        RegionSet::single(ConvexPolygon::rect(x0, 9.0, x1, 11.0).unwrap(), 1000.0).unwrap()
    }

    #[test]
    fn alpha_rules() {
        assert!(validate_alphas(&[0.001, 0.003, 0.01, 0.03, 0.1, 0.3, 1.0]).is_ok());
        assert!(validate_alphas(&[1.0]).is_ok());
        assert!(validate_alphas(&[0.5, 0.5, 1.0]).is_err());
        assert!(validate_alphas(&[0.1, 0.9]).is_err());
        assert!(validate_alphas(&[0.0, 1.0]).is_err());
        assert!(validate_alphas(&[]).is_err());
    }

    #[test]
    fn subset_rules() {
        let full = rect(-3.5, 3.5);
        assert!(validate_subsets(&[rect(-2.0, 2.0), full.clone()], &full).is_ok());
        assert!(validate_subsets(&[rect(-2.0, 2.0), rect(-1.0, 3.5), full.clone()], &full).is_err());
        assert!(validate_subsets(&[rect(-2.0, 2.0)], &full).is_err());
        assert!(validate_subsets(&[rect(-4.0, 2.0), full.clone()], &full).is_err());
    }

    #[test]
    fn auto_stages_are_nested() {
        let full = rect(-3.5, 3.5);
        let first = rect(-0.5, 0.2);
        let stages = auto_barrier_stages(&first, &full, 3).unwrap();
        assert_eq!(stages.len(), 3);
        validate_subsets(&stages, &full).unwrap();
        assert!(stages[1].total_area() > first.total_area());
        assert!(stages[1].total_area() < full.total_area());
    }
}
