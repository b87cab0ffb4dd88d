//! Bottleneck (W∞) distance between equal-size empirical trajectory
//! distributions.
//!
//! With uniform weights on `n` samples each, the optimal coupling can be
//! taken to be a permutation, so W∞ is the bottleneck assignment value:
//! the smallest threshold `d` for which the bipartite graph of pairs within
//! `d` has a perfect matching.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::homotopy::{resample, traj_distance, Trajectory};

/// Uniformly weighted samples, all resampled to a common length.
#[derive(Debug, Clone, PartialEq)]
pub struct EmpiricalDistribution {
    samples: Vec<Trajectory>,
}

impl EmpiricalDistribution {
    /// Resamples every trajectory to `length` states.
    pub fn new(samples: &[Trajectory], length: usize) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::InvalidTrajectory("empty distribution".into()));
        }
        let samples = samples
            .iter()
            .map(|t| resample(t, length))
            .collect::<Result<Vec<_>>>()?;
        Ok(EmpiricalDistribution { samples })
    }

    /// Wraps samples that already share one length.
    pub fn from_aligned(samples: Vec<Trajectory>) -> Result<Self> {
        let Some(first) = samples.first() else {
            return Err(Error::InvalidTrajectory("empty distribution".into()));
        };
        let len = first.len();
        if let Some(t) = samples.iter().find(|t| t.len() != len) {
            return Err(Error::LengthMismatch(len, t.len()));
        }
        Ok(EmpiricalDistribution { samples })
    }

    pub fn samples(&self) -> &[Trajectory] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }
}

/// Result of a bottleneck assignment: the value and `assignment[i] = j`
/// pairing sample `i` of the first distribution with `j` of the second.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BottleneckMatching {
    pub value: f64,
    pub assignment: Vec<usize>,
}

/// Exact W∞ between two equal-size empirical distributions.
pub fn w_infinity(mu: &EmpiricalDistribution, nu: &EmpiricalDistribution) -> Result<BottleneckMatching> {
    if mu.len() != nu.len() {
        return Err(Error::UnequalSupport(mu.len(), nu.len()));
    }
    let n = mu.len();
    let mut cost = vec![vec![0.0; n]; n];
    for (i, a) in mu.samples.iter().enumerate() {
        for (j, b) in nu.samples.iter().enumerate() {
            cost[i][j] = traj_distance(a, b)?;
        }
    }
    Ok(bottleneck_assignment(&cost))
}

/// Minimises the largest matched cost over perfect matchings of a square
/// cost matrix by binary search over the sorted distinct entries.
pub fn bottleneck_assignment(cost: &[Vec<f64>]) -> BottleneckMatching {
    let n = cost.len();
    if n == 0 {
        return BottleneckMatching {
            value: 0.0,
            assignment: Vec::new(),
        };
    }
    let mut values: Vec<f64> = cost.iter().flatten().copied().collect();
    values.sort_by(f64::total_cmp);
    values.dedup();

    let (mut lo, mut hi) = (0, values.len() - 1);
    let mut best = perfect_matching(cost, values[hi]).expect("complete graph has a perfect matching");
    while lo < hi {
        let mid = (lo + hi) / 2;
        match perfect_matching(cost, values[mid]) {
            Some(m) => {
                best = m;
                hi = mid;
            }
            None => lo = mid + 1,
        }
    }
    BottleneckMatching {
        value: values[lo],
        assignment: best,
    }
}

/// Hopcroft–Karp on the graph of pairs with cost `<= threshold`. Returns the
/// row-to-column assignment when a perfect matching exists.
fn perfect_matching(cost: &[Vec<f64>], threshold: f64) -> Option<Vec<usize>> {
    const NIL: usize = usize::MAX;
    let n = cost.len();
    let adj: Vec<Vec<usize>> = cost
        .iter()
        .map(|row| (0..n).filter(|&j| row[j] <= threshold).collect())
        .collect();
    let mut match_row = vec![NIL; n];
    let mut match_col = vec![NIL; n];
    let mut dist = vec![0usize; n];

    loop {
        // Layered BFS from free rows.
        let mut queue = std::collections::VecDeque::new();
        for r in 0..n {
            if match_row[r] == NIL {
                dist[r] = 0;
                queue.push_back(r);
            } else {
                dist[r] = usize::MAX;
            }
        }
        let mut found = false;
        while let Some(r) = queue.pop_front() {
            for &c in &adj[r] {
                let r2 = match_col[c];
                if r2 == NIL {
                    found = true;
                } else if dist[r2] == usize::MAX {
                    dist[r2] = dist[r] + 1;
                    queue.push_back(r2);
                }
            }
        }
        if !found {
            break;
        }
        for r in 0..n {
            if match_row[r] == NIL {
                augment(r, &adj, &mut match_row, &mut match_col, &mut dist);
            }
        }
    }

    if match_row.iter().all(|&c| c != NIL) {
        Some(match_row)
    } else {
        None
    }
}

fn augment(
    r: usize,
    adj: &[Vec<usize>],
    match_row: &mut [usize],
    match_col: &mut [usize],
    dist: &mut [usize],
) -> bool {
    for &c in &adj[r] {
        let r2 = match_col[c];
        let ok = r2 == usize::MAX
            || (dist[r2] == dist[r] + 1 && augment(r2, adj, match_row, match_col, dist));
        if ok {
            match_row[r] = c;
            match_col[c] = r;
            return true;
        }
    }
    dist[r] = usize::MAX;
    false
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Point2;

    fn line(y: f64) -> Trajectory {
        Trajectory::new(vec![Point2::new(0.0, y), Point2::new(1.0, y)]).unwrap()
    }

    /// Minimax over all permutations.
    fn brute_force(cost: &[Vec<f64>]) -> f64 {
        fn rec(cost: &[Vec<f64>], row: usize, used: &mut Vec<bool>, cur: f64, best: &mut f64) {
            if row == cost.len() {
                *best = best.min(cur);
                return;
            }
            for j in 0..cost.len() {
                if !used[j] {
                    used[j] = true;
                    rec(cost, row + 1, used, cur.max(cost[row][j]), best);
                    used[j] = false;
                }
            }
        }
        let mut best = f64::INFINITY;
        rec(cost, 0, &mut vec![false; cost.len()], 0.0, &mut best);
        best
    }

    #[test]
    fn identical_sets_are_zero() {
        let mu = EmpiricalDistribution::new(&[line(0.0), line(1.0), line(2.0)], 5).unwrap();
        let nu = EmpiricalDistribution::new(&[line(2.0), line(0.0), line(1.0)], 5).unwrap();
        assert_eq!(w_infinity(&mu, &nu).unwrap().value, 0.0);
    }

    #[test]
    fn singletons() {
        let mu = EmpiricalDistribution::new(&[line(0.0)], 4).unwrap();
        let nu = EmpiricalDistribution::new(&[line(0.3)], 4).unwrap();
        let m = w_infinity(&mu, &nu).unwrap();
        assert!((m.value - 0.3).abs() < 1e-12);
        assert_eq!(m.assignment, vec![0]);
    }

    #[test]
    fn three_by_three_matches_permutations() {
        let cost = vec![
            vec![4.0, 1.0, 3.0],
            vec![2.0, 0.5, 5.0],
            vec![3.0, 2.0, 2.5],
        ];
        // Permutation maxima: (0,1,2)->4, (0,2,1)->5, (1,0,2)->2.5,
        // (1,2,0)->5, (2,0,1)->3, (2,1,0)->3. Minimum is 2.5.
        assert_eq!(brute_force(&cost), 2.5);
        let m = bottleneck_assignment(&cost);
        assert_eq!(m.value, 2.5);
        assert_eq!(m.assignment, vec![1, 0, 2]);
    }

    #[test]
    fn unequal_support() {
        let mu = EmpiricalDistribution::new(&[line(0.0)], 4).unwrap();
        let nu = EmpiricalDistribution::new(&[line(0.0), line(1.0)], 4).unwrap();
        assert!(matches!(w_infinity(&mu, &nu), Err(Error::UnequalSupport(1, 2))));
    }

    #[test]
    fn matching_value_is_realized() {
        let cost = vec![
            vec![0.9, 0.1, 0.5, 0.7],
            vec![0.2, 0.8, 0.3, 0.6],
            vec![0.4, 0.6, 0.9, 0.1],
            vec![0.5, 0.3, 0.2, 0.8],
        ];
        let m = bottleneck_assignment(&cost);
        let realized = m
            .assignment
            .iter()
            .enumerate()
            .map(|(i, &j)| cost[i][j])
            .fold(0.0, f64::max);
        assert_eq!(realized, m.value);
        assert_eq!(m.value, brute_force(&cost));
    }
}
