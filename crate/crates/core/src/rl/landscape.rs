//! Monte-Carlo estimate of the REINFORCE loss over a grid of two-parameter
//! linear policies.
//!
//! The per-episode loss is `mean_t G_t · ln π(a_t | s_t)`. While
//! `log_std > −ln √(2π)` every density is below one, so `ln π < 0` and the
//! loss is high where returns are low.

use std::io::Write;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::policy::{Arch, PolicyParams};
use super::train::{derive_seed, rewards_to_go};
use crate::envs::{rollout, Env, NoiseMode, RewardSpec};
use crate::error::{Error, Result};
use crate::homotopy::fmt_f64;

const LANDSCAPE_STREAM: u64 = 3;
const LOG_SQRT_2PI: f64 = 0.918_938_533_204_672_7;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LandscapeConfig {
    pub lo: f64,
    pub hi: f64,
    pub bucket: f64,
    pub samples_per_cell: usize,
    pub seed: u64,
    pub noise: NoiseMode,
    /// Fixed action log standard deviation of every grid policy.
    pub log_std: f64,
}

impl Default for LandscapeConfig {
    fn default() -> Self {
        LandscapeConfig {
            lo: -1.0,
            hi: 1.3,
            bucket: 0.1,
            samples_per_cell: 10,
            seed: 0,
            noise: NoiseMode::Frozen,
            log_std: -0.85,
        }
    }
}

impl LandscapeConfig {
    /// Bucket centres `lo, lo + bucket, …, hi` (both ends included).
    pub fn axis(&self) -> Result<Vec<f64>> {
        if !(self.bucket > 0.0 && self.hi > self.lo) {
            return Err(Error::config("landscape.bucket", "need bucket > 0 and hi > lo"));
        }
        if !(self.log_std > -LOG_SQRT_2PI && self.log_std.is_finite()) {
            return Err(Error::config(
                "landscape.log_std",
                "must exceed -ln sqrt(2 pi) so that the loss keeps its sign",
            ));
        }
        if self.samples_per_cell == 0 {
            return Err(Error::config("landscape.samples_per_cell", "must be at least 1"));
        }
        let n = ((self.hi - self.lo) / self.bucket).round() as usize + 1;
        Ok((0..n).map(|i| self.lo + i as f64 * self.bucket).collect())
    }
}

/// `losses[i][j]` and `returns[i][j]` are the mean loss and mean return at
/// `θ = (axis[i], axis[j])`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LandscapeGrid {
    pub axis: Vec<f64>,
    pub losses: Vec<Vec<f64>>,
    pub returns: Vec<Vec<f64>>,
}

fn arg_best(axis: &[f64], values: &[Vec<f64>], better: impl Fn(f64, f64) -> bool) -> (f64, f64) {
    let mut best = (values[0][0], 0, 0);
    for (i, row) in values.iter().enumerate() {
        for (j, &v) in row.iter().enumerate() {
            if better(v, best.0) {
                best = (v, i, j);
            }
        }
    }
    (axis[best.1], axis[best.2])
}

impl LandscapeGrid {
    /// Grid point with the smallest loss (first in row-major order on ties).
    pub fn argmin(&self) -> (f64, f64) {
        arg_best(&self.axis, &self.losses, |v, b| v < b)
    }

    /// Grid point with the largest mean return (first in row-major order on
    /// ties). The surrogate loss scales with episode length and sampled
    /// log-densities, so optima are located by return.
    pub fn argmax_return(&self) -> (f64, f64) {
        arg_best(&self.axis, &self.returns, |v, b| v > b)
    }

    /// Bilinear interpolation, clamped to the grid.
    pub fn interpolate(&self, t1: f64, t2: f64) -> f64 {
        let n = self.axis.len();
        let step = if n > 1 { self.axis[1] - self.axis[0] } else { 1.0 };
        let locate = |t: f64| -> (usize, f64) {
            let u = ((t - self.axis[0]) / step).clamp(0.0, (n - 1) as f64);
            let i = (u.floor() as usize).min(n.saturating_sub(2));
            (i, u - i as f64)
        };
        if n == 1 {
            return self.losses[0][0];
        }
        let (i, fi) = locate(t1);
        let (j, fj) = locate(t2);
        let l = &self.losses;
        l[i][j] * (1.0 - fi) * (1.0 - fj)
            + l[i + 1][j] * fi * (1.0 - fj)
            + l[i][j + 1] * (1.0 - fi) * fj
            + l[i + 1][j + 1] * fi * fj
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        writeln!(f, "theta1,theta2,mean_loss")?;
        for (i, row) in self.losses.iter().enumerate() {
            for (j, v) in row.iter().enumerate() {
                writeln!(
                    f,
                    "{},{},{}",
                    fmt_f64(self.axis[i]),
                    fmt_f64(self.axis[j]),
                    fmt_f64(*v)
                )?;
            }
        }
        f.flush()?;
        Ok(())
    }
}

/// Largest interpolated loss on the straight segment `a → b`.
pub fn segment_max(grid: &LandscapeGrid, a: (f64, f64), b: (f64, f64), samples: usize) -> f64 {
    (0..=samples)
        .map(|k| {
            let s = k as f64 / samples.max(1) as f64;
            grid.interpolate(a.0 + s * (b.0 - a.0), a.1 + s * (b.1 - a.1))
        })
        .fold(f64::NEG_INFINITY, f64::max)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Landscape {
    /// Source task (its own reward, barrier penalised).
    pub source: LandscapeGrid,
    /// Target task with the barrier penalised.
    pub barrier: LandscapeGrid,
    /// Target task with the penalty removed.
    pub no_barrier: LandscapeGrid,
    pub theta_source: (f64, f64),
    pub theta_target: (f64, f64),
    pub hump_barrier: f64,
    pub hump_no_barrier: f64,
}

impl Landscape {
    /// Barrier hump over the no-barrier hump; only meaningful when the
    /// latter is positive.
    pub fn hump_ratio(&self) -> f64 {
        self.hump_barrier / self.hump_no_barrier
    }
}

/// Mean loss and mean return of a fixed policy over `cfg.samples_per_cell`
/// episodes; sample `k` uses the same seed in every cell.
pub fn cell_loss(env: &Env, reward: &RewardSpec, policy: &PolicyParams, cfg: &LandscapeConfig) -> Result<(f64, f64)> {
    let gamma = env.spec().discount;
    let mut total = 0.0;
    let mut ret = 0.0;
    for k in 0..cfg.samples_per_cell as u64 {
        let ep = rollout(env, policy, reward, derive_seed(cfg.seed, LANDSCAPE_STREAM, k), cfg.noise)?;
        let g = rewards_to_go(&ep.rewards, gamma);
        let mut acc = 0.0;
        for ((obs, act), gt) in ep.observations.iter().zip(&ep.actions).zip(&g) {
            acc += gt * policy.log_prob(obs, act)?;
        }
        total += acc / ep.len().max(1) as f64;
        ret += ep.ret;
    }
    let n = cfg.samples_per_cell as f64;
    Ok((total / n, ret / n))
}

fn scan(env: &Env, reward: &RewardSpec, cfg: &LandscapeConfig, axis: &[f64]) -> Result<LandscapeGrid> {
    let cells: Vec<(usize, usize)> = (0..axis.len())
        .flat_map(|i| (0..axis.len()).map(move |j| (i, j)))
        .collect();
    let values: Vec<(f64, f64)> = cells
        .par_iter()
        .map(|&(i, j)| {
            let policy = PolicyParams::new(
                Arch::Linear { input: 2, output: 1 },
                vec![axis[i], axis[j]],
                vec![cfg.log_std],
            )?;
            cell_loss(env, reward, &policy, cfg)
        })
        .collect::<Result<_>>()?;
    let n = axis.len();
    Ok(LandscapeGrid {
        axis: axis.to_vec(),
        losses: values.chunks(n).map(|r| r.iter().map(|v| v.0).collect()).collect(),
        returns: values.chunks(n).map(|r| r.iter().map(|v| v.1).collect()).collect(),
    })
}

/// Scans the source grid, the target grid with the barrier and the target
/// grid without it; the optima are the best-return cells of the source and
/// barrier-target grids.
pub fn landscape_scan(
    env: &Env,
    source: &RewardSpec,
    target: &RewardSpec,
    cfg: &LandscapeConfig,
) -> Result<Landscape> {
    let spec = env.spec();
    if spec.obs_dim != 2 || spec.action_dim != 1 {
        return Err(Error::config(
            "environment.observation",
            "landscape needs a two-feature observation and one action",
        ));
    }
    let axis = cfg.axis()?;
    let source_grid = scan(env, source, cfg, &axis)?;
    let barrier = scan(env, target, cfg, &axis)?;
    let no_barrier = scan(env, &target.relaxed(), cfg, &axis)?;
    let theta_source = source_grid.argmax_return();
    let theta_target = barrier.argmax_return();
    let samples = 4 * axis.len();
    Ok(Landscape {
        hump_barrier: segment_max(&barrier, theta_source, theta_target, samples),
        hump_no_barrier: segment_max(&no_barrier, theta_source, theta_target, samples),
        source: source_grid,
        barrier,
        no_barrier,
        theta_source,
        theta_target,
    })
}
