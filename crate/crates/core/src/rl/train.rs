//! REINFORCE with reward-to-go and a per-timestep batch-mean baseline.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::policy::PolicyParams;
use crate::envs::{rollout, Env, Episode, NoiseMode, RewardSpec};
use crate::error::{Error, Result};

/// SplitMix64 finaliser: decorrelates `(base, stream, index)` into a seed.
pub fn derive_seed(base: u64, stream: u64, index: u64) -> u64 {
    let mut z = base
        .wrapping_add(stream.wrapping_mul(0xd1b5_4a32_d192_ed03))
        .wrapping_add(index.wrapping_mul(0x9e37_79b9_7f4a_7c15));
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

const TRAIN_STREAM: u64 = 1;
const EVAL_STREAM: u64 = 2;

/// When a run counts as converged.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case")]
pub enum Convergence {
    /// Mean evaluation return at least `center - half_width`.
    Band { center: f64, half_width: f64 },
    /// Mean evaluation return strictly above `min`.
    Above { min: f64 },
    /// No improvement beyond `tolerance` over the best mean return seen so
    /// far, for `patience` consecutive evaluations.
    Plateau { tolerance: f64 },
    /// Train for the whole budget.
    Never,
}

impl Convergence {
    pub fn accepts(&self, mean_return: f64) -> bool {
        match *self {
            Convergence::Band { center, half_width } => mean_return >= center - half_width,
            Convergence::Above { min } => mean_return > min,
            Convergence::Plateau { .. } | Convergence::Never => false,
        }
    }

    /// Whether one evaluation extends the streak, given the best mean
    /// return seen before it.
    fn counts(&self, ev: &Evaluation, best_before: Option<f64>) -> bool {
        match *self {
            Convergence::Plateau { tolerance } => {
                best_before.is_some_and(|b| ev.mean_return <= b + tolerance)
            }
            _ => self.accepts(ev.mean_return),
        }
    }
}

/// Squared-distance pull toward anchor weights, `coef * ||theta - anchor||²`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct L2Sp {
    pub coef: f64,
    pub anchor: Vec<f64>,
}

impl L2Sp {
    /// Gradient of the penalty with respect to `theta`.
    pub fn gradient(&self, theta: &[f64]) -> Vec<f64> {
        theta
            .iter()
            .zip(&self.anchor)
            .map(|(t, a)| 2.0 * self.coef * (t - a))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_episodes: usize,
    pub max_interaction_steps: u64,
    pub eval_every: u64,
    pub eval_episodes: usize,
    pub eval_noise: NoiseMode,
    pub convergence: Convergence,
    pub patience: usize,
    pub seed: u64,
    /// Scale advantages to zero mean and unit variance over the batch.
    pub normalize_advantages: bool,
    /// Upper bound on the update's Euclidean norm; 0 disables.
    pub max_update_norm: f64,
    /// Fraction by which the norm bound shrinks, linearly, over the budget.
    pub update_norm_decay: f64,
    /// Only evaluations without a penalised episode extend the streak.
    #[serde(skip)]
    pub require_clear: bool,
    #[serde(skip)]
    pub l2sp: Option<L2Sp>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 1e-3,
            batch_episodes: 16,
            max_interaction_steps: 200_000,
            eval_every: 4096,
            eval_episodes: 1,
            eval_noise: NoiseMode::Mean,
            convergence: Convergence::Never,
            patience: 3,
            seed: 0,
            normalize_advantages: true,
            max_update_norm: 0.0,
            update_norm_decay: 0.0,
            require_clear: false,
            l2sp: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::config("learning_rate", "must be finite and non-negative"));
        }
        if self.batch_episodes == 0 {
            return Err(Error::config("batch_episodes", "must be at least 1"));
        }
        if self.patience == 0 {
            return Err(Error::config("patience", "must be at least 1"));
        }
        if self.eval_episodes == 0 {
            return Err(Error::config("eval_episodes", "must be at least 1"));
        }
        if self.eval_every == 0 {
            return Err(Error::config("eval_every", "must be at least 1"));
        }
        if !(self.max_update_norm >= 0.0) {
            return Err(Error::config("max_update_norm", "must be non-negative"));
        }
        if !(0.0..1.0).contains(&self.update_norm_decay) {
            return Err(Error::config("update_norm_decay", "must lie in [0, 1)"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub step: u64,
    pub mean_return: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub final_theta: PolicyParams,
    pub interaction_steps: u64,
    pub return_curve: Vec<CurvePoint>,
    pub converged: bool,
    /// Steps consumed when convergence was first confirmed.
    pub converged_at: Option<u64>,
}

/// Summary of evaluation rollouts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub mean_return: f64,
    /// Population standard deviation.
    pub std_return: f64,
    pub returns: Vec<f64>,
    /// Class label counts over non-colliding episodes.
    pub classes: BTreeMap<String, usize>,
    pub collision_rate: f64,
    /// Fraction of episodes that received at least one penalty.
    pub penalized_rate: f64,
    pub goal_rate: f64,
}

impl Evaluation {
    pub fn standard_error(&self) -> f64 {
        self.std_return / (self.returns.len() as f64).sqrt()
    }

    /// Most frequent class label (ties resolve to the smallest label).
    pub fn dominant_class(&self) -> Option<&str> {
        self.classes
            .iter()
            .max_by(|a, b| a.1.cmp(b.1).then(b.0.cmp(a.0)))
            .map(|(k, _)| k.as_str())
    }
}

/// Deterministic given `seed`: episode `i` uses a seed derived from it.
pub fn evaluate(
    env: &Env,
    reward: &RewardSpec,
    policy: &PolicyParams,
    episodes: usize,
    seed: u64,
    noise: NoiseMode,
) -> Result<Evaluation> {
    if episodes == 0 {
        return Err(Error::config("eval_episodes", "must be at least 1"));
    }
    let eps: Vec<Episode> = (0..episodes as u64)
        .into_par_iter()
        .map(|i| rollout(env, policy, reward, derive_seed(seed, EVAL_STREAM, i), noise))
        .collect::<Result<_>>()?;
    Ok(summarize(env, &eps))
}

pub(crate) fn summarize(env: &Env, eps: &[Episode]) -> Evaluation {
    let n = eps.len() as f64;
    let returns: Vec<f64> = eps.iter().map(|e| e.ret).collect();
    let mean = returns.iter().sum::<f64>() / n;
    let var = returns.iter().map(|r| (r - mean) * (r - mean)).sum::<f64>() / n;
    let mut classes = BTreeMap::new();
    for e in eps.iter().filter(|e| !e.collided) {
        if let Some(label) = env.classify(&e.trajectory) {
            *classes.entry(label).or_insert(0) += 1;
        }
    }
    Evaluation {
        mean_return: mean,
        std_return: var.sqrt(),
        returns,
        classes,
        collision_rate: eps.iter().filter(|e| e.collided).count() as f64 / n,
        penalized_rate: eps.iter().filter(|e| e.penalized_steps > 0).count() as f64 / n,
        goal_rate: eps.iter().filter(|e| e.reached_goal).count() as f64 / n,
    }
}

/// Reward-to-go `G_t = Σ_{k≥t} γ^{k-t} r_k`.
pub fn rewards_to_go(rewards: &[f64], gamma: f64) -> Vec<f64> {
    let mut out = vec![0.0; rewards.len()];
    let mut acc = 0.0;
    for (t, r) in rewards.iter().enumerate().rev() {
        acc = r + gamma * acc;
        out[t] = acc;
    }
    out
}

/// Policy-gradient estimate `(1/N) Σ_i Σ_t A_t ∇ log π(a_t|s_t)` over a
/// batch, with `A_t = G_t − b_t` and `b_t` the mean reward-to-go at step `t`
/// across the episodes that reached it.
pub fn policy_gradient(
    policy: &PolicyParams,
    batch: &[Episode],
    gamma: f64,
    baseline: bool,
    normalize: bool,
) -> Result<Vec<f64>> {
    let rtg: Vec<Vec<f64>> = batch.iter().map(|e| rewards_to_go(&e.rewards, gamma)).collect();
    let longest = rtg.iter().map(Vec::len).max().unwrap_or(0);
    let mut base = vec![0.0; longest];
    if baseline {
        let mut count = vec![0usize; longest];
        for g in &rtg {
            for (t, v) in g.iter().enumerate() {
                base[t] += v;
                count[t] += 1;
            }
        }
        for (b, c) in base.iter_mut().zip(&count) {
            *b /= *c as f64;
        }
    }
    let mut adv: Vec<Vec<f64>> = rtg
        .iter()
        .map(|g| g.iter().zip(&base).map(|(v, b)| v - b).collect())
        .collect();
    if normalize {
        let all: Vec<f64> = adv.iter().flatten().copied().collect();
        let n = all.len() as f64;
        let mean = all.iter().sum::<f64>() / n;
        let std = (all.iter().map(|a| (a - mean) * (a - mean)).sum::<f64>() / n).sqrt();
        let scale = if std > 1e-12 { 1.0 / std } else { 0.0 };
        for a in adv.iter_mut().flatten() {
            *a = (*a - mean) * scale;
        }
    }
    let per_episode: Vec<Vec<f64>> = batch
        .par_iter()
        .zip(adv.par_iter())
        .map(|(ep, a)| {
            let mut g = vec![0.0; policy.num_params()];
            for ((obs, act), w) in ep.observations.iter().zip(&ep.actions).zip(a) {
                let score = policy.grad_log_prob(obs, act)?;
                for (gi, si) in g.iter_mut().zip(score) {
                    *gi += w * si;
                }
            }
            Ok(g)
        })
        .collect::<Result<_>>()?;
    let mut grad = vec![0.0; policy.num_params()];
    for g in per_episode {
        for (a, b) in grad.iter_mut().zip(g) {
            *a += b;
        }
    }
    let n = batch.len().max(1) as f64;
    grad.iter_mut().for_each(|g| *g /= n);
    Ok(grad)
}

/// Gradient ascent on the expected return until convergence or budget.
pub fn train(env: &Env, reward: &RewardSpec, init: &PolicyParams, cfg: &TrainConfig) -> Result<TrainReport> {
    cfg.validate()?;
    let spec = env.spec();
    if init.input_dim() != spec.obs_dim || init.output_dim() != spec.action_dim {
        return Err(Error::DimensionMismatch(format!(
            "policy is {}→{}, env needs {}→{}",
            init.input_dim(),
            init.output_dim(),
            spec.obs_dim,
            spec.action_dim
        )));
    }
    let horizon = spec.horizon as u64;
    let mut policy = init.clone();
    let mut steps = 0u64;
    let mut episode_index = 0u64;
    let mut curve = Vec::new();
    let mut streak = 0usize;
    let mut next_eval = 0u64;
    let mut converged_at = None;
    let mut best: Option<f64> = None;

    loop {
        let room = cfg.max_interaction_steps.saturating_sub(steps) / horizon.max(1);
        let n = (cfg.batch_episodes as u64).min(room);
        let last_eval = curve.last().map(|c: &CurvePoint| c.step);
        if steps >= next_eval || (n == 0 && last_eval != Some(steps)) {
            let ev = evaluate(env, reward, &policy, cfg.eval_episodes, cfg.seed, cfg.eval_noise)?;
            curve.push(CurvePoint {
                step: steps,
                mean_return: ev.mean_return,
            });
            let counts = (!cfg.require_clear || ev.penalized_rate == 0.0) && cfg.convergence.counts(&ev, best);
            best = Some(best.map_or(ev.mean_return, |b| b.max(ev.mean_return)));
            if counts {
                streak += 1;
                if streak >= cfg.patience {
                    converged_at = Some(steps);
                    break;
                }
            } else {
                streak = 0;
            }
            next_eval = steps + cfg.eval_every;
        }

        if n == 0 {
            break;
        }
        let batch: Vec<Episode> = (episode_index..episode_index + n)
            .into_par_iter()
            .map(|i| {
                rollout(
                    env,
                    &policy,
                    reward,
                    derive_seed(cfg.seed, TRAIN_STREAM, i),
                    NoiseMode::Fresh,
                )
            })
            .collect::<Result<_>>()?;
        episode_index += n;
        steps += batch.iter().map(|e| e.len() as u64).sum::<u64>();

        let mut grad = policy_gradient(&policy, &batch, spec.discount, true, cfg.normalize_advantages)?;
        if let Some(reg) = &cfg.l2sp {
            for (g, p) in grad.iter_mut().zip(reg.gradient(&policy.theta)) {
                *g -= p;
            }
        }
        let mut scale = cfg.learning_rate;
        if cfg.max_update_norm > 0.0 {
            let spent = steps as f64 / cfg.max_interaction_steps as f64;
            let cap = cfg.max_update_norm * (1.0 - cfg.update_norm_decay * spent);
            let norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt() * scale;
            if norm > cap {
                scale *= cap / norm;
            }
        }
        let mut flat = policy.flat();
        for (p, g) in flat.iter_mut().zip(&grad) {
            *p += scale * g;
        }
        if flat.iter().any(|v| !v.is_finite()) {
            return Err(Error::DivergedTraining { steps });
        }
        policy.set_flat(&flat);
    }

    Ok(TrainReport {
        final_theta: policy,
        interaction_steps: steps,
        return_curve: curve,
        converged: converged_at.is_some(),
        converged_at,
    })
}
