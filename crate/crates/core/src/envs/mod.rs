//! Episodic MDPs whose rewards are parameterised by the curriculum.
//!
//! Barriers live only in the reward: the transition function is the same
//! for every penalty weight and every active subset.

mod angle;
mod nav;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

pub use angle::{AngleEnv, AngleParams, AngleSide};
pub use nav::{NavEnv, NavKind, NavParams, ObservationMode, Side};

use crate::error::{Error, Result};
use crate::geometry::{Bounds, IntervalSet, Point2, RegionSet};
use crate::homotopy::{Anchors, ClassSignature, Trajectory};
use crate::rl::PolicyParams;

/// Penalty magnitude `M` used by every shipped environment.
pub const BARRIER_PENALTY: f64 = 1000.0;

/// Environment state: the step index plus the raw state vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct State {
    pub t: u32,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum StartSet {
    Point(Point2),
    /// Uniform over the box.
    Box(Bounds),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MdpSpec {
    pub state_dim: usize,
    pub obs_dim: usize,
    pub action_dim: usize,
    pub discount: f64,
    pub horizon: u32,
    pub dt: f64,
    pub start_set: StartSet,
    pub goal_set: Option<Bounds>,
}

/// The penalised set, in whichever representation the task uses.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Barrier {
    Regions(RegionSet),
    /// Band on the second coordinate of the task-space point.
    Intervals(IntervalSet),
}

impl Barrier {
    pub fn contains(&self, p: Point2) -> bool {
        match self {
            Barrier::Regions(r) => r.contains(p),
            Barrier::Intervals(s) => s.contains(p.y),
        }
    }

    pub fn penalty(&self) -> f64 {
        match self {
            Barrier::Regions(r) => r.penalty,
            Barrier::Intervals(s) => s.penalty,
        }
    }

    pub fn as_regions(&self) -> Option<&RegionSet> {
        match self {
            Barrier::Regions(r) => Some(r),
            Barrier::Intervals(_) => None,
        }
    }

    /// Empty set with the same penalty and representation.
    pub fn emptied(&self) -> Barrier {
        match self {
            Barrier::Regions(r) => Barrier::Regions(RegionSet {
                parts: Vec::new(),
                penalty: r.penalty,
            }),
            Barrier::Intervals(s) => Barrier::Intervals(
                IntervalSet::new(Vec::new(), s.penalty).expect("penalty already validated"),
            ),
        }
    }
}

/// Task reward `R'` without the barrier term.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum BaseReward {
    /// Heading-driven side preference that fades out over `anneal_steps`,
    /// a per-step distance-to-goal cost and a bonus on reaching the goal band.
    Swerve {
        side: Side,
        side_coef: f64,
        anneal_steps: u32,
        dist_coef: f64,
        goal_bonus: f64,
    },
    /// Fixed bonus per barrier passed on the requested side, goal bonus and a
    /// potential-field term.
    Classes {
        sides: Vec<Side>,
        side_bonus: f64,
        goal_bonus: f64,
        potential_coef: f64,
        step_cost: f64,
    },
    /// Reward for holding the joint on one side of the band.
    Posture { side: AngleSide, coef: f64 },
}

/// `R_cur(s, a) = R'(s, a) − α·M·[s' ∈ active]`.
///
/// Reward-weight curricula vary `alpha` with `active` equal to the full
/// barrier; barrier-set curricula keep `alpha = 1` and grow `active`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RewardSpec {
    pub base: BaseReward,
    pub barrier: Barrier,
    pub alpha: f64,
    pub active: Barrier,
}

impl RewardSpec {
    /// Full target reward: `alpha = 1`, whole barrier active.
    pub fn target(base: BaseReward, barrier: Barrier) -> Self {
        RewardSpec {
            base,
            active: barrier.clone(),
            barrier,
            alpha: 1.0,
        }
    }

    /// Relaxed reward: no barrier penalty anywhere.
    pub fn relaxed(&self) -> Self {
        RewardSpec {
            alpha: 0.0,
            active: self.barrier.emptied(),
            ..self.clone()
        }
    }

    pub fn with_alpha(&self, alpha: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&alpha) {
            return Err(Error::InvalidSchedule(format!("alpha {alpha} outside [0, 1]")));
        }
        Ok(RewardSpec {
            alpha,
            active: self.barrier.clone(),
            ..self.clone()
        })
    }

    pub fn with_active_subset(&self, subset: RegionSet) -> Self {
        RewardSpec {
            alpha: 1.0,
            active: Barrier::Regions(subset),
            ..self.clone()
        }
    }

    pub fn with_base(&self, base: BaseReward) -> Self {
        RewardSpec {
            base,
            ..self.clone()
        }
    }

    /// Penalty applied when the next state lands at `p`.
    pub fn penalty_at(&self, p: Point2) -> Option<f64> {
        self.active
            .contains(p)
            .then(|| self.alpha * self.active.penalty())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepResult {
    pub next_state: State,
    pub reward: f64,
    pub terminal: bool,
    /// The next state is inside the active region (one penalty term applied).
    pub collided: bool,
    /// The next state is inside the full barrier, penalised or not.
    pub in_barrier: bool,
}

/// An environment handle: immutable task description plus dynamics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Env {
    Nav(NavEnv),
    Angle(AngleEnv),
}

impl Env {
    /// Single centred barrier of width `size`; see [`NavEnv::nav1`].
    pub fn nav1(size: u32, seed: u64) -> Result<Env> {
        Ok(Env::Nav(NavEnv::nav1(size, NavParams::default(), seed)?))
    }

    pub fn nav2(seed: u64) -> Env {
        Env::Nav(NavEnv::nav2(NavParams::nav2_defaults(), seed))
    }

    pub fn angle(seed: u64) -> Env {
        Env::Angle(AngleEnv::new(AngleParams::default(), seed))
    }

    pub fn name(&self) -> String {
        match self {
            Env::Nav(n) => n.name(),
            Env::Angle(_) => "angle".into(),
        }
    }

    pub fn spec(&self) -> MdpSpec {
        match self {
            Env::Nav(n) => n.spec(),
            Env::Angle(a) => a.spec(),
        }
    }

    pub fn barrier(&self) -> Barrier {
        match self {
            Env::Nav(n) => Barrier::Regions(n.barrier().clone()),
            Env::Angle(a) => Barrier::Intervals(a.barrier().clone()),
        }
    }

    /// Barrier as planar regions in task space (angle bands become strips
    /// over the episode's time span).
    pub fn barrier_regions(&self) -> RegionSet {
        match self {
            Env::Nav(n) => n.barrier().clone(),
            Env::Angle(a) => a.barrier_strips(),
        }
    }

    /// Task reward with the barrier fully active.
    pub fn target_reward(&self, base: BaseReward) -> RewardSpec {
        RewardSpec::target(base, self.barrier())
    }

    pub fn seed(&self) -> u64 {
        match self {
            Env::Nav(n) => n.seed,
            Env::Angle(a) => a.seed,
        }
    }

    /// Samples an initial state from `ρ0`.
    pub fn reset<R: Rng>(&self, rng: &mut R) -> State {
        match self {
            Env::Nav(n) => n.reset(rng),
            Env::Angle(a) => a.reset(rng),
        }
    }

    pub fn observe(&self, s: &State) -> Vec<f64> {
        match self {
            Env::Nav(n) => n.observe(s),
            Env::Angle(a) => a.observe(s),
        }
    }

    /// Task-space point used for barrier membership and trajectories.
    pub fn position(&self, s: &State) -> Point2 {
        match self {
            Env::Nav(n) => n.position(s),
            Env::Angle(a) => a.position(s),
        }
    }

    pub fn step(&self, s: &State, action: &[f64], reward: &RewardSpec) -> Result<StepResult> {
        if action.iter().any(|a| !a.is_finite()) {
            return Err(Error::NonFiniteAction);
        }
        if s.values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteState);
        }
        let spec = self.spec();
        if action.len() != spec.action_dim {
            return Err(Error::DimensionMismatch(format!(
                "action has {} entries, env expects {}",
                action.len(),
                spec.action_dim
            )));
        }
        let (next, base, goal) = match self {
            Env::Nav(n) => n.transition(s, action, &reward.base)?,
            Env::Angle(a) => a.transition(s, action, &reward.base)?,
        };
        let p = self.position(&next);
        let penalty = reward.penalty_at(p);
        let in_barrier = reward.barrier.contains(p);
        let terminal = goal || next.t >= spec.horizon;
        Ok(StepResult {
            reward: base - penalty.unwrap_or(0.0),
            collided: penalty.is_some(),
            in_barrier,
            terminal,
            next_state: next,
        })
    }

    /// Fixed start/goal points trajectories are extended to before their
    /// class signature is taken.
    pub fn anchors(&self) -> Anchors {
        match self {
            Env::Nav(n) => n.anchors(),
            Env::Angle(a) => a.anchors(),
        }
    }

    /// Homotopy class label of a trajectory, `None` when it touches the
    /// barrier.
    pub fn classify(&self, traj: &Trajectory) -> Option<String> {
        match self {
            Env::Nav(n) => crate::homotopy::signature(traj, n.barrier(), n.anchors())
                .ok()
                .map(|s: ClassSignature| s.label()),
            Env::Angle(a) => a.classify(traj),
        }
    }
}

/// How exploration noise is drawn during a rollout.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NoiseMode {
    /// One RNG stream seeded by the episode seed drives both the initial
    /// state and the action noise.
    Fresh,
    /// Action noise is read from a tape keyed only by the seed, so it does
    /// not depend on anything else consumed during the episode.
    Frozen,
    /// Zero noise: the policy mean is executed.
    Mean,
}

const TAPE_SALT: u64 = 0x9e37_79b9_7f4a_7c15;

/// Pre-drawn standard normal noise, `horizon × action_dim`.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseTape {
    values: Vec<f64>,
    action_dim: usize,
}

impl NoiseTape {
    pub fn new(seed: u64, horizon: usize, action_dim: usize) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ TAPE_SALT);
        NoiseTape {
            values: (0..horizon * action_dim)
                .map(|_| rng.sample(StandardNormal))
                .collect(),
            action_dim,
        }
    }

    pub fn at(&self, t: usize) -> &[f64] {
        &self.values[t * self.action_dim..(t + 1) * self.action_dim]
    }
}

/// One simulated episode with everything the learner needs.
#[derive(Debug, Clone, PartialEq)]
pub struct Episode {
    pub trajectory: Trajectory,
    /// Discounted return `Σ γ^τ r_τ`.
    pub ret: f64,
    /// Undiscounted score `Σ r_τ`.
    pub score: f64,
    /// Some next state fell inside the full barrier.
    pub collided: bool,
    pub penalized_steps: usize,
    pub reached_goal: bool,
    pub observations: Vec<Vec<f64>>,
    pub actions: Vec<Vec<f64>>,
    pub rewards: Vec<f64>,
}

impl Episode {
    pub fn len(&self) -> usize {
        self.rewards.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rewards.is_empty()
    }
}

/// Simulates one episode of `policy` in `env` under `reward`.
pub fn rollout(
    env: &Env,
    policy: &PolicyParams,
    reward: &RewardSpec,
    seed: u64,
    noise: NoiseMode,
) -> Result<Episode> {
    let spec = env.spec();
    if policy.input_dim() != spec.obs_dim || policy.output_dim() != spec.action_dim {
        return Err(Error::DimensionMismatch(format!(
            "policy is {}→{}, env needs {}→{}",
            policy.input_dim(),
            policy.output_dim(),
            spec.obs_dim,
            spec.action_dim
        )));
    }
    let horizon = spec.horizon as usize;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut state = env.reset(&mut rng);
    let tape = (noise == NoiseMode::Frozen).then(|| NoiseTape::new(seed, horizon, spec.action_dim));
    let zeros = vec![0.0; spec.action_dim];

    let mut positions = vec![env.position(&state)];
    let mut raw = vec![state.values.clone()];
    let mut observations = Vec::with_capacity(horizon);
    let mut actions = Vec::with_capacity(horizon);
    let mut rewards = Vec::with_capacity(horizon);
    let (mut ret, mut score, mut discount) = (0.0, 0.0, 1.0);
    let (mut collided, mut penalized_steps, mut reached_goal) = (false, 0, false);
    let mut fresh = Vec::with_capacity(spec.action_dim);

    for t in 0..horizon {
        let obs = env.observe(&state);
        let eps: &[f64] = match noise {
            NoiseMode::Fresh => {
                fresh.clear();
                fresh.extend((0..spec.action_dim).map(|_| rng.sample::<f64, _>(StandardNormal)));
                &fresh
            }
            NoiseMode::Frozen => tape.as_ref().expect("tape built for frozen mode").at(t),
            NoiseMode::Mean => &zeros,
        };
        let (action, _) = policy.act(&obs, eps)?;
        let step = env.step(&state, &action, reward)?;
        ret += discount * step.reward;
        score += step.reward;
        discount *= spec.discount;
        collided |= step.in_barrier;
        penalized_steps += usize::from(step.collided);
        observations.push(obs);
        actions.push(action);
        rewards.push(step.reward);
        state = step.next_state;
        positions.push(env.position(&state));
        raw.push(state.values.clone());
        if step.terminal {
            reached_goal = env.in_goal(&state);
            break;
        }
    }
    Ok(Episode {
        trajectory: Trajectory::with_raw(positions, Some(raw))?,
        ret,
        score,
        collided,
        penalized_steps,
        reached_goal,
        observations,
        actions,
        rewards,
    })
}

impl Env {
    pub fn in_goal(&self, s: &State) -> bool {
        match (self, self.spec().goal_set) {
            (Env::Nav(_), Some(g)) => {
                let p = self.position(s);
                p.y >= g.min.y
            }
            _ => false,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rl::Arch;

    fn nav1_reward(env: &Env) -> RewardSpec {
        let Env::Nav(n) = env else { unreachable!() };
        env.target_reward(n.swerve_reward(Side::Left))
    }

    /// A state sitting just below the barrier, heading straight up.
    fn state_below_barrier(env: &Env) -> State {
        let Env::Nav(n) = env else { unreachable!() };
        n.state_at(Point2::new(0.0, 8.9), std::f64::consts::FRAC_PI_2, 5)
    }

    #[test]
    fn relaxed_step_has_no_penalty() {
        let env = Env::nav1(5, 0).unwrap();
        let target = nav1_reward(&env);
        let s = state_below_barrier(&env);
        let relaxed = env.step(&s, &[0.0], &target.relaxed()).unwrap();
        let full = env.step(&s, &[0.0], &target).unwrap();
        assert!(full.in_barrier && full.collided);
        assert!(relaxed.in_barrier && !relaxed.collided);
        assert_eq!(relaxed.next_state, full.next_state);
        assert_eq!(full.reward, relaxed.reward - 1000.0);
        let partial = env.step(&s, &[0.0], &target.with_alpha(0.3).unwrap()).unwrap();
        assert_eq!(partial.reward, relaxed.reward - 0.3 * 1000.0);
        let zero = env.step(&s, &[0.0], &target.with_alpha(0.0).unwrap()).unwrap();
        assert_eq!(zero.reward, relaxed.reward);
    }

    #[test]
    fn non_finite_action_rejected() {
        let env = Env::nav1(5, 0).unwrap();
        let s = state_below_barrier(&env);
        assert!(matches!(
            env.step(&s, &[f64::NAN], &nav1_reward(&env)),
            Err(Error::NonFiniteAction)
        ));
    }

    #[test]
    fn frozen_rollouts_are_bitwise_repeatable() {
        let env = Env::nav1(5, 0).unwrap();
        let policy = PolicyParams::init(Arch::Linear { input: 5, output: 1 }, -0.5, 3);
        let r = nav1_reward(&env);
        let a = rollout(&env, &policy, &r, 11, NoiseMode::Frozen).unwrap();
        let b = rollout(&env, &policy, &r, 11, NoiseMode::Frozen).unwrap();
        assert_eq!(a, b);
        let c = rollout(&env, &policy, &r, 11, NoiseMode::Fresh).unwrap();
        let d = rollout(&env, &policy, &r, 11, NoiseMode::Fresh).unwrap();
        assert_eq!(c, d);
    }

    #[test]
    fn zero_policy_stays_on_the_centre_line() {
        let env = Env::nav1(5, 0).unwrap();
        let policy = PolicyParams::zeros(Arch::Linear { input: 5, output: 1 }, -5.0);
        let ep = rollout(&env, &policy, &nav1_reward(&env), 0, NoiseMode::Mean).unwrap();
        assert!(ep.trajectory.states().iter().all(|p| p.x.abs() < 1e-9));
        // Straight up the middle runs through the barrier.
        assert!(ep.collided);
    }

    #[test]
    fn return_decomposes_into_logged_terms() {
        let env = Env::nav1(7, 0).unwrap();
        let policy = PolicyParams::zeros(Arch::Linear { input: 5, output: 1 }, -5.0);
        let target = nav1_reward(&env);
        let full = rollout(&env, &policy, &target, 0, NoiseMode::Mean).unwrap();
        let relaxed = rollout(&env, &policy, &target.relaxed(), 0, NoiseMode::Mean).unwrap();
        assert_eq!(full.trajectory, relaxed.trajectory);
        let gamma = env.spec().discount;
        let mut expect = 0.0;
        let mut disc = 1.0;
        let mut hits = 0;
        for (t, r) in relaxed.rewards.iter().enumerate() {
            let p = full.trajectory.states()[t + 1];
            let pen = if env.barrier().contains(p) { 1000.0 } else { 0.0 };
            hits += usize::from(pen > 0.0);
            expect += disc * (r - pen);
            disc *= gamma;
        }
        assert!(hits > 0);
        assert_eq!(hits, full.penalized_steps);
        assert!((full.ret - expect).abs() < 1e-9 * expect.abs().max(1.0));
    }
}
