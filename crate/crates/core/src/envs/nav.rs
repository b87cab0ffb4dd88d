//! Car navigation around rectangular barriers.
//!
//! Unicycle kinematics: steering integrates into heading, a proportional
//! controller holds speed at the set-point. Positions are clamped to the
//! field.

use std::f64::consts::FRAC_PI_2;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{BaseReward, MdpSpec, StartSet, State};
use crate::error::{Error, Result};
use crate::geometry::{Bounds, ConvexPolygon, Point2, RegionSet};
use crate::homotopy::Anchors;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Left,
    Right,
}

impl Side {
    /// +1 for left (counter-clockwise of straight ahead), -1 for right.
    pub fn sign(self) -> f64 {
        match self {
            Side::Left => 1.0,
            Side::Right => -1.0,
        }
    }

    pub fn opposite(self) -> Side {
        match self {
            Side::Left => Side::Right,
            Side::Right => Side::Left,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ObservationMode {
    /// `[x, y, heading, angular velocity, 1]`, normalised.
    #[default]
    Full,
    /// `[x, y]`, normalised; used by the two-parameter landscape policy.
    Position,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum NavKind {
    /// One centred barrier of the given width.
    Nav1 { size: u32 },
    /// Two stacked barriers, four homotopy classes.
    Nav2,
}

/// Dynamics and reward coefficients shared by both navigation tasks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NavParams {
    pub speed: f64,
    pub speed_gain: f64,
    pub max_steer: f64,
    pub dt: f64,
    pub horizon: u32,
    pub discount: f64,
    pub observation: ObservationMode,
    /// Half-width of the uniform start box; 0 keeps a fixed start.
    pub start_jitter: f64,
    pub side_coef: f64,
    /// Steps over which the side bonus fades linearly to zero.
    pub anneal_steps: u32,
    pub dist_coef: f64,
    pub goal_bonus: f64,
    pub class_bonus: f64,
    pub class_goal_bonus: f64,
    /// Weight of the progress term toward the next class waypoint.
    pub potential_coef: f64,
    pub step_cost: f64,
}

impl Default for NavParams {
    fn default() -> Self {
        NavParams {
            speed: 3.5,
            speed_gain: 2.0,
            max_steer: 2.5,
            dt: 0.1,
            horizon: 128,
            discount: 0.99,
            observation: ObservationMode::Full,
            start_jitter: 0.0,
            side_coef: 1.0,
            anneal_steps: 30,
            dist_coef: 1.0,
            goal_bonus: 50.0,
            class_bonus: 500.0,
            class_goal_bonus: 2000.0,
            potential_coef: 5.0,
            step_cost: 0.5,
        }
    }
}

impl NavParams {
    /// Defaults for the two-barrier task: undiscounted, so the return is
    /// the episode score.
    pub fn nav2_defaults() -> Self {
        NavParams {
            discount: 1.0,
            ..NavParams::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NavEnv {
    pub kind: NavKind,
    pub params: NavParams,
    pub field: Bounds,
    pub start: Point2,
    pub goal_y: f64,
    pub goal_point: Point2,
    barrier: RegionSet,
    pub seed: u64,
}

const NAV1_DEPTH: f64 = 2.0;
const NAV2_LENGTH: f64 = 9.0;
const NAV2_WIDTH: f64 = 4.0;

impl NavEnv {
    /// 20×20 field, start at (0, 2) heading up, goal band `y >= 18`, one
    /// barrier of width `size` and depth 2 centred at (0, 10).
    pub fn nav1(size: u32, params: NavParams, seed: u64) -> Result<Self> {
        if ![1, 3, 5, 7].contains(&size) {
            return Err(Error::UnsupportedSize(size));
        }
        Self::nav1_with_width(size as f64, params, seed).map(|mut e| {
            e.kind = NavKind::Nav1 { size };
            e
        })
    }

    /// Same layout as [`NavEnv::nav1`] with an arbitrary barrier width.
    pub fn nav1_with_width(width: f64, params: NavParams, seed: u64) -> Result<Self> {
        let barrier = ConvexPolygon::centered_rect(Point2::new(0.0, 10.0), width, NAV1_DEPTH)?;
        Ok(NavEnv {
            kind: NavKind::Nav1 {
                size: width.round() as u32,
            },
            params,
            field: Bounds {
                min: Point2::new(-10.0, 0.0),
                max: Point2::new(10.0, 20.0),
            },
            start: Point2::new(0.0, 2.0),
            goal_y: 18.0,
            goal_point: Point2::new(0.0, 18.0),
            barrier: RegionSet::single(barrier, super::BARRIER_PENALTY)?,
            seed,
        })
    }

    /// 20×24 field with two 9×4 barriers centred at (0, 6) and (0, 15);
    /// start at (0, 1), goal band `y >= 22`.
    pub fn nav2(params: NavParams, seed: u64) -> Self {
        let b1 = ConvexPolygon::centered_rect(Point2::new(0.0, 6.0), NAV2_LENGTH, NAV2_WIDTH)
            .expect("valid rectangle");
        let b2 = ConvexPolygon::centered_rect(Point2::new(0.0, 15.0), NAV2_LENGTH, NAV2_WIDTH)
            .expect("valid rectangle");
        NavEnv {
            kind: NavKind::Nav2,
            params,
            field: Bounds {
                min: Point2::new(-10.0, 0.0),
                max: Point2::new(10.0, 24.0),
            },
            start: Point2::new(0.0, 1.0),
            goal_y: 22.0,
            goal_point: Point2::new(0.0, 22.0),
            barrier: RegionSet::new(vec![b1, b2], super::BARRIER_PENALTY).expect("positive penalty"),
            seed,
        }
    }

    pub fn name(&self) -> String {
        match self.kind {
            NavKind::Nav1 { size } => format!("nav1-{size}"),
            NavKind::Nav2 => "nav2".into(),
        }
    }

    pub fn barrier(&self) -> &RegionSet {
        &self.barrier
    }

    pub fn spec(&self) -> MdpSpec {
        let extra = match self.kind {
            NavKind::Nav1 { .. } => 0,
            NavKind::Nav2 => self.barrier.parts.len(),
        };
        MdpSpec {
            state_dim: 5 + extra,
            obs_dim: match self.params.observation {
                ObservationMode::Full => 5,
                ObservationMode::Position => 2,
            },
            action_dim: 1,
            discount: self.params.discount,
            horizon: self.params.horizon,
            dt: self.params.dt,
            start_set: if self.params.start_jitter > 0.0 {
                StartSet::Box(Bounds {
                    min: Point2::new(
                        self.start.x - self.params.start_jitter,
                        self.start.y - self.params.start_jitter,
                    ),
                    max: Point2::new(
                        self.start.x + self.params.start_jitter,
                        self.start.y + self.params.start_jitter,
                    ),
                })
            } else {
                StartSet::Point(self.start)
            },
            goal_set: Some(Bounds {
                min: Point2::new(self.field.min.x, self.goal_y),
                max: self.field.max,
            }),
        }
    }

    /// Side-preference reward for the single-barrier task.
    pub fn swerve_reward(&self, side: Side) -> BaseReward {
        BaseReward::Swerve {
            side,
            side_coef: self.params.side_coef,
            anneal_steps: self.params.anneal_steps,
            dist_coef: self.params.dist_coef,
            goal_bonus: self.params.goal_bonus,
        }
    }

    /// Per-barrier side bonus reward; `sides[i]` is the side for part `i`
    /// (bottom barrier first).
    pub fn classes_reward(&self, sides: Vec<Side>) -> BaseReward {
        BaseReward::Classes {
            sides,
            side_bonus: self.params.class_bonus,
            goal_bonus: self.params.class_goal_bonus,
            potential_coef: self.params.potential_coef,
            step_cost: self.params.step_cost,
        }
    }

    /// Midpoint of the requested side edge of barrier `i`.
    pub fn waypoint(&self, i: usize, side: Side) -> Point2 {
        let part = &self.barrier.parts[i];
        let b = part.bounds();
        let x = match side {
            Side::Left => b.min.x,
            Side::Right => b.max.x,
        };
        Point2::new(x, part.centroid().y)
    }

    /// Builds a state at `p` with the given heading at step `t`.
    pub fn state_at(&self, p: Point2, heading: f64, t: u32) -> State {
        let mut values = vec![p.x, p.y, heading, self.params.speed, 0.0];
        if self.kind == NavKind::Nav2 {
            values.extend(std::iter::repeat_n(0.0, self.barrier.parts.len()));
        }
        State { t, values }
    }

    pub fn reset<R: Rng>(&self, rng: &mut R) -> State {
        let j = self.params.start_jitter;
        let p = if j > 0.0 {
            Point2::new(
                self.start.x + rng.random_range(-j..=j),
                self.start.y + rng.random_range(-j..=j),
            )
        } else {
            self.start
        };
        self.state_at(p, FRAC_PI_2, 0)
    }

    pub fn position(&self, s: &State) -> Point2 {
        Point2::new(s.values[0], s.values[1])
    }

    pub fn observe(&self, s: &State) -> Vec<f64> {
        let mid = (self.field.min.y + self.field.max.y) / 2.0;
        let x = s.values[0] / 10.0;
        let y = (s.values[1] - mid) / 10.0;
        match self.params.observation {
            ObservationMode::Full => vec![
                x,
                y,
                s.values[2] - FRAC_PI_2,
                s.values[4] / self.params.max_steer,
                1.0,
            ],
            ObservationMode::Position => vec![x, y],
        }
    }

    pub fn anchors(&self) -> Anchors {
        Anchors {
            start: self.start,
            goal: Point2::new(self.goal_point.x, self.goal_y + 1.0),
        }
    }

    /// Deterministic kinematic update plus the task reward `R'`.
    pub(super) fn transition(&self, s: &State, action: &[f64], base: &BaseReward) -> Result<(State, f64, bool)> {
        let p = &self.params;
        let (x, y, heading, speed) = (s.values[0], s.values[1], s.values[2], s.values[3]);
        let steer = action[0].clamp(-p.max_steer, p.max_steer);
        let heading2 = heading + steer * p.dt;
        let speed2 = (speed + p.speed_gain * (p.speed - speed) * p.dt).max(0.0);
        let x2 = (x + speed2 * heading2.cos() * p.dt).clamp(self.field.min.x, self.field.max.x);
        let y2 = (y + speed2 * heading2.sin() * p.dt).clamp(self.field.min.y, self.field.max.y);
        let mut values = vec![x2, y2, heading2, speed2, steer];
        values.extend_from_slice(&s.values[5..]);
        let goal = y2 >= self.goal_y;
        let here = Point2::new(x, y);
        let there = Point2::new(x2, y2);

        let reward = match base {
            BaseReward::Swerve {
                side,
                side_coef,
                anneal_steps,
                dist_coef,
                goal_bonus,
            } => {
                let fade = (1.0 - s.t as f64 / *anneal_steps as f64).max(0.0);
                let lean = side.sign() * (heading2 - FRAC_PI_2).sin();
                let dist = there.dist(self.goal_point) / 10.0;
                side_coef * fade * lean - dist_coef * dist + if goal { *goal_bonus } else { 0.0 }
            }
            BaseReward::Classes {
                sides,
                side_bonus,
                goal_bonus,
                potential_coef,
                step_cost,
            } => {
                if sides.len() != self.barrier.parts.len() {
                    return Err(Error::DimensionMismatch(format!(
                        "{} sides for {} barriers",
                        sides.len(),
                        self.barrier.parts.len()
                    )));
                }
                let next = (0..sides.len())
                    .find(|&i| s.values[5 + i] == 0.0)
                    .map_or(self.goal_point, |i| self.waypoint(i, sides[i]));
                let mut r = potential_coef * (here.dist(next) - there.dist(next)) - step_cost
                    + if goal { *goal_bonus } else { 0.0 };
                for (i, part) in self.barrier.parts.iter().enumerate() {
                    let flag = &mut values[5 + i];
                    let c = part.centroid();
                    if *flag == 0.0 && y < c.y && y2 >= c.y {
                        let xc = x + (x2 - x) * (c.y - y) / (y2 - y);
                        let passed = if xc >= c.x { Side::Right } else { Side::Left };
                        *flag = -passed.sign();
                        if passed == sides[i] {
                            r += side_bonus;
                        }
                    }
                }
                r
            }
            BaseReward::Posture { .. } => {
                return Err(Error::DimensionMismatch(
                    "posture reward does not apply to navigation".into(),
                ))
            }
        };
        Ok((
            State {
                t: s.t + 1,
                values,
            },
            reward,
            goal,
        ))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envs::{rollout, Env, NoiseMode, RewardSpec};
    use crate::homotopy::{collides, Trajectory};
    use crate::rl::{Arch, PolicyParams};

    #[test]
    fn nav1_sizes() {
        let e5 = NavEnv::nav1(5, NavParams::default(), 0).unwrap();
        let b = e5.barrier().parts[0].bounds();
        assert!((b.width() - 5.0).abs() < 1e-12);
        assert!(matches!(
            NavEnv::nav1(4, NavParams::default(), 0),
            Err(Error::UnsupportedSize(4))
        ));
        let e1 = NavEnv::nav1(1, NavParams::default(), 0).unwrap();
        let e7 = NavEnv::nav1(7, NavParams::default(), 0).unwrap();
        for v in e1.barrier().parts[0].vertices() {
            assert!(e7.barrier().contains(*v));
        }
        assert!(!e1.barrier().contains(Point2::new(3.0, 10.0)));
        assert!(e7.barrier().contains(Point2::new(3.0, 10.0)));
    }

    #[test]
    fn straight_path_collides_for_every_size() {
        for size in [1, 3, 5, 7] {
            let e = NavEnv::nav1(size, NavParams::default(), 0).unwrap();
            let line = Trajectory::new(vec![e.start, e.goal_point]).unwrap();
            assert!(collides(&line, e.barrier()), "size {size}");
        }
    }

    /// Steers along scripted waypoints with a heading controller.
    fn scripted(env: &NavEnv, reward: &RewardSpec, waypoints: &[Point2]) -> crate::envs::Episode {
        let e = Env::Nav(env.clone());
        let mut s = env.reset(&mut rand::rng());
        let mut wp = 0;
        let mut score = 0.0;
        let mut states = vec![env.position(&s)];
        let mut rewards = Vec::new();
        let mut collided = false;
        for _ in 0..env.params.horizon {
            let p = env.position(&s);
            if wp + 1 < waypoints.len() && p.dist(waypoints[wp]) < 1.0 {
                wp += 1;
            }
            let d = waypoints[wp].sub(p);
            let want = d.y.atan2(d.x);
            let mut err = want - s.values[2];
            err = (err + std::f64::consts::PI).rem_euclid(std::f64::consts::TAU) - std::f64::consts::PI;
            let step = e.step(&s, &[4.0 * err], reward).unwrap();
            score += step.reward;
            collided |= step.in_barrier;
            rewards.push(step.reward);
            s = step.next_state;
            states.push(env.position(&s));
            if step.terminal {
                break;
            }
        }
        crate::envs::Episode {
            trajectory: Trajectory::new(states).unwrap(),
            ret: score,
            score,
            collided,
            penalized_steps: 0,
            reached_goal: env.position(&s).y >= env.goal_y,
            observations: vec![],
            actions: vec![],
            rewards,
        }
    }

    #[test]
    fn nav2_success_threshold() {
        let env = NavEnv::nav2(NavParams::nav2_defaults(), 0);
        let target = RewardSpec::target(
            env.classes_reward(vec![Side::Right, Side::Left]),
            super::super::Barrier::Regions(env.barrier().clone()),
        );
        let rl = [
            Point2::new(6.5, 4.0),
            Point2::new(6.0, 9.0),
            Point2::new(-6.0, 12.0),
            Point2::new(-6.5, 17.0),
            Point2::new(0.0, 23.0),
        ];
        let ep = scripted(&env, &target, &rl);
        assert!(ep.reached_goal && !ep.collided, "{:?}", ep.trajectory.last());
        assert!(ep.score > 3000.0, "score {}", ep.score);
        assert_eq!(
            Env::Nav(env.clone()).classify(&ep.trajectory).as_deref(),
            Some("RL")
        );

        // Wrong class on the second barrier.
        let rr = [
            Point2::new(6.5, 4.0),
            Point2::new(6.5, 17.0),
            Point2::new(0.0, 23.0),
        ];
        let ep = scripted(&env, &target, &rr);
        assert!(ep.reached_goal && !ep.collided);
        assert!(ep.score < 3000.0);

        let still = PolicyParams::zeros(Arch::Linear { input: 5, output: 1 }, -5.0);
        let ep = rollout(&Env::Nav(env), &still, &target, 0, NoiseMode::Mean).unwrap();
        assert!(ep.score < 3000.0);
    }

    #[test]
    fn nav2_has_four_reachable_classes() {
        let env = NavEnv::nav2(NavParams::nav2_defaults(), 0);
        let target = RewardSpec::target(
            env.classes_reward(vec![Side::Left, Side::Left]),
            super::super::Barrier::Regions(env.barrier().clone()),
        );
        let mut labels = std::collections::BTreeSet::new();
        for (s1, s2) in [(1.0, 1.0), (1.0, -1.0), (-1.0, 1.0), (-1.0, -1.0)] {
            let wps = [
                Point2::new(6.5 * s1, 4.0),
                Point2::new(6.0 * s1, 9.0),
                Point2::new(6.5 * s2, 12.0),
                Point2::new(6.5 * s2, 17.0),
                Point2::new(0.0, 23.0),
            ];
            let ep = scripted(&env, &target, &wps);
            assert!(!ep.collided && ep.reached_goal);
            labels.insert(Env::Nav(env.clone()).classify(&ep.trajectory).unwrap());
        }
        assert_eq!(labels.len(), 4, "{labels:?}");
    }
}
