//! One joint driven by torque through a damped double integrator, with a
//! penalised band of angles that is not a physical obstacle.
//!
//! Task space is `(time, angle)`, so the band becomes a horizontal strip and
//! the two sides of it are the two homotopy classes.

use std::f64::consts::FRAC_PI_4;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{BaseReward, MdpSpec, StartSet, State};
use crate::error::{Error, Result};
use crate::geometry::{Bounds, IntervalSet, Point2, RegionSet};
use crate::homotopy::{collides, Anchors, Trajectory};

/// Posture class. `Down` holds the joint above the band, `Up` below it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AngleSide {
    Up,
    Down,
}

impl AngleSide {
    /// +1 when the favoured angles lie above the band.
    pub fn sign(self) -> f64 {
        match self {
            AngleSide::Down => 1.0,
            AngleSide::Up => -1.0,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            AngleSide::Up => "up",
            AngleSide::Down => "down",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AngleParams {
    pub dt: f64,
    pub horizon: u32,
    pub discount: f64,
    pub max_torque: f64,
    pub damping: f64,
    pub start_angle: f64,
    pub band_center: f64,
    pub band_half_width: f64,
    pub posture_coef: f64,
}

impl Default for AngleParams {
    fn default() -> Self {
        AngleParams {
            dt: 0.1,
            horizon: 100,
            discount: 0.99,
            max_torque: 3.0,
            damping: 1.0,
            start_angle: std::f64::consts::FRAC_PI_2,
            band_center: FRAC_PI_4,
            band_half_width: 0.2,
            posture_coef: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AngleEnv {
    pub params: AngleParams,
    band: IntervalSet,
    pub seed: u64,
}

impl AngleEnv {
    pub fn new(params: AngleParams, seed: u64) -> Self {
        let band = IntervalSet::new(
            vec![(
                params.band_center - params.band_half_width,
                params.band_center + params.band_half_width,
            )],
            super::BARRIER_PENALTY,
        )
        .expect("band has positive width");
        AngleEnv { params, band, seed }
    }

    pub fn barrier(&self) -> &IntervalSet {
        &self.band
    }

    /// The band as a strip covering the whole episode in `(time, angle)`.
    pub fn barrier_strips(&self) -> RegionSet {
        let p = &self.params;
        self.band.as_strips(-p.dt, (p.horizon as f64 + 1.0) * p.dt)
    }

    pub fn posture_reward(&self, side: AngleSide) -> BaseReward {
        BaseReward::Posture {
            side,
            coef: self.params.posture_coef,
        }
    }

    pub fn spec(&self) -> MdpSpec {
        let p = &self.params;
        MdpSpec {
            state_dim: 2,
            obs_dim: 3,
            action_dim: 1,
            discount: p.discount,
            horizon: p.horizon,
            dt: p.dt,
            start_set: StartSet::Point(Point2::new(0.0, p.start_angle)),
            goal_set: None,
        }
    }

    pub fn reset<R: Rng>(&self, _rng: &mut R) -> State {
        State {
            t: 0,
            values: vec![self.params.start_angle, 0.0],
        }
    }

    pub fn observe(&self, s: &State) -> Vec<f64> {
        vec![s.values[0] - self.params.band_center, s.values[1], 1.0]
    }

    pub fn position(&self, s: &State) -> Point2 {
        Point2::new(s.t as f64 * self.params.dt, s.values[0])
    }

    pub fn anchors(&self) -> Anchors {
        let start = Point2::new(0.0, self.params.start_angle);
        Anchors { start, goal: start }
    }

    pub(super) fn transition(&self, s: &State, action: &[f64], base: &BaseReward) -> Result<(State, f64, bool)> {
        let p = &self.params;
        let torque = action[0].clamp(-p.max_torque, p.max_torque);
        let vel = s.values[1] + (torque - p.damping * s.values[1]) * p.dt;
        let angle = s.values[0] + vel * p.dt;
        let BaseReward::Posture { side, coef } = base else {
            return Err(Error::DimensionMismatch(
                "joint-angle task needs a posture reward".into(),
            ));
        };
        let offset = (angle - p.band_center) / (2.0 * p.band_half_width);
        let reward = coef * (side.sign() * offset).clamp(-1.0, 1.0);
        Ok((
            State {
                t: s.t + 1,
                values: vec![angle, vel],
            },
            reward,
            false,
        ))
    }

    /// `"down"` or `"up"` by the final side of the band; `None` when the
    /// trajectory enters the band.
    pub fn classify(&self, traj: &Trajectory) -> Option<String> {
        if collides(traj, &self.barrier_strips()) {
            return None;
        }
        let side = if traj.last().y > self.params.band_center {
            AngleSide::Down
        } else {
            AngleSide::Up
        };
        Some(side.label().into())
    }

    /// Task-space box spanned by an episode.
    pub fn bounds(&self) -> Bounds {
        let p = &self.params;
        Bounds {
            min: Point2::new(0.0, -std::f64::consts::PI),
            max: Point2::new(p.horizon as f64 * p.dt, std::f64::consts::PI),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envs::{Env, RewardSpec};
    use std::f64::consts::FRAC_PI_2;

    fn state(angle: f64, t: u32) -> State {
        State {
            t,
            values: vec![angle, 0.0],
        }
    }

    #[test]
    fn holding_above_the_band_is_never_penalised() {
        let env = Env::angle(0);
        let Env::Angle(a) = &env else { unreachable!() };
        let reward = env.target_reward(a.posture_reward(AngleSide::Up));
        let mut s = state(FRAC_PI_2, 0);
        let mut path = vec![env.position(&s)];
        for _ in 0..a.params.horizon {
            let r = env.step(&s, &[0.0], &reward).unwrap();
            assert!(!r.collided);
            s = r.next_state;
            path.push(env.position(&s));
        }
        assert!(path.iter().all(|p| (p.y - FRAC_PI_2).abs() < 1e-12));
        assert_eq!(env.classify(&Trajectory::new(path).unwrap()).as_deref(), Some("down"));
    }

    #[test]
    fn descending_path_enters_the_band() {
        let env = Env::angle(0);
        let Env::Angle(a) = &env else { unreachable!() };
        let reward = env.target_reward(a.posture_reward(AngleSide::Up));
        let mut s = state(FRAC_PI_2, 0);
        let mut hit = false;
        for _ in 0..a.params.horizon {
            let r = env.step(&s, &[-a.params.max_torque], &reward).unwrap();
            hit |= r.collided;
            s = r.next_state;
            if s.values[0] < 0.0 {
                break;
            }
        }
        assert!(s.values[0] < 0.0);
        assert!(hit);
    }

    #[test]
    fn band_centre_is_penalised() {
        let env = Env::angle(0);
        let Env::Angle(a) = &env else { unreachable!() };
        let reward: RewardSpec = env.target_reward(a.posture_reward(AngleSide::Down));
        assert_eq!(reward.penalty_at(Point2::new(1.0, FRAC_PI_4)), Some(1000.0));
        assert_eq!(reward.penalty_at(Point2::new(1.0, FRAC_PI_4 + 0.21)), None);
        assert_eq!(reward.penalty_at(Point2::new(1.0, FRAC_PI_4 - 0.2)), Some(1000.0));
    }
}
