//! Track-relative kinematic car with SCR-style sensors.
//!
//! The car state lives in Frenet-like coordinates along the track centerline:
//! progress `s`, signed lateral offset, and heading error against the local
//! tangent. One step is an explicit Euler update using the pre-step state:
//!
//! ```text
//! heading' = wrap(heading + steer*max_steer_rate*dt - curvature(s)*v*dt*cos(heading))
//! lateral' = lateral + v*sin(heading)*dt
//! s'       = s + v*cos(heading)*dt            (mod track length, lap on wrap)
//! v'       = clamp(v + (accel*max_accel - brake*max_brake - drag*v)*dt, 0, v_max)
//! ```

mod track;

pub use track::{
    circle, figure1, oval, wrap_angle, Pose, Segment, Track, TrackError, TrackSpec,
    HEADING_CLOSURE_TOL, POSITION_CLOSURE_TOL,
};

use serde::{Deserialize, Serialize};
use std::f64::consts::FRAC_PI_2;
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;
use thiserror::Error;

pub const MS_TO_KMH: f64 = 3.6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("episode already terminated ({0}); call reset")]
    EpisodeFinished(TerminationReason),
    #[error("invalid configuration: {0}")]
    Config(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CarState {
    /// Centerline progress in meters, in `[0, total_length)`.
    pub s: f64,
    /// Signed offset from the centerline, positive to the left.
    pub lateral: f64,
    /// Car heading minus track tangent, in `(-pi, pi]`.
    pub heading_err: f64,
    /// Longitudinal speed in m/s.
    pub speed: f64,
    pub step_count: u64,
    pub laps_completed: u32,
    /// Unwrapped signed centerline distance since reset.
    pub progress: f64,
    pub terminated: Option<TerminationReason>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    #[serde(rename = "trackPos")]
    pub track_pos: f64,
    pub angle: f64,
    /// km/h
    #[serde(rename = "speedX")]
    pub speed_x: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CarAction {
    pub steer: f64,
    pub accel: f64,
    pub brake: f64,
    pub gear: i32,
}

impl Default for CarAction {
    fn default() -> Self {
        Self {
            steer: 0.0,
            accel: 0.0,
            brake: 0.0,
            gear: 1,
        }
    }
}

impl CarAction {
    pub fn new(steer: f64, accel: f64, brake: f64) -> Self {
        Self {
            steer,
            accel,
            brake,
            gear: 1,
        }
    }

    /// Clamps every field into its legal range. NaN maps to the neutral value.
    pub fn clamped(self) -> Self {
        let c = |v: f64, lo: f64, hi: f64, neutral: f64| {
            if v.is_nan() {
                neutral
            } else {
                v.clamp(lo, hi)
            }
        };
        Self {
            steer: c(self.steer, -1.0, 1.0, 0.0),
            accel: c(self.accel, 0.0, 1.0, 0.0),
            brake: c(self.brake, 0.0, 1.0, 0.0),
            gear: self.gear.clamp(-1, 6),
        }
    }

    pub fn is_legal(&self) -> bool {
        (-1.0..=1.0).contains(&self.steer)
            && (0.0..=1.0).contains(&self.accel)
            && (0.0..=1.0).contains(&self.brake)
            && (-1..=6).contains(&self.gear)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TerminationReason {
    OutOfTrack,
    Stuck,
    Horizontal,
}

impl TerminationReason {
    pub fn as_str(self) -> &'static str {
        match self {
            TerminationReason::OutOfTrack => "out_of_track",
            TerminationReason::Stuck => "stuck",
            TerminationReason::Horizontal => "horizontal",
        }
    }
}

impl fmt::Display for TerminationReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// The four experiment conditions: which optional rules are active on top of
/// the always-on horizontal rule.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TerminationMode {
    None,
    Stuck,
    Out,
    Both,
}

impl TerminationMode {
    /// In the order the convergence study expects them to rank.
    pub const ALL: [TerminationMode; 4] = [
        TerminationMode::None,
        TerminationMode::Stuck,
        TerminationMode::Out,
        TerminationMode::Both,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            TerminationMode::None => "none",
            TerminationMode::Stuck => "stuck",
            TerminationMode::Out => "out",
            TerminationMode::Both => "both",
        }
    }

    pub fn policy(self) -> TerminationPolicy {
        let (out, stuck) = match self {
            TerminationMode::None => (false, false),
            TerminationMode::Stuck => (false, true),
            TerminationMode::Out => (true, false),
            TerminationMode::Both => (true, true),
        };
        TerminationPolicy {
            out_of_track_enabled: out,
            stuck_enabled: stuck,
            ..TerminationPolicy::default()
        }
    }
}

impl fmt::Display for TerminationMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for TerminationMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "none" => Ok(TerminationMode::None),
            "stuck" => Ok(TerminationMode::Stuck),
            "out" => Ok(TerminationMode::Out),
            "both" => Ok(TerminationMode::Both),
            other => Err(format!(
                "unknown termination mode `{other}` (none|out|stuck|both)"
            )),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TerminationPolicy {
    pub out_of_track_enabled: bool,
    pub stuck_enabled: bool,
    /// km/h
    pub stuck_speed_threshold: f64,
    pub stuck_grace_steps: u64,
    /// radians; always active
    pub horizontal_angle_threshold: f64,
}

impl Default for TerminationPolicy {
    fn default() -> Self {
        Self {
            out_of_track_enabled: false,
            stuck_enabled: false,
            stuck_speed_threshold: 5.0,
            stuck_grace_steps: 100,
            horizontal_angle_threshold: FRAC_PI_2,
        }
    }
}

impl TerminationPolicy {
    pub fn validate(&self) -> Result<(), SimError> {
        if !(self.stuck_speed_threshold > 0.0) || !(self.horizontal_angle_threshold > 0.0) {
            return Err(SimError::Config(
                "termination thresholds must be positive".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DynamicsConfig {
    pub dt: f64,
    /// m/s
    pub v_max: f64,
    /// m/s^2 at full accel
    pub max_accel: f64,
    /// m/s^2 at full brake
    pub max_brake_decel: f64,
    /// rad/s of heading change at full steer
    pub max_steer_rate: f64,
    /// 1/s
    pub drag_coeff: f64,
}

impl Default for DynamicsConfig {
    fn default() -> Self {
        Self {
            dt: 0.05,
            v_max: 30.0,
            max_accel: 5.0,
            max_brake_decel: 10.0,
            max_steer_rate: 0.8,
            drag_coeff: 0.02,
        }
    }
}

impl DynamicsConfig {
    pub fn validate(&self) -> Result<(), SimError> {
        if !(self.dt > 0.0) || !(self.v_max > 0.0) {
            return Err(SimError::Config("dt and v_max must be positive".into()));
        }
        if self.max_accel < 0.0
            || self.max_brake_decel < 0.0
            || self.drag_coeff < 0.0
            || self.max_steer_rate < 0.0
        {
            return Err(SimError::Config(
                "dynamics coefficients must be non-negative".into(),
            ));
        }
        Ok(())
    }
}

/// `r = v * (cos_w*cos(angle) - sin_w*|sin(angle)| - pos_w*|trackPos|)`, with
/// `v` in m/s, and a flat `-penalty` on any termination.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RewardConfig {
    pub cos_weight: f64,
    pub sin_weight: f64,
    pub track_pos_weight: f64,
    pub termination_penalty: f64,
}

impl Default for RewardConfig {
    fn default() -> Self {
        Self {
            cos_weight: 1.0,
            sin_weight: 1.0,
            track_pos_weight: 1.0,
            termination_penalty: 200.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepResult {
    pub observation: Observation,
    pub reward: f64,
    pub terminated: bool,
    pub termination_reason: Option<TerminationReason>,
    pub lap_completed_this_step: bool,
}

pub fn observe(state: &CarState, track: &Track) -> Observation {
    Observation {
        track_pos: state.lateral / (track.width() / 2.0),
        angle: state.heading_err,
        speed_x: state.speed * MS_TO_KMH,
    }
}

pub fn compute_reward(
    obs: &Observation,
    reason: Option<TerminationReason>,
    cfg: &RewardConfig,
) -> f64 {
    if reason.is_some() {
        return -cfg.termination_penalty;
    }
    let v = obs.speed_x / MS_TO_KMH;
    v * (cfg.cos_weight * obs.angle.cos()
        - cfg.sin_weight * obs.angle.sin().abs()
        - cfg.track_pos_weight * obs.track_pos.abs())
}

/// Precedence when several rules hold: horizontal, then out-of-track, then stuck.
pub fn check_termination(
    state: &CarState,
    obs: &Observation,
    term: &TerminationPolicy,
) -> Option<TerminationReason> {
    if obs.angle.abs() > term.horizontal_angle_threshold {
        Some(TerminationReason::Horizontal)
    } else if term.out_of_track_enabled && obs.track_pos.abs() > 1.0 {
        Some(TerminationReason::OutOfTrack)
    } else if term.stuck_enabled
        && state.step_count > term.stuck_grace_steps
        && obs.speed_x < term.stuck_speed_threshold
    {
        Some(TerminationReason::Stuck)
    } else {
        None
    }
}

/// Environment bundle: an immutable shared track plus dynamics, termination
/// and reward settings.
#[derive(Debug, Clone)]
pub struct Env {
    pub track: Arc<Track>,
    pub dynamics: DynamicsConfig,
    pub termination: TerminationPolicy,
    pub reward: RewardConfig,
}

impl Env {
    pub fn new(track: Arc<Track>, termination: TerminationPolicy) -> Self {
        Self {
            track,
            dynamics: DynamicsConfig::default(),
            termination,
            reward: RewardConfig::default(),
        }
    }

    /// Centered standing start at `s = 0`. The seed is accepted for interface
    /// stability; the start pose is fixed.
    pub fn reset(&self, _seed: u64) -> (CarState, Observation) {
        let state = CarState {
            s: 0.0,
            lateral: 0.0,
            heading_err: 0.0,
            speed: 0.0,
            step_count: 0,
            laps_completed: 0,
            progress: 0.0,
            terminated: None,
        };
        let obs = observe(&state, &self.track);
        (state, obs)
    }

    pub fn step(
        &self,
        state: &CarState,
        action: &CarAction,
    ) -> Result<(CarState, StepResult), SimError> {
        if let Some(reason) = state.terminated {
            return Err(SimError::EpisodeFinished(reason));
        }
        let a = action.clamped();
        let d = &self.dynamics;
        let v = state.speed;
        let h = state.heading_err;
        let kappa = self.track.curvature_at(state.s);
        let length = self.track.total_length();

        let heading_err =
            wrap_angle(h + a.steer * d.max_steer_rate * d.dt - kappa * v * d.dt * h.cos());
        let lateral = state.lateral + v * h.sin() * d.dt;
        let progress = state.progress + v * h.cos() * d.dt;
        let lap_count = (progress / length).floor().max(0.0) as u32;
        let laps_completed = state.laps_completed.max(lap_count);
        let speed = (v
            + (a.accel * d.max_accel - a.brake * d.max_brake_decel - d.drag_coeff * v) * d.dt)
            .clamp(0.0, d.v_max);

        let mut next = CarState {
            s: progress.rem_euclid(length),
            lateral,
            heading_err,
            speed,
            step_count: state.step_count + 1,
            laps_completed,
            progress,
            terminated: None,
        };
        let observation = observe(&next, &self.track);
        let reason = check_termination(&next, &observation, &self.termination);
        next.terminated = reason;
        let reward = compute_reward(&observation, reason, &self.reward);
        Ok((
            next,
            StepResult {
                observation,
                reward,
                terminated: reason.is_some(),
                termination_reason: reason,
                lap_completed_this_step: laps_completed > state.laps_completed,
            },
        ))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn env(mode: TerminationMode) -> Env {
        Env::new(Arc::new(oval(100.0, 50.0, 10.0)), mode.policy())
    }

    fn state_with(speed: f64, step_count: u64) -> CarState {
        let (mut s, _) = env(TerminationMode::None).reset(0);
        s.speed = speed;
        s.step_count = step_count;
        s
    }

    #[test]
    fn reset_is_centered_and_stationary() {
        let e = env(TerminationMode::Both);
        let (s, o) = e.reset(3);
        assert_eq!(o.track_pos, 0.0);
        assert_eq!(o.speed_x, 0.0);
        assert_eq!(o.angle, 0.0);
        assert_eq!(s, e.reset(3).0);
    }

    #[test]
    fn speed_update_formula() {
        let e = env(TerminationMode::None);
        let s = state_with(10.0, 0);
        let (n, _) = e.step(&s, &CarAction::new(0.0, 1.0, 0.0)).unwrap();
        // 10 + (5 - 0.2) * 0.05
        assert!((n.speed - 10.24).abs() < 1e-12);
    }

    #[test]
    fn straight_line_keeps_lateral() {
        let e = env(TerminationMode::None);
        let mut s = state_with(20.0, 0);
        s.lateral = 1.5;
        for accel in [0.0, 0.5, 1.0] {
            let (n, r) = e.step(&s, &CarAction::new(0.0, accel, 0.0)).unwrap();
            assert_eq!(n.lateral, 1.5);
            assert_eq!(r.observation.track_pos, 0.3);
        }
    }

    #[test]
    fn lap_wrap_counts_once() {
        let e = env(TerminationMode::None);
        let len = e.track.total_length();
        let mut s = state_with(20.0, 500);
        s.progress = len - 0.5;
        s.s = len - 0.5;
        let (n, r) = e.step(&s, &CarAction::new(0.0, 1.0, 0.0)).unwrap();
        assert_eq!(n.laps_completed, 1);
        assert!(r.lap_completed_this_step);
        assert!((n.s - 0.5).abs() < 1e-9);
        let (n2, r2) = e.step(&n, &CarAction::new(0.0, 1.0, 0.0)).unwrap();
        assert_eq!(n2.laps_completed, 1);
        assert!(!r2.lap_completed_this_step);
    }

    #[test]
    fn reward_examples() {
        let cfg = RewardConfig::default();
        let obs = Observation {
            track_pos: 0.0,
            angle: 0.0,
            speed_x: 36.0,
        };
        assert!((compute_reward(&obs, None, &cfg) - 10.0).abs() < 1e-12);
        assert_eq!(
            compute_reward(&obs, Some(TerminationReason::OutOfTrack), &cfg),
            -200.0
        );
        assert_eq!(
            compute_reward(&obs, Some(TerminationReason::Horizontal), &cfg),
            -200.0
        );
        assert_eq!(
            compute_reward(&obs, Some(TerminationReason::Stuck), &cfg),
            -200.0
        );
        let still = Observation {
            track_pos: 0.7,
            angle: 0.4,
            speed_x: 0.0,
        };
        assert_eq!(compute_reward(&still, None, &cfg), 0.0);
    }

    #[test]
    fn termination_examples() {
        let stuck = TerminationMode::Stuck.policy();
        let obs = |track_pos, angle, speed_x| Observation {
            track_pos,
            angle,
            speed_x,
        };
        assert_eq!(
            check_termination(&state_with(0.0, 150), &obs(0.0, 0.0, 4.0), &stuck),
            Some(TerminationReason::Stuck)
        );
        assert_eq!(
            check_termination(&state_with(0.0, 50), &obs(0.0, 0.0, 0.0), &stuck),
            None
        );
        assert_eq!(
            check_termination(&state_with(0.0, 100), &obs(0.0, 0.0, 0.0), &stuck),
            None
        );
        let none = TerminationMode::None.policy();
        assert_eq!(
            check_termination(&state_with(10.0, 10), &obs(1.2, 0.1, 36.0), &none),
            None
        );
        let out = TerminationMode::Out.policy();
        assert_eq!(
            check_termination(&state_with(10.0, 10), &obs(1.2, 0.1, 36.0), &out),
            Some(TerminationReason::OutOfTrack)
        );
        assert_eq!(
            check_termination(&state_with(10.0, 10), &obs(-1.0, 0.1, 36.0), &out),
            None
        );
    }

    #[test]
    fn termination_precedence() {
        let both = TerminationMode::Both.policy();
        let o = Observation {
            track_pos: 3.0,
            angle: 2.0,
            speed_x: 0.0,
        };
        assert_eq!(
            check_termination(&state_with(0.0, 500), &o, &both),
            Some(TerminationReason::Horizontal)
        );
        let o = Observation { angle: 0.0, ..o };
        assert_eq!(
            check_termination(&state_with(0.0, 500), &o, &both),
            Some(TerminationReason::OutOfTrack)
        );
    }

    #[test]
    fn step_after_termination_fails() {
        let e = env(TerminationMode::Out);
        let mut s = state_with(20.0, 10);
        s.lateral = 4.99;
        s.heading_err = 0.3;
        let (n, r) = e.step(&s, &CarAction::new(1.0, 1.0, 0.0)).unwrap();
        assert_eq!(r.termination_reason, Some(TerminationReason::OutOfTrack));
        assert_eq!(r.reward, -200.0);
        assert_eq!(
            e.step(&n, &CarAction::default()).unwrap_err(),
            SimError::EpisodeFinished(TerminationReason::OutOfTrack)
        );
    }

    #[test]
    fn actions_are_clamped() {
        let a = CarAction {
            steer: 3.0,
            accel: -1.0,
            brake: f64::NAN,
            gear: 9,
        }
        .clamped();
        assert_eq!(
            a,
            CarAction {
                steer: 1.0,
                accel: 0.0,
                brake: 0.0,
                gear: 6
            }
        );
        assert!(a.is_legal());
    }

    #[test]
    fn mode_parsing() {
        for m in TerminationMode::ALL {
            assert_eq!(m.as_str().parse::<TerminationMode>().unwrap(), m);
        }
        assert!("sometimes".parse::<TerminationMode>().is_err());
    }
}
