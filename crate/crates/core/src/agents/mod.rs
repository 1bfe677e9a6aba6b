//! Learning agents: tile-coded Q-learning, DQN over a discrete action grid, and
//! the deterministic actor-critic (DDAC) for continuous controls.
//!
//! The core agents work on plain feature vectors so they can be exercised on
//! small synthetic MDPs. [`Learner`] adapts them to the car simulator.

mod actions;
mod checkpoint;
mod ddac;
mod dqn;
mod qlearn;
mod replay;
mod tile;

pub use actions::DiscreteActionSet;
pub use checkpoint::{AgentCheckpoint, CheckpointHeader};
pub use ddac::{policy_gradient, ActionSquash, DdacAgent, DdacConfig};
pub use dqn::{compute_dqn_target, DqnAgent, DqnConfig};
pub use qlearn::{QLearningAgent, QLearningConfig};
pub use replay::{ReplayBuffer, Transition};
pub use tile::{argmax, QTable, TileCoder};

use crate::nn::{CheckpointError, NnError};
use crate::sim::{CarAction, Observation};
use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum AgentError {
    #[error("invalid agent configuration: {0}")]
    Config(String),
    #[error("shape mismatch: expected {expected}, got {got}")]
    Shape { expected: usize, got: usize },
    #[error(transparent)]
    Network(#[from] NnError),
    #[error("training diverged: {0}")]
    Divergence(String),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
}

impl From<CheckpointError> for AgentError {
    fn from(e: CheckpointError) -> Self {
        AgentError::Checkpoint(e.to_string())
    }
}

impl From<std::io::Error> for AgentError {
    fn from(e: std::io::Error) -> Self {
        AgentError::Checkpoint(e.to_string())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AgentKind {
    Qlearn,
    Dqn,
    Ddac,
}

impl AgentKind {
    pub fn as_str(self) -> &'static str {
        match self {
            AgentKind::Qlearn => "qlearn",
            AgentKind::Dqn => "dqn",
            AgentKind::Ddac => "ddac",
        }
    }
}

impl fmt::Display for AgentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for AgentKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "qlearn" => Ok(AgentKind::Qlearn),
            "dqn" => Ok(AgentKind::Dqn),
            "ddac" => Ok(AgentKind::Ddac),
            other => Err(format!("unknown algorithm `{other}` (qlearn|dqn|ddac)")),
        }
    }
}

/// Linear interpolation from `start` to `end` over `steps`, then constant.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinearSchedule {
    pub start: f64,
    pub end: f64,
    pub steps: u64,
}

impl LinearSchedule {
    pub fn value(&self, step: u64) -> f64 {
        if self.steps == 0 || step >= self.steps {
            return self.end;
        }
        let frac = step as f64 / self.steps as f64;
        self.start + (self.end - self.start) * frac
    }
}

/// Maps simulator observations to network/tile inputs.
///
/// Features are `[trackPos, angle, speedX / 100]`, or `[trackPos, speedX / 100]`
/// when `paper_exact` is set. trackPos is clipped to `±track_pos_clip` so far
/// off-track positions do not saturate the networks.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ObsEncoder {
    pub paper_exact: bool,
    pub speed_scale: f64,
    pub track_pos_clip: f64,
}

impl Default for ObsEncoder {
    fn default() -> Self {
        Self {
            paper_exact: false,
            speed_scale: 0.01,
            track_pos_clip: 3.0,
        }
    }
}

impl ObsEncoder {
    pub fn paper_exact() -> Self {
        Self {
            paper_exact: true,
            ..Self::default()
        }
    }

    pub fn dim(&self) -> usize {
        if self.paper_exact {
            2
        } else {
            3
        }
    }

    pub fn encode(&self, obs: &Observation) -> Vec<f64> {
        let pos = obs
            .track_pos
            .clamp(-self.track_pos_clip, self.track_pos_clip);
        let speed = obs.speed_x * self.speed_scale;
        if self.paper_exact {
            vec![pos, speed]
        } else {
            vec![pos, obs.angle, speed]
        }
    }

    /// `(low, high)` range of every encoded feature, for tile coding.
    pub fn bounds(&self, v_max_kmh: f64) -> Vec<(f64, f64)> {
        let pos = (-1.5, 1.5);
        let speed = (0.0, v_max_kmh * self.speed_scale);
        if self.paper_exact {
            vec![pos, speed]
        } else {
            vec![
                pos,
                (-std::f64::consts::FRAC_PI_2, std::f64::consts::FRAC_PI_2),
                speed,
            ]
        }
    }
}

/// What an agent emitted for one step.
#[derive(Debug, Clone, PartialEq)]
pub struct AgentAction {
    pub car: CarAction,
    /// Discrete action index, for grid agents.
    pub index: Option<usize>,
    /// Continuous action vector as fed to the critic, for DDAC.
    pub continuous: Vec<f64>,
}

impl AgentAction {
    pub fn fixed(car: CarAction) -> Self {
        Self {
            car,
            index: None,
            continuous: Vec::new(),
        }
    }
}

pub struct Experience<'a> {
    pub obs: &'a Observation,
    pub action: &'a AgentAction,
    pub reward: f64,
    pub next_obs: &'a Observation,
    /// True only for environment terminations (bootstrap cut), not truncation.
    pub done: bool,
}

/// Shared interface the experiment harness drives.
pub trait Learner {
    fn kind_label(&self) -> &str;

    fn act(&mut self, obs: &Observation, explore: bool) -> AgentAction;

    /// Records one transition and performs at most one training update.
    /// Returns the update's loss, or `None` when no update ran.
    fn learn(&mut self, exp: Experience<'_>) -> Result<Option<f64>, AgentError>;

    fn begin_episode(&mut self) {}

    fn checkpoint(&self) -> Option<AgentCheckpoint> {
        None
    }
}

/// Any of the three built-in agents.
#[derive(Debug, Clone)]
pub enum Agent {
    Qlearn(QLearningAgent),
    Dqn(DqnAgent),
    Ddac(DdacAgent),
}

impl Agent {
    pub fn kind(&self) -> AgentKind {
        match self {
            Agent::Qlearn(_) => AgentKind::Qlearn,
            Agent::Dqn(_) => AgentKind::Dqn,
            Agent::Ddac(_) => AgentKind::Ddac,
        }
    }

    pub fn from_checkpoint(ckpt: &AgentCheckpoint) -> Result<Self, AgentError> {
        Ok(match ckpt.header.kind {
            AgentKind::Qlearn => Agent::Qlearn(QLearningAgent::from_checkpoint(ckpt)?),
            AgentKind::Dqn => Agent::Dqn(DqnAgent::from_checkpoint(ckpt)?),
            AgentKind::Ddac => Agent::Ddac(DdacAgent::from_checkpoint(ckpt)?),
        })
    }

    fn inner(&mut self) -> &mut dyn Learner {
        match self {
            Agent::Qlearn(a) => a,
            Agent::Dqn(a) => a,
            Agent::Ddac(a) => a,
        }
    }
}

impl Learner for Agent {
    fn kind_label(&self) -> &str {
        self.kind().as_str()
    }

    fn act(&mut self, obs: &Observation, explore: bool) -> AgentAction {
        self.inner().act(obs, explore)
    }

    fn learn(&mut self, exp: Experience<'_>) -> Result<Option<f64>, AgentError> {
        self.inner().learn(exp)
    }

    fn begin_episode(&mut self) {
        self.inner().begin_episode()
    }

    fn checkpoint(&self) -> Option<AgentCheckpoint> {
        match self {
            Agent::Qlearn(a) => a.checkpoint(),
            Agent::Dqn(a) => a.checkpoint(),
            Agent::Ddac(a) => a.checkpoint(),
        }
    }
}

/// Derives an independent RNG stream for one purpose of one seeded run.
pub(crate) fn stream(seed: u64, purpose: u64) -> rand_chacha::ChaCha8Rng {
    use rand::SeedableRng;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(purpose);
    rng
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn schedule_interpolates() {
        let s = LinearSchedule {
            start: 1.0,
            end: 0.05,
            steps: 100,
        };
        assert_eq!(s.value(0), 1.0);
        assert!((s.value(50) - 0.525).abs() < 1e-12);
        assert_eq!(s.value(100), 0.05);
        assert_eq!(s.value(10_000), 0.05);
        let mut prev = f64::INFINITY;
        for k in 0..200 {
            assert!(s.value(k) <= prev);
            prev = s.value(k);
        }
    }

    #[test]
    fn encoder_layouts() {
        let obs = Observation {
            track_pos: -7.0,
            angle: 0.2,
            speed_x: 50.0,
        };
        assert_eq!(ObsEncoder::default().encode(&obs), vec![-3.0, 0.2, 0.5]);
        assert_eq!(ObsEncoder::paper_exact().encode(&obs), vec![-3.0, 0.5]);
        assert_eq!(ObsEncoder::paper_exact().dim(), 2);
    }

    #[test]
    fn kind_parse() {
        for k in [AgentKind::Qlearn, AgentKind::Dqn, AgentKind::Ddac] {
            assert_eq!(k.as_str().parse::<AgentKind>().unwrap(), k);
        }
        assert!("sarsa".parse::<AgentKind>().is_err());
    }
}
