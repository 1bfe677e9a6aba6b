use super::AgentError;
use crate::sim::CarAction;
use serde::{Deserialize, Serialize};

/// Discrete action grid: every steer level paired with every throttle level.
/// Index layout is `steer_index * throttle_levels.len() + throttle_index`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscreteActionSet {
    pub steer_levels: Vec<f64>,
    /// `(accel, brake)` pairs.
    pub throttle_levels: Vec<(f64, f64)>,
}

impl Default for DiscreteActionSet {
    fn default() -> Self {
        Self {
            steer_levels: vec![-1.0, -0.5, 0.0, 0.5, 1.0],
            throttle_levels: vec![(1.0, 0.0), (0.3, 0.0), (0.0, 0.8)],
        }
    }
}

impl DiscreteActionSet {
    pub fn new(
        steer_levels: Vec<f64>,
        throttle_levels: Vec<(f64, f64)>,
    ) -> Result<Self, AgentError> {
        let set = Self {
            steer_levels,
            throttle_levels,
        };
        set.validate()?;
        Ok(set)
    }

    pub fn validate(&self) -> Result<(), AgentError> {
        if self.steer_levels.is_empty() || self.throttle_levels.is_empty() {
            return Err(AgentError::Config(
                "action set needs steer and throttle levels".into(),
            ));
        }
        if self.steer_levels.iter().any(|s| !(-1.0..=1.0).contains(s)) {
            return Err(AgentError::Config(
                "steer levels must lie in [-1, 1]".into(),
            ));
        }
        if self
            .throttle_levels
            .iter()
            .any(|(a, b)| !(0.0..=1.0).contains(a) || !(0.0..=1.0).contains(b))
        {
            return Err(AgentError::Config(
                "accel/brake levels must lie in [0, 1]".into(),
            ));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.steer_levels.len() * self.throttle_levels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn encode(&self, steer_index: usize, throttle_index: usize) -> usize {
        steer_index * self.throttle_levels.len() + throttle_index
    }

    pub fn split(&self, index: usize) -> (usize, usize) {
        (
            index / self.throttle_levels.len(),
            index % self.throttle_levels.len(),
        )
    }

    pub fn decode(&self, index: usize) -> CarAction {
        let (si, ti) = self.split(index);
        let (accel, brake) = self.throttle_levels[ti];
        CarAction {
            steer: self.steer_levels[si],
            accel,
            brake,
            gear: 1,
        }
    }

    /// Compact description stored in checkpoints.
    pub fn describe(&self) -> String {
        format!(
            "{} steer x {} throttle = {} actions",
            self.steer_levels.len(),
            self.throttle_levels.len(),
            self.len()
        )
    }
}
