use super::{
    stream, AgentAction, AgentCheckpoint, AgentError, AgentKind, CheckpointHeader,
    DiscreteActionSet, Experience, Learner, LinearSchedule, ObsEncoder, QTable, TileCoder,
};
use crate::sim::{DynamicsConfig, Observation, MS_TO_KMH};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QLearningConfig {
    pub num_tilings: usize,
    /// Tiles per encoded observation feature; must match the encoder dimension.
    pub tiles_per_dim: Vec<usize>,
    pub learning_rate: f64,
    pub gamma: f64,
    pub epsilon: LinearSchedule,
    pub reward_scale: f64,
}

impl Default for QLearningConfig {
    fn default() -> Self {
        Self {
            num_tilings: 8,
            tiles_per_dim: vec![10, 10, 6],
            learning_rate: 0.1,
            gamma: 0.99,
            epsilon: LinearSchedule {
                start: 1.0,
                end: 0.05,
                steps: 50_000,
            },
            reward_scale: 0.01,
        }
    }
}

/// Tabular Q-learning over tile-coded observations, no replay.
#[derive(Debug, Clone)]
pub struct QLearningAgent {
    pub config: QLearningConfig,
    pub coder: TileCoder,
    pub table: QTable,
    pub actions: DiscreteActionSet,
    pub encoder: ObsEncoder,
    rng: ChaCha8Rng,
    steps: u64,
}

impl QLearningAgent {
    pub fn new(
        encoder: ObsEncoder,
        actions: DiscreteActionSet,
        mut config: QLearningConfig,
        dynamics: &DynamicsConfig,
        seed: u64,
    ) -> Result<Self, AgentError> {
        actions.validate()?;
        if config.tiles_per_dim.len() != encoder.dim() {
            // paper-exact observations drop the angle feature
            if encoder.paper_exact && config.tiles_per_dim.len() == 3 {
                config.tiles_per_dim.remove(1);
            } else {
                return Err(AgentError::Config(format!(
                    "{} tile counts for a {}-feature observation",
                    config.tiles_per_dim.len(),
                    encoder.dim()
                )));
            }
        }
        let coder = TileCoder::new(
            config.num_tilings,
            config.tiles_per_dim.clone(),
            encoder.bounds(dynamics.v_max * MS_TO_KMH),
        )?;
        let table = QTable::new(actions.len(), config.learning_rate, config.gamma)?;
        Ok(Self {
            config,
            coder,
            table,
            actions,
            encoder,
            rng: stream(seed, 3),
            steps: 0,
        })
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    pub fn from_checkpoint(ckpt: &AgentCheckpoint) -> Result<Self, AgentError> {
        let h = &ckpt.header;
        let config: QLearningConfig = serde_json::from_value(h.hyperparameters.clone())
            .map_err(|e| AgentError::Checkpoint(e.to_string()))?;
        let coder = h
            .tile_coder
            .clone()
            .ok_or_else(|| AgentError::Checkpoint("missing tile coder".into()))?;
        let actions = h
            .actions
            .clone()
            .ok_or_else(|| AgentError::Checkpoint("missing action set".into()))?;
        let mut table = QTable::new(actions.len(), config.learning_rate, config.gamma)?;
        for &(t, a, v) in &ckpt.table {
            table.insert(t, a, v);
        }
        Ok(Self {
            config,
            coder,
            table,
            actions,
            encoder: h.encoder,
            rng: stream(0, 3),
            steps: 0,
        })
    }

    fn tiles(&self, obs: &Observation) -> Vec<usize> {
        self.coder
            .encode(&self.encoder.encode(obs))
            .expect("encoder and coder dimensions agree")
    }
}

impl Learner for QLearningAgent {
    fn kind_label(&self) -> &str {
        "qlearn"
    }

    fn act(&mut self, obs: &Observation, explore: bool) -> AgentAction {
        let index = if explore && self.rng.gen::<f64>() < self.config.epsilon.value(self.steps) {
            self.rng.gen_range(0..self.actions.len())
        } else {
            self.table.best(&self.tiles(obs)).0
        };
        AgentAction {
            car: self.actions.decode(index),
            index: Some(index),
            continuous: Vec::new(),
        }
    }

    fn learn(&mut self, exp: Experience<'_>) -> Result<Option<f64>, AgentError> {
        let a = exp
            .action
            .index
            .ok_or_else(|| AgentError::Config("Q-learning needs a discrete action index".into()))?;
        let s = self.tiles(exp.obs);
        let s_next = self.tiles(exp.next_obs);
        let delta = self.table.update(
            &s,
            a,
            exp.reward * self.config.reward_scale,
            &s_next,
            exp.done,
        );
        self.steps += 1;
        if !delta.is_finite() {
            return Err(AgentError::Divergence("non-finite TD error".into()));
        }
        Ok(Some(delta * delta))
    }

    fn checkpoint(&self) -> Option<AgentCheckpoint> {
        Some(AgentCheckpoint {
            header: CheckpointHeader {
                kind: AgentKind::Qlearn,
                encoder: self.encoder,
                action_description: self.actions.describe(),
                actions: Some(self.actions.clone()),
                tile_coder: Some(self.coder.clone()),
                hyperparameters: serde_json::to_value(&self.config).ok()?,
            },
            nets: Vec::new(),
            table: self.table.sorted_entries(),
        })
    }
}
