//! Deep Q-network over a discrete action grid.
//!
//! Minimizes the mean squared TD error `(y - Q(s, a; w))^2` with
//! `y = r + gamma * max_a' Q(s', a'; w-)`, where `w-` is the target network
//! (or the online network when the target is disabled). Gradients flow only
//! through `Q(s, a)`.

use super::{
    argmax, stream, AgentAction, AgentCheckpoint, AgentError, AgentKind, CheckpointHeader,
    DiscreteActionSet, Experience, Learner, LinearSchedule, ObsEncoder, ReplayBuffer, Transition,
};
use crate::nn::{Activation, GradientSet, Mlp, Sgd, SgdConfig};
use crate::sim::Observation;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DqnConfig {
    pub hidden: Vec<usize>,
    pub hidden_activation: Activation,
    pub gamma: f64,
    pub sgd: SgdConfig,
    pub epsilon: LinearSchedule,
    pub batch_size: usize,
    pub use_replay: bool,
    pub replay_capacity: usize,
    pub use_target_net: bool,
    /// Hard sync period, in training updates.
    pub target_sync_interval: u64,
    /// Replay contents required before the first update (at least `batch_size`).
    pub learning_starts: usize,
    pub reward_scale: f64,
}

impl Default for DqnConfig {
    fn default() -> Self {
        Self {
            hidden: vec![64, 64],
            hidden_activation: Activation::Tanh,
            gamma: 0.99,
            sgd: SgdConfig::default(),
            epsilon: LinearSchedule {
                start: 1.0,
                end: 0.05,
                steps: 50_000,
            },
            batch_size: 32,
            use_replay: true,
            replay_capacity: 100_000,
            use_target_net: true,
            target_sync_interval: 1000,
            learning_starts: 32,
            reward_scale: 0.01,
        }
    }
}

/// `y = r` when `done`, else `r + gamma * max(net(s_next))`.
pub fn compute_dqn_target(
    r: f64,
    s_next: &[f64],
    done: bool,
    gamma: f64,
    net: &Mlp,
) -> Result<f64, AgentError> {
    if done {
        return Ok(r);
    }
    let q = net.predict(s_next)?;
    if q.iter().any(|v| !v.is_finite()) {
        return Err(AgentError::Divergence(
            "non-finite target network output".into(),
        ));
    }
    Ok(r + gamma * argmax(&q).1)
}

#[derive(Debug, Clone)]
pub struct DqnAgent {
    pub config: DqnConfig,
    online: Mlp,
    target: Option<Mlp>,
    opt: Sgd,
    replay: ReplayBuffer<usize>,
    rng: ChaCha8Rng,
    steps: u64,
    updates: u64,
    num_actions: usize,
    pub actions: DiscreteActionSet,
    pub encoder: ObsEncoder,
    grads: GradientSet,
}

impl DqnAgent {
    /// Agent over arbitrary feature vectors with `num_actions` outputs.
    pub fn new(
        input_dim: usize,
        num_actions: usize,
        config: DqnConfig,
        seed: u64,
    ) -> Result<Self, AgentError> {
        if config.batch_size == 0 || config.replay_capacity == 0 {
            return Err(AgentError::Config(
                "batch size and replay capacity must be positive".into(),
            ));
        }
        if !(0.0..1.0).contains(&config.gamma) {
            return Err(AgentError::Config("gamma must be in [0, 1)".into()));
        }
        let mut sizes = vec![input_dim];
        sizes.extend(&config.hidden);
        sizes.push(num_actions);
        let mut acts = vec![config.hidden_activation; config.hidden.len()];
        acts.push(Activation::Linear);
        let online = Mlp::init_with_rng(&sizes, &acts, &mut stream(seed, 0))?;
        Self::assemble(
            online,
            config,
            seed,
            DiscreteActionSet::default(),
            ObsEncoder::default(),
        )
    }

    /// Agent driving the car with the given action grid.
    pub fn for_track(
        encoder: ObsEncoder,
        actions: DiscreteActionSet,
        config: DqnConfig,
        seed: u64,
    ) -> Result<Self, AgentError> {
        actions.validate()?;
        let mut agent = Self::new(encoder.dim(), actions.len(), config, seed)?;
        agent.actions = actions;
        agent.encoder = encoder;
        Ok(agent)
    }

    fn assemble(
        online: Mlp,
        config: DqnConfig,
        seed: u64,
        actions: DiscreteActionSet,
        encoder: ObsEncoder,
    ) -> Result<Self, AgentError> {
        let target = config.use_target_net.then(|| online.clone());
        let opt = Sgd::new(config.sgd, &online)?;
        let capacity = if config.use_replay {
            config.replay_capacity
        } else {
            1
        };
        Ok(Self {
            num_actions: online.output_dim(),
            grads: GradientSet::zeros_like(&online),
            target,
            opt,
            replay: ReplayBuffer::new(capacity, seed ^ 0x5eed_0001),
            rng: stream(seed, 1),
            steps: 0,
            updates: 0,
            online,
            actions,
            encoder,
            config,
        })
    }

    pub fn from_checkpoint(ckpt: &AgentCheckpoint) -> Result<Self, AgentError> {
        let h = &ckpt.header;
        let config: DqnConfig = serde_json::from_value(h.hyperparameters.clone())
            .map_err(|e| AgentError::Checkpoint(e.to_string()))?;
        let actions = h
            .actions
            .clone()
            .ok_or_else(|| AgentError::Checkpoint("missing action set".into()))?;
        let online = ckpt.net("online")?.clone();
        if online.output_dim() != actions.len() || online.input_dim() != h.encoder.dim() {
            return Err(AgentError::Checkpoint(
                "network shape does not match header".into(),
            ));
        }
        Self::assemble(online, config, 0, actions, h.encoder)
    }

    pub fn online(&self) -> &Mlp {
        &self.online
    }

    pub fn online_mut(&mut self) -> &mut Mlp {
        &mut self.online
    }

    pub fn target(&self) -> Option<&Mlp> {
        self.target.as_ref()
    }

    pub fn replay(&self) -> &ReplayBuffer<usize> {
        &self.replay
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    pub fn updates(&self) -> u64 {
        self.updates
    }

    pub fn epsilon(&self, step: u64) -> f64 {
        self.config.epsilon.value(step)
    }

    pub fn q_values(&self, s: &[f64]) -> Result<Vec<f64>, AgentError> {
        Ok(self.online.predict(s)?)
    }

    pub fn greedy_action(&self, s: &[f64]) -> Result<usize, AgentError> {
        Ok(argmax(&self.q_values(s)?).0)
    }

    /// Epsilon-greedy choice; ties go to the lowest index.
    pub fn select_action(&mut self, s: &[f64], step: u64) -> Result<usize, AgentError> {
        if self.rng.gen::<f64>() < self.epsilon(step) {
            return Ok(self.rng.gen_range(0..self.num_actions));
        }
        self.greedy_action(s)
    }

    pub fn remember(&mut self, t: Transition<usize>) {
        self.replay.push(t);
    }

    /// One update from replay (or from the latest transition when replay is
    /// off). `Ok(None)` when the buffer is not ready yet.
    pub fn train_step(&mut self) -> Result<Option<f64>, AgentError> {
        let batch: Vec<Transition<usize>> = if self.config.use_replay {
            let needed = self.config.learning_starts.max(self.config.batch_size);
            if self.replay.len() < needed {
                return Ok(None);
            }
            self.replay
                .sample(self.config.batch_size)
                .into_iter()
                .cloned()
                .collect()
        } else {
            match self.replay.latest() {
                Some(t) => vec![t.clone()],
                None => return Ok(None),
            }
        };
        let refs: Vec<&Transition<usize>> = batch.iter().collect();
        self.train_on(&refs).map(Some)
    }

    /// One SGD step on the given batch with frozen targets; returns the
    /// pre-step mean squared TD error.
    pub fn train_on(&mut self, batch: &[&Transition<usize>]) -> Result<f64, AgentError> {
        if batch.is_empty() {
            return Ok(0.0);
        }
        let target_net = self.target.as_ref().unwrap_or(&self.online);
        let targets = batch
            .iter()
            .map(|t| compute_dqn_target(t.r, &t.s_next, t.done, self.config.gamma, target_net))
            .collect::<Result<Vec<_>, _>>()?;

        let n = batch.len() as f64;
        self.grads.fill_zero();
        let mut loss = 0.0;
        let mut out_grad = vec![0.0; self.num_actions];
        for (t, y) in batch.iter().zip(&targets) {
            if t.a >= self.num_actions {
                return Err(AgentError::Shape {
                    expected: self.num_actions,
                    got: t.a + 1,
                });
            }
            let (q, cache) = self.online.forward(&t.s)?;
            let err = q[t.a] - y;
            loss += err * err;
            out_grad.iter_mut().for_each(|g| *g = 0.0);
            out_grad[t.a] = 2.0 * err / n;
            self.online
                .backward_accumulate(&cache, &out_grad, &mut self.grads)?;
        }
        loss /= n;
        if !loss.is_finite() {
            return Err(AgentError::Divergence(format!("DQN loss is {loss}")));
        }
        self.opt
            .step(&mut self.online, &self.grads)
            .map_err(|e| AgentError::Divergence(e.to_string()))?;
        self.updates += 1;
        if let Some(target) = self.target.as_mut() {
            if self
                .updates
                .is_multiple_of(self.config.target_sync_interval.max(1))
            {
                target.copy_from(&self.online)?;
            }
        }
        Ok(loss)
    }
}

impl Learner for DqnAgent {
    fn kind_label(&self) -> &str {
        "dqn"
    }

    fn act(&mut self, obs: &Observation, explore: bool) -> AgentAction {
        let s = self.encoder.encode(obs);
        let index = if explore {
            self.select_action(&s, self.steps)
        } else {
            self.greedy_action(&s)
        }
        .unwrap_or(0);
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
            .ok_or_else(|| AgentError::Config("DQN needs a discrete action index".into()))?;
        self.remember(Transition {
            s: self.encoder.encode(exp.obs),
            a,
            r: exp.reward * self.config.reward_scale,
            s_next: self.encoder.encode(exp.next_obs),
            done: exp.done,
        });
        self.steps += 1;
        self.train_step()
    }

    fn checkpoint(&self) -> Option<AgentCheckpoint> {
        Some(AgentCheckpoint {
            header: CheckpointHeader {
                kind: AgentKind::Dqn,
                encoder: self.encoder,
                action_description: self.actions.describe(),
                actions: Some(self.actions.clone()),
                tile_coder: None,
                hyperparameters: serde_json::to_value(&self.config).ok()?,
            },
            nets: vec![("online".into(), self.online.clone())],
            table: Vec::new(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::Layer;

    fn tiny_config() -> DqnConfig {
        DqnConfig {
            hidden: vec![],
            sgd: SgdConfig {
                learning_rate: 1e-3,
                momentum: 0.0,
                gradient_clip_norm: None,
            },
            batch_size: 1,
            learning_starts: 1,
            use_target_net: false,
            ..DqnConfig::default()
        }
    }

    fn fixed_net(values: &[f64]) -> Mlp {
        Mlp::from_layers(vec![Layer {
            in_dim: 1,
            out_dim: values.len(),
            activation: Activation::Linear,
            weights: vec![0.0; values.len()],
            bias: values.to_vec(),
        }])
        .unwrap()
    }

    #[test]
    fn target_examples() {
        let net = fixed_net(&[0.5, 2.0, -1.0]);
        assert!((compute_dqn_target(1.0, &[0.0], false, 0.9, &net).unwrap() - 2.8).abs() < 1e-12);
        assert_eq!(
            compute_dqn_target(1.0, &[0.0], true, 0.9, &net).unwrap(),
            1.0
        );
        assert_eq!(
            compute_dqn_target(-3.0, &[0.0], false, 0.0, &net).unwrap(),
            -3.0
        );
        // pure function of its inputs
        let a = compute_dqn_target(0.3, &[0.7], false, 0.99, &net).unwrap();
        assert_eq!(
            a,
            compute_dqn_target(0.3, &[0.7], false, 0.99, &net).unwrap()
        );
    }

    #[test]
    fn zero_residual_batch_is_noop() {
        let mut agent = DqnAgent::new(1, 2, tiny_config(), 3).unwrap();
        let s = vec![0.4];
        let q = agent.q_values(&s).unwrap();
        let before = agent.online().clone();
        let t = Transition {
            s: s.clone(),
            a: 1,
            r: q[1],
            s_next: vec![0.0],
            done: true,
        };
        let loss = agent.train_on(&[&t]).unwrap();
        assert_eq!(loss, 0.0);
        assert_eq!(agent.online(), &before);
    }

    #[test]
    fn single_transition_descends() {
        // Q(s, a) = w * s with one parameter; frozen target via done=true.
        let mut agent = DqnAgent::new(1, 1, tiny_config(), 3).unwrap();
        let t = Transition {
            s: vec![1.0],
            a: 0,
            r: 2.0,
            s_next: vec![0.0],
            done: true,
        };
        let pre = agent.train_on(&[&t]).unwrap();
        let post = agent.train_on(&[&t]).unwrap();
        assert!(post < pre, "{post} !< {pre}");
    }

    #[test]
    fn greedy_selection_and_ties() {
        let mut agent = DqnAgent::new(1, 3, tiny_config(), 3).unwrap();
        agent.config.epsilon = LinearSchedule {
            start: 0.0,
            end: 0.0,
            steps: 0,
        };
        *agent.online_mut() = fixed_net(&[0.1, 0.9, 0.3]);
        assert_eq!(agent.select_action(&[0.0], 0).unwrap(), 1);
        *agent.online_mut() = fixed_net(&[0.2, 0.2, 0.2]);
        assert_eq!(agent.select_action(&[0.0], 0).unwrap(), 0);
    }

    #[test]
    fn not_ready_until_batch_available() {
        let cfg = DqnConfig {
            batch_size: 4,
            learning_starts: 4,
            ..tiny_config()
        };
        let mut agent = DqnAgent::new(1, 2, cfg, 0).unwrap();
        assert!(agent.train_step().unwrap().is_none());
        for i in 0..3 {
            agent.remember(Transition {
                s: vec![i as f64],
                a: 0,
                r: 0.0,
                s_next: vec![0.0],
                done: false,
            });
            assert!(agent.train_step().unwrap().is_none());
        }
        agent.remember(Transition {
            s: vec![1.0],
            a: 1,
            r: 1.0,
            s_next: vec![0.0],
            done: true,
        });
        assert!(agent.train_step().unwrap().is_some());
    }

    #[test]
    fn target_sync_interval() {
        let cfg = DqnConfig {
            use_target_net: true,
            target_sync_interval: 3,
            ..tiny_config()
        };
        let mut agent = DqnAgent::new(1, 2, cfg, 5).unwrap();
        let t = Transition {
            s: vec![1.0],
            a: 0,
            r: 5.0,
            s_next: vec![0.5],
            done: false,
        };
        let initial = agent.target().unwrap().clone();
        agent.train_on(&[&t]).unwrap();
        agent.train_on(&[&t]).unwrap();
        assert_eq!(agent.target().unwrap(), &initial);
        agent.train_on(&[&t]).unwrap();
        assert_eq!(agent.target().unwrap(), agent.online());
    }

    #[test]
    fn no_replay_trains_on_latest() {
        let cfg = DqnConfig {
            use_replay: false,
            batch_size: 32,
            ..tiny_config()
        };
        let mut agent = DqnAgent::new(1, 2, cfg, 0).unwrap();
        assert_eq!(agent.replay().capacity(), 1);
        agent.remember(Transition {
            s: vec![1.0],
            a: 1,
            r: 1.0,
            s_next: vec![0.0],
            done: true,
        });
        assert!(agent.train_step().unwrap().is_some());
    }
}
