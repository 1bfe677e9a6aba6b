//! Deterministic actor-critic for continuous car controls.
//!
//! The critic `Q(s, a)` regresses onto `y = r + gamma * Q(s', pi(s'))`. The
//! actor follows the chain rule `dQ/du = dQ/da|_{a = pi(s)} * dpi/du`: the
//! critic is differentiated with respect to its action inputs, and that
//! gradient is back-propagated through the actor.

use super::{
    stream, AgentAction, AgentCheckpoint, AgentError, AgentKind, CheckpointHeader, Experience,
    Learner, LinearSchedule, ObsEncoder, ReplayBuffer, Transition,
};
use crate::nn::{sigmoid, Activation, GradientSet, Mlp, Sgd, SgdConfig};
use crate::sim::{CarAction, Observation};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

/// Output squashing applied to the actor's linear outputs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ActionSquash {
    /// `[tanh(steer), sigmoid(accel), sigmoid(brake)]`
    CarControls,
    Identity,
}

impl ActionSquash {
    fn apply(self, z: &[f64]) -> Vec<f64> {
        match self {
            ActionSquash::Identity => z.to_vec(),
            ActionSquash::CarControls => z
                .iter()
                .enumerate()
                .map(|(i, &v)| if i == 0 { v.tanh() } else { sigmoid(v) })
                .collect(),
        }
    }

    /// Elementwise derivative given pre-squash `z` and squashed `a`.
    fn derivative(self, a: &[f64]) -> Vec<f64> {
        match self {
            ActionSquash::Identity => vec![1.0; a.len()],
            ActionSquash::CarControls => a
                .iter()
                .enumerate()
                .map(|(i, &y)| if i == 0 { 1.0 - y * y } else { y * (1.0 - y) })
                .collect(),
        }
    }

    fn clamp(self, a: &mut [f64]) {
        if self == ActionSquash::CarControls {
            a[0] = a[0].clamp(-1.0, 1.0);
            for v in &mut a[1..] {
                *v = v.clamp(0.0, 1.0);
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DdacConfig {
    pub actor_hidden: Vec<usize>,
    pub critic_hidden: Vec<usize>,
    pub hidden_activation: Activation,
    pub gamma: f64,
    pub actor_sgd: SgdConfig,
    pub critic_sgd: SgdConfig,
    /// Gaussian exploration scale per action dimension.
    pub noise: LinearSchedule,
    pub batch_size: usize,
    pub replay_capacity: usize,
    pub learning_starts: usize,
    /// Initial actor output-layer bias `[steer, accel, brake]` (pre-squash).
    pub actor_output_bias: Vec<f64>,
    pub reward_scale: f64,
    /// Polyak rate for slow-moving target copies of both nets used in the
    /// critic's bootstrap. `None` bootstraps from the live nets.
    #[serde(default)]
    pub target_tau: Option<f64>,
}

impl Default for DdacConfig {
    fn default() -> Self {
        Self {
            actor_hidden: vec![32, 32],
            critic_hidden: vec![32, 32],
            hidden_activation: Activation::Tanh,
            gamma: 0.99,
            actor_sgd: SgdConfig {
                learning_rate: 3e-5,
                ..SgdConfig::default()
            },
            critic_sgd: SgdConfig {
                learning_rate: 1e-3,
                ..SgdConfig::default()
            },
            noise: LinearSchedule {
                start: 0.3,
                end: 0.02,
                steps: 50_000,
            },
            batch_size: 32,
            replay_capacity: 100_000,
            learning_starts: 32,
            actor_output_bias: vec![0.0, 1.0, -3.0],
            reward_scale: 0.01,
            target_tau: None,
        }
    }
}

/// `Q(s, pi(s))` and its gradient with respect to every actor parameter.
pub fn policy_gradient(
    actor: &Mlp,
    critic: &Mlp,
    squash: ActionSquash,
    state: &[f64],
) -> Result<(f64, GradientSet), AgentError> {
    let obs_dim = state.len();
    if critic.input_dim() != obs_dim + actor.output_dim() {
        return Err(AgentError::Shape {
            expected: critic.input_dim(),
            got: obs_dim + actor.output_dim(),
        });
    }
    let (z, actor_cache) = actor.forward(state)?;
    let a = squash.apply(&z);
    let mut critic_in = state.to_vec();
    critic_in.extend_from_slice(&a);
    let (q, critic_cache) = critic.forward(&critic_in)?;
    let critic_grads = critic.backward(&critic_cache, &[1.0])?;
    let dq_dz: Vec<f64> = critic_grads.input[obs_dim..]
        .iter()
        .zip(squash.derivative(&a))
        .map(|(g, d)| g * d)
        .collect();
    let grads = actor.backward(&actor_cache, &dq_dz)?;
    Ok((q[0], grads))
}

#[derive(Debug, Clone)]
pub struct DdacAgent {
    pub config: DdacConfig,
    actor: Mlp,
    critic: Mlp,
    /// (actor, critic) targets when `target_tau` is set.
    targets: Option<(Mlp, Mlp)>,
    actor_opt: Sgd,
    critic_opt: Sgd,
    replay: ReplayBuffer<Vec<f64>>,
    rng: ChaCha8Rng,
    steps: u64,
    squash: ActionSquash,
    pub encoder: ObsEncoder,
    actor_grads: GradientSet,
    critic_grads: GradientSet,
}

impl DdacAgent {
    /// Car-driving agent: 3 squashed controls (steer, accel, brake).
    pub fn for_track(
        encoder: ObsEncoder,
        config: DdacConfig,
        seed: u64,
    ) -> Result<Self, AgentError> {
        let mut agent = Self::new(encoder.dim(), 3, ActionSquash::CarControls, config, seed)?;
        agent.encoder = encoder;
        Ok(agent)
    }

    pub fn new(
        obs_dim: usize,
        action_dim: usize,
        squash: ActionSquash,
        config: DdacConfig,
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
        if config.target_tau.is_some_and(|t| !(t > 0.0 && t <= 1.0)) {
            return Err(AgentError::Config("target_tau must be in (0, 1]".into()));
        }
        let build = |hidden: &[usize], inp: usize, out: usize, purpose: u64| {
            let mut sizes = vec![inp];
            sizes.extend(hidden);
            sizes.push(out);
            let mut acts = vec![config.hidden_activation; hidden.len()];
            acts.push(Activation::Linear);
            Mlp::init_with_rng(&sizes, &acts, &mut stream(seed, purpose))
        };
        let mut actor = build(&config.actor_hidden, obs_dim, action_dim, 10)?;
        let critic = build(&config.critic_hidden, obs_dim + action_dim, 1, 11)?;
        if !config.actor_output_bias.is_empty() {
            if config.actor_output_bias.len() != action_dim {
                return Err(AgentError::Config(
                    "actor_output_bias must have one entry per action".into(),
                ));
            }
            let last = actor.layers_mut().last_mut().expect("non-empty");
            last.bias.copy_from_slice(&config.actor_output_bias);
        }
        Self::assemble(actor, critic, squash, config, ObsEncoder::default(), seed)
    }

    fn assemble(
        actor: Mlp,
        critic: Mlp,
        squash: ActionSquash,
        config: DdacConfig,
        encoder: ObsEncoder,
        seed: u64,
    ) -> Result<Self, AgentError> {
        let targets = config.target_tau.map(|_| (actor.clone(), critic.clone()));
        Ok(Self {
            targets,
            actor_opt: Sgd::new(config.actor_sgd, &actor)?,
            critic_opt: Sgd::new(config.critic_sgd, &critic)?,
            actor_grads: GradientSet::zeros_like(&actor),
            critic_grads: GradientSet::zeros_like(&critic),
            replay: ReplayBuffer::new(config.replay_capacity, seed ^ 0x5eed_0002),
            rng: stream(seed, 12),
            steps: 0,
            actor,
            critic,
            squash,
            encoder,
            config,
        })
    }

    pub fn from_checkpoint(ckpt: &AgentCheckpoint) -> Result<Self, AgentError> {
        let h = &ckpt.header;
        let config: DdacConfig = serde_json::from_value(h.hyperparameters.clone())
            .map_err(|e| AgentError::Checkpoint(e.to_string()))?;
        let actor = ckpt.net("actor")?.clone();
        let critic = ckpt.net("critic")?.clone();
        if actor.input_dim() != h.encoder.dim()
            || critic.input_dim() != h.encoder.dim() + actor.output_dim()
        {
            return Err(AgentError::Checkpoint(
                "network shapes do not match header".into(),
            ));
        }
        Self::assemble(
            actor,
            critic,
            ActionSquash::CarControls,
            config,
            h.encoder,
            0,
        )
    }

    pub fn actor(&self) -> &Mlp {
        &self.actor
    }

    pub fn critic(&self) -> &Mlp {
        &self.critic
    }

    pub fn actor_mut(&mut self) -> &mut Mlp {
        &mut self.actor
    }

    pub fn critic_mut(&mut self) -> &mut Mlp {
        &mut self.critic
    }

    /// Copy the live nets into the targets (no-op without targets).
    pub fn sync_targets(&mut self) {
        if let Some((a, c)) = self.targets.as_mut() {
            a.clone_from(&self.actor);
            c.clone_from(&self.critic);
        }
    }

    pub fn targets(&self) -> Option<(&Mlp, &Mlp)> {
        self.targets.as_ref().map(|(a, c)| (a, c))
    }

    /// Critic bootstrap `Q'(s', pi'(s'))` from the target pair (or live nets).
    pub fn bootstrap_value(&self, s_next: &[f64]) -> Result<f64, AgentError> {
        let (actor, critic) = match &self.targets {
            Some((a, c)) => (a, c),
            None => (&self.actor, &self.critic),
        };
        let mut input = s_next.to_vec();
        input.extend(self.squash.apply(&actor.predict(s_next)?));
        Ok(critic.predict(&input)?[0])
    }

    pub fn squash(&self) -> ActionSquash {
        self.squash
    }

    pub fn replay(&self) -> &ReplayBuffer<Vec<f64>> {
        &self.replay
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    pub fn noise_scale(&self, step: u64) -> f64 {
        self.config.noise.value(step)
    }

    /// Deterministic policy output `pi(s)` (squashed).
    pub fn policy(&self, s: &[f64]) -> Result<Vec<f64>, AgentError> {
        Ok(self.squash.apply(&self.actor.predict(s)?))
    }

    pub fn q_value(&self, s: &[f64], a: &[f64]) -> Result<f64, AgentError> {
        let mut input = s.to_vec();
        input.extend_from_slice(a);
        Ok(self.critic.predict(&input)?[0])
    }

    /// Policy output plus optional Gaussian noise, clamped to legal ranges.
    pub fn select_action(
        &mut self,
        s: &[f64],
        step: u64,
        explore: bool,
    ) -> Result<Vec<f64>, AgentError> {
        let mut a = self.policy(s)?;
        if explore {
            let sigma = self.noise_scale(step);
            for v in &mut a {
                let n: f64 = self.rng.sample(StandardNormal);
                *v += sigma * n;
            }
        }
        self.squash.clamp(&mut a);
        Ok(a)
    }

    pub fn remember(&mut self, t: Transition<Vec<f64>>) {
        self.replay.push(t);
    }

    /// Chain-rule gradient of `Q(s, pi(s; u))` with respect to `u`.
    pub fn actor_gradient(&self, s: &[f64]) -> Result<(f64, GradientSet), AgentError> {
        policy_gradient(&self.actor, &self.critic, self.squash, s)
    }

    /// One critic regression step; returns the pre-step mean squared error.
    pub fn update_critic(&mut self, batch: &[&Transition<Vec<f64>>]) -> Result<f64, AgentError> {
        if batch.is_empty() {
            return Ok(0.0);
        }
        let gamma = self.config.gamma;
        let targets = batch
            .iter()
            .map(|t| {
                if t.done {
                    Ok(t.r)
                } else {
                    Ok(t.r + gamma * self.bootstrap_value(&t.s_next)?)
                }
            })
            .collect::<Result<Vec<f64>, AgentError>>()?;
        let n = batch.len() as f64;
        self.critic_grads.fill_zero();
        let mut loss = 0.0;
        let mut input = Vec::new();
        for (t, y) in batch.iter().zip(&targets) {
            input.clear();
            input.extend_from_slice(&t.s);
            input.extend_from_slice(&t.a);
            let (q, cache) = self.critic.forward(&input)?;
            let err = q[0] - y;
            loss += err * err;
            self.critic
                .backward_accumulate(&cache, &[2.0 * err / n], &mut self.critic_grads)?;
        }
        loss /= n;
        if !loss.is_finite() {
            return Err(AgentError::Divergence(format!("critic loss is {loss}")));
        }
        self.critic_opt
            .step(&mut self.critic, &self.critic_grads)
            .map_err(|e| AgentError::Divergence(e.to_string()))?;
        Ok(loss)
    }

    /// One ascent step on mean `Q(s, pi(s))`; returns the pre-step objective.
    pub fn update_actor(&mut self, states: &[&[f64]]) -> Result<f64, AgentError> {
        if states.is_empty() {
            return Ok(0.0);
        }
        let n = states.len() as f64;
        self.actor_grads.fill_zero();
        let mut objective = 0.0;
        for s in states {
            let (q, g) = policy_gradient(&self.actor, &self.critic, self.squash, s)?;
            objective += q;
            self.actor_grads.add_assign(&g);
        }
        // descent on -Q
        self.actor_grads.scale(-1.0 / n);
        self.actor_opt
            .step(&mut self.actor, &self.actor_grads)
            .map_err(|e| AgentError::Divergence(e.to_string()))?;
        Ok(objective / n)
    }

    /// Critic step then actor step on one replay minibatch.
    /// `Ok(None)` while the buffer holds fewer than `learning_starts`.
    pub fn train_step(&mut self) -> Result<Option<(f64, f64)>, AgentError> {
        let needed = self.config.learning_starts.max(self.config.batch_size);
        if self.replay.len() < needed {
            return Ok(None);
        }
        let batch: Vec<Transition<Vec<f64>>> = self
            .replay
            .sample(self.config.batch_size)
            .into_iter()
            .cloned()
            .collect();
        let refs: Vec<&Transition<Vec<f64>>> = batch.iter().collect();
        let critic_loss = self.update_critic(&refs)?;
        let states: Vec<&[f64]> = batch.iter().map(|t| t.s.as_slice()).collect();
        let objective = self.update_actor(&states)?;
        if let (Some(tau), Some((ta, tc))) = (self.config.target_tau, self.targets.as_mut()) {
            ta.blend_from(&self.actor, tau)?;
            tc.blend_from(&self.critic, tau)?;
        }
        Ok(Some((critic_loss, objective)))
    }

    fn to_car_action(&self, a: &[f64]) -> CarAction {
        match self.squash {
            ActionSquash::CarControls => CarAction::new(a[0], a[1], a[2]).clamped(),
            ActionSquash::Identity => {
                CarAction::new(a.first().copied().unwrap_or(0.0), 0.0, 0.0).clamped()
            }
        }
    }
}

impl Learner for DdacAgent {
    fn kind_label(&self) -> &str {
        "ddac"
    }

    fn act(&mut self, obs: &Observation, explore: bool) -> AgentAction {
        let s = self.encoder.encode(obs);
        let a = self
            .select_action(&s, self.steps, explore)
            .unwrap_or_else(|_| vec![0.0, 0.0, 0.0]);
        AgentAction {
            car: self.to_car_action(&a),
            index: None,
            continuous: a,
        }
    }

    fn learn(&mut self, exp: Experience<'_>) -> Result<Option<f64>, AgentError> {
        if exp.action.continuous.len() != self.actor.output_dim() {
            return Err(AgentError::Shape {
                expected: self.actor.output_dim(),
                got: exp.action.continuous.len(),
            });
        }
        self.remember(Transition {
            s: self.encoder.encode(exp.obs),
            a: exp.action.continuous.clone(),
            r: exp.reward * self.config.reward_scale,
            s_next: self.encoder.encode(exp.next_obs),
            done: exp.done,
        });
        self.steps += 1;
        Ok(self.train_step()?.map(|(critic_loss, _)| critic_loss))
    }

    fn checkpoint(&self) -> Option<AgentCheckpoint> {
        Some(AgentCheckpoint {
            header: CheckpointHeader {
                kind: AgentKind::Ddac,
                encoder: self.encoder,
                action_description:
                    "continuous steer [-1,1] (tanh), accel [0,1] (sigmoid), brake [0,1] (sigmoid)"
                        .into(),
                actions: None,
                tile_coder: None,
                hyperparameters: serde_json::to_value(&self.config).ok()?,
            },
            nets: vec![
                ("actor".into(), self.actor.clone()),
                ("critic".into(), self.critic.clone()),
            ],
            table: Vec::new(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::Layer;

    fn linear(in_dim: usize, weights: Vec<f64>) -> Mlp {
        Mlp::from_layers(vec![Layer {
            in_dim,
            out_dim: 1,
            activation: Activation::Linear,
            weights,
            bias: vec![0.0],
        }])
        .unwrap()
    }

    fn plain(lr: f64) -> SgdConfig {
        SgdConfig {
            learning_rate: lr,
            momentum: 0.0,
            gradient_clip_norm: None,
        }
    }

    fn scalar_agent(u: f64) -> DdacAgent {
        let config = DdacConfig {
            actor_hidden: vec![],
            critic_hidden: vec![],
            actor_sgd: plain(0.1),
            critic_sgd: plain(0.1),
            actor_output_bias: vec![],
            batch_size: 1,
            learning_starts: 1,
            ..DdacConfig::default()
        };
        let mut agent = DdacAgent::new(1, 1, ActionSquash::Identity, config, 0).unwrap();
        *agent.actor_mut() = linear(1, vec![u]);
        // Q(s, a) = 0 * s + 2 * a
        *agent.critic_mut() = linear(2, vec![0.0, 2.0]);
        agent.sync_targets();
        agent.actor_opt = Sgd::new(plain(0.1), agent.actor()).unwrap();
        agent.critic_opt = Sgd::new(plain(0.1), agent.critic()).unwrap();
        agent
    }

    #[test]
    fn linear_chain_rule() {
        let mut agent = scalar_agent(0.7);
        let (q, g) = agent.actor_gradient(&[1.0]).unwrap();
        assert!((q - 1.4).abs() < 1e-15);
        assert_eq!(g.weights[0], vec![2.0]);
        agent.update_actor(&[&[1.0]]).unwrap();
        assert!((agent.actor().layers()[0].weights[0] - 0.9).abs() < 1e-12);
    }

    #[test]
    fn zero_residual_keeps_critic() {
        let mut agent = scalar_agent(0.3);
        let q = agent.q_value(&[0.5], &[0.25]).unwrap();
        let before = agent.critic().clone();
        let t = Transition {
            s: vec![0.5],
            a: vec![0.25],
            r: q,
            s_next: vec![0.0],
            done: true,
        };
        let loss = agent.update_critic(&[&t]).unwrap();
        assert_eq!(loss, 0.0);
        assert_eq!(agent.critic(), &before);
    }

    #[test]
    fn bootstrap_uses_lagging_targets() {
        let mut agent = scalar_agent(0.5);
        agent.config.target_tau = Some(0.01);
        agent.targets = Some((agent.actor.clone(), agent.critic.clone()));
        // live critic changes, target keeps Q = 2a with a = 0.5 s
        *agent.critic_mut() = linear(2, vec![0.0, 4.0]);
        assert!((agent.bootstrap_value(&[1.0]).unwrap() - 1.0).abs() < 1e-15);
        agent.config.target_tau = None;
        agent.targets = None;
        assert!((agent.bootstrap_value(&[1.0]).unwrap() - 2.0).abs() < 1e-15);
    }

    #[test]
    fn train_step_moves_targets_by_tau() {
        let mut agent = scalar_agent(0.5);
        agent.config.target_tau = Some(0.25);
        agent.targets = Some((agent.actor.clone(), agent.critic.clone()));
        agent.remember(Transition {
            s: vec![1.0],
            a: vec![0.3],
            r: 1.0,
            s_next: vec![1.0],
            done: false,
        });
        let old_actor = agent.actor().layers()[0].weights[0];
        let old_critic = agent.critic().layers()[0].weights.clone();
        agent.train_step().unwrap().unwrap();
        let (ta, tc) = agent.targets().unwrap();
        let new_actor = agent.actor().layers()[0].weights[0];
        assert_ne!(new_actor, old_actor);
        let want = 0.75 * old_actor + 0.25 * new_actor;
        assert!((ta.layers()[0].weights[0] - want).abs() < 1e-15);
        for (i, old) in old_critic.iter().enumerate() {
            let want = 0.75 * old + 0.25 * agent.critic().layers()[0].weights[i];
            assert!((tc.layers()[0].weights[i] - want).abs() < 1e-15);
        }
    }

    #[test]
    fn greedy_policy_is_deterministic() {
        let mut agent =
            DdacAgent::for_track(ObsEncoder::default(), DdacConfig::default(), 4).unwrap();
        let obs = Observation {
            track_pos: 0.2,
            angle: -0.1,
            speed_x: 40.0,
        };
        let a = agent.act(&obs, false);
        let b = agent.act(&obs, false);
        assert_eq!(a, b);
        assert!(a.car.is_legal());
    }

    #[test]
    fn squash_and_clamp_ranges() {
        let squash = ActionSquash::CarControls;
        let a = squash.apply(&[1e6, -1e6, 1e6]);
        assert!(a[0] <= 1.0 && a[0] >= -1.0);
        assert!((0.0..=1.0).contains(&a[1]));
        let mut noisy = vec![0.95 + 0.2, 1.3, -0.2];
        squash.clamp(&mut noisy);
        assert_eq!(noisy, vec![1.0, 1.0, 0.0]);
    }

    #[test]
    fn exploratory_actions_stay_legal() {
        let mut agent =
            DdacAgent::for_track(ObsEncoder::default(), DdacConfig::default(), 9).unwrap();
        let obs = Observation {
            track_pos: 0.9,
            angle: 0.4,
            speed_x: 100.0,
        };
        for _ in 0..500 {
            let a = agent.act(&obs, true);
            assert!(a.car.is_legal());
            assert_eq!(a.car.gear, 1);
        }
    }

    #[test]
    fn initial_policy_moves_forward() {
        let mut agent =
            DdacAgent::for_track(ObsEncoder::default(), DdacConfig::default(), 2).unwrap();
        let a = agent.act(
            &Observation {
                track_pos: 0.0,
                angle: 0.0,
                speed_x: 0.0,
            },
            false,
        );
        assert!(a.car.accel * 5.0 > a.car.brake * 10.0);
    }
}
