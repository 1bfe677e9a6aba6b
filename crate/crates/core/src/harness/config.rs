use crate::agents::{
    Agent, AgentError, AgentKind, DdacAgent, DdacConfig, DiscreteActionSet, DqnAgent, DqnConfig,
    ObsEncoder, QLearningAgent, QLearningConfig,
};
use crate::sim::{DynamicsConfig, RewardConfig, TerminationMode, TerminationPolicy, TrackSpec};
use serde::{Deserialize, Serialize};
use std::path::PathBuf;

/// Everything needed to reproduce one training study. Written verbatim to
/// `config_<label>_<termination>.json` next to the results.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub algorithm: AgentKind,
    pub termination: TerminationMode,
    /// Free-form label distinguishing ablations, e.g. `no-replay`.
    pub variant: String,
    pub track: TrackSpec,
    pub seeds: Vec<u64>,
    pub max_episodes: usize,
    pub max_steps_per_episode: u64,
    pub convergence_laps: u32,
    /// End a seed's run at its first converged episode.
    pub stop_at_convergence: bool,
    pub paper_exact_obs: bool,
    pub dynamics: DynamicsConfig,
    /// Thresholds; the enabled flags come from `termination`.
    pub termination_thresholds: TerminationPolicy,
    pub reward: RewardConfig,
    pub actions: DiscreteActionSet,
    pub qlearn: QLearningConfig,
    pub dqn: DqnConfig,
    pub ddac: DdacConfig,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
}

impl ExperimentConfig {
    pub fn new(algorithm: AgentKind, termination: TerminationMode, track: TrackSpec) -> Self {
        Self {
            algorithm,
            termination,
            variant: "default".into(),
            track,
            seeds: (1..=5).collect(),
            max_episodes: 3000,
            max_steps_per_episode: 20_000,
            convergence_laps: 10,
            stop_at_convergence: true,
            paper_exact_obs: false,
            dynamics: DynamicsConfig::default(),
            termination_thresholds: TerminationPolicy::default(),
            reward: RewardConfig::default(),
            actions: DiscreteActionSet::default(),
            qlearn: QLearningConfig::default(),
            dqn: DqnConfig::default(),
            ddac: DdacConfig::default(),
            output_dir: None,
        }
    }

    pub fn termination_policy(&self) -> TerminationPolicy {
        let flags = self.termination.policy();
        TerminationPolicy {
            out_of_track_enabled: flags.out_of_track_enabled,
            stuck_enabled: flags.stuck_enabled,
            ..self.termination_thresholds
        }
    }

    pub fn encoder(&self) -> ObsEncoder {
        if self.paper_exact_obs {
            ObsEncoder::paper_exact()
        } else {
            ObsEncoder::default()
        }
    }

    /// File-name label, e.g. `ddac` or `dqn-no-replay`.
    pub fn run_label(&self) -> String {
        if self.variant == "default" || self.variant.is_empty() {
            self.algorithm.to_string()
        } else {
            format!("{}-{}", self.algorithm, self.variant)
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.seeds.is_empty() {
            return Err("at least one seed is required".into());
        }
        if self.convergence_laps == 0 {
            return Err("convergence_laps must be >= 1".into());
        }
        if self.max_episodes == 0 || self.max_steps_per_episode == 0 {
            return Err("episode and step limits must be positive".into());
        }
        self.dynamics.validate().map_err(|e| e.to_string())?;
        self.termination_thresholds
            .validate()
            .map_err(|e| e.to_string())?;
        Ok(())
    }

    /// Fresh agent for one seed.
    pub fn build_agent(&self, seed: u64) -> Result<Agent, AgentError> {
        let encoder = self.encoder();
        Ok(match self.algorithm {
            AgentKind::Qlearn => Agent::Qlearn(QLearningAgent::new(
                encoder,
                self.actions.clone(),
                self.qlearn.clone(),
                &self.dynamics,
                seed,
            )?),
            AgentKind::Dqn => Agent::Dqn(DqnAgent::for_track(
                encoder,
                self.actions.clone(),
                self.dqn.clone(),
                seed,
            )?),
            AgentKind::Ddac => Agent::Ddac(DdacAgent::for_track(encoder, self.ddac.clone(), seed)?),
        })
    }
}
