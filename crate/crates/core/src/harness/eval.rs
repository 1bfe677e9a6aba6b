use super::experiment::{run_episode, EpisodeLimits, TrajectoryPoint};
use super::{metrics, HarnessError};
use crate::agents::Learner;
use crate::sim::{Env, TerminationReason};
use serde::Serialize;

/// Greedy rollout summary.
#[derive(Debug, Clone, Serialize)]
pub struct EvalReport {
    pub laps_completed: u32,
    pub steps: u64,
    pub total_reward: f64,
    pub termination: Option<TerminationReason>,
    /// Mean |Δsteer| over the whole rollout; `None` for rollouts under 2 steps.
    pub smoothness: Option<f64>,
    /// Mean |Δsteer| over consecutive steps on curved segments.
    pub curved_smoothness: Option<f64>,
    pub max_abs_track_pos: f64,
    #[serde(skip)]
    pub trajectory: Vec<TrajectoryPoint>,
}

/// Run with exploration and learning off until `laps` laps, termination, or
/// `max_steps`.
pub fn evaluate(
    env: &Env,
    agent: &mut dyn Learner,
    laps: u32,
    max_steps: u64,
) -> Result<EvalReport, HarnessError> {
    let limits = EpisodeLimits {
        max_steps,
        lap_target: Some(laps),
        explore: false,
        learn: false,
    };
    let out = run_episode(env, agent, 0, limits, true)?;
    let steer: Vec<f64> = out.trajectory.iter().map(|p| p.steer).collect();
    let curved: Vec<bool> = out.trajectory.iter().map(|p| p.curved).collect();
    Ok(EvalReport {
        laps_completed: out.log.laps_completed,
        steps: out.log.steps,
        total_reward: out.log.total_reward,
        termination: out.log.termination,
        smoothness: metrics::smoothness_metric(&steer).ok(),
        curved_smoothness: metrics::masked_smoothness(&steer, &curved).ok(),
        max_abs_track_pos: out
            .trajectory
            .iter()
            .map(|p| p.track_pos.abs())
            .fold(0.0, f64::max),
        trajectory: out.trajectory,
    })
}
