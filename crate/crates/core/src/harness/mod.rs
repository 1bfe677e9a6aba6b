//! Experiment runner: training loops over seeds, per-episode CSV logs,
//! convergence records, evaluation rollouts and the cross-condition reports.

mod compare;
mod config;
mod eval;
mod experiment;
pub mod metrics;

pub use compare::{
    compare_directory, compare_terminations, replay_ablation, write_report, AblationSeed,
    CompareReport, ConditionSummary, ReplayAblation, TerminationVerdict, CLAIMED_ORDER,
};
pub use config::ExperimentConfig;
pub use eval::{evaluate, EvalReport};
pub use experiment::{
    build_env, checkpoint_file_name, config_file_name, episodes_file_name, read_convergence_csv,
    run_episode, run_experiment, run_experiment_with, ConvergenceRecord, ConvergenceRow,
    EpisodeLimits, EpisodeLog, EpisodeOutcome, ExperimentOutput, SeedRun, TrajectoryPoint,
    CONVERGENCE_HEADER, EPISODE_HEADER,
};
pub use metrics::{convergence_episode, masked_smoothness, median, smoothness_metric};

use crate::agents::AgentError;
use crate::sim::{SimError, TrackError};

#[derive(Debug, thiserror::Error)]
pub enum HarnessError {
    #[error("invalid experiment: {0}")]
    Config(String),
    #[error("undefined metric: {0}")]
    UndefinedMetric(String),
    #[error(transparent)]
    Track(#[from] TrackError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Agent(#[from] AgentError),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}
