use super::{metrics, ExperimentConfig, HarnessError};
use crate::agents::{AgentError, Experience, Learner};
use crate::sim::{Env, TerminationReason, Track};
use serde::{Deserialize, Serialize};
use std::fs::{self, File, OpenOptions};
use std::io::Write;
use std::path::Path;
use std::sync::Arc;
use std::time::Instant;

pub const EPISODE_HEADER: [&str; 6] = [
    "episode",
    "steps",
    "reward",
    "laps",
    "termination",
    "mean_dsteer",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeLog {
    pub episode: usize,
    pub steps: u64,
    pub total_reward: f64,
    pub laps_completed: u32,
    /// `None` when the episode ended on the lap target or the step cap.
    pub termination: Option<TerminationReason>,
    /// Mean |steer_t - steer_{t-1}|; 0 for episodes shorter than 2 steps.
    pub mean_dsteer: f64,
}

impl EpisodeLog {
    fn csv_row(&self) -> [String; 6] {
        [
            self.episode.to_string(),
            self.steps.to_string(),
            format!("{}", self.total_reward),
            self.laps_completed.to_string(),
            self.termination
                .map_or("none", TerminationReason::as_str)
                .to_string(),
            format!("{}", self.mean_dsteer),
        ]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceRecord {
    pub seed: u64,
    pub converged: bool,
    pub convergence_episode: Option<usize>,
    pub episodes_run: usize,
    pub wall_time: f64,
    /// Set when training diverged; the run stops at that episode.
    pub failure: Option<String>,
}

#[derive(Debug, Clone)]
pub struct SeedRun {
    pub seed: u64,
    pub episodes: Vec<EpisodeLog>,
    pub record: ConvergenceRecord,
}

#[derive(Debug, Clone)]
pub struct ExperimentOutput {
    pub runs: Vec<SeedRun>,
}

impl ExperimentOutput {
    pub fn records(&self) -> Vec<ConvergenceRecord> {
        self.runs.iter().map(|r| r.record.clone()).collect()
    }
}

/// Bounds and flags for a single episode.
#[derive(Debug, Clone, Copy)]
pub struct EpisodeLimits {
    pub max_steps: u64,
    /// Stop once this many laps are done; `None` runs to termination or the cap.
    pub lap_target: Option<u32>,
    pub explore: bool,
    pub learn: bool,
}

/// Per-step record for evaluation rollouts.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrajectoryPoint {
    pub s: f64,
    pub track_pos: f64,
    pub steer: f64,
    pub curved: bool,
}

#[derive(Debug, Clone)]
pub struct EpisodeOutcome {
    pub log: EpisodeLog,
    pub trajectory: Vec<TrajectoryPoint>,
}

/// One reset-to-end interaction. Learning errors abort the episode.
pub fn run_episode(
    env: &Env,
    agent: &mut dyn Learner,
    index: usize,
    limits: EpisodeLimits,
    record_trajectory: bool,
) -> Result<EpisodeOutcome, HarnessError> {
    agent.begin_episode();
    let (mut state, mut obs) = env.reset(index as u64);
    let mut total_reward = 0.0;
    let mut dsteer_sum = 0.0;
    let mut prev_steer: Option<f64> = None;
    let mut trajectory = Vec::new();
    let mut termination = None;
    while state.step_count < limits.max_steps {
        let action = agent.act(&obs, limits.explore);
        let steer = action.car.clamped().steer;
        if record_trajectory {
            trajectory.push(TrajectoryPoint {
                s: state.s,
                track_pos: obs.track_pos,
                steer,
                curved: env.track.is_curved_at(state.s),
            });
        }
        if let Some(p) = prev_steer {
            dsteer_sum += (steer - p).abs();
        }
        prev_steer = Some(steer);
        let (next, result) = env.step(&state, &action.car)?;
        total_reward += result.reward;
        if limits.learn {
            agent.learn(Experience {
                obs: &obs,
                action: &action,
                reward: result.reward,
                next_obs: &result.observation,
                done: result.terminated,
            })?;
        }
        state = next;
        obs = result.observation;
        if result.terminated {
            termination = result.termination_reason;
            break;
        }
        if limits.lap_target.is_some_and(|t| state.laps_completed >= t) {
            break;
        }
    }
    let steps = state.step_count;
    Ok(EpisodeOutcome {
        log: EpisodeLog {
            episode: index,
            steps,
            total_reward,
            laps_completed: state.laps_completed,
            termination,
            mean_dsteer: if steps >= 2 {
                dsteer_sum / (steps - 1) as f64
            } else {
                0.0
            },
        },
        trajectory,
    })
}

pub fn build_env(cfg: &ExperimentConfig) -> Result<Env, HarnessError> {
    let track = Track::build(cfg.track.clone())?;
    let mut env = Env::new(Arc::new(track), cfg.termination_policy());
    env.dynamics = cfg.dynamics;
    env.reward = cfg.reward;
    Ok(env)
}

pub fn episodes_file_name(cfg: &ExperimentConfig, seed: u64) -> String {
    format!(
        "episodes_{}_{}_{}.csv",
        cfg.run_label(),
        cfg.termination,
        seed
    )
}

/// One config per (algorithm, variant, termination) so several studies can
/// share an output directory.
pub fn config_file_name(cfg: &ExperimentConfig) -> String {
    format!("config_{}_{}.json", cfg.run_label(), cfg.termination)
}

pub fn checkpoint_file_name(cfg: &ExperimentConfig, seed: u64) -> String {
    format!(
        "agent_{}_{}_{}.ckpt",
        cfg.run_label(),
        cfg.termination,
        seed
    )
}

/// Train fresh agents from `cfg.build_agent` for every seed.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentOutput, HarnessError> {
    run_experiment_with(cfg, |seed| Ok(Box::new(cfg.build_agent(seed)?)))
}

/// Same loop with a caller-supplied agent per seed.
pub fn run_experiment_with<F>(
    cfg: &ExperimentConfig,
    mut factory: F,
) -> Result<ExperimentOutput, HarnessError>
where
    F: FnMut(u64) -> Result<Box<dyn Learner>, AgentError>,
{
    cfg.validate().map_err(HarnessError::Config)?;
    let env = build_env(cfg)?;
    let out_dir = cfg.output_dir.as_deref();
    if let Some(dir) = out_dir {
        fs::create_dir_all(dir)?;
        let json = serde_json::to_string_pretty(cfg)?;
        fs::write(dir.join(config_file_name(cfg)), json + "\n")?;
    }
    let mut runs = Vec::with_capacity(cfg.seeds.len());
    for &seed in &cfg.seeds {
        let mut agent = factory(seed)?;
        let run = train_seed(cfg, &env, agent.as_mut(), seed, out_dir)?;
        if let Some(dir) = out_dir {
            if let Some(ckpt) = agent.checkpoint() {
                ckpt.save(dir.join(checkpoint_file_name(cfg, seed)))?;
            }
            append_records(dir, cfg, &run.record)?;
        }
        runs.push(run);
    }
    Ok(ExperimentOutput { runs })
}

fn train_seed(
    cfg: &ExperimentConfig,
    env: &Env,
    agent: &mut dyn Learner,
    seed: u64,
    out_dir: Option<&Path>,
) -> Result<SeedRun, HarnessError> {
    let start = Instant::now();
    let mut writer = match out_dir {
        Some(dir) => {
            let mut w =
                csv::Writer::from_writer(File::create(dir.join(episodes_file_name(cfg, seed)))?);
            w.write_record(EPISODE_HEADER)?;
            w.flush()?;
            Some(w)
        }
        None => None,
    };
    let limits = EpisodeLimits {
        max_steps: cfg.max_steps_per_episode,
        lap_target: Some(cfg.convergence_laps),
        explore: true,
        learn: true,
    };
    let mut episodes = Vec::new();
    let mut failure = None;
    for index in 0..cfg.max_episodes {
        let log = match run_episode(env, agent, index, limits, false) {
            Ok(outcome) => outcome.log,
            Err(HarnessError::Agent(AgentError::Divergence(msg))) => {
                failure = Some(format!("diverged in episode {index}: {msg}"));
                break;
            }
            Err(e) => return Err(e),
        };
        if let Some(w) = writer.as_mut() {
            w.write_record(log.csv_row())?;
            w.flush()?;
        }
        let done = log.laps_completed >= cfg.convergence_laps;
        episodes.push(log);
        if done && cfg.stop_at_convergence {
            break;
        }
    }
    let convergence_episode = metrics::convergence_episode(
        episodes.iter().map(|e| e.laps_completed),
        cfg.convergence_laps,
    );
    Ok(SeedRun {
        seed,
        record: ConvergenceRecord {
            seed,
            converged: convergence_episode.is_some(),
            convergence_episode,
            episodes_run: episodes.len(),
            wall_time: start.elapsed().as_secs_f64(),
            failure,
        },
        episodes,
    })
}

/// `convergence.csv` holds only deterministic fields; wall-clock seconds go to
/// `timing.csv` so reruns compare byte-for-byte.
pub const CONVERGENCE_HEADER: [&str; 8] = [
    "algorithm",
    "variant",
    "termination",
    "seed",
    "converged",
    "convergence_episode",
    "episodes_run",
    "failure",
];

fn append_records(
    dir: &Path,
    cfg: &ExperimentConfig,
    record: &ConvergenceRecord,
) -> Result<(), HarnessError> {
    let path = dir.join("convergence.csv");
    let fresh = !path.exists();
    let mut w = csv::Writer::from_writer(OpenOptions::new().create(true).append(true).open(&path)?);
    if fresh {
        w.write_record(CONVERGENCE_HEADER)?;
    }
    w.write_record([
        cfg.algorithm.to_string(),
        cfg.variant.clone(),
        cfg.termination.to_string(),
        record.seed.to_string(),
        record.converged.to_string(),
        record
            .convergence_episode
            .map(|e| e.to_string())
            .unwrap_or_default(),
        record.episodes_run.to_string(),
        record.failure.clone().unwrap_or_default(),
    ])?;
    w.flush()?;

    let path = dir.join("timing.csv");
    let fresh = !path.exists();
    let mut f = OpenOptions::new().create(true).append(true).open(&path)?;
    if fresh {
        writeln!(f, "algorithm,variant,termination,seed,wall_time_s")?;
    }
    writeln!(
        f,
        "{},{},{},{},{:.3}",
        cfg.algorithm, cfg.variant, cfg.termination, record.seed, record.wall_time
    )?;
    Ok(())
}

/// Row of `convergence.csv` as read back by `compare`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceRow {
    pub algorithm: String,
    pub variant: String,
    pub termination: String,
    pub record: ConvergenceRecord,
}

pub fn read_convergence_csv(path: &Path) -> Result<Vec<ConvergenceRow>, HarnessError> {
    let mut reader = csv::Reader::from_path(path)?;
    let mut rows = Vec::new();
    for rec in reader.records() {
        let rec = rec?;
        let field = |i: usize| rec.get(i).unwrap_or("").to_string();
        let bad = |what: &str| {
            HarnessError::Config(format!("{}: bad {what} in row {:?}", path.display(), rec))
        };
        let convergence_episode = match rec.get(5).unwrap_or("") {
            "" => None,
            v => Some(v.parse().map_err(|_| bad("convergence_episode"))?),
        };
        let failure = Some(field(7)).filter(|f| !f.is_empty());
        rows.push(ConvergenceRow {
            algorithm: field(0),
            variant: field(1),
            termination: field(2),
            record: ConvergenceRecord {
                seed: field(3).parse().map_err(|_| bad("seed"))?,
                converged: field(4).parse().map_err(|_| bad("converged"))?,
                convergence_episode,
                episodes_run: field(6).parse().map_err(|_| bad("episodes_run"))?,
                wall_time: 0.0,
                failure,
            },
        });
    }
    Ok(rows)
}
