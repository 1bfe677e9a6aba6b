use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use lanekeep::agents::{Agent, AgentCheckpoint, AgentKind};
use lanekeep::harness::{self, ExperimentConfig};
use lanekeep::sim::{figure1, TerminationMode, Track, TrackSpec};
use std::path::{Path, PathBuf};
use std::sync::Arc;

mod scr_cmd;

#[derive(Parser)]
#[command(name = "lanekeep", version, about = "Lane-keeping RL laboratory")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train one algorithm under one termination condition over a seed range.
    Train(TrainArgs),
    /// Greedy rollout of a saved agent.
    Eval(EvalArgs),
    /// Aggregate convergence results into verdict.json.
    Compare {
        #[arg(long = "in")]
        input: PathBuf,
    },
    /// Drive a race server over UDP with a saved agent.
    ScrClient(scr_cmd::ScrArgs),
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    algo: AgentKind,
    #[arg(long, default_value = "both")]
    termination: TerminationMode,
    /// Track file; the built-in figure1 layout when omitted.
    #[arg(long)]
    track: Option<PathBuf>,
    /// `a..b` (inclusive) or a comma list.
    #[arg(long, default_value = "1..5")]
    seeds: String,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    no_replay: bool,
    #[arg(long)]
    no_target_net: bool,
    /// DDAC: bootstrap the critic from Polyak-averaged copies updated at this rate.
    #[arg(long)]
    target_tau: Option<f64>,
    #[arg(long)]
    paper_exact_obs: bool,
    #[arg(long)]
    max_episodes: Option<usize>,
    #[arg(long)]
    max_steps: Option<u64>,
    #[arg(long)]
    convergence_laps: Option<u32>,
    /// JSON file with a full experiment config; CLI flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    track: Option<PathBuf>,
    #[arg(long, default_value_t = 10)]
    laps: u32,
    #[arg(long, default_value = "both")]
    termination: TerminationMode,
    #[arg(long, default_value_t = 100_000)]
    max_steps: u64,
}

fn parse_seeds(text: &str) -> Result<Vec<u64>> {
    let seeds = if let Some((a, b)) = text.split_once("..") {
        let a: u64 = a.trim().parse().context("seed range start")?;
        let b: u64 = b
            .trim()
            .trim_start_matches('=')
            .parse()
            .context("seed range end")?;
        if b < a {
            bail!("empty seed range {text}");
        }
        (a..=b).collect()
    } else {
        text.split(',')
            .map(|s| {
                s.trim()
                    .parse::<u64>()
                    .with_context(|| format!("bad seed `{s}`"))
            })
            .collect::<Result<Vec<_>>>()?
    };
    if seeds.is_empty() {
        bail!("no seeds given");
    }
    Ok(seeds)
}

fn load_track(path: Option<&Path>) -> Result<TrackSpec> {
    Ok(match path {
        Some(p) => TrackSpec::load(p).with_context(|| format!("loading track {}", p.display()))?,
        None => figure1().spec().clone(),
    })
}

fn train(args: TrainArgs) -> Result<()> {
    let track = load_track(args.track.as_deref())?;
    let mut cfg = match &args.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .with_context(|| format!("reading {}", path.display()))?;
            serde_json::from_str(&text).context("parsing config")?
        }
        None => ExperimentConfig::new(args.algo, args.termination, track.clone()),
    };
    cfg.algorithm = args.algo;
    cfg.termination = args.termination;
    if args.track.is_some() || args.config.is_none() {
        cfg.track = track;
    }
    cfg.seeds = parse_seeds(&args.seeds)?;
    cfg.output_dir = Some(args.out.clone());
    cfg.paper_exact_obs |= args.paper_exact_obs;
    if let Some(n) = args.max_episodes {
        cfg.max_episodes = n;
    }
    if let Some(n) = args.max_steps {
        cfg.max_steps_per_episode = n;
    }
    if let Some(n) = args.convergence_laps {
        cfg.convergence_laps = n;
    }
    let mut variant = Vec::new();
    if args.no_replay {
        if cfg.algorithm != AgentKind::Dqn {
            bail!("--no-replay applies to dqn only");
        }
        cfg.dqn.use_replay = false;
        variant.push("no-replay");
    }
    if args.no_target_net {
        if cfg.algorithm != AgentKind::Dqn {
            bail!("--no-target-net applies to dqn only");
        }
        cfg.dqn.use_target_net = false;
        variant.push("no-target-net");
    }
    if let Some(tau) = args.target_tau {
        if cfg.algorithm != AgentKind::Ddac {
            bail!("--target-tau applies to ddac only");
        }
        cfg.ddac.target_tau = Some(tau);
        variant.push("target-nets");
    }
    if cfg.paper_exact_obs {
        variant.push("paper-obs");
    }
    if !variant.is_empty() {
        cfg.variant = variant.join("-");
    }
    let out = harness::run_experiment(&cfg)?;
    for run in &out.runs {
        let r = &run.record;
        match (&r.failure, r.convergence_episode) {
            (Some(f), _) => println!("seed {}: failed ({f})", r.seed),
            (None, Some(e)) => println!(
                "seed {}: converged at episode {e} ({:.1} s)",
                r.seed, r.wall_time
            ),
            (None, None) => println!(
                "seed {}: not converged after {} episodes ({:.1} s)",
                r.seed, r.episodes_run, r.wall_time
            ),
        }
    }
    Ok(())
}

fn eval(args: EvalArgs) -> Result<()> {
    let ckpt = AgentCheckpoint::load(&args.checkpoint)
        .with_context(|| format!("loading checkpoint {}", args.checkpoint.display()))?;
    let mut agent = Agent::from_checkpoint(&ckpt)?;
    let track = Track::build(load_track(args.track.as_deref())?)?;
    let env = lanekeep::sim::Env::new(Arc::new(track), args.termination.policy());
    let report = harness::evaluate(&env, &mut agent, args.laps, args.max_steps)?;
    println!("{}", serde_json::to_string_pretty(&report)?);
    Ok(())
}

fn compare(input: &Path) -> Result<()> {
    let report = harness::compare_directory(input)?;
    harness::write_report(input, &report)?;
    for (algo, v) in &report.termination {
        let medians: Vec<String> = v
            .conditions
            .iter()
            .map(|c| format!("{}={}", c.condition, c.median_label))
            .collect();
        println!(
            "{algo}: {} ordering_holds={}{}",
            medians.join(" "),
            v.ordering_holds,
            if v.violations.is_empty() {
                String::new()
            } else {
                format!(" violations: {}", v.violations.join("; "))
            }
        );
    }
    if let Some(a) = &report.replay_ablation {
        println!(
            "replay ablation: with={} without={} delta={} faster={}",
            a.median_with_replay, a.median_without_replay, a.median_delta, a.faster
        );
    }
    println!("wrote {}", input.join("verdict.json").display());
    Ok(())
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::Train(args) => train(args),
        Command::Eval(args) => eval(args),
        Command::Compare { input } => compare(&input),
        Command::ScrClient(args) => scr_cmd::run(args),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seed_lists() {
        assert_eq!(parse_seeds("1..5").unwrap(), vec![1, 2, 3, 4, 5]);
        assert_eq!(parse_seeds("3,7").unwrap(), vec![3, 7]);
        assert_eq!(parse_seeds("4..4").unwrap(), vec![4]);
        assert!(parse_seeds("5..1").is_err());
        assert!(parse_seeds("x").is_err());
    }
}
