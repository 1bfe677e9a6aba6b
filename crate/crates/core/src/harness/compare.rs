use super::experiment::{read_convergence_csv, ConvergenceRecord};
use super::{metrics, ExperimentConfig, HarnessError};
use crate::sim::TerminationMode;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

/// Condition order claimed for convergence speed, fastest first.
pub const CLAIMED_ORDER: [TerminationMode; 4] = TerminationMode::ALL;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionSummary {
    pub condition: TerminationMode,
    pub seeds: usize,
    pub converged: usize,
    /// Median over seeds with non-converged seeds counted as `max_episodes + 1`.
    pub median_episode: f64,
    /// `">3000"` when the median itself is censored, else the number.
    pub median_label: String,
    pub censored: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TerminationVerdict {
    pub max_episodes: usize,
    pub conditions: Vec<ConditionSummary>,
    pub ordering_holds: bool,
    /// Adjacent pairs that break the order, e.g. `"none (100) > stuck (90)"`.
    pub violations: Vec<String>,
    /// True when some condition has no converged seed or no records at all.
    pub inconclusive: bool,
    pub missing: Vec<TerminationMode>,
}

fn censored_episodes(records: &[ConvergenceRecord], max_episodes: usize) -> Vec<f64> {
    records
        .iter()
        .map(|r| match r.convergence_episode {
            Some(e) if r.converged => e as f64,
            _ => (max_episodes + 1) as f64,
        })
        .collect()
}

fn label(value: f64, max_episodes: usize) -> String {
    if value > max_episodes as f64 {
        format!(">{max_episodes}")
    } else {
        format!("{value}")
    }
}

pub fn compare_terminations(
    records: &BTreeMap<TerminationMode, Vec<ConvergenceRecord>>,
    max_episodes: usize,
) -> TerminationVerdict {
    let mut conditions = Vec::new();
    let mut missing = Vec::new();
    let mut inconclusive = false;
    for mode in CLAIMED_ORDER {
        match records.get(&mode).filter(|r| !r.is_empty()) {
            None => {
                missing.push(mode);
                inconclusive = true;
            }
            Some(rs) => {
                let episodes = censored_episodes(rs, max_episodes);
                let median = metrics::median(&episodes).expect("non-empty");
                let converged = rs.iter().filter(|r| r.converged).count();
                if converged == 0 {
                    inconclusive = true;
                }
                conditions.push(ConditionSummary {
                    condition: mode,
                    seeds: rs.len(),
                    converged,
                    median_episode: median,
                    median_label: label(median, max_episodes),
                    censored: median > max_episodes as f64,
                });
            }
        }
    }
    let violations: Vec<String> = conditions
        .windows(2)
        .filter(|w| w[0].median_episode > w[1].median_episode)
        .map(|w| {
            format!(
                "{} ({}) > {} ({})",
                w[0].condition, w[0].median_label, w[1].condition, w[1].median_label
            )
        })
        .collect();
    TerminationVerdict {
        max_episodes,
        ordering_holds: violations.is_empty() && missing.is_empty(),
        violations,
        inconclusive,
        missing,
        conditions,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationSeed {
    pub seed: u64,
    pub with_replay: Option<usize>,
    pub without_replay: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplayAblation {
    pub max_episodes: usize,
    pub seeds: Vec<AblationSeed>,
    pub median_with_replay: f64,
    pub median_without_replay: f64,
    /// `median_without_replay - median_with_replay`; negative means dropping
    /// replay converged sooner.
    pub median_delta: f64,
    /// `"without_replay"`, `"with_replay"` or `"tie"`.
    pub faster: String,
}

/// Pairs seeds present in both sets; censoring as in [`compare_terminations`].
pub fn replay_ablation(
    with_replay: &[ConvergenceRecord],
    without_replay: &[ConvergenceRecord],
    max_episodes: usize,
) -> Option<ReplayAblation> {
    let mut seeds = Vec::new();
    let mut with = Vec::new();
    let mut without = Vec::new();
    for w in with_replay {
        if let Some(n) = without_replay.iter().find(|r| r.seed == w.seed) {
            seeds.push(AblationSeed {
                seed: w.seed,
                with_replay: w.convergence_episode,
                without_replay: n.convergence_episode,
            });
            with.push(w.clone());
            without.push(n.clone());
        }
    }
    if seeds.is_empty() {
        return None;
    }
    let mw = metrics::median(&censored_episodes(&with, max_episodes))?;
    let mn = metrics::median(&censored_episodes(&without, max_episodes))?;
    let faster = if mn < mw {
        "without_replay"
    } else if mw < mn {
        "with_replay"
    } else {
        "tie"
    };
    Some(ReplayAblation {
        max_episodes,
        seeds,
        median_with_replay: mw,
        median_without_replay: mn,
        median_delta: mn - mw,
        faster: faster.into(),
    })
}

/// Everything `compare` derives from a results tree.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompareReport {
    /// Ordering verdict of the headline algorithm (DDAC when present).
    pub ordering_holds: Option<bool>,
    pub termination: BTreeMap<String, TerminationVerdict>,
    pub replay_ablation: Option<ReplayAblation>,
}

/// Scan `dir` recursively for `convergence.csv` files and aggregate them.
/// Censoring uses the largest `max_episodes` among the `config_*.json` files
/// found alongside.
pub fn compare_directory(dir: &Path) -> Result<CompareReport, HarnessError> {
    // (algorithm, variant) -> termination -> records
    let mut groups: BTreeMap<(String, String), BTreeMap<TerminationMode, Vec<ConvergenceRecord>>> =
        BTreeMap::new();
    let mut max_episodes = 0usize;
    let mut found = false;
    let mut files: Vec<_> = walkdir::WalkDir::new(dir)
        .sort_by_file_name()
        .into_iter()
        .filter_map(Result::ok)
        .filter(|e| e.file_name() == "convergence.csv")
        .map(|e| e.into_path())
        .collect();
    files.sort();
    for path in files {
        found = true;
        if let Some(parent) = path.parent() {
            for entry in fs::read_dir(parent)? {
                let p = entry?.path();
                let name = p.file_name().and_then(|n| n.to_str()).unwrap_or("");
                if name.starts_with("config_") && name.ends_with(".json") {
                    let cfg: ExperimentConfig = serde_json::from_str(&fs::read_to_string(&p)?)?;
                    max_episodes = max_episodes.max(cfg.max_episodes);
                }
            }
        }
        for row in read_convergence_csv(&path)? {
            let mode: TerminationMode = row.termination.parse().map_err(HarnessError::Config)?;
            groups
                .entry((row.algorithm, row.variant))
                .or_default()
                .entry(mode)
                .or_default()
                .push(row.record);
        }
    }
    if !found {
        return Err(HarnessError::Config(format!(
            "no convergence.csv under {}",
            dir.display()
        )));
    }
    if max_episodes == 0 {
        max_episodes = 3000;
    }
    let mut termination = BTreeMap::new();
    for ((algo, variant), by_mode) in &groups {
        if variant == "default" {
            termination.insert(algo.clone(), compare_terminations(by_mode, max_episodes));
        }
    }
    let headline = termination
        .get("ddac")
        .or_else(|| termination.values().next())
        .map(|v| v.ordering_holds);
    let mut replay = None;
    if let (Some(with), Some(without)) = (
        groups.get(&("dqn".to_string(), "default".to_string())),
        groups.get(&("dqn".to_string(), "no-replay".to_string())),
    ) {
        let flatten = |m: &BTreeMap<TerminationMode, Vec<ConvergenceRecord>>,
                       t: TerminationMode| m.get(&t).cloned();
        for mode in CLAIMED_ORDER.iter().rev() {
            if let (Some(w), Some(n)) = (flatten(with, *mode), flatten(without, *mode)) {
                replay = replay_ablation(&w, &n, max_episodes);
                break;
            }
        }
    }
    Ok(CompareReport {
        ordering_holds: headline,
        termination,
        replay_ablation: replay,
    })
}

/// Write `verdict.json` and a per-condition `termination_medians.csv`.
pub fn write_report(dir: &Path, report: &CompareReport) -> Result<(), HarnessError> {
    fs::write(
        dir.join("verdict.json"),
        serde_json::to_string_pretty(report)? + "\n",
    )?;
    let mut w = csv::Writer::from_path(dir.join("termination_medians.csv"))?;
    w.write_record([
        "algorithm",
        "condition",
        "seeds",
        "converged",
        "median_episode",
        "censored",
    ])?;
    for (algo, verdict) in &report.termination {
        for c in &verdict.conditions {
            w.write_record([
                algo.clone(),
                c.condition.to_string(),
                c.seeds.to_string(),
                c.converged.to_string(),
                c.median_label.clone(),
                c.censored.to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}
