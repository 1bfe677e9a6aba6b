//! Drives the built binaries through train, compare, eval and scr-client.

use lanekeep::scr::{MockServer, ScriptStep};
use serde_json::Value;
use std::path::Path;
use std::process::{Command, Output};

fn lanekeep(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_lanekeep"))
        .args(args)
        .output()
        .unwrap()
}

fn ok(out: Output) -> String {
    let stdout = String::from_utf8_lossy(&out.stdout).into_owned();
    assert!(
        out.status.success(),
        "stdout:\n{stdout}\nstderr:\n{}",
        String::from_utf8_lossy(&out.stderr)
    );
    stdout
}

fn train(
    dir: &Path,
    algo: &str,
    term: &str,
    seeds: &str,
    episodes: &str,
    extra: &[&str],
) -> String {
    let out = dir.to_str().unwrap();
    let mut args = vec![
        "train",
        "--algo",
        algo,
        "--termination",
        term,
        "--seeds",
        seeds,
        "--out",
        out,
        "--max-episodes",
        episodes,
        "--max-steps",
        "150",
    ];
    args.extend_from_slice(extra);
    ok(lanekeep(&args))
}

#[test]
fn train_compare_eval_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    for term in ["none", "stuck", "out", "both"] {
        let stdout = train(dir.path(), "qlearn", term, "1..2", "3", &[]);
        assert_eq!(stdout.lines().count(), 2, "{stdout}");
        assert!(
            stdout.contains("seed 1: not converged after 3 episodes"),
            "{stdout}"
        );
    }
    for term in ["none", "both"] {
        assert!(dir
            .path()
            .join(format!("config_qlearn_{term}.json"))
            .exists());
        assert!(dir
            .path()
            .join(format!("episodes_qlearn_{term}_2.csv"))
            .exists());
    }
    let rows = std::fs::read_to_string(dir.path().join("convergence.csv")).unwrap();
    assert_eq!(rows.lines().count(), 1 + 4 * 2);

    let stdout = ok(lanekeep(&["compare", "--in", dir.path().to_str().unwrap()]));
    assert!(
        stdout.starts_with("qlearn: none=>3 stuck=>3 out=>3 both=>3"),
        "{stdout}"
    );
    let verdict: Value =
        serde_json::from_slice(&std::fs::read(dir.path().join("verdict.json")).unwrap()).unwrap();
    let q = &verdict["termination"]["qlearn"];
    assert_eq!(q["max_episodes"], 3);
    assert_eq!(q["conditions"].as_array().unwrap().len(), 4);
    assert!(dir.path().join("termination_medians.csv").exists());

    let ckpt = dir.path().join("agent_qlearn_both_1.ckpt");
    let stdout = ok(lanekeep(&[
        "eval",
        "--checkpoint",
        ckpt.to_str().unwrap(),
        "--laps",
        "1",
        "--max-steps",
        "400",
    ]));
    let report: Value = serde_json::from_str(&stdout).unwrap();
    assert!(report["steps"].as_u64().unwrap() <= 400);
    assert!(report.get("max_abs_track_pos").is_some());
}

#[test]
fn ablation_flags_label_runs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("in.json");
    // shrink the nets through a config file
    let mut base: Value = serde_json::from_str(&{
        train(dir.path(), "dqn", "both", "1", "1", &[]);
        std::fs::read_to_string(dir.path().join("config_dqn_both.json")).unwrap()
    })
    .unwrap();
    base["dqn"]["hidden"] = serde_json::json!([4]);
    base["ddac"]["actor_hidden"] = serde_json::json!([4]);
    base["ddac"]["critic_hidden"] = serde_json::json!([4]);
    std::fs::write(&cfg, base.to_string()).unwrap();
    let cfg = cfg.to_str().unwrap();

    train(
        dir.path(),
        "dqn",
        "both",
        "1",
        "2",
        &["--no-replay", "--config", cfg],
    );
    let written: Value = serde_json::from_slice(
        &std::fs::read(dir.path().join("config_dqn-no-replay_both.json")).unwrap(),
    )
    .unwrap();
    assert_eq!(written["dqn"]["use_replay"], false);
    assert_eq!(written["dqn"]["hidden"], serde_json::json!([4]));

    train(
        dir.path(),
        "ddac",
        "out",
        "1",
        "2",
        &["--target-tau", "0.01", "--config", cfg],
    );
    let written: Value = serde_json::from_slice(
        &std::fs::read(dir.path().join("config_ddac-target-nets_out.json")).unwrap(),
    )
    .unwrap();
    assert_eq!(written["ddac"]["target_tau"], 0.01);
}

#[test]
fn bad_arguments_fail_cleanly() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    for args in [
        vec!["train", "--algo", "ddac", "--out", out, "--no-replay"],
        vec!["train", "--algo", "dqn", "--out", out, "--seeds", "5..1"],
        vec!["train", "--algo", "sarsa", "--out", out],
        vec![
            "train",
            "--algo",
            "dqn",
            "--out",
            out,
            "--termination",
            "sometimes",
        ],
        vec!["eval", "--checkpoint", "/nonexistent.ckpt"],
        vec!["compare", "--in", "/nonexistent-dir"],
    ] {
        let res = lanekeep(&args);
        assert!(!res.status.success(), "{args:?} should fail");
        assert!(!res.stderr.is_empty(), "{args:?} gave no message");
    }
}

#[test]
fn scr_client_binary_drives_mock_server() {
    let dir = tempfile::tempdir().unwrap();
    train(dir.path(), "qlearn", "both", "1", "1", &[]);
    let ckpt = dir.path().join("agent_qlearn_both_1.ckpt");
    let server = MockServer::bind().unwrap();
    let port = server.local_addr().unwrap().port().to_string();
    let script = vec![
        ScriptStep::Sensors("(angle 0)(trackPos 0.1)(speedX 50)".into()),
        ScriptStep::Sensors("(angle 0.05)(trackPos 0.2)(speedX 55)".into()),
        ScriptStep::Shutdown,
    ];
    let handle = server.spawn(script);
    let out = Command::new(env!("CARGO_BIN_EXE_scr-client"))
        .args([
            "--host",
            "127.0.0.1",
            "--port",
            &port,
            "--checkpoint",
            ckpt.to_str().unwrap(),
        ])
        .output()
        .unwrap();
    let summary: Value = serde_json::from_str(&ok(out)).unwrap();
    assert_eq!(summary["steps"], 2);
    assert_eq!(summary["end"], "shutdown");
    let transcript = handle.join().unwrap().unwrap();
    assert!(transcript.received[0].starts_with("SCR(init -90 "));
    for reply in &transcript.received[1..] {
        let frame = lanekeep::scr::parse_actuators(reply.as_bytes()).unwrap();
        assert_eq!(lanekeep::scr::format_actuators(&frame).unwrap(), *reply);
    }
}
