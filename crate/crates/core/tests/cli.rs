//! End-to-end checks of the `rewardlearn` binary on the smoke preset.

use std::path::Path;
use std::process::{Command, Output};

fn rewardlearn(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rewardlearn"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn out_arg(dir: &Path) -> String {
    dir.display().to_string()
}

#[test]
fn invalid_config_exits_with_config_code() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("bad.toml");
    std::fs::write(&cfg, "preset = \"x\"\nseeds = []\n").unwrap();
    let o = rewardlearn(&[
        "gen-data",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        &out_arg(tmp.path()),
    ]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
}

#[test]
fn unknown_preset_exits_with_config_code() {
    let tmp = tempfile::tempdir().unwrap();
    let o = rewardlearn(&["gen-data", "--preset", "no-such-preset", "--out", &out_arg(tmp.path())]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
}

#[test]
fn missing_upstream_stage_is_named() {
    let tmp = tempfile::tempdir().unwrap();
    let o = rewardlearn(&[
        "train-reward",
        "--preset",
        "smoke",
        "--strategy",
        "tgr",
        "--out",
        &out_arg(tmp.path()),
    ]);
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
    assert!(stderr(&o).contains("gen-data"), "{}", stderr(&o));
}

#[test]
fn staged_commands_match_repro() {
    let tmp = tempfile::tempdir().unwrap();
    let staged = tmp.path().join("staged");
    let whole = tmp.path().join("whole");
    let s = out_arg(&staged);
    let base = ["--preset", "smoke", "--out", s.as_str()];
    let run = |cmd: &[&str]| {
        let args: Vec<&str> = cmd.iter().chain(base.iter()).copied().collect();
        let o = rewardlearn(&args);
        assert!(o.status.success(), "{args:?}: {}", stderr(&o));
        o
    };
    run(&["gen-data"]);
    run(&["train-reward", "--strategy", "tgr"]);
    run(&["relabel", "--strategy", "tgr"]);
    run(&["train-agent", "--condition", "tgr"]);
    let eval = run(&["eval"]);
    assert!(String::from_utf8_lossy(&eval.stdout).contains("tgr"));
    assert!(staged.join("seed-0/agent_eval.csv").exists());
    assert!(staged.join("run_record.json").exists());

    let o = rewardlearn(&["repro", "smoke", "--out", &out_arg(&whole)]);
    assert!(o.status.success(), "{}", stderr(&o));
    for rel in [
        "seed-0/rewards/tgr.csv",
        "seed-0/curves/tgr.csv",
        "seed-0/dataset.jsonl",
    ] {
        assert_eq!(
            std::fs::read(staged.join(rel)).unwrap(),
            std::fs::read(whole.join(rel)).unwrap(),
            "{rel} differs between staged and end-to-end runs"
        );
    }
}

#[test]
fn repro_is_deterministic_and_resumable() {
    let tmp = tempfile::tempdir().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    let first = rewardlearn(&["repro", "smoke", "--out", &out_arg(&a)]);
    let second = rewardlearn(&["repro", "smoke", "--out", &out_arg(&b)]);
    assert!(first.status.success() && second.status.success(), "{}", stderr(&first));
    assert_eq!(first.stdout, second.stdout);
    for rel in [
        "curves.csv",
        "summary.csv",
        "seed-0/reward_metrics.csv",
        "seed-0/selections.csv",
    ] {
        assert_eq!(
            std::fs::read(a.join(rel)).unwrap(),
            std::fs::read(b.join(rel)).unwrap(),
            "{rel}"
        );
    }

    let resumed = rewardlearn(&["repro", "smoke", "--resume", "--out", &out_arg(&a)]);
    assert!(resumed.status.success(), "{}", stderr(&resumed));
    assert_eq!(resumed.stdout, first.stdout);
}

#[test]
fn reward_eval_reports_every_strategy() {
    let tmp = tempfile::tempdir().unwrap();
    let out = out_arg(tmp.path());
    assert!(rewardlearn(&["sweep", "--preset", "smoke", "--out", &out])
        .status
        .success());
    let o = rewardlearn(&["eval", "--rewards", "--preset", "smoke", "--out", &out]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = std::fs::read_to_string(tmp.path().join("seed-0/reward_eval.csv")).unwrap();
    for kind in ["sqil", "tgr", "tgr_i"] {
        assert!(text.lines().any(|l| l.contains(kind)), "{kind} missing from\n{text}");
    }
}
