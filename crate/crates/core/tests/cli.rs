//! Exit codes and artifacts of the `monox` binary on a tiny corpus.

use std::path::Path;
use std::process::{Command, Output};

const TINY: &[&str] = &[
    "--corpus.sizes.train=60",
    "--corpus.sizes.unlabeled=120",
    "--corpus.sizes.dev=40",
    "--corpus.sizes.test=40",
    "--train.epochs=1",
    "--seeds.count=1",
    "--sweep.sizes=[20,60]",
];

fn monox(root: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_monox")).args(args).env("MONOX_OUT", root).output().expect("binary runs")
}

fn run(root: &Path, command: &str, extra: &[&str]) -> Output {
    let mut args = vec![command];
    args.extend_from_slice(TINY);
    args.extend_from_slice(extra);
    monox(root, &args)
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

#[test]
fn usage_and_config_errors_exit_two() {
    let tmp = tempfile::tempdir().unwrap();
    assert_eq!(monox(tmp.path(), &["no-such-command"]).status.code(), Some(2));

    let out = run(tmp.path(), "gen-corpus", &["--train.no_such_key=1"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("no_such_key"), "{}", stderr(&out));

    let out = run(tmp.path(), "gen-corpus", &["--data.dev_language=de"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("data.dev_language"), "{}", stderr(&out));
}

#[test]
fn missing_artifacts_exit_three() {
    let tmp = tempfile::tempdir().unwrap();
    let out = run(tmp.path(), "distill", &["--output.name=no-teacher"]);
    assert_eq!(out.status.code(), Some(3), "{}", stderr(&out));
    let out = run(tmp.path(), "report", &["--output.name=empty"]);
    assert_eq!(out.status.code(), Some(3), "{}", stderr(&out));
    let out = monox(tmp.path(), &["report", "--config", "/nonexistent/run.toml"]);
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn step_by_step_commands_build_a_report() {
    let tmp = tempfile::tempdir().unwrap();
    let name = ["--output.name=steps"];
    for command in ["gen-corpus", "train-teacher", "finetune", "distill", "evaluate", "report"] {
        let out = run(tmp.path(), command, &name);
        assert_eq!(out.status.code(), Some(0), "{command}: {}", stderr(&out));
    }
    let dir = tmp.path().join("steps");
    for rel in [
        "config.toml",
        "corpus/fingerprint.txt",
        "corpus/en/train.tsv",
        "checkpoints/seed-0/teacher.ckpt",
        "checkpoints/seed-0/kd.json",
        "metrics/seed-0/vanilla.json",
        "tables/zero_shot.csv",
        "report.json",
    ] {
        assert!(dir.join(rel).exists(), "{rel} missing");
    }
    let table = std::fs::read_to_string(dir.join("tables/zero_shot.csv")).unwrap();
    assert!(table.starts_with("method,en,de,fr,ja,avg"), "{table}");

    // A different corpus cannot reuse the run directory.
    let out = run(tmp.path(), "evaluate", &["--output.name=steps", "--corpus.seed=99"]);
    assert_eq!(out.status.code(), Some(2), "{}", stderr(&out));
}
