// SPDX-License-Identifier: MIT OR Apache-2.0

use std::path::Path;
use std::process::{Command, Output};

const TINY: &str = r#"{
  "version": 1,
  "world": {"seed": 3, "subjects": 6, "relations": 3, "triples": 12, "objects_per_relation": 4},
  "model": {"layers": 4, "d_model": 32, "heads": 2, "d_ff": 64},
  "train": {"steps": 600, "batch_size": 16, "learning_rate": 0.003, "warmup_steps": 50, "eval_every": 50},
  "interchange": {"pairs_per_mode": 8},
  "edit": {"count": 20}
}
"#;

fn lab(root: &Path, args: &[&str]) -> Output {
    let config = root.join("tiny.json");
    if !config.exists() {
        std::fs::write(&config, TINY).unwrap();
    }
    Command::new(env!("CARGO_BIN_EXE_recall-lab"))
        .args(["--config", config.to_str().unwrap(), "--out", root.join("runs").to_str().unwrap()])
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn run_dir(root: &Path) -> std::path::PathBuf {
    let o = lab(root, &["config"]);
    let line = stdout(&o).lines().find(|l| l.starts_with("run directory: ")).unwrap().to_string();
    line.trim_start_matches("run directory: ").into()
}

#[test]
fn usage_errors_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(lab(dir.path(), &["frobnicate"]).status.code(), Some(1));
    let o = lab(dir.path(), &["--set", "train.nope=1", "gen"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("train.nope"));
    assert_eq!(lab(dir.path(), &["--help"]).status.code(), Some(0));
}

#[test]
fn stage_before_its_inputs_exits_two_and_names_the_missing_stage() {
    let dir = tempfile::tempdir().unwrap();
    let o = lab(dir.path(), &["train"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("gen"), "{}", stderr(&o));
    assert_eq!(lab(dir.path(), &["gen"]).status.code(), Some(0));
    assert_eq!(lab(dir.path(), &["train"]).status.code(), Some(0));
    let o = lab(dir.path(), &["score"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("filter"), "{}", stderr(&o));
}

#[test]
fn full_pipeline_is_idempotent_and_detects_stale_inputs() {
    let dir = tempfile::tempdir().unwrap();
    let o = lab(dir.path(), &["all"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let run = run_dir(dir.path());
    for f in ["world.json", "checkpoint.bin", "filtered.json", "locality.json", "table1.csv", "sweep.csv", "table2.csv", "report.md", "manifest.json"] {
        assert!(run.join(f).exists(), "missing {f}");
    }
    assert!(run.join("figures").read_dir().unwrap().count() > 0);
    let report = std::fs::read_to_string(run.join("report.md")).unwrap();
    for h in ["## Locality", "## Mean interchange accuracy", "## Layer sweep", "## Contextual editing"] {
        assert!(report.contains(h), "report lacks {h}");
    }

    let again = lab(dir.path(), &["all"]);
    assert_eq!(again.status.code(), Some(0));
    let out = stdout(&again);
    assert_eq!(out.lines().filter(|l| l.contains("up to date")).count(), 8, "{out}");

    std::fs::write(run.join("filtered.json"), "[]").unwrap();
    let o = lab(dir.path(), &["interchange"]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
}

#[test]
fn config_overrides_select_a_new_run_directory() {
    let dir = tempfile::tempdir().unwrap();
    let a = run_dir(dir.path());
    let o = lab(dir.path(), &["--set", "world.seed=4", "config"]);
    assert_eq!(o.status.code(), Some(0));
    assert!(!stdout(&o).contains(a.to_str().unwrap()));
}
