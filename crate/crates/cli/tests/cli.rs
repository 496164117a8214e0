use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use fearsource_cli::output::{Manifest, StageStatus};

fn fearsource(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fearsource"))
        .args(args)
        .env("FEARSOURCE_LOG", "error")
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> Output {
    let out = fearsource(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    out
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn small_synth(dir: &Path, seed: &str) {
    ok(&["synth", "--seed", seed, "--days", "90", "--states", "8", "--out", s(dir)]);
}

#[test]
fn synth_is_reproducible() {
    let tmp = tempfile::tempdir().unwrap();
    let (a, b, c) = (tmp.path().join("a"), tmp.path().join("b"), tmp.path().join("c"));
    small_synth(&a, "4");
    small_synth(&b, "4");
    small_synth(&c, "5");
    for f in ["panel.csv", "surveillance.csv", "elections.csv", "truth.json", "pipeline.toml"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f}");
    }
    assert_ne!(fs::read(a.join("panel.csv")).unwrap(), fs::read(c.join("panel.csv")).unwrap());
    let head = fs::read_to_string(a.join("panel.csv")).unwrap();
    assert!(head.starts_with("# fearsource "), "{}", &head[..40]);
    assert!(head.lines().next().unwrap().contains("seed=4"));
}

#[test]
fn unknown_config_field_is_named() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("bad.toml");
    fs::write(&cfg, "survey = \"panel.csv\"\nsmoothing = 7\n").unwrap();
    let out = fearsource(&["run-all", "--config", s(&cfg)]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("smoothing"));
}

#[test]
fn invalid_window_is_named() {
    let tmp = tempfile::tempdir().unwrap();
    small_synth(tmp.path(), "1");
    let out = fearsource(&["score", "--config", s(&tmp.path().join("pipeline.toml")), "--window", "60"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("`window`"));
}

#[test]
fn missing_elections_skips_clustering() {
    let tmp = tempfile::tempdir().unwrap();
    small_synth(tmp.path(), "2");
    fs::remove_file(tmp.path().join("elections.csv")).unwrap();
    let out_dir = tmp.path().join("out");
    ok(&["run-all", "--config", s(&tmp.path().join("pipeline.toml")), "--out", s(&out_dir)]);
    let m = Manifest::load(&out_dir).unwrap();
    let cluster = m.stage("cluster").unwrap();
    assert_eq!(cluster.status, StageStatus::Skipped);
    assert!(cluster.note.as_deref().unwrap().contains("elections"));
    for stage in ["validate", "epi", "score", "stats", "causal"] {
        assert_eq!(m.stage(stage).unwrap().status, StageStatus::Completed, "{stage}");
    }
    assert!(!out_dir.join("cluster").exists());
    let report = ok(&["report", "--out", s(&out_dir)]);
    assert!(String::from_utf8_lossy(&report.stdout).contains("attribution:"));
}

#[test]
fn single_stage_writes_only_its_outputs() {
    let tmp = tempfile::tempdir().unwrap();
    small_synth(tmp.path(), "3");
    let out_dir = tmp.path().join("out");
    ok(&["epi", "--config", s(&tmp.path().join("pipeline.toml")), "--out", s(&out_dir)]);
    let m = Manifest::load(&out_dir).unwrap();
    assert_eq!(m.stages.len(), 1);
    assert!(m.artifacts.iter().all(|a| a.path.starts_with("epi/")));
    let text = fs::read_to_string(out_dir.join("epi/active_infections.csv")).unwrap();
    assert!(text.lines().nth(1).unwrap().starts_with("date,"));
}

#[test]
fn failed_stage_leaves_partial_manifest() {
    let tmp = tempfile::tempdir().unwrap();
    small_synth(tmp.path(), "6");
    fs::write(tmp.path().join("elections.csv"), "year,state,party\n2020,CA,X\n").unwrap();
    let out_dir = tmp.path().join("out");
    let out = fearsource(&["run-all", "--config", s(&tmp.path().join("pipeline.toml")), "--out", s(&out_dir)]);
    assert!(!out.status.success());
    let m = Manifest::load(&out_dir).unwrap();
    assert_eq!(m.stages.last().unwrap().status, StageStatus::Failed);
}
