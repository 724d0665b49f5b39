use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use junction_core::controller::rng_stream;
use junction_core::observe::ObsParams;
use junction_core::policy::checkpoint::decode;
use junction_core::policy::{NetConfig, PolicyParams};

const CONFIG: &str = r#"
[scenario]
name = "cli-test"
controller = "hierarchical"
horizon = 20.0
seed = 4
checkpoint = "train/final.ckpt"
demand = "demand.csv"

[network]
hidden = [8]

[train]
mode = "two_stage"
updates = 2
rollout_len = 200
episode_horizon = 20.0
minibatch_size = 64
"#;

fn setup(dir: &Path, updates: usize) {
    fs::write(dir.join("demand.csv"), "approach,turn,count_per_hour\nE,L,600\nN,C,600\nS,L,600\nW,C,600\n").unwrap();
    fs::write(dir.join("run.toml"), CONFIG.replace("updates = 2", &format!("updates = {updates}"))).unwrap();
}

fn junction(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_junction")).args(args).current_dir(dir).env("RUST_LOG", "error").output().unwrap()
}

fn ok(dir: &Path, args: &[&str]) {
    let out = junction(dir, args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn zero_updates_write_the_initial_weights() {
    let t = tempfile::tempdir().unwrap();
    setup(t.path(), 0);
    ok(t.path(), &["train", "run.toml", "--seed", "9", "--out", "train"]);
    let ck = decode(&fs::read(t.path().join("train/final.ckpt")).unwrap()).unwrap();
    let init = PolicyParams::new(&ObsParams::default(), &NetConfig { hidden: vec![8] }, &mut rng_stream(9, 4));
    assert_eq!(ck.params, init);
    assert_eq!(ck.seed_lineage, vec![9]);
    let log = fs::read_to_string(t.path().join("train/training.csv")).unwrap();
    assert_eq!(log.lines().count(), 2);
}

#[test]
fn training_is_reproducible_and_outputs_are_tagged() {
    let t = tempfile::tempdir().unwrap();
    setup(t.path(), 2);
    ok(t.path(), &["train", "run.toml", "--out", "train"]);
    let first = fs::read(t.path().join("train/final.ckpt")).unwrap();
    ok(t.path(), &["train", "run.toml", "--out", "train"]);
    assert_eq!(first, fs::read(t.path().join("train/final.ckpt")).unwrap());

    let log = fs::read_to_string(t.path().join("train/training.csv")).unwrap();
    let hash_line = log.lines().next().unwrap().to_string();
    assert!(hash_line.starts_with("# config_hash="));
    assert_eq!(log.lines().count(), 2 + 4);

    ok(t.path(), &["eval", "run.toml", "--out", "eval"]);
    for f in ["metrics.csv", "report.csv"] {
        let text = fs::read_to_string(t.path().join("eval").join(f)).unwrap();
        assert_eq!(text.lines().next().unwrap(), hash_line, "{f}");
    }
    ok(t.path(), &["eval", "run.toml", "--out", "eval_det", "--deterministic-policy"]);
}

#[test]
fn compare_reads_configs_and_reports() {
    let t = tempfile::tempdir().unwrap();
    setup(t.path(), 1);
    ok(t.path(), &["train", "run.toml", "--out", "train"]);
    fs::write(t.path().join("tl.toml"), CONFIG.replace("\"hierarchical\"", "\"tl\"")).unwrap();
    ok(t.path(), &["compare", "run.toml", "tl.toml", "--seeds", "2", "--out", "cmp"]);
    let csv = fs::read_to_string(t.path().join("cmp/compare.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert!(lines[0].starts_with("# config_hash="));
    assert_eq!(lines[1], "controller,median_avg_waiting_time,vs_run,vs_tl");
    assert_eq!(lines.len(), 4);
    ok(t.path(), &["eval", "tl.toml", "--out", "a"]);
    ok(t.path(), &["eval", "tl.toml", "--out", "b", "--seed", "5"]);
    ok(t.path(), &["compare", "a/report.csv", "cmp/report.csv", "--out", "cmp2"]);
}

#[test]
fn strict_mode_rejects_warnings() {
    let t = tempfile::tempdir().unwrap();
    setup(t.path(), 0);
    fs::write(t.path().join("demand.csv"), "approach,turn,count_per_hour\nE,R,100\n").unwrap();
    fs::write(t.path().join("tl.toml"), CONFIG.replace("\"hierarchical\"", "\"tl\"")).unwrap();
    ok(t.path(), &["eval", "tl.toml", "--out", "e"]);
    let out = junction(t.path(), &["eval", "tl.toml", "--out", "e", "--strict"]);
    assert!(!out.status.success());
}

#[test]
fn bad_inputs_fail_cleanly() {
    let t = tempfile::tempdir().unwrap();
    setup(t.path(), 0);
    let out = junction(t.path(), &["eval", "run.toml", "--out", "e"]);
    assert!(!out.status.success(), "missing checkpoint must be an error");
    assert!(String::from_utf8_lossy(&out.stderr).contains("checkpoint"));
    fs::write(t.path().join("bad.toml"), "[scenario]\nname = 1\n").unwrap();
    assert!(!junction(t.path(), &["eval", "bad.toml"]).status.success());
    assert!(!junction(t.path(), &["eval", "missing.toml"]).status.success());
}
