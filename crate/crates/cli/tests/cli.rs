use std::path::Path;
use std::process::{Command, Output};

fn onesided(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_onesided")).args(args).output().unwrap()
}

fn json(out: &Output) -> serde_json::Value {
    serde_json::from_slice(&out.stdout).unwrap_or_else(|e| panic!("{e}: {}", String::from_utf8_lossy(&out.stdout)))
}

#[test]
fn characteristic_prints_and_writes_json() {
    let dir = tempfile::tempdir().unwrap();
    let out = onesided(&["characteristic", "--depth", "6", "--set", "kind=cascade", "--out", dir.path().to_str().unwrap(), "--check"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let v = json(&out);
    assert!(v["ap_plus"].as_f64().unwrap() > 0.0);
    assert!(dir.path().join("characteristic.json").exists());
    assert!(String::from_utf8_lossy(&out.stderr).contains("[PASS]"));
}

#[test]
fn config_file_errors_carry_line_numbers() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.cfg");
    std::fs::write(&cfg, "depth=6\n# comment\nnot_a_key=3\n").unwrap();
    let out = onesided(&["norm", "--config", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("line 3") && err.contains("not_a_key"), "{err}");
}

#[test]
fn flags_override_config_and_set_overrides_flags() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.cfg");
    std::fs::write(&cfg, "depth=9 p=3\n").unwrap();
    let out = onesided(&["characteristic", "--config", cfg.to_str().unwrap(), "--depth", "5", "--set", "p=1.5"]);
    assert!(out.status.success());
    let v = json(&out);
    assert!(v["weight"].as_str().unwrap().ends_with("depth=5"));
    assert_eq!(v["p"].as_f64(), Some(1.5));
}

#[test]
fn oversized_depth_is_a_resource_error() {
    let out = onesided(&["norm", "--depth", "20"]);
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn invalid_values_exit_two() {
    assert_eq!(onesided(&["norm", "--set", "p=0.5"]).status.code(), Some(2));
    assert_eq!(onesided(&["search", "--depth", "5", "--p", "3"]).status.code(), Some(2));
    assert_eq!(onesided(&["corona", "--depth", "6", "--set", "i0=5,0"]).status.code(), Some(2));
}

fn read(dir: &Path, name: &str) -> Vec<u8> {
    std::fs::read(dir.join(name)).unwrap_or_else(|e| panic!("{name}: {e}"))
}

#[test]
fn sweep_writes_outputs_and_replays() {
    let dir = tempfile::tempdir().unwrap();
    let run = |sub: &str| {
        let out = dir.path().join(sub);
        let o = onesided(&[
            "sweep", "--depth", "7", "--threads", "1", "--seed", "3", "--out", out.to_str().unwrap(),
            "--set", "kind=cascade", "--set", "sweep_param=theta", "--set", "sweep_values=0.1,0.5,0.8",
            "--set", "sign_policy=random", "--set", "family_size=4",
        ]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        out
    };
    let (a, b) = (run("a"), run("b"));
    for f in ["results.csv", "records.jsonl", "summary.json", "config.txt"] {
        assert!(a.join(f).exists(), "{f}");
    }
    assert_eq!(read(&a, "records.jsonl"), read(&b, "records.jsonl"));
    assert_eq!(std::fs::read_to_string(a.join("records.jsonl")).unwrap().lines().count(), 3);
    let replay = onesided(&["sweep", "--config", a.join("config.txt").to_str().unwrap(), "--out", dir.path().join("c").to_str().unwrap()]);
    assert!(replay.status.success());
    assert_eq!(read(&a, "records.jsonl"), read(&dir.path().join("c"), "records.jsonl"));
}

#[test]
fn empty_sweep_family_succeeds() {
    let out = onesided(&["sweep", "--depth", "6", "--set", "sweep_values="]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(json(&out)["rows"].as_u64(), Some(0));
}

#[test]
fn search_replays_byte_for_byte() {
    let dir = tempfile::tempdir().unwrap();
    let run = |sub: &str| {
        let out = dir.path().join(sub);
        let o = onesided(&[
            "search", "--depth", "6", "--threads", "1", "--seed", "1", "--out", out.to_str().unwrap(),
            "--set", "kind=cascade", "--set", "theta=0.5", "--set", "budget=40", "--set", "restarts=2",
        ]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        read(&out, "trajectory.jsonl")
    };
    assert_eq!(run("a"), run("b"));
}

#[test]
fn probe_is_labelled_evidence() {
    let out = onesided(&["probe-maximal", "--depth", "6", "--set", "family_size=2"]);
    assert!(out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("evidence, not proof"));
    assert_eq!(json(&out)["rows"].as_array().unwrap().len(), 1);
}

#[test]
fn remaining_queries_run() {
    for sub in ["norm", "testing", "corona", "distribution"] {
        let out = onesided(&[sub, "--depth", "7", "--set", "kind=cascade", "--set", "theta=0.4", "--check"]);
        assert!(out.status.success(), "{sub}: {}", String::from_utf8_lossy(&out.stderr));
        assert!(json(&out).is_object());
    }
}
