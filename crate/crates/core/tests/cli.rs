// Copyright 2026 The SPB Authors
// SPDX-License-Identifier: Apache-2.0

use std::fs;
use std::process::{Command, Output};

fn spb(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_spb")).args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn list_names_every_scenario() {
    let out = spb(&["list-scenarios"]);
    assert!(out.status.success());
    let text = stdout(&out);
    for name in [
        "honest",
        "malicious_producer",
        "malicious_consumer",
        "coe_forgery",
        "double_spend",
        "negotiation_flood",
        "routing_overload",
    ] {
        assert!(text.contains(name), "{name} missing from:\n{text}");
    }
}

#[test]
fn run_writes_artifacts_and_dump_replays_clean() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("out");
    let out = spb(&["run", "--scenario", "malicious_producer", "--seed", "4", "--out", out_dir.to_str().unwrap()]);
    assert!(out.status.success(), "{}", stdout(&out));
    assert!(stdout(&out).contains("ALL PASSED"));
    for f in ["report.txt", "metrics.kv", "config.kv", "chain.dump"] {
        assert!(out_dir.join(f).is_file(), "{f} not written");
    }
    let metrics = fs::read_to_string(out_dir.join("metrics.kv")).unwrap();
    assert!(metrics.lines().any(|l| l == "all_passed=true"));

    let dump = out_dir.join("chain.dump");
    let replayed = spb(&["replay", "--chain-dump", dump.to_str().unwrap()]);
    assert!(replayed.status.success());
    assert!(stdout(&replayed).trim_end().ends_with("CLEAN"));
}

#[test]
fn written_config_reproduces_the_run() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    assert!(spb(&["run", "--scenario", "negotiation_flood", "--out", a.to_str().unwrap()]).status.success());
    let cfg = a.join("config.kv");
    assert!(spb(&["run", "--config", cfg.to_str().unwrap(), "--out", b.to_str().unwrap()]).status.success());
    assert_eq!(fs::read(a.join("chain.dump")).unwrap(), fs::read(b.join("chain.dump")).unwrap());
    assert_eq!(fs::read(a.join("metrics.kv")).unwrap(), fs::read(b.join("metrics.kv")).unwrap());
}

#[test]
fn corrupted_dump_is_reported_faulty_or_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("out");
    assert!(spb(&["run", "--scenario", "negotiation_flood", "--out", out_dir.to_str().unwrap()]).status.success());
    let dump = out_dir.join("chain.dump");
    let mut bytes = fs::read(&dump).unwrap();
    let mid = bytes.len() / 2;
    bytes[mid] ^= 0x40;
    fs::write(&dump, bytes).unwrap();
    let replayed = spb(&["replay", "--chain-dump", dump.to_str().unwrap()]);
    assert!(!replayed.status.success());
}

#[test]
fn bad_inputs_exit_with_code_two() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.kv");
    fs::write(&cfg, "miners = 0\n").unwrap();
    assert_eq!(spb(&["run", "--config", cfg.to_str().unwrap()]).status.code(), Some(2));
    fs::write(&cfg, "no_such_key = 1\n").unwrap();
    assert_eq!(spb(&["run", "--config", cfg.to_str().unwrap()]).status.code(), Some(2));
    assert_eq!(spb(&["run", "--scenario", "nope"]).status.code(), Some(2));
    let missing = dir.path().join("missing.dump");
    assert_eq!(spb(&["replay", "--chain-dump", missing.to_str().unwrap()]).status.code(), Some(2));
}
