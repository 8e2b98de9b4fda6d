// Copyright 2026 The SPB Authors
// SPDX-License-Identifier: Apache-2.0

use super::*;

fn small_honest(seed: u64) -> ScenarioConfig {
    ScenarioConfig {
        seed,
        producers: 1,
        consumers: 1,
        miners: 2,
        backbones: 2,
        ticks: 300,
        ..ScenarioConfig::preset(Attack::None)
    }
}

fn assert_all_pass(out: &RunOutput) {
    let failed: Vec<_> = out.metrics.failures().map(|v| format!("{}: {}", v.name, v.detail)).collect();
    assert!(failed.is_empty(), "{failed:#?}");
}

#[test]
fn minimal_honest_trade_moves_price_and_energy() {
    let out = run_scenario(&small_honest(3)).unwrap();
    assert_all_pass(&out);
    let m = &out.metrics;
    assert!(m.count("settlements") > 0);
    assert_eq!(m.count("settlements"), m.count("contracts_committed"));
    assert_eq!(m.count("ctp_hash_divergence"), 0);
    assert!(m.count("energy_delivered_kwh") >= 10 * m.count("settlements"));
}

#[test]
fn same_seed_same_bytes() {
    let a = run_scenario(&small_honest(9)).unwrap();
    let b = run_scenario(&small_honest(9)).unwrap();
    assert_eq!(a.metrics.to_kv(), b.metrics.to_kv());
    assert_eq!(a.dump.encode(), b.dump.encode());
    let c = run_scenario(&small_honest(10)).unwrap();
    assert_ne!(a.metrics.get("tip"), c.metrics.get("tip"));
}

#[test]
fn invalid_config_fails_before_running() {
    let cfg = ScenarioConfig {
        miners: 0,
        ..small_honest(1)
    };
    assert!(matches!(run_scenario(&cfg), Err(ConfigError::Invalid(_))));
    let cfg = ScenarioConfig {
        backbones: 300,
        x_initial: 1,
        ..small_honest(1)
    };
    assert!(matches!(run_scenario(&cfg), Err(ConfigError::Invalid(_))));
}

#[test]
fn prosumers_trade_with_each_other() {
    let cfg = ScenarioConfig {
        producers: 0,
        consumers: 0,
        prosumers: 3,
        ..small_honest(4)
    };
    let out = run_scenario(&cfg).unwrap();
    assert_all_pass(&out);
    assert!(out.metrics.count("settlements") > 0);
}

#[test]
fn pool_exhaustion_rotates_keys_and_keeps_settling() {
    let cfg = ScenarioConfig {
        key_pool_size: 2,
        trade_interval: 5,
        ..small_honest(5)
    };
    let out = run_scenario(&cfg).unwrap();
    assert_all_pass(&out);
    assert!(out.metrics.count("pool_rotations") > 0);
    assert!(out.metrics.count("settlements") > 2);
}

#[test]
fn message_loss_is_survivable_for_safety_invariants() {
    let cfg = ScenarioConfig {
        loss_rate: 0.05,
        ..small_honest(6)
    };
    let out = run_scenario(&cfg).unwrap();
    for name in ["coin_conservation", "ctp_conservation", "funds_safety", "one_block_per_period"] {
        assert!(out.metrics.verdict(name).unwrap().passed, "{name}");
    }
}

#[test]
fn catalogue_lists_every_preset() {
    let names: Vec<_> = catalogue().into_iter().map(|(n, _)| n).collect();
    assert_eq!(names.len(), Attack::ALL.len());
    assert!(names.contains(&"honest"));
    for n in names {
        assert!(Attack::from_scenario(n).is_some());
    }
}
