// Copyright 2026 The SPB Authors
// SPDX-License-Identifier: Apache-2.0

//! Deterministic discrete-event simulation of producers, consumers, meters,
//! backbone routers and miners.
//!
//! Time is integer ticks and every network hop takes one tick. Events are
//! processed in `(tick, insertion order)`; at the start of each tick every
//! miner sweeps expired CTPs. A run is a pure function of its
//! [`ScenarioConfig`]: the same config yields byte-identical metrics and
//! chain dump.

mod config;
mod engine;
mod metrics;
mod scenarios;

pub use config::{Attack, ConfigError, ScenarioConfig};
pub use metrics::{Metrics, Verdict};
pub use scenarios::catalogue;

use crate::ledger::ChainDump;

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub metrics: Metrics,
    /// The reference miner's view, replayable offline.
    pub dump: ChainDump,
}

pub fn run_scenario(config: &ScenarioConfig) -> Result<RunOutput, ConfigError> {
    let mut engine = engine::Engine::new(config.clone())?;
    engine.run();
    let dump = engine.miners[0].chain_dump(engine.end_tick());
    let mut metrics = Metrics {
        scenario: config.attack.scenario().into(),
        seed: config.seed,
        ..Default::default()
    };
    scenarios::record_metrics(&engine, &mut metrics);
    metrics.verdicts = scenarios::judge(&engine, &dump);
    Ok(RunOutput { metrics, dump })
}

/// Runs the named preset with `seed`.
pub fn run_preset(attack: Attack, seed: u64) -> RunOutput {
    let config = ScenarioConfig {
        seed,
        ..ScenarioConfig::preset(attack)
    };
    run_scenario(&config).expect("presets are valid")
}

#[cfg(test)]
mod tests;
