// Copyright 2026 The SPB Authors
// SPDX-License-Identifier: Apache-2.0

use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};

use spb::ledger::{replay, ChainDump};
use spb::sim::{catalogue, run_scenario, Attack, ScenarioConfig};

#[derive(Parser)]
#[command(name = "spb", version, about = "Energy-trading protocol simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario and write report, metrics and chain dump.
    Run {
        /// key=value scenario file.
        #[arg(long, conflicts_with = "scenario", required_unless_present = "scenario")]
        config: Option<PathBuf>,
        /// Built-in scenario name (see list-scenarios).
        #[arg(long)]
        scenario: Option<String>,
        /// Overrides the seed from the config.
        #[arg(long)]
        seed: Option<u64>,
        /// Output directory; created if missing.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Re-validate a chain dump from scratch.
    Replay {
        #[arg(long)]
        chain_dump: PathBuf,
    },
    /// Print the built-in scenarios.
    ListScenarios,
}

fn load_config(config: Option<PathBuf>, scenario: Option<String>) -> Result<ScenarioConfig> {
    match (config, scenario) {
        (Some(path), _) => {
            let text = fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
            ScenarioConfig::parse(&text).with_context(|| format!("parsing {}", path.display()))
        }
        (None, Some(name)) => match Attack::from_scenario(&name) {
            Some(a) => Ok(ScenarioConfig::preset(a)),
            None => bail!("unknown scenario {name:?}; try list-scenarios"),
        },
        (None, None) => bail!("give --config or --scenario"),
    }
}

fn run(config: Option<PathBuf>, scenario: Option<String>, seed: Option<u64>, out: Option<PathBuf>) -> Result<bool> {
    let mut cfg = load_config(config, scenario)?;
    if let Some(seed) = seed {
        cfg.seed = seed;
    }
    let output = run_scenario(&cfg)?;
    let report = output.metrics.to_report();
    print!("{report}");
    if let Some(dir) = out {
        fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
        fs::write(dir.join("report.txt"), &report)?;
        fs::write(dir.join("metrics.kv"), output.metrics.to_kv())?;
        fs::write(dir.join("config.kv"), cfg.to_kv())?;
        fs::write(dir.join("chain.dump"), output.dump.encode())?;
        println!("wrote {}", dir.display());
    }
    Ok(output.metrics.all_passed())
}

fn replay_dump(path: PathBuf) -> Result<bool> {
    let bytes = fs::read(&path).with_context(|| format!("reading {}", path.display()))?;
    let dump = ChainDump::decode(&bytes).with_context(|| format!("decoding {}", path.display()))?;
    let r = replay(&dump);
    println!("records   {}", dump.records.len());
    println!("height    {}", r.height);
    println!("tip       {}", r.tip.to_hex());
    println!("accounts  {}", r.accounts.len());
    println!("settled   {}", r.settlements);
    println!("ctp db    {}", r.ctp_digest.to_hex());
    for f in &r.faults {
        println!("fault     {f}");
    }
    println!("{}", if r.is_clean() { "CLEAN" } else { "FAULTY" });
    Ok(r.is_clean())
}

fn main() -> ExitCode {
    let result = match Cli::parse().command {
        Command::Run {
            config,
            scenario,
            seed,
            out,
        } => run(config, scenario, seed, out),
        Command::Replay { chain_dump } => replay_dump(chain_dump),
        Command::ListScenarios => {
            for (name, what) in catalogue() {
                println!("{name:<20} {what}");
            }
            Ok(true)
        }
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
