// Copyright 2026 The SPB Authors
// SPDX-License-Identifier: Apache-2.0

use std::collections::BTreeMap;
use std::fmt::Write as _;

/// One scenario assertion. Informational verdicts are reported but never
/// affect the exit status.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Verdict {
    pub name: String,
    pub passed: bool,
    pub informational: bool,
    pub detail: String,
}

impl Verdict {
    pub fn check(name: &str, passed: bool, detail: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            passed,
            informational: false,
            detail: detail.into(),
        }
    }

    pub fn info(name: &str, passed: bool, detail: impl Into<String>) -> Self {
        Self {
            informational: true,
            ..Self::check(name, passed, detail)
        }
    }

    fn status(&self) -> &'static str {
        match (self.informational, self.passed) {
            (true, _) => "info",
            (false, true) => "pass",
            (false, false) => "fail",
        }
    }
}

/// Outcome of one run. `counters` keys are stable and sorted, so the
/// key=value rendering is byte-identical for identical runs.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Metrics {
    pub scenario: String,
    pub seed: u64,
    pub counters: BTreeMap<String, String>,
    /// Lifetime routed messages per backbone.
    pub backbone_load: BTreeMap<u32, u64>,
    pub verdicts: Vec<Verdict>,
}

impl Metrics {
    pub fn set(&mut self, key: &str, value: impl ToString) {
        self.counters.insert(key.into(), value.to_string());
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.counters.get(key).map(String::as_str)
    }

    /// Counter parsed as an integer; panics on a missing key.
    pub fn count(&self, key: &str) -> u64 {
        self.get(key)
            .and_then(|v| v.parse().ok())
            .unwrap_or_else(|| panic!("no integer metric {key}"))
    }

    pub fn verdict(&self, name: &str) -> Option<&Verdict> {
        self.verdicts.iter().find(|v| v.name == name)
    }

    pub fn all_passed(&self) -> bool {
        self.verdicts.iter().all(|v| v.informational || v.passed)
    }

    pub fn failures(&self) -> impl Iterator<Item = &Verdict> {
        self.verdicts.iter().filter(|v| !v.informational && !v.passed)
    }

    pub fn to_kv(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "scenario={}", self.scenario);
        let _ = writeln!(out, "seed={}", self.seed);
        for (k, v) in &self.counters {
            let _ = writeln!(out, "{k}={v}");
        }
        for (id, load) in &self.backbone_load {
            let _ = writeln!(out, "backbone_load.{id}={load}");
        }
        for v in &self.verdicts {
            let _ = writeln!(out, "verdict.{}={}", v.name, v.status());
        }
        let _ = writeln!(out, "all_passed={}", self.all_passed());
        out
    }

    pub fn to_report(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "scenario {} (seed {})", self.scenario, self.seed);
        let _ = writeln!(out);
        let _ = writeln!(out, "counters");
        let width = self.counters.keys().map(String::len).max().unwrap_or(0);
        for (k, v) in &self.counters {
            let _ = writeln!(out, "  {k:<width$}  {v}");
        }
        let _ = writeln!(out);
        let _ = writeln!(out, "backbone load");
        let peak = self.backbone_load.values().copied().max().unwrap_or(0).max(1);
        for (id, load) in &self.backbone_load {
            let bar = "#".repeat((load * 40 / peak) as usize);
            let _ = writeln!(out, "  {id:>3}  {load:>7}  {bar}");
        }
        let _ = writeln!(out);
        let _ = writeln!(out, "verdicts");
        for v in &self.verdicts {
            let _ = writeln!(out, "  [{}] {}: {}", v.status().to_uppercase(), v.name, v.detail);
        }
        let _ = writeln!(
            out,
            "\n{}",
            if self.all_passed() { "ALL PASSED" } else { "FAILED" }
        );
        out
    }
}
