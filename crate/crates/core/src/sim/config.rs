// Copyright 2026 The SPB Authors
// SPDX-License-Identifier: Apache-2.0

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::arb::MAX_X;
use crate::tx::{Coins, Kwh, Tick};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Attack {
    None,
    MaliciousProducer,
    MaliciousConsumer,
    CoeForgery,
    DoubleSpend,
    NegotiationFlood,
    RoutingOverload,
}

impl Attack {
    pub const ALL: [Attack; 7] = [
        Attack::None,
        Attack::MaliciousProducer,
        Attack::MaliciousConsumer,
        Attack::CoeForgery,
        Attack::DoubleSpend,
        Attack::NegotiationFlood,
        Attack::RoutingOverload,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Attack::None => "none",
            Attack::MaliciousProducer => "malicious_producer",
            Attack::MaliciousConsumer => "malicious_consumer",
            Attack::CoeForgery => "coe_forgery",
            Attack::DoubleSpend => "double_spend",
            Attack::NegotiationFlood => "negotiation_flood",
            Attack::RoutingOverload => "routing_overload",
        }
    }

    /// Scenario name as listed by the CLI. The attack-free run is "honest".
    pub fn scenario(self) -> &'static str {
        match self {
            Attack::None => "honest",
            other => other.name(),
        }
    }

    pub fn from_scenario(name: &str) -> Option<Self> {
        match name {
            "honest" => Some(Attack::None),
            other => other.parse().ok(),
        }
    }
}

impl fmt::Display for Attack {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Attack {
    type Err = ConfigError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Attack::ALL
            .into_iter()
            .find(|a| a.name() == s)
            .ok_or_else(|| ConfigError::BadValue {
                key: "attack".into(),
                value: s.into(),
            })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ConfigError {
    #[error("line {line}: expected key=value")]
    Syntax { line: usize },
    #[error("unknown key {0:?}")]
    UnknownKey(String),
    #[error("bad value {value:?} for {key}")]
    BadValue { key: String, value: String },
    #[error("invalid config: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioConfig {
    pub seed: u64,
    pub ticks: Tick,
    pub producers: usize,
    pub consumers: usize,
    pub prosumers: usize,
    pub miners: usize,
    pub backbones: u32,
    pub x_initial: u8,
    pub offer_limit: u32,
    pub consensus_period: Tick,
    pub burn_threshold: Coins,
    pub ctp_default_ttl: Tick,
    pub overload_threshold: u64,
    pub load_window: Tick,
    pub key_pool_size: usize,
    pub attack: Attack,
    pub initial_coins: Coins,
    pub supply_kwh: Kwh,
    pub ask_price: Coins,
    pub contract_kwh: Kwh,
    /// kWh per tick while a delivery is running.
    pub delivery_rate: Kwh,
    /// Idle ticks between a consumer's trades.
    pub trade_interval: Tick,
    /// Drop probability for every network message. Acceptance runs use 0.
    pub loss_rate: f64,
    pub forgery_attempts: u32,
    pub flood_offers: u32,
    /// Messages per tick sent by the routing-overload attacker.
    pub overload_rate: u32,
    /// Length of the overload burst in ticks.
    pub overload_burst: Tick,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            seed: 1,
            ticks: 2000,
            producers: 2,
            consumers: 3,
            prosumers: 0,
            miners: 3,
            backbones: 4,
            x_initial: 1,
            offer_limit: 5,
            consensus_period: 20,
            burn_threshold: 10,
            ctp_default_ttl: 200,
            overload_threshold: 10_000,
            load_window: 50,
            key_pool_size: 16,
            attack: Attack::None,
            initial_coins: 10_000,
            supply_kwh: 5_000,
            ask_price: 12,
            contract_kwh: 10,
            delivery_rate: 2,
            trade_interval: 30,
            loss_rate: 0.0,
            forgery_attempts: 50,
            flood_offers: 50,
            overload_rate: 0,
            overload_burst: 0,
        }
    }
}

macro_rules! config_keys {
    ($($key:ident),* $(,)?) => {
        const KEYS: &[&str] = &[$(stringify!($key)),*];

        impl ScenarioConfig {
            fn set(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
                let bad = || ConfigError::BadValue { key: key.into(), value: value.into() };
                match key {
                    $(stringify!($key) => self.$key = value.parse().map_err(|_| bad())?,)*
                    _ => return Err(ConfigError::UnknownKey(key.into())),
                }
                Ok(())
            }

            /// `key=value` lines in a fixed order; parses back to `self`.
            pub fn to_kv(&self) -> String {
                let mut out = String::new();
                $(out.push_str(&format!("{}={}\n", stringify!($key), self.$key));)*
                out
            }
        }
    };
}

config_keys!(
    attack,
    seed,
    ticks,
    producers,
    consumers,
    prosumers,
    miners,
    backbones,
    x_initial,
    offer_limit,
    consensus_period,
    burn_threshold,
    ctp_default_ttl,
    overload_threshold,
    load_window,
    key_pool_size,
    initial_coins,
    supply_kwh,
    ask_price,
    contract_kwh,
    delivery_rate,
    trade_interval,
    loss_rate,
    forgery_attempts,
    flood_offers,
    overload_rate,
    overload_burst,
);

impl ScenarioConfig {
    pub fn keys() -> &'static [&'static str] {
        KEYS
    }

    /// Default parameters for a named attack.
    pub fn preset(attack: Attack) -> Self {
        let base = Self {
            attack,
            ..Self::default()
        };
        match attack {
            Attack::None => base,
            Attack::MaliciousProducer => Self {
                producers: 1,
                consumers: 1,
                miners: 2,
                backbones: 2,
                ticks: 500,
                ..base
            },
            Attack::MaliciousConsumer => Self {
                producers: 1,
                consumers: 3,
                miners: 2,
                backbones: 2,
                ticks: 400,
                ..base
            },
            Attack::CoeForgery => Self {
                producers: 2,
                consumers: 3,
                miners: 2,
                ticks: 600,
                trade_interval: 10,
                ..base
            },
            Attack::DoubleSpend => Self {
                producers: 1,
                consumers: 2,
                miners: 3,
                backbones: 2,
                ticks: 300,
                initial_coins: 100,
                contract_kwh: 2,
                ask_price: 5,
                ..base
            },
            Attack::NegotiationFlood => Self {
                producers: 1,
                consumers: 2,
                miners: 2,
                backbones: 2,
                ticks: 200,
                ctp_default_ttl: 80,
                ..base
            },
            Attack::RoutingOverload => Self {
                producers: 1,
                consumers: 2,
                miners: 2,
                ticks: 300,
                load_window: 20,
                overload_threshold: 40,
                overload_rate: 12,
                overload_burst: 60,
                ..base
            },
        }
    }

    /// Parses a flat `key=value` file. `#` starts a comment. Keys not given
    /// take the preset value of the file's `attack` (default: none).
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut pairs = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or(ConfigError::Syntax { line: i + 1 })?;
            pairs.push((k.trim(), v.trim()));
        }
        let attack = match pairs.iter().rev().find(|(k, _)| *k == "attack") {
            Some((_, v)) => v.parse()?,
            None => Attack::None,
        };
        let mut cfg = Self::preset(attack);
        for (k, v) in pairs {
            cfg.set(k, v)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn participants(&self) -> usize {
        self.producers + self.consumers + self.prosumers
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let fail = |m: &str| Err(ConfigError::Invalid(m.into()));
        if self.ticks == 0 {
            return fail("ticks must be positive");
        }
        if self.producers + self.prosumers == 0 || self.consumers + self.prosumers == 0 {
            return fail("need at least one producing and one consuming participant");
        }
        if self.participants() < 2 {
            return fail("verifier meters require at least two participants");
        }
        if self.miners == 0 || self.backbones == 0 {
            return fail("need at least one miner and one backbone");
        }
        if !(1..=MAX_X).contains(&self.x_initial) {
            return fail("x_initial out of range");
        }
        if self.offer_limit < 2 {
            return fail("offer_limit must allow an offer and a reply");
        }
        if self.consensus_period == 0 || self.load_window == 0 || self.key_pool_size == 0 {
            return fail("consensus_period, load_window and key_pool_size must be positive");
        }
        if self.contract_kwh == 0 || self.delivery_rate == 0 || self.ask_price == 0 {
            return fail("contract_kwh, delivery_rate and ask_price must be positive");
        }
        if !(0.0..1.0).contains(&self.loss_rate) {
            return fail("loss_rate must lie in [0, 1)");
        }
        let needs = |ok: bool, m: &str| if ok { Ok(()) } else { fail(m) };
        match self.attack {
            Attack::None | Attack::MaliciousProducer => Ok(()),
            Attack::MaliciousConsumer => needs(self.consumers >= 3, "malicious_consumer needs 3 consumers"),
            Attack::CoeForgery => needs(self.producers >= 2, "coe_forgery needs 2 producers"),
            Attack::DoubleSpend | Attack::RoutingOverload => {
                needs(self.consumers >= 1, "attack needs a dedicated consumer")
            }
            Attack::NegotiationFlood => needs(
                self.consumers >= 1 && self.producers >= 1,
                "negotiation_flood needs a consumer and a producer",
            ),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kv_round_trip_for_every_preset() {
        for a in Attack::ALL {
            let cfg = ScenarioConfig::preset(a);
            cfg.validate().unwrap();
            assert_eq!(ScenarioConfig::parse(&cfg.to_kv()).unwrap(), cfg, "{a}");
            assert_eq!(Attack::from_scenario(a.scenario()), Some(a));
        }
    }

    #[test]
    fn file_keys_override_the_attack_preset() {
        let cfg = ScenarioConfig::parse("# flood\nticks = 90\nattack=negotiation_flood\n").unwrap();
        assert_eq!(cfg.attack, Attack::NegotiationFlood);
        assert_eq!(cfg.ticks, 90);
        assert_eq!(cfg.miners, 2);
    }

    #[test]
    fn parse_errors() {
        assert_eq!(ScenarioConfig::parse("ticks"), Err(ConfigError::Syntax { line: 1 }));
        assert!(matches!(ScenarioConfig::parse("nope=1"), Err(ConfigError::UnknownKey(_))));
        assert!(matches!(ScenarioConfig::parse("ticks=-1"), Err(ConfigError::BadValue { .. })));
        assert!(matches!(ScenarioConfig::parse("attack=worm"), Err(ConfigError::BadValue { .. })));
        assert!(matches!(ScenarioConfig::parse("miners=0"), Err(ConfigError::Invalid(_))));
        assert!(matches!(ScenarioConfig::parse("loss_rate=1.0"), Err(ConfigError::Invalid(_))));
        assert!(matches!(
            ScenarioConfig::parse("attack=malicious_consumer\nconsumers=2"),
            Err(ConfigError::Invalid(_))
        ));
    }
}
