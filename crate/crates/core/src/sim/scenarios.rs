// Copyright 2026 The SPB Authors
// SPDX-License-Identifier: Apache-2.0

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::config::{Attack, ScenarioConfig};
use super::engine::{ConsumerMode, Engine, ProducerMode};
use super::metrics::{Metrics, Verdict};
use crate::arb::{Arb, ArbConfig, Envelope, Endpoint};
use crate::crypto::PublicKey;
use crate::ledger::{replay, ChainDump, Rejection};
use crate::tx::{Coins, Transaction};

/// `(name, one-line description)` for every built-in scenario.
pub fn catalogue() -> Vec<(&'static str, &'static str)> {
    Attack::ALL
        .into_iter()
        .map(|a| {
            let what = match a {
                Attack::None => "honest trading: supply, negotiation, CTP, delivery, ERC, settlement",
                Attack::MaliciousProducer => "producer takes the CTP and delivers nothing; consumer is refunded",
                Attack::MaliciousConsumer => "consumers withhold the CTP, corrupt its hash, or go silent after it",
                Attack::CoeForgery => "producer forges ERCs with a copied CoE and no pool keys",
                Attack::DoubleSpend => "consumer commits the same coins to several CTPs at once",
                Attack::NegotiationFlood => "one sender floods a producer with offers",
                Attack::RoutingOverload => "junk traffic overloads the backbone until the table widens",
            };
            (a.scenario(), what)
        })
        .collect()
}

fn best_chain_ercs(e: &Engine) -> BTreeMap<crate::crypto::HashDigest, u32> {
    let mut out = BTreeMap::new();
    for b in e.miners[0].chain().best_chain() {
        for tx in &b.txs {
            if let Transaction::Erc(erc) = tx {
                *out.entry(erc.ctp_id).or_default() += 1;
            }
        }
    }
    out
}

fn consumer_index(e: &Engine, k: usize) -> usize {
    e.cfg.producers + k
}

pub(super) fn judge(e: &Engine, dump: &ChainDump) -> Vec<Verdict> {
    let mut v = common(e, dump);
    match e.cfg.attack {
        Attack::None => honest(e, &mut v),
        Attack::MaliciousProducer => malicious_producer(e, &mut v),
        Attack::MaliciousConsumer => malicious_consumer(e, &mut v),
        Attack::CoeForgery => coe_forgery(e, &mut v),
        Attack::DoubleSpend => double_spend(e, &mut v),
        Attack::NegotiationFlood => negotiation_flood(e, &mut v),
        Attack::RoutingOverload => routing_overload(e, &mut v),
    }
    v
}

fn common(e: &Engine, dump: &ChainDump) -> Vec<Verdict> {
    let mut v = Vec::new();
    let minted: u128 = e.ledger.initial_coins.values().map(|&c| c as u128).sum();
    let totals: Vec<u128> = e.miners.iter().map(|m| m.state().total_coins()).collect();
    v.push(Verdict::check(
        "coin_conservation",
        totals.iter().all(|&t| t == minted),
        format!("minted {minted}, tips hold {totals:?}"),
    ));

    let ctp_ok = e.miners.iter().all(|m| {
        let s = m.stats();
        s.ctps_accepted == s.ctps_expired + s.ctps_settled + m.ctp_db().len() as u64
    });
    let s = e.miners[0].stats();
    v.push(Verdict::check(
        "ctp_conservation",
        ctp_ok,
        format!(
            "accepted {} = expired {} + settled {} + pending {}",
            s.ctps_accepted,
            s.ctps_expired,
            s.ctps_settled,
            e.miners[0].ctp_db().len()
        ),
    ));

    let tip = e.miners[0].chain().tip_hash();
    let db = e.miners[0].ctp_db().digest();
    let agree = e
        .miners
        .iter()
        .all(|m| m.chain().tip_hash() == tip && m.ctp_db().digest() == db);
    v.push(Verdict::check(
        "miners_agree",
        agree,
        format!("tip {} at height {}", &tip.to_hex()[..16], e.miners[0].chain().height()),
    ));

    let max_per_period = e.obs.mined.values().copied().max().unwrap_or(0);
    v.push(Verdict::check(
        "one_block_per_period",
        max_per_period <= 1,
        format!("max blocks by one miner in one period: {max_per_period}"),
    ));
    v.push(Verdict::check(
        "funds_safety",
        e.obs.funds_violation_ticks == 0,
        format!("ticks with pending > balance: {}", e.obs.funds_violation_ticks),
    ));
    let rejected: u64 = e.miners.iter().map(|m| m.stats().blocks_rejected).sum();
    v.push(Verdict::check(
        "blocks_accepted",
        rejected == 0,
        format!("blocks rejected by miners: {rejected}"),
    ));
    let mismatches: u64 = e.miners.iter().map(|m| m.stats().ctp_hash_mismatches).sum();
    let checks: u64 = e.miners.iter().map(|m| m.stats().ctp_hash_checks).sum();
    v.push(Verdict::check(
        "ctp_hash_consistent",
        mismatches == 0,
        format!("{mismatches} of {checks} header checks diverged"),
    ));
    let bad_refunds = e.obs.refunds.iter().filter(|(a, b)| a != b).count();
    v.push(Verdict::check(
        "refunds_exact",
        bad_refunds == 0,
        format!("{} expiries, {bad_refunds} inexact", e.obs.refunds.len()),
    ));

    let ercs = best_chain_ercs(e);
    let honest: Vec<_> = e.obs.contracts.iter().filter(|(_, c)| c.honest).collect();
    let unsettled = honest
        .iter()
        .filter(|(id, _)| ercs.get(*id) != Some(&1) || !e.miners[0].state().is_settled(id))
        .count();
    v.push(Verdict::check(
        "honest_contracts_settle_once",
        unsettled == 0,
        format!("{} honest contracts, {unsettled} not settled exactly once", honest.len()),
    ));

    v.push(balances_match(e));
    v.push(energy_matches(e));

    let report = replay(dump);
    v.push(Verdict::check(
        "dump_replays",
        report.is_clean() && report.tip == tip && &report.accounts == e.miners[0].accounts(),
        format!("{} faults, replayed height {}", report.faults.len(), report.height),
    ));
    v
}

/// Final coin balance of every participant equals the initial balance
/// shifted by the agreed price of each of its settled contracts.
fn balances_match(e: &Engine) -> Verdict {
    let state = e.miners[0].state();
    let mut expected: Vec<i128> = vec![e.cfg.initial_coins as i128; e.people.len()];
    let mut unknown = 0;
    for (id, s) in state.settlements() {
        match e.obs.contracts.get(id) {
            Some(c) if c.terms.total_price == s.price => {
                expected[c.consumer] -= s.price as i128;
                expected[c.producer] += s.price as i128;
            }
            _ => unknown += 1,
        }
    }
    let wrong = e
        .people
        .iter()
        .zip(&expected)
        .filter(|(p, &want)| state.coin_balance(&p.pk()) as i128 != want)
        .count();
    Verdict::check(
        "balances_match_contracts",
        wrong == 0 && unknown == 0,
        format!(
            "{} settlements, {unknown} without an agreed contract, {wrong} balances off",
            state.settlements().len()
        ),
    )
}

/// Metered energy equals settled contract energy for every consumer, and
/// every energy account equals supply minus settled sales.
fn energy_matches(e: &Engine) -> Verdict {
    let state = e.miners[0].state();
    let mut received = vec![0u64; e.people.len()];
    let mut sold = vec![0u64; e.people.len()];
    for id in state.settlements().keys() {
        if let Some(c) = e.obs.contracts.get(id) {
            received[c.consumer] += c.terms.energy_amount;
            sold[c.producer] += c.terms.energy_amount;
        }
    }
    let mut supplied = vec![0u64; e.people.len()];
    for b in e.miners[0].chain().best_chain() {
        for tx in &b.txs {
            if let Transaction::SupplyEnergy(s) = tx {
                if let Some(i) = e.people.iter().position(|p| p.pk() == s.pk) {
                    supplied[i] += s.energy_amount;
                }
            }
        }
    }
    let mut off = 0;
    for (i, p) in e.people.iter().enumerate() {
        if p.consumer.is_some() && p.meter.energy_received() != received[i] {
            off += 1;
        }
        if p.producer.is_some() && state.energy_balance(&p.pk()) != supplied[i] - sold[i] {
            off += 1;
        }
    }
    Verdict::check(
        "energy_matches_contracts",
        off == 0,
        format!("{} kWh delivered, {off} accounts off", e.obs.energy_delivered),
    )
}

fn honest(e: &Engine, v: &mut Vec<Verdict>) {
    let committed = e.obs.contracts.len();
    let refused = e
        .obs
        .contracts
        .keys()
        .filter(|id| e.obs.admissions.get(*id) != Some(&true))
        .count();
    v.push(Verdict::check(
        "contracts_committed",
        committed > 0 && refused == 0,
        format!("{committed} CTPs committed, {refused} refused by the reference miner"),
    ));
}

fn malicious_producer(e: &Engine, v: &mut Vec<Verdict>) {
    let ercs: u32 = best_chain_ercs(e).values().sum();
    v.push(Verdict::check("no_receipt", ercs == 0, format!("{ercs} ERCs mined")));
    let exact = e.obs.refunds.iter().all(|(a, b)| a == b);
    v.push(Verdict::check(
        "consumer_refunded",
        !e.obs.refunds.is_empty() && exact,
        format!("{} CTPs expired undelivered, refunds {:?}", e.obs.refunds.len(), e.obs.refunds),
    ));
    let producer = &e.people[0];
    let balance = e.miners[0].state().coin_balance(&producer.pk());
    v.push(Verdict::check(
        "producer_unpaid",
        balance == e.cfg.initial_coins,
        format!("producer balance {balance}"),
    ));
}

fn malicious_consumer(e: &Engine, v: &mut Vec<Verdict>) {
    let of = |k: usize| &e.people[consumer_index(e, k)];
    let (no_ctp, bad_hash) = (of(0), of(1));
    let agreements = no_ctp.consumer.as_ref().map_or(0, |c| c.agreements);
    v.push(Verdict::check(
        "no_ctp_no_energy",
        agreements > 0 && no_ctp.meter.energy_received() == 0,
        format!(
            "{agreements} agreements without CTP, {} kWh received",
            no_ctp.meter.energy_received()
        ),
    ));
    let declined: u64 = e.people.iter().filter_map(|p| p.producer.as_ref()).map(|p| p.declined).sum();
    v.push(Verdict::check(
        "bad_hash_declined",
        declined > 0 && bad_hash.meter.energy_received() == 0,
        format!(
            "{declined} CTPs declined, {} kWh received",
            bad_hash.meter.energy_received()
        ),
    ));
    let silent = &e.obs.silent_ctps;
    let settled = silent.iter().filter(|id| e.miners[0].state().is_settled(id)).count();
    v.push(Verdict::check(
        "silent_consumer_pays",
        !silent.is_empty() && settled == silent.len(),
        format!("{settled} of {} CTPs settled after the consumer went silent", silent.len()),
    ));
    debug_assert_eq!(of(2).consumer.as_ref().map(|c| c.mode), Some(ConsumerMode::SilentAfterCtp));
}

fn coe_forgery(e: &Engine, v: &mut Vec<Verdict>) {
    let forger = e
        .people
        .iter()
        .find(|p| p.producer.as_ref().is_some_and(|p| p.mode == ProducerMode::Forger))
        .expect("forger present");
    let attempts = e.obs.forgeries.len();
    v.push(Verdict::check(
        "forgery_attempts",
        attempts == e.cfg.forgery_attempts as usize,
        format!("{attempts} forged ERCs sent"),
    ));
    let mut by_step: BTreeMap<char, usize> = BTreeMap::new();
    let mut wrong = 0;
    for f in e.obs.forgeries.values() {
        match &f.observed {
            Some(Err(Rejection::InvalidErc(step))) if *step == f.expected => {
                *by_step.entry(step.label()).or_default() += 1;
            }
            _ => wrong += 1,
        }
    }
    v.push(Verdict::check(
        "forgery_fails_at_d_or_e",
        wrong == 0,
        format!("failures by step {by_step:?}, {wrong} unexpected"),
    ));
    let paid = e.miners[0]
        .state()
        .settlements()
        .values()
        .filter(|s| s.producer == forger.pk())
        .count();
    v.push(Verdict::check(
        "forger_unpaid",
        paid == 0 && e.obs.forged_accepted == 0,
        format!("{paid} settlements to the forger, {} forgeries admitted", e.obs.forged_accepted),
    ));
}

fn double_spend(e: &Engine, v: &mut Vec<Verdict>) {
    let results = |k: usize| -> Vec<Option<bool>> {
        e.obs
            .ds_batches
            .get(k)
            .map(|b| b.iter().map(|id| e.obs.admissions.get(id).copied()).collect())
            .unwrap_or_default()
    };
    v.push(Verdict::check(
        "sixty_then_fifty",
        results(0) == [Some(true), Some(false)],
        format!("admitted {:?}", results(0)),
    ));
    v.push(Verdict::check(
        "sixty_then_forty",
        results(1) == [Some(true), Some(true)],
        format!("admitted {:?}", results(1)),
    ));
    v.push(Verdict::check(
        "overcommit_rejected",
        e.obs.ds_rejections > 0,
        format!("{} CTPs rejected as double-spends", e.obs.ds_rejections),
    ));
    v.push(Verdict::check(
        "identical_subsets",
        e.obs.admitted_divergence_ticks == 0,
        format!("ticks with differing admitted sets: {}", e.obs.admitted_divergence_ticks),
    ));
}

/// Offers from the flooding session that reached their producer.
fn flood_seen(e: &Engine) -> u32 {
    e.obs
        .flooder_session
        .and_then(|s| e.people[0].producer.as_ref()?.offers_seen.get(&s).copied())
        .unwrap_or(0)
}

fn negotiation_flood(e: &Engine, v: &mut Vec<Verdict>) {
    let seen = flood_seen(e);
    let expected = e.obs.flood_sent.min(e.cfg.offer_limit);
    v.push(Verdict::check(
        "offers_capped",
        e.obs.flood_sent > 0 && seen == expected,
        format!("{} offers sent, {seen} reached the producer", e.obs.flood_sent),
    ));
    let dropped = e.arb.stats().offers_dropped;
    v.push(Verdict::check(
        "excess_dropped",
        dropped >= u64::from(e.obs.flood_sent - seen),
        format!("{dropped} offers dropped at the backbone"),
    ));
}

fn routing_overload(e: &Engine, v: &mut Vec<Verdict>) {
    let Some(r) = e.obs.rebalances.first() else {
        v.push(Verdict::check("rebalance_fired", false, "no rebalance"));
        return;
    };
    v.push(Verdict::check(
        "rebalance_fired",
        true,
        format!("{} rebalances, first at window peak {}", e.obs.rebalances.len(), r.max_before()),
    ));
    v.push(Verdict::check(
        "prefix_widened",
        r.x_after == r.x_before + 1,
        format!("x {} -> {}", r.x_before, r.x_after),
    ));
    let hot = r
        .loads_before
        .iter()
        .max_by_key(|(id, load)| (**load, std::cmp::Reverse(**id)))
        .map(|(id, _)| *id)
        .unwrap_or(0);
    let (before, after) = (r.loads_before[&hot], r.loads_after.get(&hot).copied().unwrap_or(0));
    v.push(Verdict::check(
        "hot_backbone_relieved",
        after < before,
        format!("backbone {hot}: {before} -> {after}"),
    ));
    v.push(Verdict::check(
        "max_load_dropped",
        r.max_after() < r.max_before(),
        format!("max {} -> {}", r.max_before(), r.max_after()),
    ));
    let (sb, sa) = skew_probe(&e.cfg);
    v.push(Verdict::info(
        "skewed_keys",
        sa < sb,
        format!("keys sharing a 2-byte prefix: max {sb} -> {sa}; widening alone need not balance"),
    ));
}

/// Window loads before and after widening when every destination shares
/// its first two bytes.
fn skew_probe(cfg: &ScenarioConfig) -> (u64, u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x736b_6577);
    let mut arb = Arb::new(
        cfg.backbones,
        ArbConfig {
            x: 1,
            offer_limit: cfg.offer_limit,
            load_window: cfg.load_window,
            overload_threshold: cfg.overload_threshold,
        },
    )
    .expect("validated backbone count");
    for _ in 0..200 {
        let mut bytes: [u8; 32] = rng.gen();
        bytes[..2].copy_from_slice(&[0x5a, 0xa5]);
        let env = Envelope {
            origin: Endpoint(u32::MAX),
            dest_pk: PublicKey::from_bytes(bytes),
            payload: vec![0xEE],
            anonymized: true,
        };
        let _ = arb.route(0, &env, 0);
    }
    let r = arb.rebalance(2, 0).expect("x=2 is wider");
    (r.max_before(), r.max_after())
}

pub(super) fn record_metrics(e: &Engine, m: &mut Metrics) {
    let r = &e.miners[0];
    let s = r.stats();
    let a = e.arb.stats();
    let blocks_mined: u64 = e.miners.iter().map(|m| m.stats().blocks_mined).sum();
    let sum = |f: fn(&crate::ledger::MinerStats) -> u64| e.miners.iter().map(|m| f(&m.stats())).sum::<u64>();
    m.set("ticks", e.cfg.ticks);
    m.set("participants", e.people.len());
    m.set("miners", e.miners.len());
    m.set("messages_routed", a.routed);
    m.set("messages_delivered", a.delivered);
    m.set("messages_undeliverable", a.undeliverable);
    m.set("broadcast_baseline", a.broadcast_baseline);
    m.set("inter_backbone_hops", a.inter_backbone_hops);
    m.set("offers_dropped", a.offers_dropped);
    m.set("arb_joins", a.joins_accepted);
    m.set("rebalances", a.rebalances);
    m.set("x_final", e.arb.table().x());
    m.set("blocks_mined", blocks_mined);
    m.set("chain_height", r.chain().height());
    m.set("orphaned_blocks", blocks_mined - r.chain().height());
    m.set("blocks_rejected", sum(|s| s.blocks_rejected));
    m.set("reorgs", sum(|s| s.reorgs));
    m.set("ctps_accepted", s.ctps_accepted);
    m.set("ctps_rejected", s.ctps_rejected);
    m.set("ctps_expired", s.ctps_expired);
    m.set("ctps_settled", s.ctps_settled);
    m.set("ctps_pending", r.ctp_db().len());
    m.set("ctp_hash_checks", sum(|s| s.ctp_hash_checks));
    m.set("ctp_hash_divergence", sum(|s| s.ctp_hash_mismatches));
    m.set("negotiation_messages", e.obs.negotiation_messages);
    m.set("contracts_committed", e.obs.contracts.len());
    let agreements: u64 = e.people.iter().filter_map(|p| p.consumer.as_ref()).map(|c| c.agreements).sum();
    m.set("agreements", agreements);
    m.set("settlements", r.state().settlements().len());
    let volume: Coins = r.state().settlements().values().map(|s| s.price).sum();
    m.set("settled_coins", volume);
    m.set("energy_delivered_kwh", e.obs.energy_delivered);
    m.set("refunds", e.obs.refunds.len());
    m.set("funds_violation_ticks", e.obs.funds_violation_ticks);
    m.set("admitted_divergence_ticks", e.obs.admitted_divergence_ticks);
    m.set("honest_tx_rejections", e.obs.honest_rejections);
    m.set("coe_granted", e.obs.coe_granted);
    m.set("coe_installed", e.obs.coe_installed);
    m.set("pool_rotations", e.obs.pool_rotations);
    m.set("late_receipts", e.obs.late_receipts);
    m.set("forgery_attempts", e.obs.forgeries.len());
    m.set("forgery_admitted", e.obs.forged_accepted);
    m.set("double_spend_rejections", e.obs.ds_rejections);
    m.set("flood_offers_sent", e.obs.flood_sent);
    m.set("flood_offers_seen", flood_seen(e));
    m.set("overload_messages", e.obs.overload_sent);
    m.set("tip", r.chain().tip_hash().to_hex());
    m.set("ctp_digest", r.ctp_db().digest().to_hex());
    for n in e.arb.nodes() {
        m.backbone_load.insert(n.id, n.total_load());
    }
}
