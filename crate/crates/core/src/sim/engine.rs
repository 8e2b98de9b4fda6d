// Copyright 2026 The SPB Authors
// SPDX-License-Identifier: Apache-2.0

use std::collections::BTreeMap;
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::config::{Attack, ConfigError, ScenarioConfig};
use crate::arb::{Arb, ArbConfig, BackboneId, Delivery, Endpoint, Envelope, JoinMessage, RebalanceReport};
use crate::crypto::{Certificate, HashDigest, KeyPair, PublicKey};
use crate::ledger::{Block, ErcStep, LedgerConfig, MinerState, Rejection};
use crate::meter::{
    decode_coe_grant, encode_coe_grant, generate_key_pool, vm_process_request, MeterError, MeterIdentity,
    SmartMeter, VerificationRequest, TAG_COE_GRANT, TAG_VERIFICATION_REQUEST,
};
use crate::tx::{
    compute_contract_hash, Coins, ContractTerms, CtpDraft, ErcDraft, ErcTx, GenesisTx, Kwh, NegotiationDraft,
    NegotiationMsg, NegotiationStatus, SupplyEnergyDraft, SupplyEnergyTx, Tick, Transaction,
};

/// Ticks a meter waits for a CoE grant before asking another verifier.
const COE_RETRY: Tick = 10;
/// Participant endpoints start here; backbones own `Endpoint(0..n)`.
const ENDPOINT_BASE: u32 = 1000;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(super) enum ProducerMode {
    Honest,
    NoDelivery,
    Forger,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(super) enum ConsumerMode {
    Honest,
    NoCtp,
    BadHash,
    SilentAfterCtp,
    DoubleSpender,
    Flooder,
    Overloader,
}

struct Talk {
    energy: Kwh,
    nonce: [u8; 32],
}

struct Delivering {
    consumer: usize,
    remaining: Kwh,
    expiry: Tick,
}

pub(super) struct Producer {
    pub mode: ProducerMode,
    pub ask: Coins,
    pub negotiable: bool,
    genesis_sent: bool,
    supply: Option<(SupplyEnergyTx, Tick)>,
    pub supplied: Kwh,
    talks: BTreeMap<PublicKey, Talk>,
    /// Agreed terms by contract hash, consumed by the matching CTP.
    agreed: BTreeMap<HashDigest, ContractTerms>,
    deliveries: BTreeMap<HashDigest, Delivering>,
    pub offers_seen: BTreeMap<PublicKey, u32>,
    pub declined: u64,
    pub forged: u32,
}

enum Phase {
    Idle {
        ready_at: Tick,
    },
    Negotiating {
        session: KeyPair,
        producer: PublicKey,
        ask: Coins,
        energy: Kwh,
        nonce: [u8; 32],
        started: Tick,
    },
    Waiting {
        ctp_id: HashDigest,
        expiry: Tick,
        pre_available: Coins,
    },
    Silent,
}

pub(super) struct Consumer {
    pub mode: ConsumerMode,
    phase: Phase,
    pub agreements: u64,
    script_step: u32,
    wait_until: Tick,
}

pub(super) struct Participant {
    pub keys: KeyPair,
    endpoint: Endpoint,
    entry: BackboneId,
    pub meter: SmartMeter,
    coe_requested_at: Option<Tick>,
    receipts_due: Vec<HashDigest>,
    pub producer: Option<Producer>,
    pub consumer: Option<Consumer>,
}

impl Participant {
    pub fn pk(&self) -> PublicKey {
        self.keys.public()
    }

    pub fn is_honest(&self) -> bool {
        self.producer.as_ref().is_none_or(|p| p.mode == ProducerMode::Honest)
            && self.consumer.as_ref().is_none_or(|c| c.mode == ConsumerMode::Honest)
    }
}

/// A contract the simulator saw both parties agree to and the consumer commit.
#[derive(Debug, Clone)]
pub(super) struct ContractRecord {
    pub consumer: usize,
    pub producer: usize,
    pub terms: ContractTerms,
    pub honest: bool,
}

#[derive(Debug, Clone)]
pub(super) struct Forgery {
    pub expected: ErcStep,
    /// Rejection at the reference miner; `None` until it arrives.
    pub observed: Option<Result<(), Rejection>>,
}

#[derive(Default)]
pub(super) struct Observations {
    pub contracts: BTreeMap<HashDigest, ContractRecord>,
    pub negotiation_messages: u64,
    /// `(available before the CTP, available after its expiry)`.
    pub refunds: Vec<(Coins, Coins)>,
    pub funds_violation_ticks: u64,
    pub admitted_divergence_ticks: u64,
    pub mined: BTreeMap<(usize, u64), u32>,
    pub forgeries: BTreeMap<HashDigest, Forgery>,
    pub forged_accepted: u64,
    /// CTP admission results at the reference miner.
    pub admissions: BTreeMap<HashDigest, bool>,
    pub ds_batches: Vec<Vec<HashDigest>>,
    pub ds_rejections: u64,
    pub flooder_session: Option<PublicKey>,
    pub flood_sent: u32,
    pub overload_sent: u64,
    pub rebalances: Vec<RebalanceReport>,
    pub honest_rejections: u64,
    pub silent_ctps: Vec<HashDigest>,
    pub energy_delivered: Kwh,
    pub coe_granted: u64,
    pub coe_installed: u64,
    pub pool_rotations: u64,
    pub late_receipts: u64,
}

enum Event {
    TxArrival {
        miner: usize,
        tx: Transaction,
        adversarial: bool,
    },
    BlockArrival {
        miner: usize,
        block: Block,
    },
    Message(Delivery),
    Wakeup(usize),
    Pulse {
        producer: usize,
        ctp_id: HashDigest,
    },
    TableUpdate,
    Act,
}

pub(super) struct Engine {
    pub cfg: ScenarioConfig,
    rng: ChaCha8Rng,
    net_rng: ChaCha8Rng,
    distributor: KeyPair,
    pub ledger: Arc<LedgerConfig>,
    pub miners: Vec<MinerState>,
    pub arb: Arb,
    pub people: Vec<Participant>,
    by_account: BTreeMap<PublicKey, usize>,
    by_endpoint: BTreeMap<Endpoint, usize>,
    queue: BTreeMap<(Tick, u64), Event>,
    seq: u64,
    now: Tick,
    pub obs: Observations,
}

fn modes(cfg: &ScenarioConfig) -> (Vec<ProducerMode>, Vec<ConsumerMode>) {
    let mut p = vec![ProducerMode::Honest; cfg.producers];
    let mut c = vec![ConsumerMode::Honest; cfg.consumers];
    match cfg.attack {
        Attack::None => {}
        Attack::MaliciousProducer => p[0] = ProducerMode::NoDelivery,
        Attack::MaliciousConsumer => {
            c[0] = ConsumerMode::NoCtp;
            c[1] = ConsumerMode::BadHash;
            c[2] = ConsumerMode::SilentAfterCtp;
        }
        Attack::CoeForgery => *p.last_mut().unwrap() = ProducerMode::Forger,
        Attack::DoubleSpend => c[0] = ConsumerMode::DoubleSpender,
        Attack::NegotiationFlood => c[0] = ConsumerMode::Flooder,
        Attack::RoutingOverload => c[0] = ConsumerMode::Overloader,
    }
    (p, c)
}

impl Engine {
    pub fn new(cfg: ScenarioConfig) -> Result<Self, ConfigError> {
        cfg.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let net_rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x6e65_7477_6f72_6b21);
        let distributor = KeyPair::generate(&mut rng);
        let manufacturer = KeyPair::generate(&mut rng);
        let arb_cfg = ArbConfig {
            x: cfg.x_initial,
            offer_limit: cfg.offer_limit,
            load_window: cfg.load_window,
            overload_threshold: cfg.overload_threshold,
        };
        let mut arb = Arb::new(cfg.backbones, arb_cfg).map_err(|e| ConfigError::Invalid(e.to_string()))?;

        let (pmodes, cmodes) = modes(&cfg);
        let mut people = Vec::new();
        for i in 0..cfg.participants() {
            let keys = KeyPair::generate(&mut rng);
            let identity = MeterIdentity::provision(&manufacturer, &mut rng);
            let pool = generate_key_pool(cfg.key_pool_size, &mut rng).expect("pool size validated");
            let produces = i < cfg.producers || i >= cfg.producers + cfg.consumers;
            let consumes = i >= cfg.producers;
            let producer = produces.then(|| Producer {
                mode: pmodes.get(i).copied().unwrap_or(ProducerMode::Honest),
                ask: cfg.ask_price + (i as u64 % 3),
                negotiable: i % 2 == 0,
                genesis_sent: false,
                supply: None,
                supplied: 0,
                talks: BTreeMap::new(),
                agreed: BTreeMap::new(),
                deliveries: BTreeMap::new(),
                offers_seen: BTreeMap::new(),
                declined: 0,
                forged: 0,
            });
            let consumer = consumes.then(|| Consumer {
                mode: cmodes.get(i - cfg.producers).copied().unwrap_or(ConsumerMode::Honest),
                phase: Phase::Idle { ready_at: 0 },
                agreements: 0,
                script_step: 0,
                wait_until: 0,
            });
            people.push(Participant {
                keys,
                endpoint: Endpoint(ENDPOINT_BASE + i as u32),
                entry: i as u32 % cfg.backbones,
                meter: SmartMeter::new(identity, pool),
                coe_requested_at: None,
                receipts_due: Vec::new(),
                producer,
                consumer,
            });
        }

        let miner_keys: Vec<KeyPair> = (0..cfg.miners).map(|_| KeyPair::generate(&mut rng)).collect();
        let ledger = Arc::new(LedgerConfig {
            distributor_ca: distributor.public(),
            manufacturer_ca: manufacturer.public(),
            burn_threshold: cfg.burn_threshold,
            consensus_period: cfg.consensus_period,
            initial_coins: people.iter().map(|p| (p.pk(), cfg.initial_coins)).collect(),
        });
        let miners = miner_keys
            .into_iter()
            .map(|k| MinerState::new(k, ledger.clone(), &mut rng))
            .collect();

        for p in &people {
            arb.join(&JoinMessage::new(&p.meter.identity().keys, p.endpoint))
                .expect("fresh meter key joins its owner");
            if p.producer.is_some() {
                arb.join(&JoinMessage::new(&p.keys, p.endpoint))
                    .expect("fresh account key joins its owner");
            }
        }

        Ok(Self {
            by_account: people.iter().enumerate().map(|(i, p)| (p.pk(), i)).collect(),
            by_endpoint: people.iter().enumerate().map(|(i, p)| (p.endpoint, i)).collect(),
            cfg,
            rng,
            net_rng,
            distributor,
            ledger,
            miners,
            arb,
            people,
            queue: BTreeMap::new(),
            seq: 0,
            now: 0,
            obs: Observations::default(),
        })
    }

    pub fn end_tick(&self) -> Tick {
        self.cfg.ticks
    }

    /// Runs every tick, then drains block and transaction arrivals due at
    /// the end tick so all miners see the same history.
    pub fn run(&mut self) {
        for m in 0..self.miners.len() {
            let at = self.miners[m].next_mine_at();
            self.schedule(at, Event::Wakeup(m));
        }
        for t in 0..self.cfg.ticks {
            self.now = t;
            for m in &mut self.miners {
                m.expire_ctps(t);
            }
            self.schedule(t, Event::TableUpdate);
            self.schedule(t, Event::Act);
            while let Some(entry) = self.queue.first_entry() {
                if entry.key().0 != t {
                    break;
                }
                let ev = entry.remove();
                self.handle(ev);
            }
            self.audit();
        }
        let end = self.cfg.ticks;
        self.now = end;
        for m in &mut self.miners {
            m.expire_ctps(end);
        }
        while let Some(entry) = self.queue.first_entry() {
            if entry.key().0 != end {
                break;
            }
            if let ev @ (Event::TxArrival { .. } | Event::BlockArrival { .. }) = entry.remove() { self.handle(ev) }
        }
        self.queue.clear();
    }

    fn schedule(&mut self, at: Tick, ev: Event) {
        debug_assert!(at >= self.now, "events never go back in time");
        self.queue.insert((at, self.seq), ev);
        self.seq += 1;
    }

    fn lost(&mut self) -> bool {
        self.cfg.loss_rate > 0.0 && self.net_rng.gen_bool(self.cfg.loss_rate)
    }

    fn broadcast_tx(&mut self, tx: Transaction, adversarial: bool) {
        for miner in 0..self.miners.len() {
            if !self.lost() {
                self.schedule(
                    self.now + 1,
                    Event::TxArrival {
                        miner,
                        tx: tx.clone(),
                        adversarial,
                    },
                );
            }
        }
    }

    /// Hands `payload` to the sender's entry backbone for `dest`.
    fn send(&mut self, from: usize, dest: PublicKey, payload: Vec<u8>, anonymized: bool) {
        let p = &self.people[from];
        let env = Envelope {
            origin: p.endpoint,
            dest_pk: dest,
            payload,
            anonymized,
        };
        if let Ok(delivery) = self.arb.route(p.entry, &env, self.now) {
            if !self.lost() {
                self.schedule(self.now + 1, Event::Message(delivery));
            }
        }
    }

    fn handle(&mut self, ev: Event) {
        let now = self.now;
        match ev {
            Event::TxArrival { miner, tx, adversarial } => {
                let id = tx.id();
                let is_ctp = matches!(tx, Transaction::Ctp(_));
                let res = self.miners[miner].submit(tx, now);
                if is_ctp && miner == 0 {
                    self.obs.admissions.insert(id, res.is_ok());
                }
                if let Some(f) = self.obs.forgeries.get_mut(&id) {
                    if res.is_ok() {
                        self.obs.forged_accepted += 1;
                    }
                    if miner == 0 {
                        f.observed = Some(res);
                    }
                } else if res.is_err() {
                    if adversarial {
                        self.obs.ds_rejections += u64::from(is_ctp && miner == 0);
                    } else {
                        self.obs.honest_rejections += 1;
                    }
                }
            }
            Event::BlockArrival { miner, block } => {
                let _ = self.miners[miner].apply_block(block, now);
            }
            Event::Message(d) => {
                if let Some(&i) = self.by_endpoint.get(&d.endpoint) {
                    self.receive(i, d.payload);
                }
            }
            Event::Wakeup(m) => {
                if let Some(block) = self.miners[m].mine_block(now, &mut self.rng) {
                    *self.obs.mined.entry((m, now / self.cfg.consensus_period)).or_default() += 1;
                    for other in (0..self.miners.len()).filter(|&o| o != m) {
                        if !self.lost() {
                            self.schedule(
                                now + 1,
                                Event::BlockArrival {
                                    miner: other,
                                    block: block.clone(),
                                },
                            );
                        }
                    }
                }
                let next = self.miners[m].next_mine_at().max(now + 1);
                self.schedule(next, Event::Wakeup(m));
            }
            Event::Pulse { producer, ctp_id } => self.pulse(producer, ctp_id),
            Event::TableUpdate => {
                if let Some(report) = self.arb.maybe_rebalance(now) {
                    self.obs.rebalances.push(report);
                }
            }
            Event::Act => {
                for i in 0..self.people.len() {
                    self.meter_upkeep(i);
                    if self.people[i].producer.is_some() {
                        self.producer_act(i);
                    }
                    if self.people[i].consumer.is_some() {
                        self.consumer_act(i);
                    }
                }
            }
        }
    }

    fn audit(&mut self) {
        if self.miners.iter().any(|m| !m.funds_violations().is_empty()) {
            self.obs.funds_violation_ticks += 1;
        }
        let first = self.miners[0].admitted_digest();
        if self.miners[1..].iter().any(|m| m.admitted_digest() != first) {
            self.obs.admitted_divergence_ticks += 1;
        }
    }

    // ---- meters ----

    fn meter_upkeep(&mut self, i: usize) {
        let now = self.now;
        let p = &self.people[i];
        if p.meter.coe().is_none() && p.coe_requested_at.is_none_or(|t| now >= t + COE_RETRY) {
            let others: Vec<usize> = (0..self.people.len()).filter(|&j| j != i).collect();
            let vm = *others.choose(&mut self.rng).expect("at least two participants");
            let vm_pk = self.people[vm].meter.identity().public();
            let req = self.people[i]
                .meter
                .request_coe(&vm_pk, &mut self.rng)
                .expect("meter keys convert for encryption");
            self.people[i].coe_requested_at = Some(now);
            self.send(i, vm_pk, req.encode(), false);
        }
        if self.people[i].meter.coe().is_some() && !self.people[i].receipts_due.is_empty() {
            for id in std::mem::take(&mut self.people[i].receipts_due) {
                self.issue_receipt(i, id);
            }
        }
    }

    fn issue_receipt(&mut self, i: usize, ctp_id: HashDigest) {
        match self.people[i].meter.generate_erc(&ctp_id, self.now) {
            Ok(erc) => self.broadcast_tx(erc.into(), false),
            Err(MeterError::NoCoe) => self.people[i].receipts_due.push(ctp_id),
            Err(MeterError::PoolExhausted) => {
                let pool = generate_key_pool(self.cfg.key_pool_size, &mut self.rng).expect("pool size validated");
                let p = &mut self.people[i];
                p.meter.rotate_pool(pool);
                p.coe_requested_at = None;
                p.receipts_due.push(ctp_id);
                self.obs.pool_rotations += 1;
            }
            Err(MeterError::Expired { .. }) => self.obs.late_receipts += 1,
            Err(_) => {}
        }
    }

    fn receive(&mut self, i: usize, payload: Vec<u8>) {
        match payload.first() {
            Some(&TAG_VERIFICATION_REQUEST) => {
                let Ok(req) = VerificationRequest::decode(&payload) else { return };
                if let Ok(coe) = vm_process_request(self.people[i].meter.identity(), &req, &self.ledger.manufacturer_ca)
                {
                    self.obs.coe_granted += 1;
                    self.send(i, req.requester_mpk, encode_coe_grant(&coe), false);
                }
            }
            Some(&TAG_COE_GRANT) => {
                let Ok(coe) = decode_coe_grant(&payload) else { return };
                if self.people[i].meter.install_coe(coe, &self.ledger.manufacturer_ca).is_ok() {
                    self.obs.coe_installed += 1;
                }
            }
            _ => match Transaction::decode(&payload) {
                Ok(Transaction::Negotiation(msg)) if msg.signature_valid() => {
                    let own = self.people[i].pk();
                    if msg.dest_pk == own && self.people[i].producer.is_some() {
                        self.producer_negotiate(i, msg);
                    } else if self.session_of(i) == Some(msg.dest_pk) {
                        self.consumer_negotiate(i, msg);
                    }
                }
                Ok(Transaction::Ctp(ctp)) if self.people[i].producer.is_some() => self.on_ctp_notice(i, ctp),
                _ => {}
            },
        }
    }

    // ---- producers ----

    fn free_energy(&self, miner: usize, pk: &PublicKey) -> Kwh {
        let m = &self.miners[miner];
        m.state().energy_balance(pk).saturating_sub(m.ctp_db().pending_energy(pk))
    }

    fn producer_act(&mut self, i: usize) {
        let now = self.now;
        let pk = self.people[i].pk();
        let prod = self.people[i].producer.as_ref().unwrap();
        if !prod.genesis_sent {
            let cert = Certificate::issue(&self.distributor, pk);
            let tx = GenesisTx::with_certificate(&cert, &self.people[i].keys);
            self.people[i].producer.as_mut().unwrap().genesis_sent = true;
            self.broadcast_tx(tx.into(), false);
            return;
        }
        let Some(last) = self.miners[0].state().last_tx_id(&pk) else { return };
        let (ask, negotiable) = (prod.ask, prod.negotiable);
        if let Some((tx, sent)) = prod.supply.clone() {
            if tx.t_id == last {
                let p = self.people[i].producer.as_mut().unwrap();
                p.supplied += tx.energy_amount;
                p.supply = None;
            } else if now >= sent + 4 * self.cfg.consensus_period {
                self.people[i].producer.as_mut().unwrap().supply = Some((tx.clone(), now));
                self.broadcast_tx(tx.into(), false);
            }
        } else if self.free_energy(0, &pk) < 2 * self.cfg.contract_kwh {
            let tx = SupplyEnergyDraft {
                p_t_id: last,
                energy_amount: self.cfg.supply_kwh,
                energy_price: ask,
                negotiable,
            }
            .sign(&self.people[i].keys);
            self.people[i].producer.as_mut().unwrap().supply = Some((tx.clone(), now));
            self.broadcast_tx(tx.into(), false);
        }
        if self.people[i].producer.as_ref().unwrap().mode == ProducerMode::Forger {
            self.forge(i);
        }
    }

    fn producer_negotiate(&mut self, i: usize, msg: NegotiationMsg) {
        let limit = self.cfg.offer_limit;
        let keys = self.people[i].keys.clone();
        let prod = self.people[i].producer.as_mut().unwrap();
        *prod.offers_seen.entry(msg.sender_pk).or_default() += 1;
        let reserve = if prod.negotiable { prod.ask * 9 / 10 } else { prod.ask };
        match msg.status {
            NegotiationStatus::Counter => {
                let talk = prod.talks.entry(msg.sender_pk).or_insert(Talk {
                    energy: msg.energy_amount,
                    nonce: msg.nonce,
                });
                if talk.energy != msg.energy_amount || talk.nonce != msg.nonce || msg.round >= limit {
                    return;
                }
                let (status, price) = if msg.price >= reserve {
                    (NegotiationStatus::Accept, msg.price)
                } else {
                    (NegotiationStatus::Counter, (prod.ask + reserve) / 2)
                };
                if status == NegotiationStatus::Accept {
                    prod.talks.remove(&msg.sender_pk);
                    if let Ok(terms) = ContractTerms::new(msg.energy_amount, price, msg.nonce) {
                        let hash = compute_contract_hash(&terms).expect("terms are consistent");
                        prod.agreed.insert(hash, terms);
                    }
                }
                let reply = NegotiationDraft {
                    dest_pk: msg.sender_pk,
                    price,
                    status,
                    round: msg.round + 1,
                    energy_amount: msg.energy_amount,
                    nonce: msg.nonce,
                }
                .sign(&keys)
                .expect("round is positive");
                self.obs.negotiation_messages += 1;
                self.send(i, msg.sender_pk, Transaction::Negotiation(reply).encode(), false);
            }
            NegotiationStatus::Accept => {
                let Some(talk) = prod.talks.remove(&msg.sender_pk) else { return };
                if talk.energy == msg.energy_amount && talk.nonce == msg.nonce && msg.price >= reserve {
                    if let Ok(terms) = ContractTerms::new(msg.energy_amount, msg.price, msg.nonce) {
                        let hash = compute_contract_hash(&terms).expect("terms are consistent");
                        prod.agreed.insert(hash, terms);
                    }
                }
            }
        }
    }

    /// Delivery starts only for a CTP the reference miner holds as pending
    /// whose commitment matches agreed terms.
    fn on_ctp_notice(&mut self, i: usize, notice: crate::tx::CtpTx) {
        let pk = self.people[i].pk();
        let pending = self.miners[0].ctp_db().get(&notice.t_id).map(|e| e.ctp.clone());
        let prod = self.people[i].producer.as_mut().unwrap();
        let Some(ctp) = pending.filter(|c| *c == notice && c.payee_pk == pk) else {
            prod.declined += 1;
            return;
        };
        match prod.agreed.get(&ctp.contract_hash) {
            Some(t) if t.total_price == ctp.price && t.energy_amount == ctp.energy_amount => {
                prod.agreed.remove(&ctp.contract_hash);
            }
            _ => {
                prod.declined += 1;
                return;
            }
        }
        if prod.mode != ProducerMode::Honest {
            return;
        }
        let Some(&consumer) = self.by_account.get(&ctp.pk) else { return };
        prod.deliveries.insert(
            ctp.t_id,
            Delivering {
                consumer,
                remaining: ctp.energy_amount,
                expiry: ctp.expiry_time,
            },
        );
        self.schedule(
            self.now + 1,
            Event::Pulse {
                producer: i,
                ctp_id: ctp.t_id,
            },
        );
    }

    fn pulse(&mut self, producer: usize, ctp_id: HashDigest) {
        let now = self.now;
        let rate = self.cfg.delivery_rate;
        let prod = self.people[producer].producer.as_mut().unwrap();
        let Some(d) = prod.deliveries.get_mut(&ctp_id) else { return };
        if now >= d.expiry {
            prod.deliveries.remove(&ctp_id);
            return;
        }
        let amount = rate.min(d.remaining);
        d.remaining -= amount;
        let consumer = d.consumer;
        let done = d.remaining == 0;
        if done {
            prod.deliveries.remove(&ctp_id);
        }
        self.obs.energy_delivered += amount;
        let _ = self.people[consumer].meter.record_delivery(&ctp_id, amount);
        if self.people[consumer].meter.is_complete(&ctp_id) {
            self.issue_receipt(consumer, ctp_id);
        }
        if !done {
            self.schedule(now + 1, Event::Pulse { producer, ctp_id });
        }
    }

    /// Latest genuine receipt on the reference chain.
    fn observed_receipt(&self) -> Option<ErcTx> {
        self.miners[0].chain().best_chain().iter().rev().find_map(|b| {
            b.txs.iter().rev().find_map(|tx| match tx {
                Transaction::Erc(erc) if !self.obs.forgeries.contains_key(&erc.t_id) => Some(erc.clone()),
                _ => None,
            })
        })
    }

    /// Claims payment for an undelivered CTP with a copied CoE. Alternates a
    /// fresh key (not in the tree) and a revealed leaf key it cannot sign for.
    fn forge(&mut self, i: usize) {
        let now = self.now;
        let pk = self.people[i].pk();
        if self.people[i].producer.as_ref().unwrap().forged >= self.cfg.forgery_attempts {
            return;
        }
        let Some(sample) = self.observed_receipt() else { return };
        let target = self.miners[0]
            .ctp_db()
            .iter()
            .map(|(_, e)| &e.ctp)
            .find(|c| c.payee_pk == pk && c.expiry_time > now + 2)
            .cloned();
        let Some(ctp) = target else { return };
        let draft = ErcDraft {
            time_stamp: now,
            ctp_id: ctp.t_id,
            price: ctp.price,
            coe: sample.coe.clone(),
            merkle_hashes: sample.merkle_hashes.clone(),
        };
        let prod = self.people[i].producer.as_mut().unwrap();
        let (erc, expected) = if prod.forged.is_multiple_of(2) {
            (draft.sign(&KeyPair::generate(&mut self.rng)), ErcStep::KeyInTree)
        } else {
            (draft.sign_as(sample.pk, &self.people[i].keys), ErcStep::SignedByKey)
        };
        self.people[i].producer.as_mut().unwrap().forged += 1;
        self.obs.forgeries.insert(
            erc.t_id,
            Forgery {
                expected,
                observed: None,
            },
        );
        self.broadcast_tx(erc.into(), true);
    }

    // ---- consumers ----

    fn session_of(&self, i: usize) -> Option<PublicKey> {
        match &self.people[i].consumer.as_ref()?.phase {
            Phase::Negotiating { session, .. } => Some(session.public()),
            _ => None,
        }
    }

    fn set_phase(&mut self, i: usize, phase: Phase) {
        self.people[i].consumer.as_mut().unwrap().phase = phase;
    }

    fn idle_after_interval(&mut self, i: usize) {
        let ready_at = self.now + self.cfg.trade_interval;
        self.set_phase(i, Phase::Idle { ready_at });
    }

    fn consumer_act(&mut self, i: usize) {
        let now = self.now;
        let c = self.people[i].consumer.as_ref().unwrap();
        match c.mode {
            ConsumerMode::DoubleSpender => return self.double_spend(i),
            ConsumerMode::Flooder => return self.flood(i),
            ConsumerMode::Overloader => return self.overload(i),
            _ => {}
        }
        let pk = self.people[i].pk();
        match &c.phase {
            Phase::Idle { ready_at } => {
                if now >= *ready_at && now + self.cfg.ctp_default_ttl + 2 <= self.cfg.ticks {
                    self.start_trade(i);
                }
            }
            Phase::Negotiating { started, .. } => {
                if now > started + 2 * Tick::from(self.cfg.offer_limit) + 4 {
                    self.idle_after_interval(i);
                }
            }
            Phase::Waiting {
                ctp_id,
                expiry,
                pre_available,
            } => {
                if self.miners[0].state().is_settled(ctp_id) {
                    self.idle_after_interval(i);
                } else if now >= *expiry {
                    let pair = (*pre_available, self.miners[0].available_coins(&pk));
                    self.obs.refunds.push(pair);
                    self.idle_after_interval(i);
                }
            }
            Phase::Silent => {}
        }
    }

    /// Supply offers on the reference chain from producers with enough
    /// uncommitted energy: `(pk, ask, negotiable)`.
    fn offers(&self, exclude: usize) -> Vec<(PublicKey, Coins, bool)> {
        let mut latest = BTreeMap::new();
        for b in self.miners[0].chain().best_chain() {
            for tx in &b.txs {
                if let Transaction::SupplyEnergy(s) = tx {
                    latest.insert(s.pk, (s.energy_price, s.negotiable));
                }
            }
        }
        let own = self.people[exclude].pk();
        latest
            .into_iter()
            .filter(|(pk, _)| *pk != own && self.free_energy(0, pk) >= self.cfg.contract_kwh)
            .map(|(pk, (ask, neg))| (pk, ask, neg))
            .collect()
    }

    fn start_trade(&mut self, i: usize) {
        let now = self.now;
        let offers = self.offers(i);
        let Some(&(producer, ask, negotiable)) = offers.choose(&mut self.rng) else {
            self.set_phase(i, Phase::Idle { ready_at: now + 5 });
            return;
        };
        let energy = self.cfg.contract_kwh;
        if self.miners[0].available_coins(&self.people[i].pk()) < energy * ask {
            return self.idle_after_interval(i);
        }
        let session = KeyPair::generate(&mut self.rng);
        if self.arb.join(&JoinMessage::new(&session, self.people[i].endpoint)).is_err() {
            return self.idle_after_interval(i);
        }
        let nonce: [u8; 32] = self.rng.gen();
        let bid = if negotiable { (ask * 8 / 10).max(1) } else { ask };
        let offer = NegotiationDraft {
            dest_pk: producer,
            price: bid,
            status: NegotiationStatus::Counter,
            round: 1,
            energy_amount: energy,
            nonce,
        }
        .sign(&session)
        .expect("round is positive");
        self.obs.negotiation_messages += 1;
        self.send(i, producer, Transaction::Negotiation(offer).encode(), true);
        self.set_phase(
            i,
            Phase::Negotiating {
                session,
                producer,
                ask,
                energy,
                nonce,
                started: now,
            },
        );
    }

    fn consumer_negotiate(&mut self, i: usize, msg: NegotiationMsg) {
        let c = self.people[i].consumer.as_ref().unwrap();
        let Phase::Negotiating {
            session,
            producer,
            ask,
            energy,
            nonce,
            ..
        } = &c.phase
        else {
            return;
        };
        if msg.sender_pk != *producer || msg.nonce != *nonce || msg.energy_amount != *energy {
            return;
        }
        match msg.status {
            NegotiationStatus::Accept => self.agree(i, msg.price),
            NegotiationStatus::Counter if msg.price <= *ask && msg.round < self.cfg.offer_limit => {
                let reply = NegotiationDraft {
                    dest_pk: *producer,
                    price: msg.price,
                    status: NegotiationStatus::Accept,
                    round: msg.round + 1,
                    energy_amount: *energy,
                    nonce: *nonce,
                }
                .sign(session)
                .expect("round is positive");
                let producer = *producer;
                self.obs.negotiation_messages += 1;
                self.send(i, producer, Transaction::Negotiation(reply).encode(), true);
                self.agree(i, msg.price);
            }
            NegotiationStatus::Counter => self.idle_after_interval(i),
        }
    }

    /// Commits to agreed terms: CTP to every miner and to the producer.
    fn agree(&mut self, i: usize, unit_price: Coins) {
        let now = self.now;
        let c = self.people[i].consumer.as_mut().unwrap();
        let Phase::Negotiating {
            producer,
            energy,
            nonce,
            ..
        } = c.phase
        else {
            return;
        };
        c.agreements += 1;
        let mode = c.mode;
        let Ok(terms) = ContractTerms::new(energy, unit_price, nonce) else {
            return self.idle_after_interval(i);
        };
        let pk = self.people[i].pk();
        let pre_available = self.miners[0].available_coins(&pk);
        if mode == ConsumerMode::NoCtp || pre_available < terms.total_price {
            return self.idle_after_interval(i);
        }
        let mut committed = terms;
        if mode == ConsumerMode::BadHash {
            committed.nonce[0] ^= 1;
        }
        let ctp = CtpDraft {
            time_stamp: now,
            expiry_time: now + self.cfg.ctp_default_ttl,
            price: terms.total_price,
            contract_hash: compute_contract_hash(&committed).expect("terms are consistent"),
            payee_pk: producer,
            energy_amount: energy,
        }
        .sign(&self.people[i].keys)
        .expect("expiry follows timestamp");
        let _ = self.people[i].meter.expect_delivery(&ctp, &terms);
        self.broadcast_tx(ctp.clone().into(), false);
        self.send(i, producer, Transaction::Ctp(ctp.clone()).encode(), true);

        let producer_idx = self.by_account[&producer];
        let honest = self.people[i].is_honest() && self.people[producer_idx].is_honest();
        self.obs.contracts.insert(
            ctp.t_id,
            ContractRecord {
                consumer: i,
                producer: producer_idx,
                terms,
                honest,
            },
        );
        if mode == ConsumerMode::SilentAfterCtp {
            self.obs.silent_ctps.push(ctp.t_id);
            self.set_phase(i, Phase::Silent);
        } else {
            self.set_phase(
                i,
                Phase::Waiting {
                    ctp_id: ctp.t_id,
                    expiry: ctp.expiry_time,
                    pre_available,
                },
            );
        }
    }

    // ---- adversaries ----

    /// Scripted 60/50 and 60/40 (relative to the balance) batches, then
    /// random bursts of CTPs whose prices together may exceed the balance.
    fn double_spend(&mut self, i: usize) {
        let now = self.now;
        let payee = self.people[0].pk();
        if (0..self.miners.len()).any(|m| self.free_energy(m, &payee) < 16) {
            return;
        }
        let pk = self.people[i].pk();
        let balance = self.miners[0].state().coin_balance(&pk);
        let available = self.miners[0].available_coins(&pk);
        let c = self.people[i].consumer.as_ref().unwrap();
        let (step, wait_until) = (c.script_step, c.wait_until);
        if now < wait_until {
            return;
        }
        let (prices, ttl): (Vec<Coins>, Tick) = match step {
            0 | 1 if available == balance && balance > 0 => {
                let second = if step == 0 { balance * 5 / 10 } else { balance * 4 / 10 };
                (vec![balance * 6 / 10, second], 20)
            }
            0 | 1 => return,
            _ if self.rng.gen_ratio(1, 8) => {
                let k = self.rng.gen_range(2..=4);
                let top = balance.max(1);
                let prices = (0..k).map(|_| self.rng.gen_range(1..=top)).collect();
                (prices, self.rng.gen_range(5..=40))
            }
            _ => return,
        };
        if now + ttl >= self.cfg.ticks {
            return;
        }
        let mut batch = Vec::new();
        for price in prices {
            let ctp = CtpDraft {
                time_stamp: now,
                expiry_time: now + ttl,
                price,
                contract_hash: HashDigest::from_bytes(self.rng.gen()),
                payee_pk: payee,
                energy_amount: 1,
            }
            .sign(&self.people[i].keys)
            .expect("expiry follows timestamp");
            batch.push(ctp.t_id);
            self.broadcast_tx(ctp.into(), true);
        }
        if step < 2 {
            self.obs.ds_batches.push(batch);
        }
        let c = self.people[i].consumer.as_mut().unwrap();
        c.script_step += 1;
        c.wait_until = if step < 2 { now + ttl + 1 } else { now + 1 };
    }

    /// One burst of offers to the first producer from a single session.
    fn flood(&mut self, i: usize) {
        if self.obs.flooder_session.is_some() {
            return;
        }
        let target = self.people[0].pk();
        if !self.offers(i).iter().any(|(pk, _, _)| *pk == target) {
            return;
        }
        let session = KeyPair::generate(&mut self.rng);
        if self.arb.join(&JoinMessage::new(&session, self.people[i].endpoint)).is_err() {
            return;
        }
        self.obs.flooder_session = Some(session.public());
        let nonce: [u8; 32] = self.rng.gen();
        for k in 0..self.cfg.flood_offers {
            let offer = NegotiationDraft {
                dest_pk: target,
                price: self.rng.gen_range(1..=self.cfg.ask_price / 2 + 1),
                status: NegotiationStatus::Counter,
                round: k % (2 * self.cfg.offer_limit) + 1,
                energy_amount: self.cfg.contract_kwh,
                nonce,
            }
            .sign(&session)
            .expect("round is positive");
            self.obs.flood_sent += 1;
            self.send(i, target, Transaction::Negotiation(offer).encode(), true);
        }
    }

    /// Junk traffic to uniformly random destinations during the burst.
    fn overload(&mut self, i: usize) {
        let start = self.cfg.ticks / 4;
        if !(start..start + self.cfg.overload_burst).contains(&self.now) {
            return;
        }
        for _ in 0..self.cfg.overload_rate {
            let dest = PublicKey::from_bytes(self.rng.gen());
            self.obs.overload_sent += 1;
            self.send(i, dest, vec![0xEE], true);
        }
    }
}
