// Copyright 2026 The SPB Authors
// SPDX-License-Identifier: Apache-2.0

use std::sync::Arc;

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::crypto::{Certificate, KeyPair, MerkleTree};
use crate::tx::{Coe, CtpDraft, ErcDraft, GenesisTx, SupplyEnergyDraft, Transaction};

const PERIOD: Tick = 10;
const BALANCE: Coins = 100;

struct World {
    rng: ChaCha8Rng,
    distributor: KeyPair,
    consumer: KeyPair,
    producer: KeyPair,
    coe: Coe,
    leaves: Vec<KeyPair>,
    tree: MerkleTree,
    config: Arc<LedgerConfig>,
}

fn world(seed: u64) -> World {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let distributor = KeyPair::generate(&mut rng);
    let manufacturer = KeyPair::generate(&mut rng);
    let vm = KeyPair::generate(&mut rng);
    let consumer = KeyPair::generate(&mut rng);
    let producer = KeyPair::generate(&mut rng);
    let leaves: Vec<_> = (0..4).map(|_| KeyPair::generate(&mut rng)).collect();
    let tree = MerkleTree::build(&leaves.iter().map(|k| k.public()).collect::<Vec<_>>()).unwrap();
    let coe = Coe::issue(&vm, Certificate::issue(&manufacturer, vm.public()), tree.root());
    let config = Arc::new(LedgerConfig {
        distributor_ca: distributor.public(),
        manufacturer_ca: manufacturer.public(),
        burn_threshold: 10,
        consensus_period: PERIOD,
        initial_coins: [(consumer.public(), BALANCE)].into_iter().collect(),
    });
    World {
        rng,
        distributor,
        consumer,
        producer,
        coe,
        leaves,
        tree,
        config,
    }
}

impl World {
    fn miner(&mut self) -> MinerState {
        let keys = KeyPair::generate(&mut self.rng);
        MinerState::new(keys, self.config.clone(), &mut self.rng)
    }

    fn genesis(&self, keys: &KeyPair) -> GenesisTx {
        GenesisTx::with_certificate(&Certificate::issue(&self.distributor, keys.public()), keys)
    }

    fn ctp(&self, price: Coins, energy: Kwh, time_stamp: Tick, expiry_time: Tick) -> CtpTx {
        CtpDraft {
            time_stamp,
            expiry_time,
            price,
            contract_hash: hash_bytes(&[price as u8, energy as u8, time_stamp as u8, expiry_time as u8]),
            payee_pk: self.producer.public(),
            energy_amount: energy,
        }
        .sign(&self.consumer)
        .unwrap()
    }

    fn erc(&self, ctp: &CtpTx, leaf: usize) -> ErcTx {
        ErcDraft {
            time_stamp: ctp.time_stamp + 1,
            ctp_id: ctp.t_id,
            price: ctp.price,
            coe: self.coe.clone(),
            merkle_hashes: self.tree.prove(leaf).unwrap(),
        }
        .sign(&self.leaves[leaf])
    }

    /// A miner whose tip already holds the producer's energy account with `energy` kWh.
    fn bootstrapped(&mut self, energy: Kwh) -> (MinerState, Tick) {
        let mut miner = self.miner();
        let genesis = self.genesis(&self.producer);
        let supply = SupplyEnergyDraft {
            p_t_id: genesis.id(),
            energy_amount: energy,
            energy_price: 1,
            negotiable: true,
        }
        .sign(&self.producer);
        miner.submit_genesis(genesis).unwrap();
        miner.submit_supply_energy(supply).unwrap();
        let (_, at) = mine(&mut miner, 0, &mut self.rng);
        (miner, at)
    }
}

/// Ticks forward from `from` until the miner's schedule yields a block.
fn mine(miner: &mut MinerState, from: Tick, rng: &mut ChaCha8Rng) -> (Block, Tick) {
    for t in from..from + 3 * PERIOD {
        miner.expire_ctps(t);
        if let Some(b) = miner.mine_block(t, rng) {
            return (b, t);
        }
    }
    panic!("miner never scheduled a block");
}

#[test]
fn config_round_trip_and_zero_period() {
    let w = world(1);
    let bytes = w.config.encode();
    assert_eq!(LedgerConfig::decode(&bytes).unwrap(), *w.config);
    let mut zero = (*w.config).clone();
    zero.consensus_period = 0;
    assert!(LedgerConfig::decode(&zero.encode()).is_err());
}

#[test]
fn genesis_by_certificate_and_burn() {
    let mut w = world(2);
    let mut miner = w.miner();
    let g = w.genesis(&w.producer);
    miner.submit_genesis(g.clone()).unwrap();
    assert_eq!(miner.submit_genesis(g.clone()), Err(Rejection::AccountExists));

    let stranger = KeyPair::generate(&mut w.rng);
    let foreign = Certificate::issue(&stranger, w.consumer.public());
    assert_eq!(
        miner.submit_genesis(GenesisTx::with_certificate(&foreign, &w.consumer)),
        Err(Rejection::BadEvidence)
    );
    assert_eq!(
        miner.submit_genesis(GenesisTx::coin_burn(9, &w.consumer)),
        Err(Rejection::BadEvidence)
    );
    miner.submit_genesis(GenesisTx::coin_burn(10, &w.consumer)).unwrap();

    let (block, _) = mine(&mut miner, 0, &mut w.rng);
    assert_eq!(block.txs.len(), 2);
    assert_eq!(miner.state().last_tx_id(&w.producer.public()), Some(g.id()));
    assert_eq!(miner.submit_genesis(g), Err(Rejection::AccountExists));
}

#[test]
fn supply_energy_chains_previous_id() {
    let mut w = world(3);
    let mut miner = w.miner();
    let g = w.genesis(&w.producer);
    let draft = |p_t_id, energy_amount| SupplyEnergyDraft {
        p_t_id,
        energy_amount,
        energy_price: 2,
        negotiable: false,
    };
    assert_eq!(
        miner.submit_supply_energy(draft(g.id(), 5).sign(&w.producer)),
        Err(Rejection::UnknownAccount)
    );
    miner.submit_genesis(g.clone()).unwrap();
    let s1 = draft(g.id(), 5).sign(&w.producer);
    miner.submit_supply_energy(s1.clone()).unwrap();
    assert_eq!(
        miner.submit_supply_energy(draft(g.id(), 7).sign(&w.producer)),
        Err(Rejection::ChainBreak)
    );
    miner.submit_supply_energy(draft(s1.t_id, 7).sign(&w.producer)).unwrap();
    mine(&mut miner, 0, &mut w.rng);
    assert_eq!(miner.state().energy_balance(&w.producer.public()), 12);
}

#[test]
fn double_spend_rule_tracks_pending_commitments() {
    let mut w = world(4);
    let (mut miner, t) = w.bootstrapped(1000);
    miner.submit_ctp(w.ctp(60, 1, t, t + 100), t).unwrap();
    assert_eq!(
        miner.submit_ctp(w.ctp(50, 1, t, t + 100), t),
        Err(Rejection::WouldDoubleSpend {
            available: 40,
            price: 50
        })
    );
    miner.submit_ctp(w.ctp(40, 1, t, t + 100), t).unwrap();
    assert_eq!(miner.available_coins(&w.consumer.public()), 0);
    assert!(miner.funds_violations().is_empty());
    assert_eq!(miner.stats().ctps_rejected, 1);
}

#[test]
fn ctp_must_fit_producer_energy() {
    let mut w = world(5);
    let (mut miner, t) = w.bootstrapped(10);
    miner.submit_ctp(w.ctp(10, 6, t, t + 100), t).unwrap();
    assert_eq!(
        miner.submit_ctp(w.ctp(10, 5, t, t + 100), t),
        Err(Rejection::InsufficientEnergy {
            available: 4,
            requested: 5
        })
    );
    let mut other = w.ctp(10, 1, t, t + 100);
    other.payee_pk = w.consumer.public();
    assert!(matches!(miner.submit_ctp(other, t), Err(Rejection::Malformed(_))));
}

#[test]
fn expiry_boundary_is_exclusive() {
    let mut w = world(6);
    let (mut miner, t) = w.bootstrapped(100);
    let expiry = t + 40;
    let ctp = w.ctp(30, 1, t, expiry);
    assert_eq!(miner.submit_ctp(ctp.clone(), expiry), Err(Rejection::Stale));
    miner.submit_ctp(ctp.clone(), expiry - 1).unwrap();
    assert!(miner.expire_ctps(expiry - 1).is_empty());
    assert_eq!(miner.available_coins(&w.consumer.public()), 70);
    assert_eq!(miner.expire_ctps(expiry), vec![ctp.t_id]);
    assert!(miner.expire_ctps(expiry).is_empty());
    assert_eq!(miner.available_coins(&w.consumer.public()), BALANCE);
    assert_eq!(miner.submit_ctp(ctp, expiry - 1), Err(Rejection::Duplicate));
}

#[test]
fn erc_checks_fail_at_the_expected_step() {
    let mut w = world(7);
    let (mut miner, t) = w.bootstrapped(100);
    let ctp = w.ctp(25, 3, t, t + 100);
    let unknown = w.erc(&ctp, 0);
    assert_eq!(miner.validate_erc(&unknown), Err(Rejection::InvalidErc(ErcStep::CtpPending)));
    miner.submit_ctp(ctp.clone(), t).unwrap();

    let mut wrong_price = w.erc(&ctp, 0);
    wrong_price.price += 1;
    assert_eq!(miner.validate_erc(&wrong_price), Err(Rejection::InvalidErc(ErcStep::PriceMatch)));

    let mut bad_coe = w.erc(&ctp, 1);
    bad_coe.coe.root = hash_bytes(b"other");
    assert_eq!(miner.validate_erc(&bad_coe), Err(Rejection::InvalidErc(ErcStep::VerifierCertified)));

    let outsider = KeyPair::generate(&mut w.rng);
    let not_leaf = ErcDraft {
        time_stamp: t,
        ctp_id: ctp.t_id,
        price: ctp.price,
        coe: w.coe.clone(),
        merkle_hashes: w.tree.prove(2).unwrap(),
    }
    .sign(&outsider);
    assert_eq!(miner.validate_erc(&not_leaf), Err(Rejection::InvalidErc(ErcStep::KeyInTree)));

    let stolen = ErcDraft {
        time_stamp: t,
        ctp_id: ctp.t_id,
        price: ctp.price,
        coe: w.coe.clone(),
        merkle_hashes: w.tree.prove(2).unwrap(),
    }
    .sign_as(w.leaves[2].public(), &outsider);
    assert_eq!(miner.validate_erc(&stolen), Err(Rejection::InvalidErc(ErcStep::SignedByKey)));

    miner.validate_erc(&w.erc(&ctp, 3)).unwrap();
}

#[test]
fn settlement_moves_price_and_energy() {
    let mut w = world(8);
    let (mut miner, t) = w.bootstrapped(50);
    let ctp = w.ctp(30, 20, t, t + 100);
    miner.submit_ctp(ctp.clone(), t).unwrap();
    let erc = w.erc(&ctp, 0);
    miner.submit_erc(erc.clone()).unwrap();
    assert_eq!(miner.submit_erc(erc.clone()), Err(Rejection::Duplicate));
    let (block, _) = mine(&mut miner, t + 1, &mut w.rng);
    assert_eq!(block.txs, vec![Transaction::Erc(erc.clone())]);

    let s = miner.state();
    assert_eq!(s.coin_balance(&w.consumer.public()), 70);
    assert_eq!(s.coin_balance(&w.producer.public()), 30);
    assert_eq!(s.energy_balance(&w.producer.public()), 30);
    assert_eq!(s.total_coins(), BALANCE as u128);
    assert!(miner.ctp_db().is_empty());
    assert_eq!(miner.stats().ctps_settled, 1);
    assert_eq!(
        miner.submit_erc(erc),
        Err(Rejection::InvalidErc(ErcStep::CtpPending)),
        "settled CTP leaves the database"
    );
}

#[test]
fn settle_refuses_replay_and_shortfalls() {
    let mut w = world(9);
    let (miner, t) = w.bootstrapped(5);
    let mut state = miner.state().clone();
    let ctp = w.ctp(30, 5, t, t + 10);
    let erc = w.erc(&ctp, 0);
    state.settle(&erc, &ctp, 2).unwrap();
    assert_eq!(state.settle(&erc, &ctp, 3), Err(Rejection::AlreadySettled));
    let big = w.ctp(30, 1, t, t + 11);
    assert!(matches!(
        state.settle(&w.erc(&big, 0), &big, 3),
        Err(Rejection::InsufficientEnergy { .. })
    ));
    let rich = w.ctp(71, 0, t, t + 12);
    assert_eq!(state.settle(&w.erc(&rich, 0), &rich, 3), Err(Rejection::InsufficientFunds));
}

#[test]
fn conservation_over_random_ctps() {
    let mut w = world(10);
    let (mut miner, start) = w.bootstrapped(10_000);
    let mut now = start;
    let mut pending_ercs = Vec::new();
    for i in 0..20 {
        now += w.rng.gen_range(1..4);
        miner.expire_ctps(now);
        let (price, ttl) = (w.rng.gen_range(1..=15), w.rng.gen_range(1..30));
        let ctp = w.ctp(price, 1, now, now + ttl);
        if miner.submit_ctp(ctp.clone(), now).is_ok() && i % 3 == 0 {
            pending_ercs.push(ctp);
        }
        if let Some(ctp) = pending_ercs.pop() {
            let _ = miner.submit_erc(w.erc(&ctp, i % 4));
        }
        let _ = miner.mine_block(now, &mut w.rng);
        assert!(miner.funds_violations().is_empty());
        let st = miner.stats();
        assert_eq!(
            st.ctps_accepted,
            st.ctps_expired + st.ctps_settled + miner.ctp_db().len() as u64
        );
        assert_eq!(miner.state().total_coins(), BALANCE as u128);
    }
    assert!(miner.stats().ctps_accepted > 0);
}

#[test]
fn one_block_per_miner_per_period() {
    let mut w = world(11);
    let mut miner = w.miner();
    let (first, t) = mine(&mut miner, 0, &mut w.rng);
    assert!(first.txs.is_empty(), "heartbeat block");
    assert_eq!(first.height, 1);
    for u in t..(t / PERIOD + 1) * PERIOD {
        assert!(miner.mine_block(u, &mut w.rng).is_none());
    }
    assert!(miner.next_mine_at() >= (t / PERIOD + 1) * PERIOD);
    assert!(miner.next_mine_at() < (t / PERIOD + 2) * PERIOD);

    let keys = miner_keys(&mut w);
    let mut peer = MinerState::new(keys.clone(), w.config.clone(), &mut w.rng);
    let a = Block::new_signed(1, w.config.anchor(), first.ctp_hash, 1, vec![], &keys);
    peer.apply_block(a.clone(), 5).unwrap();
    let b = Block::new_signed(2, a.hash(), first.ctp_hash, 2, vec![], &keys);
    assert_eq!(peer.apply_block(b, 5), Err(BlockRejection::PeriodQuotaExceeded(0)));
    let c = Block::new_signed(2, a.hash(), first.ctp_hash, 11, vec![], &keys);
    assert_eq!(peer.apply_block(c.clone(), 10), Err(BlockRejection::BadTimestamp));
    peer.apply_block(c, 11).unwrap();
    assert_eq!(peer.chain().height(), 2);
}

fn miner_keys(w: &mut World) -> KeyPair {
    KeyPair::generate(&mut w.rng)
}

#[test]
fn malformed_blocks_are_rejected() {
    let mut w = world(12);
    let (mut miner, t) = w.bootstrapped(40);
    let ctp = w.ctp(10, 1, t, t + 100);
    miner.submit_ctp(ctp.clone(), t).unwrap();
    let keys = miner_keys(&mut w);
    let tip = miner.chain().tip_hash();
    let h = miner.chain().height();
    let ts = t + PERIOD;

    let mut tampered = Block::new_signed(h + 1, tip, HashDigest::ZERO, ts, vec![], &keys);
    tampered.timestamp += 1;
    assert_eq!(miner.apply_block(tampered, ts + 1), Err(BlockRejection::BadMinerSignature));

    let orphan = Block::new_signed(h + 1, hash_bytes(b"x"), HashDigest::ZERO, ts, vec![], &keys);
    assert_eq!(miner.apply_block(orphan, ts), Err(BlockRejection::UnknownParent));

    let skip = Block::new_signed(h + 2, tip, HashDigest::ZERO, ts, vec![], &keys);
    assert!(matches!(miner.apply_block(skip, ts), Err(BlockRejection::BadHeight { .. })));

    let with_ctp = Block::new_signed(h + 1, tip, HashDigest::ZERO, ts, vec![ctp.clone().into()], &keys);
    assert!(matches!(
        miner.apply_block(with_ctp, ts),
        Err(BlockRejection::InvalidTransaction {
            index: 0,
            reason: Rejection::NotMineable(_)
        })
    ));

    let mut forged = w.erc(&ctp, 0);
    forged.price = 99;
    let bad_erc = Block::new_signed(h + 1, tip, HashDigest::ZERO, ts, vec![forged.into()], &keys);
    assert!(matches!(
        miner.apply_block(bad_erc, ts),
        Err(BlockRejection::InvalidTransaction {
            reason: Rejection::InvalidErc(ErcStep::PriceMatch),
            ..
        })
    ));
    assert_eq!(miner.stats().blocks_rejected, 5);
    assert_eq!(miner.chain().height(), h);
}

#[test]
fn block_codec_round_trip() {
    let mut w = world(13);
    let (miner, t) = w.bootstrapped(7);
    let block = miner.chain().tip_block().unwrap().clone();
    assert_eq!(Block::decode(&block.encode()).unwrap(), block);
    assert!(block.signature_valid());
    let ctp = w.ctp(3, 1, t, t + 5);
    let erc = w.erc(&ctp, 1);
    let keys = miner_keys(&mut w);
    let b = Block::new_signed(9, block.hash(), hash_bytes(b"c"), 77, vec![erc.into()], &keys);
    let bytes = b.encode();
    assert_eq!(Block::decode(&bytes).unwrap(), b);
    assert!(Block::decode(&bytes[..bytes.len() - 1]).is_err());
}

#[test]
fn peers_agree_on_ctp_hash() {
    let mut w = world(14);
    let (mut a, t) = w.bootstrapped(100);
    let mut b = w.miner();
    for blk in a.chain().best_chain().into_iter().cloned().collect::<Vec<_>>() {
        b.apply_block(blk, t).unwrap();
    }
    let ctp = w.ctp(10, 2, t, t + 50);
    a.submit_ctp(ctp.clone(), t).unwrap();
    b.submit_ctp(ctp.clone(), t + 1).unwrap();
    let erc = w.erc(&ctp, 0);
    a.submit_erc(erc.clone()).unwrap();
    b.submit_erc(erc).unwrap();
    let (blk, at) = mine(&mut a, t + 2, &mut w.rng);
    let out = b.apply_block(blk, at).unwrap();
    assert!(out.became_tip);
    assert_eq!(out.ctp_hash_matches, Some(true));
    assert_eq!(out.settlements.len(), 1);
    assert!(b.mempool().is_empty());
    assert!(b.ctp_db().is_empty());
    assert_eq!(b.state(), a.state());
}

#[test]
fn ctp_hash_independent_of_sweep_timing() {
    let mut w = world(21);
    let (mut a, t) = w.bootstrapped(100);
    let mut b = w.miner();
    for blk in a.chain().best_chain().into_iter().cloned().collect::<Vec<_>>() {
        b.apply_block(blk, t).unwrap();
    }
    let mut probe = (a.clone(), w.rng.clone());
    let (_, at) = mine(&mut probe.0, t + 2, &mut probe.1);
    let ctp = w.ctp(10, 2, t, at + 1);
    a.submit_ctp(ctp.clone(), t + 1).unwrap();
    b.submit_ctp(ctp, t + 1).unwrap();
    let (blk, mined_at) = mine(&mut a, t + 2, &mut w.rng);
    assert_eq!(mined_at, at);
    // b receives the block one tick later, after its sweep released the CTP.
    assert_eq!(b.expire_ctps(at + 1).len(), 1);
    let out = b.apply_block(blk, at + 1).unwrap();
    assert_eq!(out.ctp_hash_matches, Some(true));
}

#[test]
fn reorg_restores_orphaned_settlements() {
    let mut w = world(15);
    let (mut a, t) = w.bootstrapped(100);
    let base: Vec<Block> = a.chain().best_chain().into_iter().cloned().collect();
    let mut b = w.miner();
    for blk in &base {
        b.apply_block(blk.clone(), t).unwrap();
    }
    let ctp = w.ctp(10, 2, t, t + 500);
    a.submit_ctp(ctp.clone(), t).unwrap();
    b.submit_ctp(ctp.clone(), t).unwrap();
    let erc = w.erc(&ctp, 0);
    a.submit_erc(erc.clone()).unwrap();
    let (settling, _) = mine(&mut a, t + 1, &mut w.rng);
    assert_eq!(a.stats().ctps_settled, 1);
    assert!(a.ctp_db().is_empty());

    let (b1, t1) = mine(&mut b, t + 1, &mut w.rng);
    let (b2, t2) = mine(&mut b, t1 + 1, &mut w.rng);
    let now = t2.max(settling.timestamp);
    let first = a.apply_block(b1, now).unwrap();
    if first.became_tip {
        assert!(first.reorged);
    }
    let second = a.apply_block(b2.clone(), now).unwrap();
    assert!(second.became_tip);
    assert_eq!(a.chain().tip_hash(), b2.hash());
    assert!(a.stats().reorgs >= 1);
    assert_eq!(a.stats().ctps_settled, 0);
    assert!(a.ctp_db().contains(&ctp.t_id));
    assert_eq!(a.mempool(), &[Transaction::Erc(erc)]);
    assert_eq!(a.state().coin_balance(&w.consumer.public()), BALANCE);

    let (rebuilt, _) = mine(&mut a, now + 1, &mut w.rng);
    assert_eq!(rebuilt.txs.len(), 1);
    assert_eq!(a.stats().ctps_settled, 1);
    assert_eq!(a.state().coin_balance(&w.consumer.public()), BALANCE - 10);
}

#[test]
fn dump_round_trips_and_replays() {
    let mut w = world(16);
    let (mut miner, t) = w.bootstrapped(100);
    let mut now = t;
    for i in 0..6 {
        now += 3;
        miner.expire_ctps(now);
        let ctp = w.ctp(5 + i, 1, now, now + 20);
        miner.submit_ctp(ctp.clone(), now).unwrap();
        if i % 2 == 0 {
            miner.submit_erc(w.erc(&ctp, i as usize % 4)).unwrap();
        }
        let _ = miner.mine_block(now, &mut w.rng);
    }
    let end = now + 30;
    miner.expire_ctps(end);
    let dump = miner.chain_dump(end);
    let bytes = dump.encode();
    assert_eq!(ChainDump::decode(&bytes).unwrap(), dump);

    let report = replay(&dump);
    assert!(report.is_clean(), "{:?}", report.faults);
    assert_eq!(report.tip, miner.chain().tip_hash());
    assert_eq!(&report.accounts, miner.accounts());
    assert_eq!(report.ctp_digest, miner.ctp_db().digest());
    assert_eq!(report, replay(&ChainDump::decode(&bytes).unwrap()));

    let mut bad = bytes.clone();
    bad[0] ^= 1;
    assert!(ChainDump::decode(&bad).is_err());
    assert!(ChainDump::decode(&bytes[..bytes.len() - 1]).is_err());
}

#[test]
fn replay_flags_inconsistent_records() {
    let mut w = world(17);
    let (miner, t) = w.bootstrapped(10);
    let mut dump = miner.chain_dump(t);
    let over = w.ctp(BALANCE + 1, 1, t, t + 5);
    dump.records.push(DumpRecord::Ctp { at: t, ctp: over });
    let report = replay(&dump);
    assert_eq!(report.faults.len(), 1);
    assert!(report.faults[0].contains("double-spend"), "{}", report.faults[0]);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn pending_never_exceeds_balance(prices in prop::collection::vec(1u64..80, 1..25), seed in 0u64..1000) {
        let mut w = world(seed);
        let mut miner = w.miner();
        miner.submit_genesis(w.genesis(&w.producer)).unwrap();
        let g = miner.mempool()[0].id();
        miner.submit_supply_energy(SupplyEnergyDraft { p_t_id: g, energy_amount: 10_000, energy_price: 1, negotiable: true }.sign(&w.producer)).unwrap();
        let (_, t) = mine(&mut miner, 0, &mut w.rng);
        let mut committed = 0;
        for (i, p) in prices.iter().enumerate() {
            let now = t + i as u64;
            miner.expire_ctps(now);
            let accepted = miner.submit_ctp(w.ctp(*p, 1, now, now + 1000), now).is_ok();
            prop_assert_eq!(accepted, committed + p <= BALANCE);
            if accepted {
                committed += p;
            }
            prop_assert!(miner.funds_violations().is_empty());
        }
    }
}
