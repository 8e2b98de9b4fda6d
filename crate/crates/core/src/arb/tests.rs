// Copyright 2026 The SPB Authors
// SPDX-License-Identifier: Apache-2.0

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::crypto::KeyPair;
use crate::tx::{NegotiationDraft, NegotiationStatus};

fn config(x: u8) -> ArbConfig {
    ArbConfig {
        x,
        offer_limit: 5,
        load_window: 100,
        overload_threshold: 1_000,
    }
}

fn pk_with_prefix(prefix: &[u8], rng: &mut ChaCha8Rng) -> PublicKey {
    let mut bytes: [u8; 32] = rng.gen();
    bytes[..prefix.len()].copy_from_slice(prefix);
    PublicKey::from_bytes(bytes)
}

/// Owners of `value` found by scanning every range; must be exactly one.
fn scan_owners(table: &DhtTable, value: u128) -> Vec<BackboneId> {
    table
        .ranges()
        .filter(|&(lo, hi, _)| lo <= value && value <= hi)
        .map(|(_, _, id)| id)
        .collect()
}

fn assert_partition_exhaustive(table: &DhtTable) {
    for v in 0..table.space() {
        let owners = scan_owners(table, v);
        assert_eq!(owners.len(), 1, "value {v:#x} owned by {owners:?}");
        assert_eq!(table.owner_of_value(v), owners[0]);
    }
}

#[test]
fn two_backbones_split_first_byte() {
    let t = build_dht(&[7, 9], 1).unwrap();
    assert_eq!(t.ranges().collect::<Vec<_>>(), vec![(0x00, 0x7F, 7), (0x80, 0xFF, 9)]);
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    assert_eq!(t.responsible(&pk_with_prefix(&[0x00], &mut rng)), 7);
    assert_eq!(t.responsible(&pk_with_prefix(&[0xFF], &mut rng)), 9);
}

#[test]
fn single_backbone_owns_everything() {
    let t = build_dht(&[3], 1).unwrap();
    assert_eq!(t.ranges().collect::<Vec<_>>(), vec![(0, 255, 3)]);
}

#[test]
fn five_backbones_two_bytes_even_and_total() {
    let t = build_dht(&[0, 1, 2, 3, 4], 2).unwrap();
    assert_partition_exhaustive(&t);
    let shares: Vec<u128> = (0..5).map(|id| t.share(id)).collect();
    assert_eq!(shares.iter().sum::<u128>(), 65_536);
    assert!(shares.iter().max().unwrap() - shares.iter().min().unwrap() <= 1, "{shares:?}");
}

#[test]
fn partition_exhaustive_for_small_tables() {
    for n in 1..=16u32 {
        let ids: Vec<_> = (0..n).collect();
        assert_partition_exhaustive(&build_dht(&ids, 1).unwrap());
    }
    for n in [3u32, 7, 16] {
        let ids: Vec<_> = (0..n).collect();
        assert_partition_exhaustive(&build_dht(&ids, 2).unwrap());
    }
}

#[test]
fn build_rejects_bad_parameters() {
    assert_eq!(build_dht(&[], 1), Err(ArbError::EmptyBackbone));
    assert_eq!(build_dht(&[1], 0), Err(ArbError::BadPrefixLength(0)));
    assert_eq!(build_dht(&[1], MAX_X + 1), Err(ArbError::BadPrefixLength(MAX_X + 1)));
    assert_eq!(build_dht(&[1, 1], 1), Err(ArbError::DuplicateBackbone));
    let many: Vec<_> = (0..257).collect();
    assert!(matches!(build_dht(&many, 1), Err(ArbError::TooManyBackbones { .. })));
    assert!(build_dht(&many, 2).is_ok());
}

#[test]
fn lookup_agrees_with_linear_scan() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for (n, x) in [(4u32, 1u8), (13, 2), (16, 3)] {
        let ids: Vec<_> = (0..n).collect();
        let t = build_dht(&ids, x).unwrap();
        for _ in 0..10_000 {
            let pk = PublicKey::from_bytes(rng.gen());
            let v = RoutingBytes::of(&pk, x).value();
            assert_eq!(vec![responsible_backbone(&t, &pk)], scan_owners(&t, v));
        }
    }
}

#[test]
fn routing_bytes_are_the_key_prefix() {
    let pk = PublicKey::from_bytes([0xAB; 32]);
    let rb = RoutingBytes::of(&pk, 2);
    assert_eq!(rb.as_bytes(), &[0xAB, 0xAB]);
    assert_eq!(rb.x(), 2);
    assert_eq!(rb.value(), 0xABAB);
}

#[test]
fn joins_verify_signature_and_range() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut arb = Arb::new(4, config(1)).unwrap();
    let honest = KeyPair::generate(&mut rng);
    let owner = arb.join(&JoinMessage::new(&honest, Endpoint(100))).unwrap();
    assert_eq!(arb.node(owner).unwrap().endpoint_of(&honest.public()), Some(Endpoint(100)));

    let attacker = KeyPair::generate(&mut rng);
    let victim = KeyPair::generate(&mut rng).public();
    let mut forged = JoinMessage::new(&attacker, Endpoint(666));
    forged.pk = victim;
    assert_eq!(arb.join(&forged), Err(JoinError::Impersonation));
    assert!(arb.nodes().all(|n| n.endpoint_of(&victim).is_none()));

    let other = KeyPair::generate(&mut rng);
    let want = arb.table().responsible(&other.public());
    let wrong = (want + 1) % 4;
    assert_eq!(
        arb.join_via(wrong, &JoinMessage::new(&other, Endpoint(5))),
        Err(JoinError::Misrouted { owner: want })
    );
    assert_eq!(arb.stats().joins_accepted, 1);
    assert_eq!(arb.stats().joins_rejected, 2);
}

#[test]
fn node_with_three_keys_joins_three_backbones() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut arb = Arb::new(4, config(1)).unwrap();
    let mut owners = std::collections::BTreeSet::new();
    while owners.len() < 3 {
        let k = KeyPair::generate(&mut rng);
        let owner = arb.table().responsible(&k.public());
        if !owners.contains(&owner) {
            arb.join(&JoinMessage::new(&k, Endpoint(8))).unwrap();
            owners.insert(owner);
        }
    }
    let hosting = arb
        .nodes()
        .filter(|n| n.members().values().any(|&e| e == Endpoint(8)))
        .count();
    assert_eq!(hosting, 3);
}

fn offer(from: &KeyPair, to: PublicKey, round: u32, status: NegotiationStatus) -> Vec<u8> {
    let msg = NegotiationDraft {
        dest_pk: to,
        price: 10,
        status,
        round,
        energy_amount: 3,
        nonce: [round as u8; 32],
    }
    .sign(from)
    .unwrap();
    Transaction::from(msg).encode()
}

#[test]
fn offer_and_reply_reach_their_endpoints() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut arb = Arb::new(4, config(1)).unwrap();
    let consumer = KeyPair::generate(&mut rng);
    let producer = KeyPair::generate(&mut rng);
    let c_home = arb.join(&JoinMessage::new(&consumer, Endpoint(10))).unwrap();
    let p_home = arb.join(&JoinMessage::new(&producer, Endpoint(20))).unwrap();

    let out = offer(&consumer, producer.public(), 1, NegotiationStatus::Counter);
    let env = Envelope {
        origin: Endpoint(10),
        dest_pk: producer.public(),
        payload: out.clone(),
        anonymized: false,
    };
    let d = arb.route(c_home, &env, 0).unwrap();
    assert_eq!(d.endpoint, Endpoint(20));
    assert_eq!(d.payload, out);
    assert_eq!(d.origin, Some(Endpoint(10)));
    assert_eq!(*d.trace.last().unwrap(), Hop::Endpoint(Endpoint(20)));
    assert!(d.trace.len() <= 3);

    let back = offer(&producer, consumer.public(), 2, NegotiationStatus::Accept);
    let env = Envelope {
        origin: Endpoint(20),
        dest_pk: consumer.public(),
        payload: back.clone(),
        anonymized: true,
    };
    let d = arb.route(p_home, &env, 1).unwrap();
    assert_eq!((d.endpoint, d.payload, d.origin), (Endpoint(10), back, None));
}

#[test]
fn unknown_destination_is_undeliverable() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut arb = Arb::new(2, config(1)).unwrap();
    let env = Envelope {
        origin: Endpoint(1),
        dest_pk: KeyPair::generate(&mut rng).public(),
        payload: vec![1, 2, 3],
        anonymized: false,
    };
    assert!(matches!(arb.route(0, &env, 0), Err(RouteError::Undeliverable { .. })));
    assert_eq!(arb.route(9, &env, 0), Err(RouteError::UnknownBackbone(9)));
    assert_eq!(arb.stats().undeliverable, 1);
}

#[test]
fn random_traffic_delivery_audit() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut arb = Arb::new(8, config(2)).unwrap();
    let keys: Vec<_> = (0..100).map(|_| KeyPair::generate(&mut rng)).collect();
    let mut home = Vec::new();
    for (i, k) in keys.iter().enumerate() {
        home.push(arb.join(&JoinMessage::new(k, Endpoint(1000 + i as u32))).unwrap());
    }
    for n in 0..1000u64 {
        let (s, d) = (rng.gen_range(0..100), rng.gen_range(0..100));
        let payload = n.to_be_bytes().to_vec();
        let env = Envelope {
            origin: Endpoint(1000 + s as u32),
            dest_pk: keys[d].public(),
            payload: payload.clone(),
            anonymized: false,
        };
        let got = arb.route(home[s], &env, n).unwrap();
        assert_eq!(got.endpoint, Endpoint(1000 + d as u32));
        assert_eq!(got.payload, payload);
        assert!(got.trace.len() <= 3);
    }
    let st = arb.stats();
    assert_eq!((st.routed, st.delivered), (1000, 1000));
    assert_eq!(st.broadcast_baseline, 100 * 1000);
}

#[test]
fn flood_beyond_offer_limit_is_dropped() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut arb = Arb::new(4, config(1)).unwrap();
    let attacker = KeyPair::generate(&mut rng);
    let producer = KeyPair::generate(&mut rng);
    let a_home = arb.join(&JoinMessage::new(&attacker, Endpoint(1))).unwrap();
    arb.join(&JoinMessage::new(&producer, Endpoint(2))).unwrap();
    let mut seen = 0;
    for round in 1..=50 {
        let env = Envelope {
            origin: Endpoint(1),
            dest_pk: producer.public(),
            payload: offer(&attacker, producer.public(), round, NegotiationStatus::Counter),
            anonymized: false,
        };
        seen += arb.route(a_home, &env, round.into()).is_ok() as u32;
    }
    assert_eq!(seen, 5);

    let replayer = KeyPair::generate(&mut rng);
    let r_home = arb.join(&JoinMessage::new(&replayer, Endpoint(3))).unwrap();
    let mut replayed = 0;
    for i in 0..50 {
        let env = Envelope {
            origin: Endpoint(3),
            dest_pk: producer.public(),
            payload: offer(&replayer, producer.public(), 1, NegotiationStatus::Counter),
            anonymized: false,
        };
        replayed += arb.route(r_home, &env, 100 + i).is_ok() as u32;
    }
    assert_eq!(replayed, 5);
    assert_eq!(arb.stats().offers_dropped, 90);
}

#[test]
fn rebalance_requires_wider_prefix() {
    let t = build_dht(&[0, 1], 2).unwrap();
    assert_eq!(
        rebalance_table(&t, 2, &[]),
        Err(ArbError::NotWider {
            current: 2,
            requested: 2
        })
    );
}

#[test]
fn rebalance_reassociates_every_member() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut arb = Arb::new(4, config(1)).unwrap();
    let keys: Vec<_> = (0..100).map(|_| KeyPair::generate(&mut rng)).collect();
    for (i, k) in keys.iter().enumerate() {
        arb.join(&JoinMessage::new(k, Endpoint(i as u32))).unwrap();
        let env = Envelope {
            origin: Endpoint(0),
            dest_pk: k.public(),
            payload: vec![],
            anonymized: false,
        };
        arb.route(0, &env, 1).unwrap();
    }
    let report = arb.rebalance(2, 2).unwrap();
    assert_eq!((report.x_before, report.x_after, arb.table().x()), (1, 2, 2));
    assert_eq!(arb.table().version(), 1);
    assert_partition_exhaustive(arb.table());
    assert_eq!(arb.member_count(), 100);
    for (i, k) in keys.iter().enumerate() {
        let owner = scan_owners(arb.table(), RoutingBytes::of(&k.public(), 2).value())[0];
        assert_eq!(arb.node(owner).unwrap().endpoint_of(&k.public()), Some(Endpoint(i as u32)));
    }
    assert_eq!(report.loads_after.values().sum::<u64>(), 100);
    assert!(report.max_after() <= report.max_before());
}

#[test]
fn rebalance_single_backbone_is_a_no_op() {
    let t = build_dht(&[0], 1).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let seen: Vec<_> = (0..50).map(|_| PublicKey::from_bytes(rng.gen())).collect();
    let w = rebalance_table(&t, 2, &seen).unwrap();
    assert_eq!(w.ranges().collect::<Vec<_>>(), vec![(0, 65_535, 0)]);
}

#[test]
fn uniform_traffic_load_drops_after_widening() {
    let mut wins = 0;
    for seed in 0..40 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut arb = Arb::new(4, config(1)).unwrap();
        for t in 0..400 {
            let env = Envelope {
                origin: Endpoint(0),
                dest_pk: PublicKey::from_bytes(rng.gen()),
                payload: vec![],
                anonymized: false,
            };
            let _ = arb.route(0, &env, t / 10);
        }
        let r = arb.rebalance(2, 40).unwrap();
        wins += (r.max_after() < r.max_before()) as u32;
    }
    assert!(wins >= 38, "{wins}/40");
}

#[test]
fn skewed_keys_may_stay_skewed() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut arb = Arb::new(4, config(1)).unwrap();
    for t in 0..200 {
        let env = Envelope {
            origin: Endpoint(0),
            dest_pk: pk_with_prefix(&[0x42, 0x42], &mut rng),
            payload: vec![],
            anonymized: false,
        };
        let _ = arb.route(0, &env, t / 4);
    }
    let r = arb.rebalance(2, 50).unwrap();
    assert_eq!(r.max_before(), 200);
    assert_eq!(r.max_after(), 200, "a shared two-byte prefix cannot be split at x=2");
}

#[test]
fn overload_triggers_widening() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let mut arb = Arb::new(
        4,
        ArbConfig {
            overload_threshold: 30,
            load_window: 10,
            ..config(1)
        },
    )
    .unwrap();
    for _ in 0..30 {
        let env = Envelope {
            origin: Endpoint(0),
            dest_pk: pk_with_prefix(&[0x01], &mut rng),
            payload: vec![],
            anonymized: false,
        };
        let _ = arb.route(0, &env, 5);
    }
    assert_eq!(arb.overloaded(5), None);
    assert!(arb.maybe_rebalance(5).is_none());
    let env = Envelope {
        origin: Endpoint(0),
        dest_pk: pk_with_prefix(&[0x01], &mut rng),
        payload: vec![],
        anonymized: false,
    };
    let _ = arb.route(1, &env, 5);
    assert_eq!(arb.overloaded(5), Some(0));
    let r = arb.maybe_rebalance(5).unwrap();
    assert_eq!(r.x_after, 2);
    assert!(r.max_after() < r.max_before());
    assert_eq!(arb.stats().rebalances, 1);
    assert_eq!(arb.overloaded(15), None, "window slides");
}

proptest! {
    #[test]
    fn tables_partition_sampled_values(n in 1u32..40, x in 1u8..=3, probes in prop::collection::vec(any::<u128>(), 64)) {
        let ids: Vec<_> = (0..n).map(|i| i * 3 + 1).collect();
        let t = build_dht(&ids, x).unwrap();
        for p in probes {
            let v = p % t.space();
            let owners = scan_owners(&t, v);
            prop_assert_eq!(owners.len(), 1);
            prop_assert_eq!(t.owner_of_value(v), owners[0]);
        }
        let total: u128 = ids.iter().map(|&id| t.share(id)).sum();
        prop_assert_eq!(total, t.space());
    }

    #[test]
    fn rebalanced_tables_stay_total(n in 1u32..20, seeds in prop::collection::vec(any::<[u8; 32]>(), 0..200)) {
        let ids: Vec<_> = (0..n).collect();
        let t = build_dht(&ids, 1).unwrap();
        let seen: Vec<_> = seeds.into_iter().map(PublicKey::from_bytes).collect();
        let w = rebalance_table(&t, 2, &seen).unwrap();
        let ranges: Vec<_> = w.ranges().collect();
        prop_assert_eq!(ranges.len(), n as usize);
        prop_assert_eq!(ranges[0].0, 0);
        prop_assert_eq!(ranges.last().unwrap().1, 65_535);
        for pair in ranges.windows(2) {
            prop_assert_eq!(pair[0].1 + 1, pair[1].0);
        }
    }
}
