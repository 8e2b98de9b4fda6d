// Copyright 2026 The SPB Authors
// SPDX-License-Identifier: Apache-2.0

//! Binary chain dump: the ledger config followed by everything a miner
//! accepted, in arrival order, so the run can be re-executed offline.
//!
//! Layout: `b"SPBCHAIN"`, a version byte, then records of
//! `kind u8 ∥ len u32 BE ∥ payload`. The last record is always `End`.

use std::collections::BTreeMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{AccountState, Block, LedgerConfig, MinerState, MinerStats};
use crate::codec::{CodecError, Reader, Writer};
use crate::crypto::{HashDigest, KeyPair, PublicKey};
use crate::tx::{CtpTx, Tick, Transaction};

const MAGIC: &[u8; 8] = b"SPBCHAIN";
const VERSION: u8 = 1;

const KIND_CONFIG: u8 = 0x00;
const KIND_CTP: u8 = 0x01;
const KIND_BLOCK: u8 = 0x02;
const KIND_END: u8 = 0x03;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum DumpRecord {
    Ctp { at: Tick, ctp: CtpTx },
    Block { at: Tick, block: Block },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ChainDump {
    pub config: LedgerConfig,
    pub records: Vec<DumpRecord>,
    pub end_tick: Tick,
}

fn record(out: &mut Writer, kind: u8, payload: &[u8]) {
    out.raw(&[kind]).raw(&(payload.len() as u32).to_be_bytes()).raw(payload);
}

fn tick_prefixed(at: Tick, body: &[u8]) -> Vec<u8> {
    [&at.to_be_bytes()[..], body].concat()
}

fn take_u64(r: &mut Reader<'_>) -> Result<u64, CodecError> {
    Ok(u64::from_be_bytes(r.take(8)?.try_into().expect("8 bytes")))
}

impl ChainDump {
    pub fn encode(&self) -> Vec<u8> {
        let mut w = Writer::new();
        w.raw(MAGIC).raw(&[VERSION]);
        record(&mut w, KIND_CONFIG, &self.config.encode());
        for r in &self.records {
            match r {
                DumpRecord::Ctp { at, ctp } => record(&mut w, KIND_CTP, &tick_prefixed(*at, &ctp.encode())),
                DumpRecord::Block { at, block } => record(&mut w, KIND_BLOCK, &tick_prefixed(*at, &block.encode())),
            }
        }
        record(&mut w, KIND_END, &self.end_tick.to_be_bytes());
        w.finish()
    }

    pub fn decode(bytes: &[u8]) -> Result<Self, CodecError> {
        let mut r = Reader::new(bytes);
        if r.take(MAGIC.len())? != MAGIC {
            return Err(CodecError::BadValue("dump magic"));
        }
        if r.take(1)? != [VERSION] {
            return Err(CodecError::BadValue("dump version"));
        }
        let mut config = None;
        let mut records = Vec::new();
        loop {
            let kind = r.take(1)?[0];
            let len = u32::from_be_bytes(r.take(4)?.try_into().expect("4 bytes")) as usize;
            let payload = r.take(len)?;
            let mut p = Reader::new(payload);
            match kind {
                KIND_CONFIG if config.is_none() => config = Some(LedgerConfig::decode(payload)?),
                KIND_CTP => {
                    let at = take_u64(&mut p)?;
                    match Transaction::decode(p.take(p.remaining())?)? {
                        Transaction::Ctp(ctp) => records.push(DumpRecord::Ctp { at, ctp }),
                        _ => return Err(CodecError::BadValue("dump ctp record")),
                    }
                }
                KIND_BLOCK => {
                    let at = take_u64(&mut p)?;
                    let block = Block::decode(p.take(p.remaining())?)?;
                    records.push(DumpRecord::Block { at, block });
                }
                KIND_END => {
                    let end_tick = take_u64(&mut p)?;
                    p.finish()?;
                    r.finish()?;
                    let config = config.ok_or(CodecError::BadValue("dump without config"))?;
                    return Ok(Self {
                        config,
                        records,
                        end_tick,
                    });
                }
                other => return Err(CodecError::UnknownTag(other)),
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReplayReport {
    pub tip: HashDigest,
    pub height: u64,
    pub accounts: BTreeMap<PublicKey, AccountState>,
    pub settlements: usize,
    pub ctp_digest: HashDigest,
    pub stats: MinerStats,
    /// One line per record the replaying node refused.
    pub faults: Vec<String>,
}

impl ReplayReport {
    pub fn is_clean(&self) -> bool {
        self.faults.is_empty()
    }
}

/// Re-executes a dump on a fresh observer node.
pub fn replay(dump: &ChainDump) -> ReplayReport {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let observer = KeyPair::generate(&mut rng);
    let mut node = MinerState::new(observer, dump.config.clone().into(), &mut rng);
    let mut faults = Vec::new();
    for (i, rec) in dump.records.iter().enumerate() {
        match rec {
            DumpRecord::Ctp { at, ctp } => {
                node.expire_ctps(*at);
                if let Err(e) = node.submit_ctp(ctp.clone(), *at) {
                    faults.push(format!("record {i}: ctp {} at tick {at}: {e}", ctp.t_id));
                }
            }
            DumpRecord::Block { at, block } => {
                node.expire_ctps(*at);
                if let Err(e) = node.apply_block(block.clone(), *at) {
                    faults.push(format!("record {i}: block {} at tick {at}: {e}", block.hash()));
                }
            }
        }
    }
    node.expire_ctps(dump.end_tick);
    ReplayReport {
        tip: node.chain().tip_hash(),
        height: node.chain().height(),
        accounts: node.accounts().clone(),
        settlements: node.state().settlements().len(),
        ctp_digest: node.ctp_db().digest(),
        stats: node.stats(),
        faults,
    }
}
