// Copyright 2026 The SPB Authors
// SPDX-License-Identifier: Apache-2.0

use crate::codec::{CodecError, Reader, Writer};
use crate::crypto::{hash_bytes, verify, HashDigest, KeyPair, PublicKey, Signature};
use crate::tx::{decode_canonical, Tick, Transaction};

pub const TAG_BLOCK: u8 = 0x20;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Block {
    pub height: u64,
    pub prev_hash: HashDigest,
    /// Digest of the miner's CTP database view at `timestamp`.
    pub ctp_hash: HashDigest,
    pub timestamp: Tick,
    pub miner_pk: PublicKey,
    pub miner_sign: Signature,
    pub txs: Vec<Transaction>,
}

impl Block {
    pub fn new_signed(
        height: u64,
        prev_hash: HashDigest,
        ctp_hash: HashDigest,
        timestamp: Tick,
        txs: Vec<Transaction>,
        miner: &KeyPair,
    ) -> Self {
        let mut block = Self {
            height,
            prev_hash,
            ctp_hash,
            timestamp,
            miner_pk: miner.public(),
            miner_sign: Signature::from_bytes([0; 64]),
            txs,
        };
        block.miner_sign = miner.sign(hash_bytes(&block.body_bytes()).as_bytes());
        block
    }

    fn body_bytes(&self) -> Vec<u8> {
        let mut w = Writer::with_tag(TAG_BLOCK);
        w.u64(self.height)
            .fixed(self.prev_hash.as_bytes())
            .fixed(self.ctp_hash.as_bytes())
            .u64(self.timestamp)
            .fixed(self.miner_pk.as_bytes())
            .u32(self.txs.len() as u32);
        for tx in &self.txs {
            w.fixed(&tx.encode());
        }
        w.finish()
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut w = Writer::new();
        w.raw(&self.body_bytes()).fixed(self.miner_sign.as_bytes());
        w.finish()
    }

    pub fn decode(bytes: &[u8]) -> Result<Self, CodecError> {
        let mut r = Reader::new(bytes);
        let tag = r.tag()?;
        if tag != TAG_BLOCK {
            return Err(CodecError::UnknownTag(tag));
        }
        let height = r.u64()?;
        let prev_hash = HashDigest::from_bytes(r.array()?);
        let ctp_hash = HashDigest::from_bytes(r.array()?);
        let timestamp = r.u64()?;
        let miner_pk = PublicKey::from_bytes(r.array()?);
        let n = r.u32()?;
        let mut txs = Vec::new();
        for _ in 0..n {
            txs.push(decode_canonical(r.field()?)?);
        }
        let miner_sign = Signature::from_bytes(r.array()?);
        r.finish()?;
        Ok(Self {
            height,
            prev_hash,
            ctp_hash,
            timestamp,
            miner_pk,
            miner_sign,
            txs,
        })
    }

    pub fn hash(&self) -> HashDigest {
        hash_bytes(&self.encode())
    }

    pub fn signature_valid(&self) -> bool {
        verify(&self.miner_pk, hash_bytes(&self.body_bytes()).as_bytes(), &self.miner_sign)
    }
}
