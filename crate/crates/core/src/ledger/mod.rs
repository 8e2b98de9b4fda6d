// Copyright 2026 The SPB Authors
// SPDX-License-Identifier: Apache-2.0

//! Blockchain state machine run by every miner.
//!
//! CTPs never enter blocks; each miner keeps them in a local [`CtpDatabase`]
//! and publishes its digest in every block header as `ctp_hash`. Genesis,
//! supply-energy and ERC transactions are mined. Settlement, the "smart
//! contract", is the state transition applied when a block carrying a valid
//! ERC is applied.

mod block;
mod chain;
mod ctp_db;
mod dump;
mod miner;
mod state;

pub use block::{Block, TAG_BLOCK};
pub use chain::{Blockchain, StoredBlock};
pub use ctp_db::{CtpDatabase, CtpEntry};
pub use dump::{replay, ChainDump, DumpRecord, ReplayReport};
pub use miner::{ApplyOutcome, MinerState, MinerStats};
pub use state::{AccountState, ChainState, Settlement};

use std::collections::BTreeMap;
use std::fmt;

use thiserror::Error;

use crate::codec::{CodecError, Reader, Writer};
use crate::crypto::{hash_bytes, merkle_verify, HashDigest, PublicKey};
use crate::tx::{Coins, CtpTx, ErcTx, Kwh, StructuralFault, Tick, TxKind};

/// Chain-wide parameters. The hash of their encoding anchors the chain: the
/// first block's `prev_hash` is [`LedgerConfig::anchor`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LedgerConfig {
    pub distributor_ca: PublicKey,
    pub manufacturer_ca: PublicKey,
    /// Minimum burned amount accepted as coin-burn genesis evidence.
    pub burn_threshold: Coins,
    pub consensus_period: Tick,
    pub initial_coins: BTreeMap<PublicKey, Coins>,
}

impl LedgerConfig {
    pub fn encode(&self) -> Vec<u8> {
        let mut w = Writer::new();
        w.fixed(self.distributor_ca.as_bytes())
            .fixed(self.manufacturer_ca.as_bytes())
            .u64(self.burn_threshold)
            .u64(self.consensus_period)
            .u32(self.initial_coins.len() as u32);
        for (pk, coins) in &self.initial_coins {
            w.fixed(pk.as_bytes()).u64(*coins);
        }
        w.finish()
    }

    pub fn decode(bytes: &[u8]) -> Result<Self, CodecError> {
        let mut r = Reader::new(bytes);
        let distributor_ca = PublicKey::from_bytes(r.array()?);
        let manufacturer_ca = PublicKey::from_bytes(r.array()?);
        let burn_threshold = r.u64()?;
        let consensus_period = r.u64()?;
        if consensus_period == 0 {
            return Err(CodecError::BadValue("consensus period"));
        }
        let n = r.u32()?;
        let mut initial_coins = BTreeMap::new();
        for _ in 0..n {
            initial_coins.insert(PublicKey::from_bytes(r.array()?), r.u64()?);
        }
        r.finish()?;
        Ok(Self {
            distributor_ca,
            manufacturer_ca,
            burn_threshold,
            consensus_period,
            initial_coins,
        })
    }

    pub fn anchor(&self) -> HashDigest {
        hash_bytes(&self.encode())
    }
}

/// ERC verification steps, in the order miners run them.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ErcStep {
    /// (a) the referenced CTP is pending.
    CtpPending,
    /// (b) the ERC price equals the CTP price.
    PriceMatch,
    /// (c) the verifier meter is manufacturer-certified and signed the root.
    VerifierCertified,
    /// (d) the ERC key is a leaf of the CoE tree.
    KeyInTree,
    /// (e) the ERC is signed by that key.
    SignedByKey,
}

impl ErcStep {
    pub fn label(self) -> char {
        match self {
            Self::CtpPending => 'a',
            Self::PriceMatch => 'b',
            Self::VerifierCertified => 'c',
            Self::KeyInTree => 'd',
            Self::SignedByKey => 'e',
        }
    }
}

impl fmt::Display for ErcStep {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "step ({})", self.label())
    }
}

/// Runs checks (a) through (e) against `ctp_db` and returns the first that fails.
pub fn validate_erc(erc: &ErcTx, ctp_db: &CtpDatabase, manufacturer_ca: &PublicKey) -> Result<(), ErcStep> {
    validate_erc_with(erc, |id| ctp_db.get(id).map(|e| &e.ctp), manufacturer_ca)
}

pub(crate) fn validate_erc_with<'a>(
    erc: &ErcTx,
    lookup: impl FnOnce(&HashDigest) -> Option<&'a CtpTx>,
    manufacturer_ca: &PublicKey,
) -> Result<(), ErcStep> {
    let ctp = lookup(&erc.ctp_id).ok_or(ErcStep::CtpPending)?;
    if erc.price != ctp.price {
        return Err(ErcStep::PriceMatch);
    }
    if !erc.coe.verify(manufacturer_ca) {
        return Err(ErcStep::VerifierCertified);
    }
    if !merkle_verify(&erc.coe.root, erc.pk.as_bytes(), &erc.merkle_hashes) {
        return Err(ErcStep::KeyInTree);
    }
    if !erc.signature_valid() {
        return Err(ErcStep::SignedByKey);
    }
    Ok(())
}

/// Why a transaction was refused by a miner.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum Rejection {
    #[error("malformed: {0}")]
    Malformed(#[from] StructuralFault),
    #[error("account exists")]
    AccountExists,
    #[error("genesis evidence rejected")]
    BadEvidence,
    #[error("unknown account")]
    UnknownAccount,
    #[error("chain break")]
    ChainBreak,
    #[error("stale")]
    Stale,
    #[error("duplicate transaction")]
    Duplicate,
    #[error("would double-spend: price {price} exceeds available {available}")]
    WouldDoubleSpend { available: Coins, price: Coins },
    #[error("payee has no energy account")]
    UnknownPayee,
    #[error("payee energy {available} kWh short of {requested} kWh")]
    InsufficientEnergy { available: Kwh, requested: Kwh },
    #[error("invalid ERC at {0}")]
    InvalidErc(ErcStep),
    #[error("already settled")]
    AlreadySettled,
    #[error("insufficient funds")]
    InsufficientFunds,
    #[error("balance overflow")]
    BalanceOverflow,
    #[error("{0:?} transactions are never mined")]
    NotMineable(TxKind),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum BlockRejection {
    #[error("bad miner signature")]
    BadMinerSignature,
    #[error("unknown parent block")]
    UnknownParent,
    #[error("height {got} does not follow parent height {parent}")]
    BadHeight { parent: u64, got: u64 },
    #[error("timestamp precedes parent or lies in the future")]
    BadTimestamp,
    #[error("miner already produced a block in consensus period {0}")]
    PeriodQuotaExceeded(u64),
    #[error("transaction {index} rejected: {reason}")]
    InvalidTransaction { index: usize, reason: Rejection },
    #[error(transparent)]
    Decode(#[from] CodecError),
}

#[cfg(test)]
mod tests;
