// Copyright 2026 The SPB Authors
// SPDX-License-Identifier: Apache-2.0

//! The five protocol messages: genesis, supply-energy, negotiation,
//! commit-to-pay (CTP) and energy-receipt-confirmation (ERC).
//!
//! Every message is built from an unsigned draft. The signature covers
//! `hash(body)`, where the body is the canonical encoding without `t_id` and
//! `sign`; `t_id` is then the hash of the body followed by the signature.

mod check;
mod encoding;

pub use check::{check_encoded, check_structure, StructuralFault};
pub use encoding::{decode_canonical, decode_hex, encode_canonical, encode_hex};

use rand::{CryptoRng, RngCore};
use thiserror::Error;

use crate::codec::{CodecError, MAX_FIELD_LEN};
use crate::crypto::{
    ca_verify, hash_bytes, verify, Certificate, HashDigest, KeyPair, MerkleProof, PublicKey, Signature,
};

/// Whole kilowatt-hours.
pub type Kwh = u64;
/// Smallest currency unit.
pub type Coins = u64;
/// Simulation time.
pub type Tick = u64;

pub(crate) const TAG_GENESIS: u8 = 0x01;
pub(crate) const TAG_SUPPLY: u8 = 0x02;
pub(crate) const TAG_NEGOTIATION: u8 = 0x03;
pub(crate) const TAG_CTP: u8 = 0x04;
pub(crate) const TAG_ERC: u8 = 0x05;

const COE_DOMAIN: &[u8] = b"spb/coe/v1";

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TxError {
    #[error(transparent)]
    Codec(#[from] CodecError),
    #[error("expiry time {expiry} is not after time stamp {time_stamp}")]
    ExpiryNotAfterTimestamp { time_stamp: Tick, expiry: Tick },
    #[error("total price {total} does not equal {amount} kWh x {unit_price}")]
    PriceMismatch { amount: Kwh, unit_price: Coins, total: Coins },
    #[error("price arithmetic overflows")]
    Overflow,
    #[error("negotiation round must be at least 1")]
    ZeroRound,
    #[error("signing key does not match the transaction's public key")]
    KeyMismatch,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GenesisMethod {
    CoinBurn,
    AuthorityCertificate,
}

/// Opens an energy account for `pk`.
///
/// For [`GenesisMethod::CoinBurn`] the evidence is the burned amount as an
/// 8-byte big-endian integer. For [`GenesisMethod::AuthorityCertificate`] it
/// is an encoded [`Certificate`] whose subject is `pk`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GenesisTx {
    pub method: GenesisMethod,
    pub evidence: Vec<u8>,
    pub pk: PublicKey,
    pub sign: Signature,
}

impl GenesisTx {
    pub fn coin_burn(amount: Coins, keys: &KeyPair) -> Self {
        Self::build(GenesisMethod::CoinBurn, amount.to_be_bytes().to_vec(), keys)
            .expect("8-byte evidence is within limits")
    }

    pub fn with_certificate(cert: &Certificate, keys: &KeyPair) -> Self {
        Self::build(GenesisMethod::AuthorityCertificate, cert.encode(), keys)
            .expect("certificate evidence is within limits")
    }

    pub fn build(method: GenesisMethod, evidence: Vec<u8>, keys: &KeyPair) -> Result<Self, TxError> {
        if evidence.len() > MAX_FIELD_LEN {
            return Err(CodecError::Overlong(evidence.len()).into());
        }
        let mut tx = Self {
            method,
            evidence,
            pk: keys.public(),
            sign: Signature::from_bytes([0; 64]),
        };
        tx.sign = keys.sign(hash_bytes(&tx.body_bytes()).as_bytes());
        Ok(tx)
    }

    /// Genesis transactions carry no `t_id` field; their id is the hash of
    /// the full encoding.
    pub fn id(&self) -> HashDigest {
        hash_bytes(&self.encode())
    }

    pub fn burned_amount(&self) -> Option<Coins> {
        match self.method {
            GenesisMethod::CoinBurn => Some(u64::from_be_bytes(self.evidence.as_slice().try_into().ok()?)),
            GenesisMethod::AuthorityCertificate => None,
        }
    }

    pub fn certificate(&self) -> Option<Certificate> {
        match self.method {
            GenesisMethod::AuthorityCertificate => Certificate::decode(&self.evidence).ok(),
            GenesisMethod::CoinBurn => None,
        }
    }
}

/// Adds energy to an energy account, chained to the account's previous
/// transaction through `p_t_id`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SupplyEnergyTx {
    pub t_id: HashDigest,
    pub p_t_id: HashDigest,
    pub energy_amount: Kwh,
    pub energy_price: Coins,
    pub negotiable: bool,
    pub pk: PublicKey,
    pub sign: Signature,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SupplyEnergyDraft {
    pub p_t_id: HashDigest,
    pub energy_amount: Kwh,
    pub energy_price: Coins,
    pub negotiable: bool,
}

impl SupplyEnergyDraft {
    pub fn sign(self, keys: &KeyPair) -> SupplyEnergyTx {
        let mut tx = SupplyEnergyTx {
            t_id: HashDigest::ZERO,
            p_t_id: self.p_t_id,
            energy_amount: self.energy_amount,
            energy_price: self.energy_price,
            negotiable: self.negotiable,
            pk: keys.public(),
            sign: Signature::from_bytes([0; 64]),
        };
        tx.seal(keys);
        tx
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NegotiationStatus {
    /// The offer is rejected and `price` is a counter-offer.
    Counter,
    Accept,
}

impl NegotiationStatus {
    pub fn bit(self) -> u8 {
        match self {
            Self::Counter => 0,
            Self::Accept => 1,
        }
    }
}

/// Off-chain price negotiation message, routed over the backbone and never
/// persisted in a block.
///
/// `round` counts messages within one negotiation so that the backbone can
/// enforce the offer limit. `nonce` is the contract nonce the two parties
/// will use for the contract hash.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NegotiationMsg {
    pub t_id: HashDigest,
    pub dest_pk: PublicKey,
    /// Unit price per kWh.
    pub price: Coins,
    pub status: NegotiationStatus,
    pub round: u32,
    pub energy_amount: Kwh,
    pub nonce: [u8; 32],
    pub sender_pk: PublicKey,
    pub sign: Signature,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NegotiationDraft {
    pub dest_pk: PublicKey,
    pub price: Coins,
    pub status: NegotiationStatus,
    pub round: u32,
    pub energy_amount: Kwh,
    pub nonce: [u8; 32],
}

impl NegotiationDraft {
    pub fn sign(self, keys: &KeyPair) -> Result<NegotiationMsg, TxError> {
        if self.round == 0 {
            return Err(TxError::ZeroRound);
        }
        let mut tx = NegotiationMsg {
            t_id: HashDigest::ZERO,
            dest_pk: self.dest_pk,
            price: self.price,
            status: self.status,
            round: self.round,
            energy_amount: self.energy_amount,
            nonce: self.nonce,
            sender_pk: keys.public(),
            sign: Signature::from_bytes([0; 64]),
        };
        tx.seal(keys);
        Ok(tx)
    }
}

/// Commit-to-pay: the consumer's pending payment. Held in each miner's CTP
/// database until settled by an ERC or released at `expiry_time`.
///
/// `payee_pk` and `energy_amount` let the settlement rule credit the producer
/// and debit its energy account without seeing the contract terms.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CtpTx {
    pub t_id: HashDigest,
    pub time_stamp: Tick,
    pub expiry_time: Tick,
    /// Total contract price.
    pub price: Coins,
    pub contract_hash: HashDigest,
    pub payee_pk: PublicKey,
    pub energy_amount: Kwh,
    pub pk: PublicKey,
    pub sign: Signature,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CtpDraft {
    pub time_stamp: Tick,
    pub expiry_time: Tick,
    pub price: Coins,
    pub contract_hash: HashDigest,
    pub payee_pk: PublicKey,
    pub energy_amount: Kwh,
}

impl CtpDraft {
    pub fn sign(self, keys: &KeyPair) -> Result<CtpTx, TxError> {
        if self.expiry_time <= self.time_stamp {
            return Err(TxError::ExpiryNotAfterTimestamp {
                time_stamp: self.time_stamp,
                expiry: self.expiry_time,
            });
        }
        let mut tx = CtpTx {
            t_id: HashDigest::ZERO,
            time_stamp: self.time_stamp,
            expiry_time: self.expiry_time,
            price: self.price,
            contract_hash: self.contract_hash,
            payee_pk: self.payee_pk,
            energy_amount: self.energy_amount,
            pk: keys.public(),
            sign: Signature::from_bytes([0; 64]),
        };
        tx.seal(keys);
        Ok(tx)
    }
}

/// Certificate of existence: a key-pool Merkle root signed by a verifier
/// meter, together with the verifier's manufacturer certificate.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Coe {
    pub root: HashDigest,
    pub vm_signature: Signature,
    pub vm_pk: PublicKey,
    pub vm_cert: Certificate,
}

impl Coe {
    pub fn signed_message(root: &HashDigest) -> Vec<u8> {
        [COE_DOMAIN, root.as_bytes()].concat()
    }

    pub fn issue(vm: &KeyPair, vm_cert: Certificate, root: HashDigest) -> Self {
        Self {
            root,
            vm_signature: vm.sign(&Self::signed_message(&root)),
            vm_pk: vm.public(),
            vm_cert,
        }
    }

    pub fn verify_signature(&self) -> bool {
        verify(&self.vm_pk, &Self::signed_message(&self.root), &self.vm_signature)
    }

    /// Verifier certified by `manufacturer_ca` and root signed by the verifier.
    pub fn verify(&self, manufacturer_ca: &PublicKey) -> bool {
        self.vm_cert.subject_pk == self.vm_pk && ca_verify(&self.vm_cert, manufacturer_ca) && self.verify_signature()
    }
}

/// Energy receipt confirmation, generated by the consumer's meter under a
/// one-time key drawn from its CoE key pool.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ErcTx {
    pub t_id: HashDigest,
    pub time_stamp: Tick,
    pub ctp_id: HashDigest,
    pub price: Coins,
    pub coe: Coe,
    pub merkle_hashes: MerkleProof,
    pub pk: PublicKey,
    pub sign: Signature,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ErcDraft {
    pub time_stamp: Tick,
    pub ctp_id: HashDigest,
    pub price: Coins,
    pub coe: Coe,
    pub merkle_hashes: MerkleProof,
}

impl ErcDraft {
    /// Signs with `leaf_keys`, whose public key becomes the ERC's identity.
    pub fn sign(self, leaf_keys: &KeyPair) -> ErcTx {
        self.sign_as(leaf_keys.public(), leaf_keys)
    }

    /// Claims `pk` as identity but signs with `keys`. Only useful for
    /// constructing forgeries in tests and attack scenarios.
    pub fn sign_as(self, pk: PublicKey, keys: &KeyPair) -> ErcTx {
        let mut tx = ErcTx {
            t_id: HashDigest::ZERO,
            time_stamp: self.time_stamp,
            ctp_id: self.ctp_id,
            price: self.price,
            coe: self.coe,
            merkle_hashes: self.merkle_hashes,
            pk,
            sign: Signature::from_bytes([0; 64]),
        };
        tx.seal(keys);
        tx
    }
}

impl ErcTx {
    pub fn coe_pk(&self) -> PublicKey {
        self.coe.vm_pk
    }
}

macro_rules! sealed_impl {
    ($ty:ty) => {
        impl $ty {
            pub(crate) fn seal(&mut self, keys: &KeyPair) {
                self.sign = keys.sign(hash_bytes(&self.body_bytes()).as_bytes());
                self.t_id = self.compute_t_id();
            }

            /// `hash(body ∥ sign)`.
            pub fn compute_t_id(&self) -> HashDigest {
                let mut w = crate::codec::Writer::new();
                w.raw(&self.body_bytes()).fixed(self.sign.as_bytes());
                hash_bytes(w.as_bytes())
            }

            pub fn signature_valid(&self) -> bool {
                verify(&self.signer(), hash_bytes(&self.body_bytes()).as_bytes(), &self.sign)
            }
        }
    };
}

sealed_impl!(SupplyEnergyTx);
sealed_impl!(NegotiationMsg);
sealed_impl!(CtpTx);
sealed_impl!(ErcTx);

impl GenesisTx {
    pub fn signature_valid(&self) -> bool {
        verify(&self.pk, hash_bytes(&self.body_bytes()).as_bytes(), &self.sign)
    }
}

/// Agreed contract. Only its hash goes on the wire.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ContractTerms {
    pub energy_amount: Kwh,
    pub unit_price: Coins,
    pub total_price: Coins,
    pub nonce: [u8; 32],
}

impl ContractTerms {
    pub fn new(energy_amount: Kwh, unit_price: Coins, nonce: [u8; 32]) -> Result<Self, TxError> {
        let total_price = energy_amount.checked_mul(unit_price).ok_or(TxError::Overflow)?;
        Ok(Self {
            energy_amount,
            unit_price,
            total_price,
            nonce,
        })
    }

    pub fn with_random_nonce<R: RngCore + CryptoRng>(
        energy_amount: Kwh,
        unit_price: Coins,
        rng: &mut R,
    ) -> Result<Self, TxError> {
        let mut nonce = [0u8; 32];
        rng.fill_bytes(&mut nonce);
        Self::new(energy_amount, unit_price, nonce)
    }
}

pub fn compute_contract_hash(terms: &ContractTerms) -> Result<HashDigest, TxError> {
    if terms.energy_amount.checked_mul(terms.unit_price) != Some(terms.total_price) {
        return Err(TxError::PriceMismatch {
            amount: terms.energy_amount,
            unit_price: terms.unit_price,
            total: terms.total_price,
        });
    }
    let mut w = crate::codec::Writer::new();
    w.u64(terms.energy_amount)
        .u64(terms.unit_price)
        .u64(terms.total_price)
        .fixed(&terms.nonce);
    Ok(hash_bytes(&w.finish()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum TxKind {
    Genesis,
    SupplyEnergy,
    Negotiation,
    Ctp,
    Erc,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Transaction {
    Genesis(GenesisTx),
    SupplyEnergy(SupplyEnergyTx),
    Negotiation(NegotiationMsg),
    Ctp(CtpTx),
    Erc(ErcTx),
}

impl Transaction {
    pub fn kind(&self) -> TxKind {
        match self {
            Self::Genesis(_) => TxKind::Genesis,
            Self::SupplyEnergy(_) => TxKind::SupplyEnergy,
            Self::Negotiation(_) => TxKind::Negotiation,
            Self::Ctp(_) => TxKind::Ctp,
            Self::Erc(_) => TxKind::Erc,
        }
    }

    pub fn id(&self) -> HashDigest {
        match self {
            Self::Genesis(tx) => tx.id(),
            Self::SupplyEnergy(tx) => tx.t_id,
            Self::Negotiation(tx) => tx.t_id,
            Self::Ctp(tx) => tx.t_id,
            Self::Erc(tx) => tx.t_id,
        }
    }

    pub fn encode(&self) -> Vec<u8> {
        encode_canonical(self)
    }

    pub fn decode(bytes: &[u8]) -> Result<Self, CodecError> {
        decode_canonical(bytes)
    }
}

macro_rules! into_tx {
    ($($variant:ident($ty:ty)),*) => {
        $(impl From<$ty> for Transaction {
            fn from(tx: $ty) -> Self {
                Transaction::$variant(tx)
            }
        })*
    };
}

into_tx!(
    Genesis(GenesisTx),
    SupplyEnergy(SupplyEnergyTx),
    Negotiation(NegotiationMsg),
    Ctp(CtpTx),
    Erc(ErcTx)
);

/// Unsigned fields of any transaction kind.
#[derive(Debug, Clone)]
pub enum TxDraft {
    Genesis { method: GenesisMethod, evidence: Vec<u8> },
    SupplyEnergy(SupplyEnergyDraft),
    Negotiation(NegotiationDraft),
    Ctp(CtpDraft),
    Erc(ErcDraft),
}

/// Signs `draft` with `keys`, filling in `pk`, `sign` and `t_id`.
pub fn build_and_sign(draft: TxDraft, keys: &KeyPair) -> Result<Transaction, TxError> {
    Ok(match draft {
        TxDraft::Genesis { method, evidence } => GenesisTx::build(method, evidence, keys)?.into(),
        TxDraft::SupplyEnergy(d) => d.sign(keys).into(),
        TxDraft::Negotiation(d) => d.sign(keys)?.into(),
        TxDraft::Ctp(d) => d.sign(keys)?.into(),
        TxDraft::Erc(d) => d.sign(keys).into(),
    })
}
