// Copyright 2026 The SPB Authors
// SPDX-License-Identifier: Apache-2.0

//! Tamper-resistant smart meter.
//!
//! A meter holds a manufacturer-certified identity key and a pool of
//! anonymous ERC keys. The pool's Merkle root is certified by another,
//! randomly chosen meter (the verifier), which yields a CoE. Each ERC is
//! signed by a fresh pool key and proves that key's membership in the root.

use std::collections::BTreeMap;

use rand::{CryptoRng, RngCore};
use thiserror::Error;

use crate::codec::{CodecError, Reader, Writer};
use crate::crypto::{
    asym_decrypt, asym_encrypt, ca_verify, hash_bytes, verify, AsymCiphertext, Certificate, CryptoError, HashDigest,
    KeyPair, MerkleProof, MerkleTree, PublicKey, Signature,
};
use crate::tx::{compute_contract_hash, Coe, ContractTerms, CtpTx, ErcDraft, ErcTx, Kwh, Tick};

pub const TAG_VERIFICATION_REQUEST: u8 = 0x30;
/// A verifier's reply: the CoE it issued.
pub const TAG_COE_GRANT: u8 = 0x31;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MeterError {
    #[error("key pool must hold at least one key")]
    EmptyPool,
    #[error("not a meter")]
    NotAMeter,
    #[error("bad request signature")]
    BadRequestSignature,
    #[error("decryption failure")]
    DecryptionFailure,
    #[error("CoE does not certify this meter's pool")]
    CoeMismatch,
    #[error("no CoE installed")]
    NoCoe,
    #[error("pool exhausted: regenerate keys and CoE")]
    PoolExhausted,
    #[error("contract hash does not match the CTP")]
    ContractMismatch,
    #[error("unknown contract")]
    UnknownContract,
    #[error("delivery incomplete: {delivered} of {expected} kWh")]
    Incomplete { delivered: Kwh, expected: Kwh },
    #[error("CTP expired at {expiry}")]
    Expired { expiry: Tick },
    #[error("receipt already issued")]
    AlreadyConfirmed,
    #[error(transparent)]
    Crypto(#[from] CryptoError),
    #[error(transparent)]
    Codec(#[from] CodecError),
}

/// Manufacturer-certified meter key (M-PK).
#[derive(Debug, Clone)]
pub struct MeterIdentity {
    pub keys: KeyPair,
    pub manufacturer_cert: Certificate,
}

impl MeterIdentity {
    pub fn provision<R: RngCore + CryptoRng>(manufacturer: &KeyPair, rng: &mut R) -> Self {
        let keys = KeyPair::generate(rng);
        let manufacturer_cert = Certificate::issue(manufacturer, keys.public());
        Self { keys, manufacturer_cert }
    }

    pub fn public(&self) -> PublicKey {
        self.keys.public()
    }
}

/// Anonymous ERC keys and the Merkle tree over their public halves. Keys are
/// handed out lowest index first and never reused.
#[derive(Debug, Clone)]
pub struct KeyPool {
    keys: Vec<KeyPair>,
    tree: MerkleTree,
    next: usize,
}

pub fn generate_key_pool<R: RngCore + CryptoRng>(n: usize, rng: &mut R) -> Result<KeyPool, MeterError> {
    if n == 0 {
        return Err(MeterError::EmptyPool);
    }
    let keys: Vec<KeyPair> = (0..n).map(|_| KeyPair::generate(rng)).collect();
    let leaves: Vec<PublicKey> = keys.iter().map(KeyPair::public).collect();
    let tree = MerkleTree::build(&leaves)?;
    Ok(KeyPool { keys, tree, next: 0 })
}

impl KeyPool {
    pub fn root(&self) -> HashDigest {
        self.tree.root()
    }

    pub fn len(&self) -> usize {
        self.keys.len()
    }

    pub fn is_empty(&self) -> bool {
        self.keys.is_empty()
    }

    pub fn remaining(&self) -> usize {
        self.keys.len() - self.next
    }

    /// Public keys already revealed in issued receipts.
    pub fn revealed(&self) -> impl Iterator<Item = PublicKey> + '_ {
        self.keys[..self.next].iter().map(KeyPair::public)
    }

    fn take(&mut self) -> Option<(&KeyPair, MerkleProof)> {
        let i = self.next;
        let keys = self.keys.get(i)?;
        self.next += 1;
        let proof = self.tree.prove(i).expect("index below leaf count");
        Some((keys, proof))
    }
}

/// VR: the pool root encrypted to the verifier, sent with the requester's
/// certified identity and signed by it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VerificationRequest {
    pub encrypted_root: AsymCiphertext,
    pub requester_mpk: PublicKey,
    pub requester_cert: Certificate,
    pub sign: Signature,
}

impl VerificationRequest {
    fn signed_digest(encrypted_root: &AsymCiphertext, requester_mpk: &PublicKey) -> HashDigest {
        let mut w = Writer::with_tag(TAG_VERIFICATION_REQUEST);
        encrypted_root.encode_into(&mut w).expect("ciphertext of a 32-byte root");
        w.fixed(requester_mpk.as_bytes());
        hash_bytes(w.as_bytes())
    }

    pub fn build<R: RngCore + CryptoRng>(
        requester: &MeterIdentity,
        root: &HashDigest,
        verifier_mpk: &PublicKey,
        rng: &mut R,
    ) -> Result<Self, MeterError> {
        let encrypted_root = asym_encrypt(verifier_mpk, root.as_bytes(), rng)?;
        let requester_mpk = requester.public();
        let digest = Self::signed_digest(&encrypted_root, &requester_mpk);
        Ok(Self {
            sign: requester.keys.sign(digest.as_bytes()),
            encrypted_root,
            requester_mpk,
            requester_cert: requester.manufacturer_cert,
        })
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut w = Writer::with_tag(TAG_VERIFICATION_REQUEST);
        self.encrypted_root.encode_into(&mut w).expect("ciphertext of a 32-byte root");
        w.fixed(self.requester_mpk.as_bytes())
            .fixed(&self.requester_cert.encode())
            .fixed(self.sign.as_bytes());
        w.finish()
    }

    pub fn decode(bytes: &[u8]) -> Result<Self, CodecError> {
        let mut r = Reader::new(bytes);
        let tag = r.tag()?;
        if tag != TAG_VERIFICATION_REQUEST {
            return Err(CodecError::UnknownTag(tag));
        }
        let encrypted_root = AsymCiphertext::decode_from(&mut r)?;
        let requester_mpk = PublicKey::from_bytes(r.array()?);
        let requester_cert = Certificate::decode(r.field()?)?;
        let sign = Signature::from_bytes(r.array()?);
        r.finish()?;
        Ok(Self {
            encrypted_root,
            requester_mpk,
            requester_cert,
            sign,
        })
    }
}

/// Verifier side: authenticate the requester as a genuine meter, recover the
/// root and certify it.
pub fn vm_process_request(
    vm: &MeterIdentity,
    req: &VerificationRequest,
    manufacturer_ca: &PublicKey,
) -> Result<Coe, MeterError> {
    if req.requester_cert.subject_pk != req.requester_mpk || !ca_verify(&req.requester_cert, manufacturer_ca) {
        return Err(MeterError::NotAMeter);
    }
    let digest = VerificationRequest::signed_digest(&req.encrypted_root, &req.requester_mpk);
    if !verify(&req.requester_mpk, digest.as_bytes(), &req.sign) {
        return Err(MeterError::BadRequestSignature);
    }
    let plain = asym_decrypt(&vm.keys, &req.encrypted_root).map_err(|_| MeterError::DecryptionFailure)?;
    let root: [u8; 32] = plain.try_into().map_err(|_| MeterError::DecryptionFailure)?;
    Ok(Coe::issue(&vm.keys, vm.manufacturer_cert, HashDigest::from_bytes(root)))
}

pub fn encode_coe_grant(coe: &Coe) -> Vec<u8> {
    let mut w = Writer::with_tag(TAG_COE_GRANT);
    w.raw(&coe.encode());
    w.finish()
}

pub fn decode_coe_grant(bytes: &[u8]) -> Result<Coe, CodecError> {
    match bytes.split_first() {
        Some((&TAG_COE_GRANT, rest)) => Coe::decode(rest),
        Some((&tag, _)) => Err(CodecError::UnknownTag(tag)),
        None => Err(CodecError::Truncated),
    }
}

#[derive(Debug, Clone)]
struct Contract {
    ctp_id: HashDigest,
    price: u64,
    expiry: Tick,
    expected: Kwh,
    delivered: Kwh,
    confirmed: bool,
}

/// A consumer-side meter: records deliveries against accepted contracts and
/// emits an ERC once a contract's energy has fully arrived.
#[derive(Debug, Clone)]
pub struct SmartMeter {
    identity: MeterIdentity,
    pool: KeyPool,
    coe: Option<Coe>,
    contracts: BTreeMap<HashDigest, Contract>,
    energy_received: Kwh,
}

impl SmartMeter {
    pub fn new(identity: MeterIdentity, pool: KeyPool) -> Self {
        Self {
            identity,
            pool,
            coe: None,
            contracts: BTreeMap::new(),
            energy_received: 0,
        }
    }

    pub fn identity(&self) -> &MeterIdentity {
        &self.identity
    }

    pub fn pool(&self) -> &KeyPool {
        &self.pool
    }

    pub fn coe(&self) -> Option<&Coe> {
        self.coe.as_ref()
    }

    pub fn energy_received(&self) -> Kwh {
        self.energy_received
    }

    pub fn request_coe<R: RngCore + CryptoRng>(
        &self,
        verifier_mpk: &PublicKey,
        rng: &mut R,
    ) -> Result<VerificationRequest, MeterError> {
        VerificationRequest::build(&self.identity, &self.pool.root(), verifier_mpk, rng)
    }

    pub fn install_coe(&mut self, coe: Coe, manufacturer_ca: &PublicKey) -> Result<(), MeterError> {
        if coe.root != self.pool.root() || !coe.verify(manufacturer_ca) {
            return Err(MeterError::CoeMismatch);
        }
        self.coe = Some(coe);
        Ok(())
    }

    /// Replaces an exhausted pool. The old CoE no longer applies.
    pub fn rotate_pool(&mut self, pool: KeyPool) {
        self.pool = pool;
        self.coe = None;
    }

    /// Arms the meter for a contract whose CTP commits to `terms`.
    pub fn expect_delivery(&mut self, ctp: &CtpTx, terms: &ContractTerms) -> Result<(), MeterError> {
        let hash = compute_contract_hash(terms).map_err(|_| MeterError::ContractMismatch)?;
        if hash != ctp.contract_hash || terms.total_price != ctp.price || terms.energy_amount != ctp.energy_amount {
            return Err(MeterError::ContractMismatch);
        }
        self.contracts.entry(ctp.t_id).or_insert(Contract {
            ctp_id: ctp.t_id,
            price: ctp.price,
            expiry: ctp.expiry_time,
            expected: terms.energy_amount,
            delivered: 0,
            confirmed: false,
        });
        Ok(())
    }

    /// Counts `kwh` toward the contract and returns its running total.
    /// Energy beyond the contracted amount is metered but not owed anything.
    pub fn record_delivery(&mut self, ctp_id: &HashDigest, kwh: Kwh) -> Result<Kwh, MeterError> {
        let c = self.contracts.get_mut(ctp_id).ok_or(MeterError::UnknownContract)?;
        c.delivered = c.delivered.saturating_add(kwh);
        self.energy_received = self.energy_received.saturating_add(kwh);
        Ok(c.delivered)
    }

    pub fn delivered(&self, ctp_id: &HashDigest) -> Option<Kwh> {
        self.contracts.get(ctp_id).map(|c| c.delivered)
    }

    pub fn is_complete(&self, ctp_id: &HashDigest) -> bool {
        self.contracts.get(ctp_id).is_some_and(|c| c.delivered >= c.expected)
    }

    /// Signs a receipt with the next unused pool key.
    pub fn generate_erc(&mut self, ctp_id: &HashDigest, now: Tick) -> Result<ErcTx, MeterError> {
        let c = self.contracts.get(ctp_id).ok_or(MeterError::UnknownContract)?;
        if c.confirmed {
            return Err(MeterError::AlreadyConfirmed);
        }
        if c.delivered < c.expected {
            return Err(MeterError::Incomplete {
                delivered: c.delivered,
                expected: c.expected,
            });
        }
        if now >= c.expiry {
            return Err(MeterError::Expired { expiry: c.expiry });
        }
        let coe = self.coe.clone().ok_or(MeterError::NoCoe)?;
        let (ctp_id, price) = (c.ctp_id, c.price);
        let (keys, proof) = self.pool.take().ok_or(MeterError::PoolExhausted)?;
        let erc = ErcDraft {
            time_stamp: now,
            ctp_id,
            price,
            coe,
            merkle_hashes: proof,
        }
        .sign(keys);
        self.contracts.get_mut(&ctp_id).unwrap().confirmed = true;
        Ok(erc)
    }
}
