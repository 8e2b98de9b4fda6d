// Copyright 2026 The SPB Authors
// SPDX-License-Identifier: Apache-2.0

//! Canonical encoding: one tag byte, then every field in protocol order as a
//! 4-byte big-endian length followed by the value. The same bytes are used on
//! the wire, in blocks, and for hashing.

use super::*;
use crate::codec::{Reader, Writer};

fn write_coe(w: &mut Writer, coe: &Coe) {
    let mut inner = Writer::new();
    inner.fixed(coe.root.as_bytes()).fixed(coe.vm_signature.as_bytes());
    coe.vm_cert.encode_into(&mut inner);
    w.fixed(inner.as_bytes());
}

fn read_coe(bytes: &[u8], vm_pk: PublicKey) -> Result<Coe, CodecError> {
    let mut r = Reader::new(bytes);
    let coe = Coe {
        root: HashDigest::from_bytes(r.array()?),
        vm_signature: Signature::from_bytes(r.array()?),
        vm_pk,
        vm_cert: Certificate::decode_from(&mut r)?,
    };
    r.finish()?;
    Ok(coe)
}

impl Coe {
    /// Standalone form: the ERC's CoE field followed by the verifier key.
    pub fn encode(&self) -> Vec<u8> {
        let mut w = Writer::new();
        write_coe(&mut w, self);
        w.fixed(self.vm_pk.as_bytes());
        w.finish()
    }

    pub fn decode(bytes: &[u8]) -> Result<Self, CodecError> {
        let mut r = Reader::new(bytes);
        let inner = r.field()?;
        let vm_pk = PublicKey::from_bytes(r.array()?);
        r.finish()?;
        read_coe(inner, vm_pk)
    }
}

impl GenesisTx {
    pub(crate) fn body_bytes(&self) -> Vec<u8> {
        let mut w = Writer::with_tag(TAG_GENESIS);
        w.u8(match self.method {
            GenesisMethod::CoinBurn => 0,
            GenesisMethod::AuthorityCertificate => 1,
        })
        .fixed(&self.evidence)
        .fixed(self.pk.as_bytes());
        w.finish()
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut w = Writer::new();
        w.raw(&self.body_bytes()).fixed(self.sign.as_bytes());
        w.finish()
    }

    fn decode_fields(r: &mut Reader<'_>) -> Result<Self, CodecError> {
        let method = match r.u8()? {
            0 => GenesisMethod::CoinBurn,
            1 => GenesisMethod::AuthorityCertificate,
            _ => return Err(CodecError::BadValue("genesis method")),
        };
        Ok(Self {
            method,
            evidence: r.field()?.to_vec(),
            pk: PublicKey::from_bytes(r.array()?),
            sign: Signature::from_bytes(r.array()?),
        })
    }
}

impl SupplyEnergyTx {
    pub(crate) fn signer(&self) -> PublicKey {
        self.pk
    }

    fn fields(&self, w: &mut Writer) {
        w.fixed(self.p_t_id.as_bytes())
            .u64(self.energy_amount)
            .u64(self.energy_price)
            .u8(self.negotiable as u8)
            .fixed(self.pk.as_bytes());
    }

    fn decode_fields(r: &mut Reader<'_>) -> Result<Self, CodecError> {
        Ok(Self {
            t_id: HashDigest::from_bytes(r.array()?),
            p_t_id: HashDigest::from_bytes(r.array()?),
            energy_amount: r.u64()?,
            energy_price: r.u64()?,
            negotiable: r.bool()?,
            pk: PublicKey::from_bytes(r.array()?),
            sign: Signature::from_bytes(r.array()?),
        })
    }
}

impl NegotiationMsg {
    pub(crate) fn signer(&self) -> PublicKey {
        self.sender_pk
    }

    fn fields(&self, w: &mut Writer) {
        w.fixed(self.dest_pk.as_bytes())
            .u64(self.price)
            .u8(self.status.bit())
            .u32(self.round)
            .u64(self.energy_amount)
            .fixed(&self.nonce)
            .fixed(self.sender_pk.as_bytes());
    }

    fn decode_fields(r: &mut Reader<'_>) -> Result<Self, CodecError> {
        Ok(Self {
            t_id: HashDigest::from_bytes(r.array()?),
            dest_pk: PublicKey::from_bytes(r.array()?),
            price: r.u64()?,
            status: match r.u8()? {
                0 => NegotiationStatus::Counter,
                1 => NegotiationStatus::Accept,
                _ => return Err(CodecError::BadValue("negotiation status")),
            },
            round: r.u32()?,
            energy_amount: r.u64()?,
            nonce: r.array()?,
            sender_pk: PublicKey::from_bytes(r.array()?),
            sign: Signature::from_bytes(r.array()?),
        })
    }
}

impl CtpTx {
    pub(crate) fn signer(&self) -> PublicKey {
        self.pk
    }

    fn fields(&self, w: &mut Writer) {
        w.u64(self.time_stamp)
            .u64(self.expiry_time)
            .u64(self.price)
            .fixed(self.contract_hash.as_bytes())
            .fixed(self.payee_pk.as_bytes())
            .u64(self.energy_amount)
            .fixed(self.pk.as_bytes());
    }

    fn decode_fields(r: &mut Reader<'_>) -> Result<Self, CodecError> {
        Ok(Self {
            t_id: HashDigest::from_bytes(r.array()?),
            time_stamp: r.u64()?,
            expiry_time: r.u64()?,
            price: r.u64()?,
            contract_hash: HashDigest::from_bytes(r.array()?),
            payee_pk: PublicKey::from_bytes(r.array()?),
            energy_amount: r.u64()?,
            pk: PublicKey::from_bytes(r.array()?),
            sign: Signature::from_bytes(r.array()?),
        })
    }
}

impl ErcTx {
    pub(crate) fn signer(&self) -> PublicKey {
        self.pk
    }

    fn fields(&self, w: &mut Writer) {
        w.u64(self.time_stamp).fixed(self.ctp_id.as_bytes()).u64(self.price);
        write_coe(w, &self.coe);
        w.fixed(self.coe.vm_pk.as_bytes())
            .fixed(&self.merkle_hashes.encode())
            .fixed(self.pk.as_bytes());
    }

    fn decode_fields(r: &mut Reader<'_>) -> Result<Self, CodecError> {
        let t_id = HashDigest::from_bytes(r.array()?);
        let time_stamp = r.u64()?;
        let ctp_id = HashDigest::from_bytes(r.array()?);
        let price = r.u64()?;
        let coe_bytes = r.field()?;
        let coe_pk = PublicKey::from_bytes(r.array()?);
        let coe = read_coe(coe_bytes, coe_pk)?;
        let merkle_hashes = MerkleProof::decode(r.field()?)?;
        Ok(Self {
            t_id,
            time_stamp,
            ctp_id,
            price,
            coe,
            merkle_hashes,
            pk: PublicKey::from_bytes(r.array()?),
            sign: Signature::from_bytes(r.array()?),
        })
    }
}

macro_rules! tagged_codec {
    ($ty:ty, $tag:expr) => {
        impl $ty {
            /// Canonical encoding without `t_id` and `sign`; the signed payload.
            pub(crate) fn body_bytes(&self) -> Vec<u8> {
                let mut w = Writer::with_tag($tag);
                self.fields(&mut w);
                w.finish()
            }

            pub fn encode(&self) -> Vec<u8> {
                let mut w = Writer::with_tag($tag);
                w.fixed(self.t_id.as_bytes());
                self.fields(&mut w);
                w.fixed(self.sign.as_bytes());
                w.finish()
            }
        }
    };
}

tagged_codec!(SupplyEnergyTx, TAG_SUPPLY);
tagged_codec!(NegotiationMsg, TAG_NEGOTIATION);
tagged_codec!(CtpTx, TAG_CTP);
tagged_codec!(ErcTx, TAG_ERC);

pub fn encode_canonical(tx: &Transaction) -> Vec<u8> {
    match tx {
        Transaction::Genesis(t) => t.encode(),
        Transaction::SupplyEnergy(t) => t.encode(),
        Transaction::Negotiation(t) => t.encode(),
        Transaction::Ctp(t) => t.encode(),
        Transaction::Erc(t) => t.encode(),
    }
}

pub fn decode_canonical(bytes: &[u8]) -> Result<Transaction, CodecError> {
    let mut r = Reader::new(bytes);
    let tx = match r.tag()? {
        TAG_GENESIS => GenesisTx::decode_fields(&mut r)?.into(),
        TAG_SUPPLY => SupplyEnergyTx::decode_fields(&mut r)?.into(),
        TAG_NEGOTIATION => NegotiationMsg::decode_fields(&mut r)?.into(),
        TAG_CTP => CtpTx::decode_fields(&mut r)?.into(),
        TAG_ERC => ErcTx::decode_fields(&mut r)?.into(),
        other => return Err(CodecError::UnknownTag(other)),
    };
    r.finish()?;
    Ok(tx)
}

/// Hex dump of the canonical encoding, for golden files.
pub fn encode_hex(tx: &Transaction) -> String {
    hex::encode(encode_canonical(tx))
}

pub fn decode_hex(s: &str) -> Result<Transaction, CodecError> {
    let bytes = hex::decode(s.trim()).map_err(|_| CodecError::BadValue("hex string"))?;
    decode_canonical(&bytes)
}
