// Copyright 2026 The SPB Authors
// SPDX-License-Identifier: Apache-2.0

//! Stateless structural validation. No ledger lookups happen here.

use thiserror::Error;

use super::*;
use crate::crypto::merkle_verify;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum StructuralFault {
    #[error("decode error: {0}")]
    Decode(#[from] CodecError),
    #[error("t_id does not match transaction contents")]
    BadTxId,
    #[error("bad signature")]
    BadSignature,
    #[error("genesis evidence does not match its method")]
    BadEvidence,
    #[error("expiry time not after time stamp")]
    ExpiryNotAfterTimestamp,
    #[error("negotiation round is zero")]
    ZeroRound,
    #[error("bad inclusion proof")]
    BadInclusionProof,
}

/// Field invariants first, then the signature, then the `t_id` recomputation.
pub fn check_structure(tx: &Transaction) -> Result<(), StructuralFault> {
    match tx {
        Transaction::Genesis(t) => {
            let evidence_ok = match t.method {
                GenesisMethod::CoinBurn => t.burned_amount().is_some(),
                GenesisMethod::AuthorityCertificate => t.certificate().is_some_and(|c| c.subject_pk == t.pk),
            };
            if !evidence_ok {
                return Err(StructuralFault::BadEvidence);
            }
            if !t.signature_valid() {
                return Err(StructuralFault::BadSignature);
            }
            Ok(())
        }
        Transaction::SupplyEnergy(t) => sealed(t.signature_valid(), t.compute_t_id() == t.t_id),
        Transaction::Negotiation(t) => {
            if t.round == 0 {
                return Err(StructuralFault::ZeroRound);
            }
            sealed(t.signature_valid(), t.compute_t_id() == t.t_id)
        }
        Transaction::Ctp(t) => {
            if t.expiry_time <= t.time_stamp {
                return Err(StructuralFault::ExpiryNotAfterTimestamp);
            }
            sealed(t.signature_valid(), t.compute_t_id() == t.t_id)
        }
        Transaction::Erc(t) => {
            if !merkle_verify(&t.coe.root, t.pk.as_bytes(), &t.merkle_hashes) {
                return Err(StructuralFault::BadInclusionProof);
            }
            sealed(t.signature_valid(), t.compute_t_id() == t.t_id)
        }
    }
}

fn sealed(signature_ok: bool, id_ok: bool) -> Result<(), StructuralFault> {
    if !signature_ok {
        Err(StructuralFault::BadSignature)
    } else if !id_ok {
        Err(StructuralFault::BadTxId)
    } else {
        Ok(())
    }
}

/// Decodes arbitrary bytes and checks the result. Never panics.
pub fn check_encoded(bytes: &[u8]) -> Result<Transaction, StructuralFault> {
    let tx = decode_canonical(bytes)?;
    check_structure(&tx)?;
    Ok(tx)
}
