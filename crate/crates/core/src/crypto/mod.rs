// Copyright 2026 The SPB Authors
// SPDX-License-Identifier: Apache-2.0

//! Hashing, signatures, manufacturer certificates, encrypt-to-key and Merkle
//! trees. Every other module builds on these primitives.
//!
//! Byte lengths are fixed: digests are 32 bytes (SHA-256), public keys are
//! 32-byte Ed25519 points and signatures are 64 bytes.

mod asym;
mod hash;
mod keys;
mod merkle;

pub use asym::{asym_decrypt, asym_encrypt, AsymCiphertext};
pub use hash::{hash_bytes, hash_parts, HashDigest};
pub use keys::{ca_verify, ca_verify_encoded, verify, Certificate, KeyPair, PublicKey, Signature};
pub use merkle::{merkle_verify, MerkleProof, MerkleTree, Side};

use crate::codec::CodecError;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CryptoError {
    #[error("empty tree")]
    EmptyTree,
    #[error("leaf index {index} out of range for {len} leaves")]
    IndexOutOfRange { index: usize, len: usize },
    #[error("public key is not a valid curve point")]
    InvalidPublicKey,
    #[error("decryption failure")]
    DecryptionFailure,
    #[error(transparent)]
    Codec(#[from] CodecError),
}
