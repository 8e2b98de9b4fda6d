// Copyright 2026 The SPB Authors
// SPDX-License-Identifier: Apache-2.0

//! Encrypt-to-public-key: ephemeral X25519 against the recipient's Montgomery
//! key, HKDF-SHA256 key derivation and ChaCha20-Poly1305.

use chacha20poly1305::aead::{Aead, KeyInit};
use chacha20poly1305::{ChaCha20Poly1305, Key, Nonce};
use ed25519_dalek::VerifyingKey;
use hkdf::Hkdf;
use rand::{CryptoRng, RngCore};
use sha2::Sha256;
use x25519_dalek::{PublicKey as DhPublic, StaticSecret};

use super::{CryptoError, KeyPair, PublicKey};
use crate::codec::{CodecError, Reader, Writer};

const KDF_INFO: &[u8] = b"spb/asym/v1";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AsymCiphertext {
    pub recipient_pk: PublicKey,
    /// Ephemeral X25519 key (32 bytes) followed by the AEAD ciphertext and tag.
    pub payload: Vec<u8>,
}

impl AsymCiphertext {
    pub fn encode_into(&self, w: &mut Writer) -> Result<(), CodecError> {
        w.fixed(self.recipient_pk.as_bytes()).field(&self.payload)?;
        Ok(())
    }

    pub fn decode_from(r: &mut Reader<'_>) -> Result<Self, CodecError> {
        Ok(Self {
            recipient_pk: PublicKey::from_bytes(r.array()?),
            payload: r.field()?.to_vec(),
        })
    }
}

fn recipient_dh_key(pk: &PublicKey) -> Result<DhPublic, CryptoError> {
    let vk = VerifyingKey::from_bytes(pk.as_bytes()).map_err(|_| CryptoError::InvalidPublicKey)?;
    Ok(DhPublic::from(vk.to_montgomery().to_bytes()))
}

fn cipher(shared: &[u8; 32], ephemeral: &[u8; 32], recipient: &PublicKey) -> ChaCha20Poly1305 {
    let salt = [ephemeral.as_slice(), recipient.as_bytes()].concat();
    let mut key = [0u8; 32];
    Hkdf::<Sha256>::new(Some(&salt), shared)
        .expand(KDF_INFO, &mut key)
        .expect("32 bytes is a valid HKDF-SHA256 output length");
    ChaCha20Poly1305::new(Key::from_slice(&key))
}

pub fn asym_encrypt<R: RngCore + CryptoRng>(
    pk: &PublicKey,
    plaintext: &[u8],
    rng: &mut R,
) -> Result<AsymCiphertext, CryptoError> {
    let recipient = recipient_dh_key(pk)?;
    let eph = StaticSecret::random_from_rng(rng);
    let eph_pub = DhPublic::from(&eph).to_bytes();
    let shared = eph.diffie_hellman(&recipient);
    if !shared.was_contributory() {
        return Err(CryptoError::InvalidPublicKey);
    }
    // Each message uses a fresh key, so a constant nonce is safe.
    let body = cipher(shared.as_bytes(), &eph_pub, pk)
        .encrypt(Nonce::from_slice(&[0u8; 12]), plaintext)
        .map_err(|_| CryptoError::InvalidPublicKey)?;
    let mut payload = eph_pub.to_vec();
    payload.extend_from_slice(&body);
    Ok(AsymCiphertext {
        recipient_pk: *pk,
        payload,
    })
}

pub fn asym_decrypt(keys: &KeyPair, ct: &AsymCiphertext) -> Result<Vec<u8>, CryptoError> {
    if ct.payload.len() < 32 || ct.recipient_pk != keys.public() {
        return Err(CryptoError::DecryptionFailure);
    }
    let eph: [u8; 32] = ct.payload[..32].try_into().unwrap();
    let shared = keys.dh_secret().diffie_hellman(&DhPublic::from(eph));
    if !shared.was_contributory() {
        return Err(CryptoError::DecryptionFailure);
    }
    cipher(shared.as_bytes(), &eph, &ct.recipient_pk)
        .decrypt(Nonce::from_slice(&[0u8; 12]), &ct.payload[32..])
        .map_err(|_| CryptoError::DecryptionFailure)
}
