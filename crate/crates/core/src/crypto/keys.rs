// Copyright 2026 The SPB Authors
// SPDX-License-Identifier: Apache-2.0

use ed25519_dalek::{Signer, SigningKey, VerifyingKey};
use rand::{CryptoRng, RngCore};
use std::fmt;

use crate::codec::{CodecError, Reader, Writer};

const CERT_DOMAIN: &[u8] = b"spb/certificate/v1";

/// 32-byte Ed25519 public key. Used both as an account identity and as an
/// encryption target (via its Montgomery form).
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct PublicKey([u8; 32]);

impl PublicKey {
    pub const LEN: usize = 32;

    pub const fn from_bytes(bytes: [u8; 32]) -> Self {
        Self(bytes)
    }

    pub fn as_bytes(&self) -> &[u8; 32] {
        &self.0
    }

    pub fn to_hex(&self) -> String {
        hex::encode(self.0)
    }
}

impl AsRef<[u8]> for PublicKey {
    fn as_ref(&self) -> &[u8] {
        &self.0
    }
}

impl fmt::Debug for PublicKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "PublicKey({})", &self.to_hex()[..12])
    }
}

/// 64-byte Ed25519 signature.
#[derive(Clone, Copy, PartialEq, Eq, Hash)]
pub struct Signature([u8; 64]);

impl Signature {
    pub const LEN: usize = 64;

    pub const fn from_bytes(bytes: [u8; 64]) -> Self {
        Self(bytes)
    }

    pub fn as_bytes(&self) -> &[u8; 64] {
        &self.0
    }
}

impl fmt::Debug for Signature {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Signature({}..)", hex::encode(&self.0[..6]))
    }
}

/// Ed25519 signing key. Signing is deterministic (RFC 8032), so simulator runs
/// reproduce bit-for-bit under a fixed seed.
#[derive(Clone)]
pub struct KeyPair {
    signing: SigningKey,
    public: PublicKey,
}

impl KeyPair {
    pub fn generate<R: RngCore + CryptoRng>(rng: &mut R) -> Self {
        let signing = SigningKey::generate(rng);
        let public = PublicKey(signing.verifying_key().to_bytes());
        Self { signing, public }
    }

    pub fn public(&self) -> PublicKey {
        self.public
    }

    pub fn sign(&self, message: &[u8]) -> Signature {
        Signature(self.signing.sign(message).to_bytes())
    }

    /// X25519 secret matching the Montgomery form of the public key.
    pub(crate) fn dh_secret(&self) -> x25519_dalek::StaticSecret {
        x25519_dalek::StaticSecret::from(self.signing.to_scalar_bytes())
    }
}

impl fmt::Debug for KeyPair {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("KeyPair").field("public", &self.public).finish_non_exhaustive()
    }
}

/// Total: malformed keys or signatures yield `false`.
pub fn verify(pk: &PublicKey, message: &[u8], sig: &Signature) -> bool {
    let Ok(key) = VerifyingKey::from_bytes(&pk.0) else {
        return false;
    };
    let sig = ed25519_dalek::Signature::from_bytes(&sig.0);
    key.verify_strict(message, &sig).is_ok()
}

/// A CA signature binding `subject_pk` to `issuer_pk`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Certificate {
    pub subject_pk: PublicKey,
    pub issuer_pk: PublicKey,
    pub signature: Signature,
}

impl Certificate {
    pub fn issue(issuer: &KeyPair, subject_pk: PublicKey) -> Self {
        Self {
            subject_pk,
            issuer_pk: issuer.public(),
            signature: issuer.sign(&Self::signed_message(&subject_pk)),
        }
    }

    fn signed_message(subject: &PublicKey) -> Vec<u8> {
        [CERT_DOMAIN, subject.as_bytes()].concat()
    }

    pub fn encode_into(&self, w: &mut Writer) {
        w.fixed(self.subject_pk.as_bytes())
            .fixed(self.issuer_pk.as_bytes())
            .fixed(self.signature.as_bytes());
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut w = Writer::new();
        self.encode_into(&mut w);
        w.finish()
    }

    pub fn decode_from(r: &mut Reader<'_>) -> Result<Self, CodecError> {
        Ok(Self {
            subject_pk: PublicKey(r.array()?),
            issuer_pk: PublicKey(r.array()?),
            signature: Signature(r.array()?),
        })
    }

    pub fn decode(bytes: &[u8]) -> Result<Self, CodecError> {
        let mut r = Reader::new(bytes);
        let cert = Self::decode_from(&mut r)?;
        r.finish()?;
        Ok(cert)
    }
}

pub fn ca_verify(cert: &Certificate, ca_pk: &PublicKey) -> bool {
    cert.issuer_pk == *ca_pk
        && verify(
            ca_pk,
            &Certificate::signed_message(&cert.subject_pk),
            &cert.signature,
        )
}

/// [`ca_verify`] over an encoded certificate; malformed bytes are rejected.
pub fn ca_verify_encoded(cert: &[u8], ca_pk: &PublicKey) -> bool {
    Certificate::decode(cert).is_ok_and(|c| ca_verify(&c, ca_pk))
}
