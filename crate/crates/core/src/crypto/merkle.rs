// Copyright 2026 The SPB Authors
// SPDX-License-Identifier: Apache-2.0

use super::{hash_bytes, hash_parts, CryptoError, HashDigest};
use crate::codec::CodecError;

/// Position of a sibling relative to the running hash.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    Left,
    Right,
}

/// Binary hash tree over pre-hashed leaves.
///
/// `levels[0]` holds `hash_bytes(leaf)` for each leaf in order and the last
/// level holds only the root. A node without a partner is paired with a copy
/// of itself, so even a single leaf yields a tree of height one.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MerkleTree {
    levels: Vec<Vec<HashDigest>>,
}

fn node(left: &HashDigest, right: &HashDigest) -> HashDigest {
    hash_parts(&[left.as_bytes(), right.as_bytes()])
}

impl MerkleTree {
    pub fn build<L: AsRef<[u8]>>(leaves: &[L]) -> Result<Self, CryptoError> {
        if leaves.is_empty() {
            return Err(CryptoError::EmptyTree);
        }
        let mut levels = vec![leaves.iter().map(|l| hash_bytes(l.as_ref())).collect::<Vec<_>>()];
        loop {
            let cur = levels.last().unwrap();
            let next: Vec<_> = cur
                .chunks(2)
                .map(|pair| node(&pair[0], pair.get(1).unwrap_or(&pair[0])))
                .collect();
            let done = next.len() == 1;
            levels.push(next);
            if done {
                break;
            }
        }
        Ok(Self { levels })
    }

    pub fn root(&self) -> HashDigest {
        self.levels.last().unwrap()[0]
    }

    pub fn leaf_count(&self) -> usize {
        self.levels[0].len()
    }

    pub fn height(&self) -> usize {
        self.levels.len() - 1
    }

    pub fn leaf_digests(&self) -> &[HashDigest] {
        &self.levels[0]
    }

    pub fn prove(&self, index: usize) -> Result<MerkleProof, CryptoError> {
        let len = self.leaf_count();
        if index >= len {
            return Err(CryptoError::IndexOutOfRange { index, len });
        }
        let mut siblings = Vec::with_capacity(self.height());
        let mut i = index;
        for level in &self.levels[..self.height()] {
            let entry = if i.is_multiple_of(2) {
                (*level.get(i + 1).unwrap_or(&level[i]), Side::Right)
            } else {
                (level[i - 1], Side::Left)
            };
            siblings.push(entry);
            i /= 2;
        }
        Ok(MerkleProof {
            leaf_index: index as u32,
            siblings,
        })
    }
}

/// Audit path from a leaf to the root.
///
/// Serialized as `leaf_index` (4-byte big-endian), sibling count (1 byte),
/// then per sibling a side byte (0 = left, 1 = right) and the 32-byte digest.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MerkleProof {
    pub leaf_index: u32,
    pub siblings: Vec<(HashDigest, Side)>,
}

impl MerkleProof {
    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(5 + 33 * self.siblings.len());
        out.extend_from_slice(&self.leaf_index.to_be_bytes());
        out.push(self.siblings.len() as u8);
        for (digest, side) in &self.siblings {
            out.push(match side {
                Side::Left => 0,
                Side::Right => 1,
            });
            out.extend_from_slice(digest.as_bytes());
        }
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Self, CodecError> {
        if bytes.len() < 5 {
            return Err(CodecError::Truncated);
        }
        let leaf_index = u32::from_be_bytes(bytes[..4].try_into().unwrap());
        let count = bytes[4] as usize;
        let body = &bytes[5..];
        if body.len() != count * 33 {
            return Err(CodecError::BadLength {
                expected: count * 33,
                got: body.len(),
            });
        }
        let siblings = body
            .chunks_exact(33)
            .map(|c| {
                let side = match c[0] {
                    0 => Side::Left,
                    1 => Side::Right,
                    _ => return Err(CodecError::BadValue("merkle sibling side")),
                };
                Ok((HashDigest::from_bytes(c[1..].try_into().unwrap()), side))
            })
            .collect::<Result<_, _>>()?;
        Ok(Self {
            leaf_index,
            siblings,
        })
    }
}

/// Folds `hash_bytes(leaf)` through the proof and compares with `root`.
///
/// Sibling sides must agree with the bits of `leaf_index`, so a proof is bound
/// to one position in the tree.
pub fn merkle_verify(root: &HashDigest, leaf: &[u8], proof: &MerkleProof) -> bool {
    let height = proof.siblings.len();
    if height == 0 || height > 32 || (height < 32 && proof.leaf_index >> height != 0) {
        return false;
    }
    let mut acc = hash_bytes(leaf);
    for (level, (sibling, side)) in proof.siblings.iter().enumerate() {
        let expected = if (proof.leaf_index >> level) & 1 == 0 {
            Side::Right
        } else {
            Side::Left
        };
        if *side != expected {
            return false;
        }
        acc = match side {
            Side::Right => node(&acc, sibling),
            Side::Left => node(sibling, &acc),
        };
    }
    acc == *root
}
