// Copyright 2026 The SPB Authors
// SPDX-License-Identifier: Apache-2.0

use super::{ArbError, BackboneId};
use crate::crypto::PublicKey;

/// Widest prefix whose value space fits in a `u128`.
pub const MAX_X: u8 = 15;

/// The `x` most significant bytes of a public key.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct RoutingBytes {
    prefix: Vec<u8>,
}

impl RoutingBytes {
    pub fn of(pk: &PublicKey, x: u8) -> Self {
        assert!((1..=MAX_X).contains(&x), "prefix length {x} out of range");
        Self {
            prefix: pk.as_bytes()[..x as usize].to_vec(),
        }
    }

    pub fn x(&self) -> u8 {
        self.prefix.len() as u8
    }

    pub fn as_bytes(&self) -> &[u8] {
        &self.prefix
    }

    /// Big-endian integer value of the prefix.
    pub fn value(&self) -> u128 {
        self.prefix.iter().fold(0, |acc, b| acc << 8 | u128::from(*b))
    }
}

/// Assignment of every routing-byte value to exactly one backbone node.
///
/// Stored as sorted range starts: entry `i` owns `[starts[i], starts[i + 1])`,
/// the last entry runs to the end of the space. `starts[0] == 0`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DhtTable {
    version: u64,
    x: u8,
    starts: Vec<u128>,
    owners: Vec<BackboneId>,
}

fn space(x: u8) -> u128 {
    1u128 << (8 * u32::from(x))
}

fn check_params(backbones: &[BackboneId], x: u8) -> Result<(), ArbError> {
    if backbones.is_empty() {
        return Err(ArbError::EmptyBackbone);
    }
    if !(1..=MAX_X).contains(&x) {
        return Err(ArbError::BadPrefixLength(x));
    }
    if backbones.len() as u128 > space(x) {
        return Err(ArbError::TooManyBackbones {
            backbones: backbones.len(),
            x,
        });
    }
    let mut sorted = backbones.to_vec();
    sorted.sort_unstable();
    sorted.dedup();
    if sorted.len() != backbones.len() {
        return Err(ArbError::DuplicateBackbone);
    }
    Ok(())
}

/// Splits the RB space into contiguous slices, one per backbone in the given
/// order. Slice sizes differ by at most one; the first `space % n` are larger.
pub fn build_dht(backbones: &[BackboneId], x: u8) -> Result<DhtTable, ArbError> {
    check_params(backbones, x)?;
    let n = backbones.len() as u128;
    let (q, r) = (space(x) / n, space(x) % n);
    let starts = (0..n).map(|i| i * q + i.min(r)).collect();
    Ok(DhtTable {
        version: 0,
        x,
        starts,
        owners: backbones.to_vec(),
    })
}

impl DhtTable {
    pub fn x(&self) -> u8 {
        self.x
    }

    pub fn version(&self) -> u64 {
        self.version
    }

    /// Number of distinct RB values.
    pub fn space(&self) -> u128 {
        space(self.x)
    }

    pub fn backbones(&self) -> &[BackboneId] {
        &self.owners
    }

    /// `(first, last, owner)` per slice, inclusive bounds, ascending.
    pub fn ranges(&self) -> impl Iterator<Item = (u128, u128, BackboneId)> + '_ {
        let end = self.space();
        self.starts.iter().enumerate().map(move |(i, &lo)| {
            let next = self.starts.get(i + 1).copied().unwrap_or(end);
            (lo, next - 1, self.owners[i])
        })
    }

    pub fn owner_of_value(&self, value: u128) -> BackboneId {
        let i = self.starts.partition_point(|&s| s <= value) - 1;
        self.owners[i]
    }

    pub fn responsible(&self, pk: &PublicKey) -> BackboneId {
        self.owner_of_value(RoutingBytes::of(pk, self.x).value())
    }

    /// Count of RB values owned by `id`.
    pub fn share(&self, id: BackboneId) -> u128 {
        self.ranges()
            .filter(|&(_, _, o)| o == id)
            .map(|(lo, hi, _)| hi - lo + 1)
            .sum()
    }
}

/// `responsible_backbone` as a free function.
pub fn responsible_backbone(table: &DhtTable, pk: &PublicKey) -> BackboneId {
    table.responsible(pk)
}

/// Rebuilds the table at prefix length `new_x`. Slice boundaries follow the
/// quantiles of `observed` (destination keys from the recent load window),
/// so each backbone receives about the same share of that traffic. Falls back
/// to equal slices when nothing was observed.
pub fn rebalance_table(table: &DhtTable, new_x: u8, observed: &[PublicKey]) -> Result<DhtTable, ArbError> {
    if new_x <= table.x {
        return Err(ArbError::NotWider {
            current: table.x,
            requested: new_x,
        });
    }
    let mut next = build_dht(&table.owners, new_x)?;
    next.version = table.version + 1;
    let k = table.owners.len();
    if observed.is_empty() || k == 1 {
        return Ok(next);
    }
    let mut values: Vec<u128> = observed.iter().map(|pk| RoutingBytes::of(pk, new_x).value()).collect();
    values.sort_unstable();
    let n = values.len();
    let end = next.space();
    let mut starts = vec![0u128];
    for i in 1..k {
        let remaining = (k - i) as u128;
        let floor = starts[i - 1] + 1;
        let ceil = end - remaining;
        starts.push(values[i * n / k].clamp(floor, ceil));
    }
    next.starts = starts;
    Ok(next)
}
