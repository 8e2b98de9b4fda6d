// Copyright 2026 The SPB Authors
// SPDX-License-Identifier: Apache-2.0

pub mod arb;
pub mod codec;
pub mod crypto;
pub mod ledger;
pub mod meter;
pub mod sim;
pub mod tx;
