// Copyright 2026 The SPB Authors
// SPDX-License-Identifier: Apache-2.0

//! Length-prefixed canonical encoding shared by every wire message.
//!
//! A message is an optional 1-byte type tag followed by fields. Every field is
//! a 4-byte big-endian length and then the raw value bytes. Integers are
//! encoded as fixed-width big-endian values inside their field.

use thiserror::Error;

/// Largest value accepted inside a single field.
pub const MAX_FIELD_LEN: usize = 1 << 20;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CodecError {
    #[error("input truncated")]
    Truncated,
    #[error("field of {0} bytes exceeds the {MAX_FIELD_LEN}-byte limit")]
    Overlong(usize),
    #[error("field has length {got}, expected {expected}")]
    BadLength { expected: usize, got: usize },
    #[error("{0} trailing bytes after message")]
    TrailingBytes(usize),
    #[error("unknown type tag {0:#04x}")]
    UnknownTag(u8),
    #[error("invalid value for {0}")]
    BadValue(&'static str),
}

#[derive(Debug, Default, Clone)]
pub struct Writer {
    buf: Vec<u8>,
}

impl Writer {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_tag(tag: u8) -> Self {
        Self { buf: vec![tag] }
    }

    pub fn field(&mut self, value: &[u8]) -> Result<&mut Self, CodecError> {
        if value.len() > MAX_FIELD_LEN {
            return Err(CodecError::Overlong(value.len()));
        }
        self.buf.extend_from_slice(&(value.len() as u32).to_be_bytes());
        self.buf.extend_from_slice(value);
        Ok(self)
    }

    pub fn u8(&mut self, v: u8) -> &mut Self {
        self.fixed(&[v])
    }

    pub fn u32(&mut self, v: u32) -> &mut Self {
        self.fixed(&v.to_be_bytes())
    }

    pub fn u64(&mut self, v: u64) -> &mut Self {
        self.fixed(&v.to_be_bytes())
    }

    /// Writes a field whose length is statically bounded well below the limit.
    pub fn fixed(&mut self, value: &[u8]) -> &mut Self {
        debug_assert!(value.len() <= MAX_FIELD_LEN);
        self.buf.extend_from_slice(&(value.len() as u32).to_be_bytes());
        self.buf.extend_from_slice(value);
        self
    }

    pub fn raw(&mut self, bytes: &[u8]) -> &mut Self {
        self.buf.extend_from_slice(bytes);
        self
    }

    pub fn as_bytes(&self) -> &[u8] {
        &self.buf
    }

    pub fn finish(self) -> Vec<u8> {
        self.buf
    }
}

#[derive(Debug, Clone)]
pub struct Reader<'a> {
    data: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    pub fn new(data: &'a [u8]) -> Self {
        Self { data, pos: 0 }
    }

    /// Position of the next unread byte.
    pub fn position(&self) -> usize {
        self.pos
    }

    pub fn remaining(&self) -> usize {
        self.data.len() - self.pos
    }

    pub fn take(&mut self, n: usize) -> Result<&'a [u8], CodecError> {
        if self.remaining() < n {
            return Err(CodecError::Truncated);
        }
        let out = &self.data[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    pub fn tag(&mut self) -> Result<u8, CodecError> {
        Ok(self.take(1)?[0])
    }

    pub fn field(&mut self) -> Result<&'a [u8], CodecError> {
        let len = u32::from_be_bytes(self.take(4)?.try_into().unwrap()) as usize;
        if len > MAX_FIELD_LEN {
            return Err(CodecError::Overlong(len));
        }
        self.take(len)
    }

    pub fn array<const N: usize>(&mut self) -> Result<[u8; N], CodecError> {
        let f = self.field()?;
        f.try_into().map_err(|_| CodecError::BadLength {
            expected: N,
            got: f.len(),
        })
    }

    pub fn u8(&mut self) -> Result<u8, CodecError> {
        Ok(self.array::<1>()?[0])
    }

    pub fn u32(&mut self) -> Result<u32, CodecError> {
        Ok(u32::from_be_bytes(self.array()?))
    }

    pub fn u64(&mut self) -> Result<u64, CodecError> {
        Ok(u64::from_be_bytes(self.array()?))
    }

    pub fn bool(&mut self) -> Result<bool, CodecError> {
        match self.u8()? {
            0 => Ok(false),
            1 => Ok(true),
            _ => Err(CodecError::BadValue("boolean flag")),
        }
    }

    pub fn finish(self) -> Result<(), CodecError> {
        match self.remaining() {
            0 => Ok(()),
            n => Err(CodecError::TrailingBytes(n)),
        }
    }
}
