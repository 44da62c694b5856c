//! Canonical binary encoding for every record that is hashed, signed or
//! exported.
//!
//! The format is deliberately boring and fully deterministic:
//!
//! - integers are fixed-width big-endian,
//! - floats are their IEEE-754 bit pattern, big-endian,
//! - byte strings and UTF-8 strings are `u32` length-prefixed,
//! - lists are `u32` count-prefixed,
//! - enums are a single tag byte followed by the variant fields,
//! - big integers are length-prefixed minimal big-endian magnitudes.
//!
//! Two structurally equal values always encode to identical byte sequences,
//! and no encoding is a prefix of a different value's encoding of the same
//! type, so the encoding is injective per type.

use num_bigint::BigUint;
use thiserror::Error;

/// Decoding failure for canonical bytes, hex lines or persisted queues.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DecodeError {
    #[error("unexpected end of input")]
    UnexpectedEof,
    #[error("trailing bytes after record")]
    TrailingBytes,
    #[error("unknown enum tag {tag} for {what}")]
    BadTag { what: &'static str, tag: u8 },
    #[error("invalid UTF-8 in string field")]
    BadUtf8,
    #[error("invalid hex")]
    BadHex,
    #[error("big integer not minimally encoded")]
    NonMinimalInt,
    #[error("length prefix {len} exceeds remaining input")]
    BadLength { len: u64 },
}

/// Append-only byte sink for canonical encoding.
#[derive(Default)]
pub struct Encoder {
    buf: Vec<u8>,
}

impl Encoder {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn into_bytes(self) -> Vec<u8> {
        self.buf
    }

    pub fn raw(&mut self, bytes: &[u8]) {
        self.buf.extend_from_slice(bytes);
    }

    pub fn u8(&mut self, v: u8) {
        self.buf.push(v);
    }

    pub fn bool(&mut self, v: bool) {
        self.buf.push(v as u8);
    }

    pub fn u32(&mut self, v: u32) {
        self.buf.extend_from_slice(&v.to_be_bytes());
    }

    pub fn u64(&mut self, v: u64) {
        self.buf.extend_from_slice(&v.to_be_bytes());
    }

    pub fn i64(&mut self, v: i64) {
        self.buf.extend_from_slice(&v.to_be_bytes());
    }

    pub fn f64(&mut self, v: f64) {
        self.buf.extend_from_slice(&v.to_bits().to_be_bytes());
    }

    pub fn bytes(&mut self, v: &[u8]) {
        self.u32(v.len() as u32);
        self.raw(v);
    }

    pub fn str(&mut self, v: &str) {
        self.bytes(v.as_bytes());
    }

    /// Minimal big-endian magnitude, length-prefixed. Zero encodes as the
    /// empty magnitude.
    pub fn biguint(&mut self, v: &BigUint) {
        let mag = v.to_bytes_be();
        if v == &BigUint::default() {
            self.bytes(&[]);
        } else {
            self.bytes(&mag);
        }
    }

    pub fn list<T: Canonical>(&mut self, items: &[T]) {
        self.u32(items.len() as u32);
        for item in items {
            item.encode(self);
        }
    }
}

/// Cursor over canonical bytes.
pub struct Decoder<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Decoder<'a> {
    pub fn new(buf: &'a [u8]) -> Self {
        Self { buf, pos: 0 }
    }

    pub fn remaining(&self) -> usize {
        self.buf.len() - self.pos
    }

    pub fn take(&mut self, n: usize) -> Result<&'a [u8], DecodeError> {
        if self.remaining() < n {
            return Err(DecodeError::UnexpectedEof);
        }
        let slice = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(slice)
    }

    pub fn u8(&mut self) -> Result<u8, DecodeError> {
        Ok(self.take(1)?[0])
    }

    pub fn bool(&mut self) -> Result<bool, DecodeError> {
        match self.u8()? {
            0 => Ok(false),
            1 => Ok(true),
            tag => Err(DecodeError::BadTag { what: "bool", tag }),
        }
    }

    pub fn u32(&mut self) -> Result<u32, DecodeError> {
        Ok(u32::from_be_bytes(self.take(4)?.try_into().unwrap()))
    }

    pub fn u64(&mut self) -> Result<u64, DecodeError> {
        Ok(u64::from_be_bytes(self.take(8)?.try_into().unwrap()))
    }

    pub fn i64(&mut self) -> Result<i64, DecodeError> {
        Ok(i64::from_be_bytes(self.take(8)?.try_into().unwrap()))
    }

    pub fn f64(&mut self) -> Result<f64, DecodeError> {
        Ok(f64::from_bits(self.u64()?))
    }

    pub fn bytes(&mut self) -> Result<Vec<u8>, DecodeError> {
        let len = self.u32()? as usize;
        if self.remaining() < len {
            return Err(DecodeError::BadLength { len: len as u64 });
        }
        Ok(self.take(len)?.to_vec())
    }

    pub fn str(&mut self) -> Result<String, DecodeError> {
        String::from_utf8(self.bytes()?).map_err(|_| DecodeError::BadUtf8)
    }

    pub fn biguint(&mut self) -> Result<BigUint, DecodeError> {
        let mag = self.bytes()?;
        if !mag.is_empty() && mag[0] == 0 {
            return Err(DecodeError::NonMinimalInt);
        }
        Ok(BigUint::from_bytes_be(&mag))
    }

    pub fn list<T: Canonical>(&mut self) -> Result<Vec<T>, DecodeError> {
        let count = self.u32()? as usize;
        let mut items = Vec::with_capacity(count.min(1024));
        for _ in 0..count {
            items.push(T::decode(self)?);
        }
        Ok(items)
    }
}

/// Canonical encode/decode pair for ledger records.
pub trait Canonical: Sized {
    fn encode(&self, enc: &mut Encoder);
    fn decode(dec: &mut Decoder<'_>) -> Result<Self, DecodeError>;

    fn canonical_bytes(&self) -> Vec<u8> {
        let mut enc = Encoder::new();
        self.encode(&mut enc);
        enc.into_bytes()
    }

    /// Decode a complete record; trailing bytes are an error.
    fn from_canonical_bytes(bytes: &[u8]) -> Result<Self, DecodeError> {
        let mut dec = Decoder::new(bytes);
        let value = Self::decode(&mut dec)?;
        if dec.remaining() != 0 {
            return Err(DecodeError::TrailingBytes);
        }
        Ok(value)
    }

    fn canonical_hex(&self) -> String {
        hex::encode(self.canonical_bytes())
    }

    fn from_canonical_hex(line: &str) -> Result<Self, DecodeError> {
        let bytes = hex::decode(line.trim()).map_err(|_| DecodeError::BadHex)?;
        Self::from_canonical_bytes(&bytes)
    }
}
