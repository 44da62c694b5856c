//! Shared primitive types: 32-byte hashes, node/system identifiers and
//! micro-credit amounts.

use std::fmt;
use std::str::FromStr;

use sha2::{Digest, Sha256};

use crate::encoding::{Canonical, DecodeError, Decoder, Encoder};

/// Credits are carried as integer micro-credits (10^-6 credit granularity)
/// so that settlement conservation is bit-exact.
pub const MICRO_PER_CREDIT: i64 = 1_000_000;

/// Convert a credit amount to micro-credits, rounding half to even.
pub fn credits_to_micro(credits: f64) -> i64 {
    (credits * MICRO_PER_CREDIT as f64).round_ties_even() as i64
}

/// A SHA-256 digest. Rendered as 64 lowercase hex characters in all exports.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct Hash256(pub [u8; 32]);

impl Hash256 {
    pub const ZERO: Hash256 = Hash256([0u8; 32]);

    /// SHA-256 of raw bytes.
    pub fn digest(bytes: &[u8]) -> Self {
        let mut hasher = Sha256::new();
        hasher.update(bytes);
        Hash256(hasher.finalize().into())
    }

    pub fn as_bytes(&self) -> &[u8; 32] {
        &self.0
    }

    pub fn to_hex(&self) -> String {
        hex::encode(self.0)
    }

    pub fn from_hex(s: &str) -> Result<Self, DecodeError> {
        let bytes = hex::decode(s).map_err(|_| DecodeError::BadHex)?;
        let arr: [u8; 32] = bytes.try_into().map_err(|_| DecodeError::BadHex)?;
        Ok(Hash256(arr))
    }
}

impl fmt::Display for Hash256 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_hex())
    }
}

impl fmt::Debug for Hash256 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Hash256({}..)", &self.to_hex()[..12])
    }
}

impl FromStr for Hash256 {
    type Err = DecodeError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Hash256::from_hex(s)
    }
}

impl Canonical for Hash256 {
    fn encode(&self, enc: &mut Encoder) {
        enc.raw(&self.0);
    }

    fn decode(dec: &mut Decoder<'_>) -> Result<Self, DecodeError> {
        let mut arr = [0u8; 32];
        arr.copy_from_slice(dec.take(32)?);
        Ok(Hash256(arr))
    }
}

macro_rules! id_newtype {
    ($(#[$doc:meta])* $name:ident) => {
        $(#[$doc])*
        #[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
        pub struct $name(pub Hash256);

        impl $name {
            pub const ZERO: $name = $name(Hash256::ZERO);

            pub fn to_hex(&self) -> String {
                self.0.to_hex()
            }

            pub fn from_hex(s: &str) -> Result<Self, DecodeError> {
                Hash256::from_hex(s).map($name)
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                self.0.fmt(f)
            }
        }

        impl fmt::Debug for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                write!(f, "{}({}..)", stringify!($name), &self.to_hex()[..12])
            }
        }

        impl Canonical for $name {
            fn encode(&self, enc: &mut Encoder) {
                self.0.encode(enc);
            }

            fn decode(dec: &mut Decoder<'_>) -> Result<Self, DecodeError> {
                Hash256::decode(dec).map($name)
            }
        }
    };
}

id_newtype!(
    /// Self-certifying node identifier: the hash of the node's public key.
    NodeId
);

id_newtype!(
    /// Edge-system identifier, derived from the creator and its sequence number.
    SystemId
);
