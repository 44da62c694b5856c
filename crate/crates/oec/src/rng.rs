//! Seeded simulation randomness.
//!
//! All simulator randomness (key material, proof nonces, scenario
//! generation) flows from one xoshiro256** generator seeded through
//! SplitMix64, so identical (scenario, seed) pairs reproduce ledgers
//! bit-for-bit across platforms and reimplementations. Not a CSPRNG; the
//! simulator is a model, not a wallet.

use num_bigint::BigUint;
use num_traits::One;
use rand_xoshiro::rand_core::{RngCore, SeedableRng};
use rand_xoshiro::Xoshiro256StarStar;

#[derive(Debug, Clone)]
pub struct SimRng {
    inner: Xoshiro256StarStar,
}

impl SimRng {
    pub fn from_seed(seed: u64) -> Self {
        SimRng {
            inner: Xoshiro256StarStar::seed_from_u64(seed),
        }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    /// Uniform-ish draw in [0, n). Modulo bias is irrelevant at simulation
    /// scale and keeps the mapping trivially portable.
    pub fn below(&mut self, n: u64) -> u64 {
        debug_assert!(n > 0);
        self.next_u64() % n
    }

    /// Draw in [lo, hi] inclusive.
    pub fn range(&mut self, lo: u64, hi: u64) -> u64 {
        debug_assert!(lo <= hi);
        lo + self.below(hi - lo + 1)
    }

    /// Uniform float in [0, 1) with 53-bit resolution.
    pub fn unit_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Big integer in [0, m): draws 64 bits more than m's width, then
    /// reduces. Deterministic for a fixed draw sequence.
    pub fn biguint_below(&mut self, m: &BigUint) -> BigUint {
        debug_assert!(!m.is_one() || true);
        let words = (m.bits() as usize + 63) / 64 + 1;
        let mut bytes = Vec::with_capacity(words * 8);
        for _ in 0..words {
            bytes.extend_from_slice(&self.next_u64().to_be_bytes());
        }
        BigUint::from_bytes_be(&bytes) % m
    }

    /// Group scalar in [1, q-1]: a secret key or proof nonce.
    pub fn scalar(&mut self, q: &BigUint) -> BigUint {
        let span = q - BigUint::one();
        self.biguint_below(&span) + BigUint::one()
    }
}
