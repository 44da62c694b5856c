//! Keys, node profiles and non-interactive zero-knowledge authentication.
//!
//! Authentication is a Schnorr proof of secret-key knowledge made
//! non-interactive with the Fiat-Shamir transform: the challenge is derived
//! by hashing the commitment, the public key and a caller-supplied context,
//! so a proof is bound to exactly one (key, context) pair. The interface is
//! proof-system-agnostic: anything that can prove key knowledge over a
//! context byte string could be substituted without touching the ledger.
//!
//! Two parameter sets are provided. `Toy` is a tiny group for fast
//! simulation and hand-checkable test vectors. `Standard` embeds the
//! 2048-bit MODP group with a 256-bit prime-order subgroup from RFC 5114
//! section 2.3.

use num_bigint::BigUint;
use num_traits::{One, Zero};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::encoding::{Canonical, DecodeError, Decoder, Encoder};
use crate::types::{Hash256, NodeId};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum IdentityError {
    #[error("nonce outside [1, q-1]")]
    BadNonce,
    #[error("secret key outside [1, q-1]")]
    BadSecretKey,
    #[error("proof verification failed")]
    AuthFailed,
    #[error("no subscribed BC peers to select a manager from")]
    NoPeers,
}

/// Parameter strength selector. `Toy` is the hand-checkable test group,
/// `Sim` a 256-bit safe-prime group fast enough for large simulated
/// populations, `Standard` the full-strength RFC 5114 group.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum SecurityLevel {
    Toy,
    #[default]
    Sim,
    Standard,
}

/// Public group parameters: a subgroup of order `q` generated by `g` in the
/// multiplicative group mod `p`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GroupParams {
    pub p: BigUint,
    pub q: BigUint,
    pub g: BigUint,
}

// RFC 5114 section 2.3: 2048-bit MODP group with 256-bit prime order subgroup.
const RFC5114_2048_256_P: &str = "87A8E61DB4B6663CFFBBD19C651959998CEEF608660DD0F25D2CEED4435E3B00\
E00DF8F1D61957D4FAF7DF4561B2AA3016C3D91134096FAA3BF4296D830E9A7C\
209E0C6497517ABD5A8A9D306BCF67ED91F9E6725B4758C022E0B1EF4275BF7B\
6C5BFC11D45F9088B941F54EB1E59BB8BC39A0BF12307F5C4FDB70C581B23F76\
B63ACAE1CAA6B7902D52526735488A0EF13C6D9A51BFA4AB3AD8347796524D8E\
F6A167B5A41825D967E144E5140564251CCACB83E6B486F6B3CA3F7971506026\
C0B857F689962856DED4010ABD0BE621C3A3960A54E710C375F26375D7014103\
A4B54330C198AF126116D2276E11715F693877FAD7EF09CADB094AE91E1A1597";
const RFC5114_2048_256_G: &str = "3FB32C9B73134D0B2E77506660EDBD484CA7B18F21EF205407F4793A1A0BA125\
10DBC15077BE463FFF4FED4AAC0BB555BE3A6C1B0C6B47B1BC3773BF7E8C6F62\
901228F8C28CBB18A55AE31341000A650196F931C77A57F2DDF463E5E9EC144B\
777DE62AAAB8A8628AC376D282D6ED3864E67982428EBC831D14348F6F2F9193\
B5045AF2767164E1DFC967C1FB3F2E55A4BD1BFFE83B9C80D052B985D182EA0A\
DB2A3B7313D3FE14C8484B1E052588B9B7D2BBD2DF016199ECD06E1557CD0915\
B3353BBB64E0EC377FD028370DF92B52C7891428CDC67EB6184B523D1DB246C3\
2F63078490F00EF8D647D148D47954515E2327CFEF98C582664B4C0F6CC41659";
const RFC5114_2048_256_Q: &str =
    "8CF83642A709A097B447997640129DA299B1A47D1EB3750BA308B0FE64F5FBD3";

// The largest 256-bit safe prime (2^256 - 36113); g = 4 is a quadratic
// residue and therefore generates the prime-order subgroup of size (p-1)/2.
const SIM_256_P: &str = "ffffffffffffffffffffffffffffffffffffffffffffffffffffffffffff72ef";
const SIM_256_Q: &str = "7fffffffffffffffffffffffffffffffffffffffffffffffffffffffffffb977";

/// Produce the public parameters for a security level. Deterministic: there
/// is no trusted-setup randomness, all groups are fixed constants.
pub fn generate_params(level: SecurityLevel) -> GroupParams {
    match level {
        SecurityLevel::Toy => GroupParams {
            p: BigUint::from(23u32),
            q: BigUint::from(11u32),
            g: BigUint::from(2u32),
        },
        SecurityLevel::Sim => GroupParams {
            p: BigUint::parse_bytes(SIM_256_P.as_bytes(), 16).unwrap(),
            q: BigUint::parse_bytes(SIM_256_Q.as_bytes(), 16).unwrap(),
            g: BigUint::from(4u32),
        },
        SecurityLevel::Standard => GroupParams {
            p: BigUint::parse_bytes(RFC5114_2048_256_P.as_bytes(), 16).unwrap(),
            q: BigUint::parse_bytes(RFC5114_2048_256_Q.as_bytes(), 16).unwrap(),
            g: BigUint::parse_bytes(RFC5114_2048_256_G.as_bytes(), 16).unwrap(),
        },
    }
}

impl GroupParams {
    /// Check the structural invariants: q | p-1, g generates an order-q
    /// subgroup, g != 1.
    pub fn validate(&self) -> bool {
        !self.g.is_one()
            && ((&self.p - 1u32) % &self.q).is_zero()
            && self.g.modpow(&self.q, &self.p).is_one()
    }
}

/// A secret/public key pair in the group.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct KeyPair {
    pub sk: BigUint,
    pub pk: BigUint,
}

impl KeyPair {
    pub fn from_secret(params: &GroupParams, sk: BigUint) -> Result<Self, IdentityError> {
        if sk.is_zero() || sk >= params.q {
            return Err(IdentityError::BadSecretKey);
        }
        let pk = params.g.modpow(&sk, &params.p);
        Ok(KeyPair { sk, pk })
    }

    pub fn node_id(&self) -> NodeId {
        node_id_for_pk(&self.pk)
    }
}

/// Self-certifying identifier: the hash of the canonical public-key encoding.
pub fn node_id_for_pk(pk: &BigUint) -> NodeId {
    let mut enc = Encoder::new();
    enc.biguint(pk);
    NodeId(Hash256::digest(&enc.into_bytes()))
}

/// Non-interactive proof of knowledge of the secret key behind `pk`, bound
/// to a context byte string.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ZkProof {
    pub commitment: BigUint,
    pub response: BigUint,
    pub context: Vec<u8>,
}

impl Canonical for ZkProof {
    fn encode(&self, enc: &mut Encoder) {
        enc.biguint(&self.commitment);
        enc.biguint(&self.response);
        enc.bytes(&self.context);
    }

    fn decode(dec: &mut Decoder<'_>) -> Result<Self, DecodeError> {
        Ok(ZkProof {
            commitment: dec.biguint()?,
            response: dec.biguint()?,
            context: dec.bytes()?,
        })
    }
}

/// Fiat-Shamir challenge: SHA-256 over the canonical encoding of
/// (commitment, pk, context), reduced mod q.
pub fn challenge(params: &GroupParams, commitment: &BigUint, pk: &BigUint, context: &[u8]) -> BigUint {
    let mut enc = Encoder::new();
    enc.biguint(commitment);
    enc.biguint(pk);
    enc.bytes(context);
    let digest = Hash256::digest(&enc.into_bytes());
    BigUint::from_bytes_be(digest.as_bytes()) % &params.q
}

/// Prove knowledge of `kp.sk` bound to `context`. The nonce must be drawn
/// fresh from the caller's RNG; reuse leaks the secret key.
pub fn prove_knowledge(
    params: &GroupParams,
    kp: &KeyPair,
    context: &[u8],
    nonce: &BigUint,
) -> Result<ZkProof, IdentityError> {
    if nonce.is_zero() || *nonce >= params.q {
        return Err(IdentityError::BadNonce);
    }
    let commitment = params.g.modpow(nonce, &params.p);
    let c = challenge(params, &commitment, &kp.pk, context);
    let response = (nonce + c * &kp.sk) % &params.q;
    Ok(ZkProof {
        commitment,
        response,
        context: context.to_vec(),
    })
}

/// Test-vector variant with an injected challenge instead of the derived
/// one. Verification must use [`verify_with_challenge`] with the same `c`.
pub fn prove_with_challenge(
    params: &GroupParams,
    kp: &KeyPair,
    context: &[u8],
    nonce: &BigUint,
    c: &BigUint,
) -> Result<ZkProof, IdentityError> {
    if nonce.is_zero() || *nonce >= params.q {
        return Err(IdentityError::BadNonce);
    }
    let commitment = params.g.modpow(nonce, &params.p);
    let response = (nonce + c * &kp.sk) % &params.q;
    Ok(ZkProof {
        commitment,
        response,
        context: context.to_vec(),
    })
}

/// Verify a proof against `pk`, re-deriving the challenge from the proof's
/// own context. Malformed group elements verify as false.
pub fn verify_proof(params: &GroupParams, pk: &BigUint, proof: &ZkProof) -> bool {
    let c = challenge(params, &proof.commitment, pk, &proof.context);
    verify_with_challenge(params, pk, proof, &c)
}

/// Verification against an explicit challenge: g^s == t * pk^c (mod p).
pub fn verify_with_challenge(
    params: &GroupParams,
    pk: &BigUint,
    proof: &ZkProof,
    c: &BigUint,
) -> bool {
    if proof.commitment.is_zero()
        || proof.commitment >= params.p
        || proof.response >= params.q
        || pk.is_zero()
        || *pk >= params.p
    {
        return false;
    }
    let lhs = params.g.modpow(&proof.response, &params.p);
    let rhs = (&proof.commitment * pk.modpow(c, &params.p)) % &params.p;
    lhs == rhs
}

/// A band of advertised spectrum.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectrumBand {
    pub band_id: u32,
    pub bandwidth_mhz: f64,
}

impl Canonical for SpectrumBand {
    fn encode(&self, enc: &mut Encoder) {
        enc.u32(self.band_id);
        enc.f64(self.bandwidth_mhz);
    }

    fn decode(dec: &mut Decoder<'_>) -> Result<Self, DecodeError> {
        Ok(SpectrumBand {
            band_id: dec.u32()?,
            bandwidth_mhz: dec.f64()?,
        })
    }
}

/// Advertised capacities of a node.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Resources {
    pub processing: f64,
    pub storage_gb: f64,
    pub communication_mbps: f64,
    #[serde(default)]
    pub spectrum: Vec<SpectrumBand>,
}

impl Resources {
    pub fn valid(&self) -> bool {
        self.processing >= 0.0
            && self.storage_gb >= 0.0
            && self.communication_mbps >= 0.0
            && self.spectrum.iter().all(|b| b.bandwidth_mhz >= 0.0)
    }

    pub fn total_bandwidth_mhz(&self) -> f64 {
        self.spectrum.iter().map(|b| b.bandwidth_mhz).sum()
    }
}

impl Canonical for Resources {
    fn encode(&self, enc: &mut Encoder) {
        enc.f64(self.processing);
        enc.f64(self.storage_gb);
        enc.f64(self.communication_mbps);
        enc.list(&self.spectrum);
    }

    fn decode(dec: &mut Decoder<'_>) -> Result<Self, DecodeError> {
        Ok(Resources {
            processing: dec.f64()?,
            storage_gb: dec.f64()?,
            communication_mbps: dec.f64()?,
            spectrum: dec.list()?,
        })
    }
}

/// On-chain identity record: who a node is, what it advertises, how it gets
/// paid, and its current reputation.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeProfile {
    pub id: NodeId,
    pub pk: BigUint,
    /// Blockchain peers are eligible for manager selection.
    pub bc_node: bool,
    pub resources: Resources,
    pub payment_detail: String,
    pub reputation: f64,
}

impl NodeProfile {
    /// Structural validity: self-certifying id, resource ranges, reputation
    /// in [0,1].
    pub fn well_formed(&self) -> bool {
        self.id == node_id_for_pk(&self.pk)
            && self.resources.valid()
            && (0.0..=1.0).contains(&self.reputation)
    }
}

impl Canonical for NodeProfile {
    fn encode(&self, enc: &mut Encoder) {
        self.id.encode(enc);
        enc.biguint(&self.pk);
        enc.bool(self.bc_node);
        self.resources.encode(enc);
        enc.str(&self.payment_detail);
        enc.f64(self.reputation);
    }

    fn decode(dec: &mut Decoder<'_>) -> Result<Self, DecodeError> {
        Ok(NodeProfile {
            id: NodeId::decode(dec)?,
            pk: dec.biguint()?,
            bc_node: dec.bool()?,
            resources: Resources::decode(dec)?,
            payment_detail: dec.str()?,
            reputation: dec.f64()?,
        })
    }
}

/// Assemble a Subscribe transaction from a profile and a proof of key
/// knowledge. The proof must be bound to the transaction's own signing
/// context and verify against the profile's key.
pub fn subscribe(
    params: &GroupParams,
    state: &crate::state::LedgerState,
    profile: NodeProfile,
    proof: ZkProof,
) -> Result<crate::tx::Transaction, crate::state::OpError> {
    use crate::state::OpError;
    if state.profiles.contains_key(&profile.id) {
        return Err(OpError::DuplicateIdentity);
    }
    if !profile.well_formed() {
        return Err(OpError::MalformedProfile("fields out of range"));
    }
    if profile.reputation != crate::incentives::INITIAL_REPUTATION {
        return Err(OpError::MalformedProfile("reputation must start neutral"));
    }
    let actor = profile.id;
    let seq = state.next_seq(&actor);
    let payload = crate::tx::Payload::Subscribe { profile };
    let context = crate::tx::signing_context(&actor, seq, &payload);
    if proof.context != context {
        return Err(OpError::AuthFailed);
    }
    let pk = match &payload {
        crate::tx::Payload::Subscribe { profile } => &profile.pk,
        _ => unreachable!(),
    };
    if !verify_proof(params, pk, &proof) {
        return Err(OpError::AuthFailed);
    }
    Ok(crate::tx::Transaction {
        actor,
        seq,
        payload,
        proof,
    })
}

/// Deterministic manager selection: the first 8 bytes of
/// SHA-256(canonical(term_index, anchor_hash)), big-endian, mod the number
/// of candidates. Candidates must be sorted by NodeId.
pub fn manager_index(term_index: u64, anchor_hash: &Hash256, candidates: usize) -> usize {
    debug_assert!(candidates > 0);
    let mut enc = Encoder::new();
    enc.u64(term_index);
    anchor_hash.encode(&mut enc);
    let digest = Hash256::digest(&enc.into_bytes());
    let lead = u64::from_be_bytes(digest.as_bytes()[..8].try_into().unwrap());
    (lead % candidates as u64) as usize
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy() -> GroupParams {
        generate_params(SecurityLevel::Toy)
    }

    #[test]
    fn toy_params_fixed() {
        let p = toy();
        assert_eq!(p.p, BigUint::from(23u32));
        assert_eq!(p.q, BigUint::from(11u32));
        assert_eq!(p.g, BigUint::from(2u32));
        // 2^11 = 2048 = 89*23 + 1
        assert!(p.validate());
        assert_eq!(toy(), generate_params(SecurityLevel::Toy));
    }

    #[test]
    fn standard_params_satisfy_subgroup_invariants() {
        let p = generate_params(SecurityLevel::Standard);
        assert_eq!(p.p.bits(), 2048);
        assert_eq!(p.q.bits(), 256);
        assert!(p.validate());
        assert_eq!(p, generate_params(SecurityLevel::Standard));
    }

    #[test]
    fn sim_params_satisfy_subgroup_invariants() {
        let p = generate_params(SecurityLevel::Sim);
        assert_eq!(p.p.bits(), 256);
        assert_eq!(p.q.bits(), 255);
        assert!(p.validate());
        // p = 2^256 - 36113 and q = (p-1)/2
        let two256 = BigUint::from(1u32) << 256;
        assert_eq!(p.p, &two256 - BigUint::from(36113u32));
        assert_eq!(&p.q * 2u32 + 1u32, p.p);
    }

    #[test]
    fn hand_computed_toy_vector_with_stub_challenge() {
        // sk=7 -> pk = 2^7 mod 23 = 13; nonce=3 -> t = 8;
        // stub c=5 -> s = (3 + 5*7) mod 11 = 5;
        // check: g^s = 2^5 mod 23 = 9 and t*pk^c = 8*13^5 mod 23 = 8*4 mod 23 = 9.
        let params = toy();
        let kp = KeyPair::from_secret(&params, BigUint::from(7u32)).unwrap();
        assert_eq!(kp.pk, BigUint::from(13u32));
        let c = BigUint::from(5u32);
        let proof =
            prove_with_challenge(&params, &kp, b"ctx", &BigUint::from(3u32), &c).unwrap();
        assert_eq!(proof.commitment, BigUint::from(8u32));
        assert_eq!(proof.response, BigUint::from(5u32));
        assert!(verify_with_challenge(&params, &kp.pk, &proof, &c));
    }

    #[test]
    fn derived_challenge_completeness_and_binding() {
        let params = toy();
        let kp = KeyPair::from_secret(&params, BigUint::from(7u32)).unwrap();
        let proof = prove_knowledge(&params, &kp, b"context A", &BigUint::from(4u32)).unwrap();
        assert!(verify_proof(&params, &kp.pk, &proof));

        // same proof presented under a different context fails
        let mut moved = proof.clone();
        moved.context = b"context B".to_vec();
        assert!(!verify_proof(&params, &kp.pk, &moved));

        // tampered response fails
        let mut forged = proof.clone();
        forged.response = (&forged.response + 1u32) % &params.q;
        assert!(!verify_proof(&params, &kp.pk, &forged));

        // different public key fails
        let other = KeyPair::from_secret(&params, BigUint::from(3u32)).unwrap();
        assert!(!verify_proof(&params, &other.pk, &proof));
    }

    #[test]
    fn nonce_range_enforced() {
        let params = toy();
        let kp = KeyPair::from_secret(&params, BigUint::from(7u32)).unwrap();
        assert_eq!(
            prove_knowledge(&params, &kp, b"x", &BigUint::zero()),
            Err(IdentityError::BadNonce)
        );
        assert_eq!(
            prove_knowledge(&params, &kp, b"x", &BigUint::from(11u32)),
            Err(IdentityError::BadNonce)
        );
    }

    #[test]
    fn malformed_elements_verify_false() {
        let params = toy();
        let kp = KeyPair::from_secret(&params, BigUint::from(7u32)).unwrap();
        let good = prove_knowledge(&params, &kp, b"x", &BigUint::from(2u32)).unwrap();

        let mut oversized = good.clone();
        oversized.commitment = params.p.clone();
        assert!(!verify_proof(&params, &kp.pk, &oversized));

        let mut bad_s = good.clone();
        bad_s.response = params.q.clone();
        assert!(!verify_proof(&params, &kp.pk, &bad_s));

        assert!(!verify_proof(&params, &BigUint::zero(), &good));
    }

    #[test]
    fn node_id_is_stable_over_pk() {
        let params = toy();
        let a = KeyPair::from_secret(&params, BigUint::from(7u32)).unwrap();
        let b = KeyPair::from_secret(&params, BigUint::from(7u32)).unwrap();
        assert_eq!(a.node_id(), b.node_id());
        let c = KeyPair::from_secret(&params, BigUint::from(8u32)).unwrap();
        assert_ne!(a.node_id(), c.node_id());
    }

    #[test]
    fn manager_index_is_deterministic_and_in_range() {
        let anchor = Hash256::digest(b"anchor");
        for n in 1usize..8 {
            for term in 0u64..6 {
                let i = manager_index(term, &anchor, n);
                assert!(i < n);
                assert_eq!(i, manager_index(term, &anchor, n));
            }
        }
        // single candidate always selected
        assert_eq!(manager_index(42, &anchor, 1), 0);
    }
}
