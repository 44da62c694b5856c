//! Transactions and blocks: every protocol action the platform records.
//!
//! A transaction is (kind, actor, seq, payload) plus a proof of secret-key
//! knowledge over the canonical encoding of exactly those fields, so every
//! recorded action is non-repudiable. Refused actions are not dropped: they
//! commit as `Rejected` records that embed the signed original intent and
//! the refusal reason, keeping the audit trail complete.

use crate::encoding::{Canonical, DecodeError, Decoder, Encoder};
use crate::identity::{IdentityError, NodeProfile, ZkProof};
use crate::incentives::PaymentRecord;
use crate::lifecycle::EdgeSystemConfig;
use crate::types::{Hash256, NodeId, SystemId};

use serde::{Deserialize, Serialize};
use std::fmt;

/// Transaction kind discriminant; doubles as the canonical tag byte.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum TxKind {
    Subscribe = 0,
    CreateSystem = 1,
    Join = 2,
    Leave = 3,
    Break = 4,
    PerformanceReport = 5,
    Settlement = 6,
    ReputationUpdate = 7,
    RejectedAction = 8,
}

impl TxKind {
    pub fn name(&self) -> &'static str {
        match self {
            TxKind::Subscribe => "Subscribe",
            TxKind::CreateSystem => "CreateSystem",
            TxKind::Join => "Join",
            TxKind::Leave => "Leave",
            TxKind::Break => "Break",
            TxKind::PerformanceReport => "PerformanceReport",
            TxKind::Settlement => "Settlement",
            TxKind::ReputationUpdate => "ReputationUpdate",
            TxKind::RejectedAction => "RejectedAction",
        }
    }
}

impl fmt::Display for TxKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Why an action was refused. Recorded on-chain inside `Rejected` records.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
pub enum RejectReason {
    AlreadyMember = 0,
    LowReputation = 1,
    LowCapacity = 2,
    SystemFull = 3,
    UnknownSystem = 4,
    SystemDissolved = 5,
    NotMember = 6,
    DuplicateReport = 7,
}

impl RejectReason {
    pub fn name(&self) -> &'static str {
        match self {
            RejectReason::AlreadyMember => "AlreadyMember",
            RejectReason::LowReputation => "LowReputation",
            RejectReason::LowCapacity => "LowCapacity",
            RejectReason::SystemFull => "SystemFull",
            RejectReason::UnknownSystem => "UnknownSystem",
            RejectReason::SystemDissolved => "SystemDissolved",
            RejectReason::NotMember => "NotMember",
            RejectReason::DuplicateReport => "DuplicateReport",
        }
    }

    fn from_tag(tag: u8) -> Result<Self, DecodeError> {
        Ok(match tag {
            0 => RejectReason::AlreadyMember,
            1 => RejectReason::LowReputation,
            2 => RejectReason::LowCapacity,
            3 => RejectReason::SystemFull,
            4 => RejectReason::UnknownSystem,
            5 => RejectReason::SystemDissolved,
            6 => RejectReason::NotMember,
            7 => RejectReason::DuplicateReport,
            tag => return Err(DecodeError::BadTag { what: "reject reason", tag }),
        })
    }
}

impl fmt::Display for RejectReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl Canonical for RejectReason {
    fn encode(&self, enc: &mut Encoder) {
        enc.u8(*self as u8);
    }

    fn decode(dec: &mut Decoder<'_>) -> Result<Self, DecodeError> {
        RejectReason::from_tag(dec.u8()?)
    }
}

/// The reputation consequence of one settled window, recorded on-chain.
#[derive(Debug, Clone, PartialEq)]
pub struct ReputationUpdatePayload {
    pub node: NodeId,
    pub system: SystemId,
    /// min(1, delivered / advertised) over the settled window.
    pub ratio: f64,
    pub old: f64,
    pub new: f64,
}

impl Canonical for ReputationUpdatePayload {
    fn encode(&self, enc: &mut Encoder) {
        self.node.encode(enc);
        self.system.encode(enc);
        enc.f64(self.ratio);
        enc.f64(self.old);
        enc.f64(self.new);
    }

    fn decode(dec: &mut Decoder<'_>) -> Result<Self, DecodeError> {
        Ok(ReputationUpdatePayload {
            node: NodeId::decode(dec)?,
            system: SystemId::decode(dec)?,
            ratio: dec.f64()?,
            old: dec.f64()?,
            new: dec.f64()?,
        })
    }
}

/// Kind-specific transaction content.
#[derive(Debug, Clone, PartialEq)]
pub enum Payload {
    Subscribe {
        profile: NodeProfile,
    },
    CreateSystem {
        system: SystemId,
        config: EdgeSystemConfig,
    },
    Join {
        system: SystemId,
    },
    Leave {
        system: SystemId,
    },
    Break {
        system: SystemId,
    },
    PerformanceReport {
        system: SystemId,
        epoch: u64,
        data_mb: f64,
        time_s: f64,
    },
    Settlement {
        system: SystemId,
        upto_epoch: u64,
        payments: Vec<PaymentRecord>,
        total_micro: i64,
    },
    ReputationUpdate(ReputationUpdatePayload),
    Rejected {
        original: Box<Payload>,
        reason: RejectReason,
    },
}

impl Payload {
    pub fn kind(&self) -> TxKind {
        match self {
            Payload::Subscribe { .. } => TxKind::Subscribe,
            Payload::CreateSystem { .. } => TxKind::CreateSystem,
            Payload::Join { .. } => TxKind::Join,
            Payload::Leave { .. } => TxKind::Leave,
            Payload::Break { .. } => TxKind::Break,
            Payload::PerformanceReport { .. } => TxKind::PerformanceReport,
            Payload::Settlement { .. } => TxKind::Settlement,
            Payload::ReputationUpdate(_) => TxKind::ReputationUpdate,
            Payload::Rejected { .. } => TxKind::RejectedAction,
        }
    }

    /// The system this action concerns, when there is one.
    pub fn system(&self) -> Option<SystemId> {
        match self {
            Payload::Subscribe { .. } => None,
            Payload::CreateSystem { system, .. }
            | Payload::Join { system }
            | Payload::Leave { system }
            | Payload::Break { system }
            | Payload::PerformanceReport { system, .. }
            | Payload::Settlement { system, .. } => Some(*system),
            Payload::ReputationUpdate(u) => Some(u.system),
            Payload::Rejected { original, .. } => original.system(),
        }
    }

    fn encode_fields(&self, enc: &mut Encoder) {
        match self {
            Payload::Subscribe { profile } => profile.encode(enc),
            Payload::CreateSystem { system, config } => {
                system.encode(enc);
                config.encode(enc);
            }
            Payload::Join { system } | Payload::Leave { system } | Payload::Break { system } => {
                system.encode(enc)
            }
            Payload::PerformanceReport {
                system,
                epoch,
                data_mb,
                time_s,
            } => {
                system.encode(enc);
                enc.u64(*epoch);
                enc.f64(*data_mb);
                enc.f64(*time_s);
            }
            Payload::Settlement {
                system,
                upto_epoch,
                payments,
                total_micro,
            } => {
                system.encode(enc);
                enc.u64(*upto_epoch);
                enc.list(payments);
                enc.i64(*total_micro);
            }
            Payload::ReputationUpdate(update) => update.encode(enc),
            Payload::Rejected { original, reason } => {
                enc.u8(original.kind() as u8);
                original.encode_fields(enc);
                reason.encode(enc);
            }
        }
    }

    fn decode_fields(kind_tag: u8, dec: &mut Decoder<'_>) -> Result<Self, DecodeError> {
        Ok(match kind_tag {
            0 => Payload::Subscribe {
                profile: NodeProfile::decode(dec)?,
            },
            1 => Payload::CreateSystem {
                system: SystemId::decode(dec)?,
                config: EdgeSystemConfig::decode(dec)?,
            },
            2 => Payload::Join {
                system: SystemId::decode(dec)?,
            },
            3 => Payload::Leave {
                system: SystemId::decode(dec)?,
            },
            4 => Payload::Break {
                system: SystemId::decode(dec)?,
            },
            5 => Payload::PerformanceReport {
                system: SystemId::decode(dec)?,
                epoch: dec.u64()?,
                data_mb: dec.f64()?,
                time_s: dec.f64()?,
            },
            6 => Payload::Settlement {
                system: SystemId::decode(dec)?,
                upto_epoch: dec.u64()?,
                payments: dec.list()?,
                total_micro: dec.i64()?,
            },
            7 => Payload::ReputationUpdate(ReputationUpdatePayload::decode(dec)?),
            8 => {
                let inner_tag = dec.u8()?;
                if inner_tag == 8 {
                    return Err(DecodeError::BadTag {
                        what: "nested rejection",
                        tag: inner_tag,
                    });
                }
                let original = Payload::decode_fields(inner_tag, dec)?;
                Payload::Rejected {
                    original: Box::new(original),
                    reason: RejectReason::decode(dec)?,
                }
            }
            tag => return Err(DecodeError::BadTag { what: "payload", tag }),
        })
    }
}

impl Canonical for Payload {
    fn encode(&self, enc: &mut Encoder) {
        enc.u8(self.kind() as u8);
        self.encode_fields(enc);
    }

    fn decode(dec: &mut Decoder<'_>) -> Result<Self, DecodeError> {
        let tag = dec.u8()?;
        Payload::decode_fields(tag, dec)
    }
}

/// Canonical bytes an actor signs: (kind, actor, seq, payload fields).
pub fn signing_context(actor: &NodeId, seq: u64, payload: &Payload) -> Vec<u8> {
    let mut enc = Encoder::new();
    enc.u8(payload.kind() as u8);
    actor.encode(&mut enc);
    enc.u64(seq);
    payload.encode_fields(&mut enc);
    enc.into_bytes()
}

/// Anything that can produce a knowledge proof for an actor over a payload.
/// The simulator implements this with its key table and seeded RNG.
pub trait Signer {
    fn sign(
        &mut self,
        actor: NodeId,
        seq: u64,
        payload: &Payload,
    ) -> Result<ZkProof, IdentityError>;
}

/// One recorded protocol action.
#[derive(Debug, Clone, PartialEq)]
pub struct Transaction {
    pub actor: NodeId,
    /// Per-actor monotonic counter, starting at 1.
    pub seq: u64,
    pub payload: Payload,
    pub proof: ZkProof,
}

impl Transaction {
    pub fn kind(&self) -> TxKind {
        self.payload.kind()
    }

    /// The context the actor's proof must be bound to. For a rejected
    /// action this is the originally signed intent, not the wrapper.
    pub fn expected_context(&self) -> Vec<u8> {
        match &self.payload {
            Payload::Rejected { original, .. } => signing_context(&self.actor, self.seq, original),
            payload => signing_context(&self.actor, self.seq, payload),
        }
    }

    /// Wrap a refused intent into its auditable on-chain form, preserving
    /// the original signature.
    pub fn into_rejected(self, reason: RejectReason) -> Transaction {
        debug_assert!(self.kind() != TxKind::RejectedAction);
        Transaction {
            actor: self.actor,
            seq: self.seq,
            payload: Payload::Rejected {
                original: Box::new(self.payload),
                reason,
            },
            proof: self.proof,
        }
    }
}

impl Canonical for Transaction {
    fn encode(&self, enc: &mut Encoder) {
        enc.u8(self.payload.kind() as u8);
        self.actor.encode(enc);
        enc.u64(self.seq);
        self.payload.encode_fields(enc);
        self.proof.encode(enc);
    }

    fn decode(dec: &mut Decoder<'_>) -> Result<Self, DecodeError> {
        let tag = dec.u8()?;
        let actor = NodeId::decode(dec)?;
        let seq = dec.u64()?;
        let payload = Payload::decode_fields(tag, dec)?;
        let proof = ZkProof::decode(dec)?;
        Ok(Transaction {
            actor,
            seq,
            payload,
            proof,
        })
    }
}

/// One committed block of the hash chain.
#[derive(Debug, Clone, PartialEq)]
pub struct Block {
    pub index: u64,
    pub prev_hash: Hash256,
    /// The manager that committed this block.
    pub manager: NodeId,
    /// Manager-term index this block belongs to.
    pub term: u64,
    pub txs: Vec<Transaction>,
    pub hash: Hash256,
}

impl Block {
    /// Canonical bytes the block hash commits to (all fields but the hash).
    pub fn hash_preimage(&self) -> Vec<u8> {
        let mut enc = Encoder::new();
        enc.u64(self.index);
        self.prev_hash.encode(&mut enc);
        self.manager.encode(&mut enc);
        enc.u64(self.term);
        enc.list(&self.txs);
        enc.into_bytes()
    }

    /// Build and seal a block: compute its hash over the canonical preimage.
    pub fn seal(
        index: u64,
        prev_hash: Hash256,
        manager: NodeId,
        term: u64,
        txs: Vec<Transaction>,
    ) -> Block {
        let mut block = Block {
            index,
            prev_hash,
            manager,
            term,
            txs,
            hash: Hash256::ZERO,
        };
        block.hash = hash_block(&block);
        block
    }

    /// The fixed genesis block: index 0, all-zero previous hash, no
    /// transactions, committed by the zero manager.
    pub fn genesis() -> Block {
        Block::seal(0, Hash256::ZERO, NodeId::ZERO, 0, Vec::new())
    }

    /// Recompute the hash and compare with the stored field.
    pub fn hash_consistent(&self) -> bool {
        self.hash == hash_block(self)
    }
}

/// SHA-256 over the canonical encoding of the block without its hash field.
pub fn hash_block(block: &Block) -> Hash256 {
    Hash256::digest(&block.hash_preimage())
}

impl Canonical for Block {
    fn encode(&self, enc: &mut Encoder) {
        enc.u64(self.index);
        self.prev_hash.encode(enc);
        self.manager.encode(enc);
        enc.u64(self.term);
        enc.list(&self.txs);
        self.hash.encode(enc);
    }

    fn decode(dec: &mut Decoder<'_>) -> Result<Self, DecodeError> {
        Ok(Block {
            index: dec.u64()?,
            prev_hash: Hash256::decode(dec)?,
            manager: NodeId::decode(dec)?,
            term: dec.u64()?,
            txs: dec.list()?,
            hash: Hash256::decode(dec)?,
        })
    }
}
