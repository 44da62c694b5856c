//! Edge-system lifecycle: create, join, leave, break.
//!
//! Admission applies four rules, in order: the applicant must not already be
//! a member of any system, its reputation must meet the system's threshold,
//! its expected performance for the task must meet the system's minimum, and
//! the system must still have capacity (aggregate expected performance below
//! the target). "Enough participants" is measured in aggregate expected
//! performance rather than head-count, since fullness is about serving the
//! stakeholder's mission.
//!
//! Leaders are stakeholders, not paid participants: a leader is never a
//! member of its own system and exits by breaking the system, which settles
//! every member first.

use std::collections::BTreeMap;

use crate::encoding::{Canonical, DecodeError, Decoder, Encoder};
use crate::incentives::{expected_performance, EpochReport, TaskSpec};
use crate::identity::NodeProfile;
use crate::state::{LedgerState, OpError};
use crate::tx::{Payload, RejectReason, Signer, Transaction};
use crate::types::{Hash256, NodeId, SystemId};

pub const DEFAULT_MIN_REPUTATION: f64 = 0.3;
pub const DEFAULT_MIN_EXPECTED_PERF: f64 = 0.25;

/// Incentive and admission configuration fixed at system creation.
#[derive(Debug, Clone, PartialEq)]
pub struct EdgeSystemConfig {
    /// Aggregate expected-performance target, in g-units.
    pub target_capacity: f64,
    /// Credits per unit performance per epoch (the task's credit rate).
    pub rate: f64,
    /// Epochs between periodic settlements.
    pub settlement_period: u64,
    /// Minimum reputation to join.
    pub min_reputation: f64,
    /// Minimum expected performance to join.
    pub min_expected_perf: f64,
    pub task: TaskSpec,
}

impl EdgeSystemConfig {
    pub fn valid(&self) -> bool {
        self.target_capacity.is_finite()
            && self.target_capacity > 0.0
            && self.rate.is_finite()
            && self.rate > 0.0
            && self.settlement_period >= 1
            && (0.0..=1.0).contains(&self.min_reputation)
            && self.min_expected_perf > 0.0
            && self.min_expected_perf <= 1.0
            && self.task.valid()
    }
}

impl Canonical for EdgeSystemConfig {
    fn encode(&self, enc: &mut Encoder) {
        enc.f64(self.target_capacity);
        enc.f64(self.rate);
        enc.u64(self.settlement_period);
        enc.f64(self.min_reputation);
        enc.f64(self.min_expected_perf);
        self.task.encode(enc);
    }

    fn decode(dec: &mut Decoder<'_>) -> Result<Self, DecodeError> {
        Ok(EdgeSystemConfig {
            target_capacity: dec.f64()?,
            rate: dec.f64()?,
            settlement_period: dec.u64()?,
            min_reputation: dec.f64()?,
            min_expected_perf: dec.f64()?,
            task: TaskSpec::decode(dec)?,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SystemStatus {
    Active,
    Dissolved,
}

/// A member's standing inside a system.
#[derive(Debug, Clone, PartialEq)]
pub struct MembershipRecord {
    pub joined_epoch: u64,
    /// Expected performance computed from the profile at join time.
    pub g_advertised: f64,
    pub unsettled_reports: Vec<EpochReport>,
}

/// A leader-created coalition pooling resources for one task.
#[derive(Debug, Clone, PartialEq)]
pub struct EdgeSystem {
    pub id: SystemId,
    pub leader: NodeId,
    pub config: EdgeSystemConfig,
    pub members: BTreeMap<NodeId, MembershipRecord>,
    pub status: SystemStatus,
}

impl EdgeSystem {
    pub fn committed_capacity(&self) -> f64 {
        self.members.values().map(|m| m.g_advertised).sum()
    }

    pub fn is_active(&self) -> bool {
        self.status == SystemStatus::Active
    }
}

/// Deterministic system identifier from the creator and its sequence number,
/// so any replica can derive it before commit.
pub fn derive_system_id(leader: &NodeId, seq: u64) -> SystemId {
    let mut enc = Encoder::new();
    enc.str("edge-system");
    leader.encode(&mut enc);
    enc.u64(seq);
    SystemId(Hash256::digest(&enc.into_bytes()))
}

/// The four admission rules, checked in order. Returns the applicant's
/// expected performance on success. The caller is responsible for resolving
/// the profile, current membership and target system.
pub fn admission_check(
    profile: &NodeProfile,
    current_membership: Option<&SystemId>,
    system: &EdgeSystem,
) -> Result<f64, RejectReason> {
    if current_membership.is_some() {
        return Err(RejectReason::AlreadyMember);
    }
    if profile.reputation < system.config.min_reputation {
        return Err(RejectReason::LowReputation);
    }
    let g = expected_performance(
        &system.config.task,
        profile.resources.processing,
        profile.resources.storage_gb,
        profile.resources.communication_mbps,
    );
    if g < system.config.min_expected_perf {
        return Err(RejectReason::LowCapacity);
    }
    if system.committed_capacity() >= system.config.target_capacity {
        return Err(RejectReason::SystemFull);
    }
    Ok(g)
}

/// Outcome of a join proposal: an admitted Join transaction, or the refusal
/// already wrapped as an auditable on-chain rejection.
#[derive(Debug, Clone)]
pub enum JoinOutcome {
    Admitted(Transaction),
    Refused(Transaction, RejectReason),
}

/// Propose creating a new edge system led by `leader`.
pub fn create_system(
    state: &LedgerState,
    leader: NodeId,
    config: EdgeSystemConfig,
    signer: &mut dyn Signer,
) -> Result<Transaction, OpError> {
    if !state.profiles.contains_key(&leader) {
        return Err(OpError::UnknownNode);
    }
    if !config.valid() {
        return Err(OpError::InvalidConfig("system config out of range"));
    }
    let seq = state.next_seq(&leader);
    let payload = Payload::CreateSystem {
        system: derive_system_id(&leader, seq),
        config,
    };
    let proof = signer.sign(leader, seq, &payload)?;
    Ok(Transaction {
        actor: leader,
        seq,
        payload,
        proof,
    })
}

/// Propose joining a system. A refusal is returned as a signed
/// RejectedAction transaction so the refusal itself is auditable on-chain.
pub fn join(
    state: &LedgerState,
    node: NodeId,
    system: SystemId,
    signer: &mut dyn Signer,
) -> Result<JoinOutcome, OpError> {
    let profile = state.profiles.get(&node).ok_or(OpError::UnknownNode)?;
    let sys = state.systems.get(&system).ok_or(OpError::UnknownSystem)?;
    let seq = state.next_seq(&node);
    let payload = Payload::Join { system };
    let proof = signer.sign(node, seq, &payload)?;
    let decision = if !sys.is_active() {
        Err(RejectReason::SystemDissolved)
    } else {
        admission_check(profile, state.memberships.get(&node), sys).map(|_| ())
    };
    match decision {
        Ok(()) => Ok(JoinOutcome::Admitted(Transaction {
            actor: node,
            seq,
            payload,
            proof,
        })),
        Err(reason) => Ok(JoinOutcome::Refused(
            Transaction {
                actor: node,
                seq,
                payload: Payload::Rejected {
                    original: Box::new(payload),
                    reason,
                },
                proof,
            },
            reason,
        )),
    }
}

/// Propose leaving a system: any unsettled reports are settled and the
/// reputation updated before the membership is removed, all in one block.
/// Returns [Settlement?, ReputationUpdate?, Leave] in commit order.
pub fn leave(
    state: &LedgerState,
    node: NodeId,
    system: SystemId,
    epoch: u64,
    signer: &mut dyn Signer,
) -> Result<Vec<Transaction>, OpError> {
    let sys = state.systems.get(&system).ok_or(OpError::UnknownSystem)?;
    if sys.leader == node {
        return Err(OpError::LeaderMustBreak);
    }
    if state.memberships.get(&node) != Some(&system) {
        return Err(OpError::NotMember);
    }
    let mut txs =
        crate::incentives::settlement_txs(state, system, epoch, Some(node), signer)?;
    let seq = state.next_seq(&node);
    let payload = Payload::Leave { system };
    let proof = signer.sign(node, seq, &payload)?;
    txs.push(Transaction {
        actor: node,
        seq,
        payload,
        proof,
    });
    Ok(txs)
}

/// Propose breaking (dissolving) a system: every member is settled and
/// reputation-updated exactly as in leave, then the system is dissolved.
pub fn break_system(
    state: &LedgerState,
    leader: NodeId,
    system: SystemId,
    epoch: u64,
    signer: &mut dyn Signer,
) -> Result<Vec<Transaction>, OpError> {
    let sys = state.systems.get(&system).ok_or(OpError::UnknownSystem)?;
    if sys.leader != leader {
        return Err(OpError::NotLeader);
    }
    if !sys.is_active() {
        return Err(OpError::AlreadyDissolved);
    }
    let mut txs = crate::incentives::settlement_txs(state, system, epoch, None, signer)?;
    // The settlement and its reputation updates are leader-actored too.
    let seq = state.next_seq(&leader) + txs.len() as u64;
    let payload = Payload::Break { system };
    let proof = signer.sign(leader, seq, &payload)?;
    txs.push(Transaction {
        actor: leader,
        seq,
        payload,
        proof,
    });
    Ok(txs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::identity::Resources;
    use crate::types::Hash256;
    use num_bigint::BigUint;

    fn task() -> TaskSpec {
        TaskSpec {
            ref_data_mb: 100.0,
            ref_time_s: 10.0,
            req_processing: 4.0,
            req_storage_gb: 8.0,
            req_communication_mbps: 100.0,
        }
    }

    fn config() -> EdgeSystemConfig {
        EdgeSystemConfig {
            target_capacity: 1.0,
            rate: 10.0,
            settlement_period: 1,
            min_reputation: DEFAULT_MIN_REPUTATION,
            min_expected_perf: DEFAULT_MIN_EXPECTED_PERF,
            task: task(),
        }
    }

    fn profile(reputation: f64, processing: f64) -> NodeProfile {
        let pk = BigUint::from(13u32);
        NodeProfile {
            id: crate::identity::node_id_for_pk(&pk),
            pk,
            bc_node: false,
            resources: Resources {
                processing,
                storage_gb: 8.0,
                communication_mbps: 100.0,
                spectrum: vec![],
            },
            payment_detail: String::new(),
            reputation,
        }
    }

    fn system_with_committed(committed: &[f64]) -> EdgeSystem {
        let mut members = BTreeMap::new();
        for (i, g) in committed.iter().enumerate() {
            let id = NodeId(Hash256::digest(&[i as u8]));
            members.insert(
                id,
                MembershipRecord {
                    joined_epoch: 1,
                    g_advertised: *g,
                    unsettled_reports: vec![],
                },
            );
        }
        EdgeSystem {
            id: SystemId(Hash256::digest(b"sys")),
            leader: NodeId(Hash256::digest(b"leader")),
            config: config(),
            members,
            status: SystemStatus::Active,
        }
    }

    #[test]
    fn admission_all_rules_pass() {
        let sys = system_with_committed(&[]);
        let p = profile(0.5, 2.0); // g = 0.5
        assert_eq!(admission_check(&p, None, &sys), Ok(0.5));
    }

    #[test]
    fn admission_refuses_existing_member() {
        let sys = system_with_committed(&[]);
        let p = profile(0.5, 2.0);
        let elsewhere = SystemId(Hash256::digest(b"other"));
        assert_eq!(
            admission_check(&p, Some(&elsewhere), &sys),
            Err(RejectReason::AlreadyMember)
        );
    }

    #[test]
    fn admission_refuses_low_reputation() {
        let sys = system_with_committed(&[]);
        let p = profile(0.2, 2.0);
        assert_eq!(
            admission_check(&p, None, &sys),
            Err(RejectReason::LowReputation)
        );
    }

    #[test]
    fn admission_refuses_low_capacity() {
        let sys = system_with_committed(&[]);
        // g = min(0.5/4, 1, 1) = 0.125 < 0.25
        let p = profile(0.5, 0.5);
        assert_eq!(
            admission_check(&p, None, &sys),
            Err(RejectReason::LowCapacity)
        );
    }

    #[test]
    fn admission_refuses_full_system() {
        // two members with g = 0.5 each already commit the full 1.0 target
        let sys = system_with_committed(&[0.5, 0.5]);
        let p = profile(0.5, 2.0);
        assert_eq!(
            admission_check(&p, None, &sys),
            Err(RejectReason::SystemFull)
        );
    }

    #[test]
    fn refusal_reasons_follow_rule_order() {
        // everything wrong at once: membership wins
        let sys = system_with_committed(&[0.5, 0.5]);
        let p = profile(0.1, 0.1);
        let elsewhere = SystemId(Hash256::digest(b"other"));
        assert_eq!(
            admission_check(&p, Some(&elsewhere), &sys),
            Err(RejectReason::AlreadyMember)
        );
        // then reputation
        assert_eq!(
            admission_check(&p, None, &sys),
            Err(RejectReason::LowReputation)
        );
    }

    #[test]
    fn config_validation() {
        assert!(config().valid());
        let mut c = config();
        c.target_capacity = 0.0;
        assert!(!c.valid());
        let mut c = config();
        c.settlement_period = 0;
        assert!(!c.valid());
        let mut c = config();
        c.min_expected_perf = 0.0;
        assert!(!c.valid());
    }

    #[test]
    fn system_id_derivation_is_stable() {
        let leader = NodeId(Hash256::digest(b"x"));
        assert_eq!(derive_system_id(&leader, 2), derive_system_id(&leader, 2));
        assert_ne!(derive_system_id(&leader, 2), derive_system_id(&leader, 3));
    }
}
