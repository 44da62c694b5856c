//! The platform state derived purely from the transaction sequence.
//!
//! `LedgerState` is never persisted: it is always the result of folding the
//! committed transactions in order, so re-folding the same ledger yields an
//! identical state. `apply_tx` is the single validation-and-application
//! authority used by block proposal, block commit, chain verification and
//! replay alike.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use thiserror::Error;

use crate::identity::{verify_proof, GroupParams, IdentityError, NodeProfile};
use crate::incentives::{
    plan_member_settlement, EpochReport, IncentiveError, INITIAL_REPUTATION,
};
use crate::lifecycle::{
    admission_check, derive_system_id, EdgeSystem, MembershipRecord, SystemStatus,
};
use crate::tx::{Payload, RejectReason, Transaction};
use crate::types::{NodeId, SystemId};

/// Full platform state as of some block.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct LedgerState {
    pub profiles: BTreeMap<NodeId, NodeProfile>,
    pub systems: BTreeMap<SystemId, EdgeSystem>,
    /// Signed credit balances in micro-credits; leaders may go negative.
    pub balances: BTreeMap<NodeId, i64>,
    /// Which system each node currently participates in, if any.
    pub memberships: BTreeMap<NodeId, SystemId>,
    /// Next expected sequence number per actor (starts at 1).
    pub next_seqs: BTreeMap<NodeId, u64>,
    /// Highest settled-or-reported epoch per (node, system); enforces one
    /// report per epoch even across leave/rejoin.
    pub report_floors: BTreeMap<(NodeId, SystemId), u64>,
    /// Reputation updates staged by a settlement that the immediately
    /// following transactions must commit, in order.
    pub pending_updates: VecDeque<crate::tx::ReputationUpdatePayload>,
}

impl LedgerState {
    pub fn next_seq(&self, actor: &NodeId) -> u64 {
        self.next_seqs.get(actor).copied().unwrap_or(1)
    }

    pub fn balance(&self, node: &NodeId) -> i64 {
        self.balances.get(node).copied().unwrap_or(0)
    }

    /// Subscribed blockchain peers, sorted by id; the manager candidate set.
    pub fn bc_peers(&self) -> Vec<NodeId> {
        self.profiles
            .values()
            .filter(|p| p.bc_node)
            .map(|p| p.id)
            .collect()
    }

    pub fn reputation(&self, node: &NodeId) -> Option<f64> {
        self.profiles.get(node).map(|p| p.reputation)
    }
}

/// Why a transaction cannot be applied. `Refused` is the one recoverable
/// class: a proposer may commit it as an auditable rejection instead.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TxError {
    #[error("refused: {0}")]
    Refused(RejectReason),
    #[error("authentication failed")]
    AuthFailed,
    #[error("bad sequence number: expected {expected}, got {got}")]
    BadSeq { expected: u64, got: u64 },
    #[error("unknown actor")]
    UnknownActor,
    #[error("identity already subscribed")]
    DuplicateIdentity,
    #[error("malformed transaction: {0}")]
    Malformed(&'static str),
    #[error("leader cannot leave its own system")]
    LeaderMustBreak,
    #[error("actor is not the system leader")]
    NotLeader,
    #[error("exit before settling outstanding reports")]
    UnsettledReports,
    #[error("settlement does not match ledger state: {0}")]
    SettlementMismatch(&'static str),
    #[error("reputation update does not match the staged settlement consequence")]
    UnexpectedReputationUpdate,
    #[error("recorded rejection does not match validation outcome")]
    RejectionMismatch,
}

impl TxError {
    /// Refusal-class errors may be wrapped as on-chain rejections; anything
    /// else invalidates the transaction outright.
    pub fn refusal(&self) -> Option<RejectReason> {
        match self {
            TxError::Refused(reason) => Some(*reason),
            _ => None,
        }
    }
}

/// Proposal-time errors for the operation constructors.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum OpError {
    #[error("unknown node")]
    UnknownNode,
    #[error("unknown system")]
    UnknownSystem,
    #[error("invalid config: {0}")]
    InvalidConfig(&'static str),
    #[error("malformed profile: {0}")]
    MalformedProfile(&'static str),
    #[error("proof does not verify")]
    AuthFailed,
    #[error("identity already subscribed")]
    DuplicateIdentity,
    #[error("node is not a member of that system")]
    NotMember,
    #[error("leader cannot leave its own system; break it instead")]
    LeaderMustBreak,
    #[error("only the leader may break a system")]
    NotLeader,
    #[error("system already dissolved")]
    AlreadyDissolved,
    #[error("signing failed: {0}")]
    Signing(#[from] IdentityError),
    #[error("incentive computation failed: {0}")]
    Incentive(#[from] IncentiveError),
}

/// Validate a transaction against the state and apply it. The state is
/// mutated only on success when the error is reported at the first failing
/// check; callers needing atomicity over partially-applied kinds work on a
/// scratch clone (see `BlockDraft`).
pub fn apply_tx(
    state: &mut LedgerState,
    tx: &Transaction,
    block_index: u64,
    params: &GroupParams,
) -> Result<(), TxError> {
    let expected_seq = state.next_seq(&tx.actor);
    if tx.seq != expected_seq {
        return Err(TxError::BadSeq {
            expected: expected_seq,
            got: tx.seq,
        });
    }

    // A settlement's staged reputation updates must be committed before any
    // other transaction is admitted.
    if !matches!(tx.payload, Payload::ReputationUpdate(_)) && !state.pending_updates.is_empty() {
        return Err(TxError::Malformed(
            "reputation updates must immediately follow their settlement",
        ));
    }

    // Resolve the key the proof must verify against. Subscriptions carry
    // their key; everything else must come from a subscribed actor.
    let signing_profile = match &tx.payload {
        Payload::Subscribe { profile } => profile,
        Payload::Rejected { original, .. } => match original.as_ref() {
            Payload::Subscribe { profile } => profile,
            _ => state.profiles.get(&tx.actor).ok_or(TxError::UnknownActor)?,
        },
        _ => state.profiles.get(&tx.actor).ok_or(TxError::UnknownActor)?,
    };
    if signing_profile.id != tx.actor {
        return Err(TxError::Malformed("actor does not match profile identity"));
    }
    let pk = signing_profile.pk.clone();
    if tx.proof.context != tx.expected_context() {
        return Err(TxError::AuthFailed);
    }
    if !verify_proof(params, &pk, &tx.proof) {
        return Err(TxError::AuthFailed);
    }

    apply_payload(state, tx, block_index, params)?;
    state.next_seqs.insert(tx.actor, expected_seq + 1);
    Ok(())
}

fn apply_payload(
    state: &mut LedgerState,
    tx: &Transaction,
    block_index: u64,
    params: &GroupParams,
) -> Result<(), TxError> {
    match &tx.payload {
        Payload::Subscribe { profile } => {
            if state.profiles.contains_key(&profile.id) {
                return Err(TxError::DuplicateIdentity);
            }
            if !profile.well_formed() {
                return Err(TxError::Malformed("profile fields out of range"));
            }
            if profile.reputation != INITIAL_REPUTATION {
                return Err(TxError::Malformed("new profiles start at neutral reputation"));
            }
            state.profiles.insert(profile.id, profile.clone());
            state.balances.entry(profile.id).or_insert(0);
            Ok(())
        }

        Payload::CreateSystem { system, config } => {
            if !config.valid() {
                return Err(TxError::Malformed("system config out of range"));
            }
            if *system != derive_system_id(&tx.actor, tx.seq) {
                return Err(TxError::Malformed("system id must derive from creator and seq"));
            }
            if state.systems.contains_key(system) {
                return Err(TxError::Malformed("system id already exists"));
            }
            state.systems.insert(
                *system,
                EdgeSystem {
                    id: *system,
                    leader: tx.actor,
                    config: config.clone(),
                    members: BTreeMap::new(),
                    status: SystemStatus::Active,
                },
            );
            Ok(())
        }

        Payload::Join { system } => {
            let sys = state
                .systems
                .get(system)
                .ok_or(TxError::Refused(RejectReason::UnknownSystem))?;
            if !sys.is_active() {
                return Err(TxError::Refused(RejectReason::SystemDissolved));
            }
            let profile = state.profiles.get(&tx.actor).expect("actor resolved above");
            let g = admission_check(profile, state.memberships.get(&tx.actor), sys)
                .map_err(TxError::Refused)?;
            let sys = state.systems.get_mut(system).expect("checked above");
            sys.members.insert(
                tx.actor,
                MembershipRecord {
                    joined_epoch: block_index,
                    g_advertised: g,
                    unsettled_reports: Vec::new(),
                },
            );
            state.memberships.insert(tx.actor, *system);
            Ok(())
        }

        Payload::Leave { system } => {
            let sys = state
                .systems
                .get(system)
                .ok_or(TxError::Refused(RejectReason::UnknownSystem))?;
            if sys.leader == tx.actor {
                return Err(TxError::LeaderMustBreak);
            }
            if state.memberships.get(&tx.actor) != Some(system) {
                return Err(TxError::Refused(RejectReason::NotMember));
            }
            let member = sys.members.get(&tx.actor).expect("membership maps agree");
            if !member.unsettled_reports.is_empty() {
                return Err(TxError::UnsettledReports);
            }
            let sys = state.systems.get_mut(system).expect("checked above");
            sys.members.remove(&tx.actor);
            state.memberships.remove(&tx.actor);
            Ok(())
        }

        Payload::Break { system } => {
            let sys = state
                .systems
                .get(system)
                .ok_or(TxError::Refused(RejectReason::UnknownSystem))?;
            if sys.leader != tx.actor {
                return Err(TxError::NotLeader);
            }
            if !sys.is_active() {
                return Err(TxError::Refused(RejectReason::SystemDissolved));
            }
            if sys.members.values().any(|m| !m.unsettled_reports.is_empty()) {
                return Err(TxError::UnsettledReports);
            }
            let members: Vec<NodeId> = sys.members.keys().copied().collect();
            let sys = state.systems.get_mut(system).expect("checked above");
            sys.members.clear();
            sys.status = SystemStatus::Dissolved;
            for node in members {
                state.memberships.remove(&node);
            }
            Ok(())
        }

        Payload::PerformanceReport {
            system,
            epoch,
            data_mb,
            time_s,
        } => {
            let sys = state
                .systems
                .get(system)
                .ok_or(TxError::Refused(RejectReason::UnknownSystem))?;
            if !sys.is_active() {
                return Err(TxError::Refused(RejectReason::SystemDissolved));
            }
            if state.memberships.get(&tx.actor) != Some(system) {
                return Err(TxError::Refused(RejectReason::NotMember));
            }
            if !time_s.is_finite() || *time_s <= 0.0 || !data_mb.is_finite() || *data_mb < 0.0 {
                return Err(TxError::Malformed("report measurements out of range"));
            }
            if *epoch > block_index {
                return Err(TxError::Malformed("report for a future epoch"));
            }
            let floor = state
                .report_floors
                .get(&(tx.actor, *system))
                .copied()
                .unwrap_or(0);
            if *epoch <= floor {
                return Err(TxError::Refused(RejectReason::DuplicateReport));
            }
            let sys = state.systems.get_mut(system).expect("checked above");
            let member = sys.members.get_mut(&tx.actor).expect("membership maps agree");
            member.unsettled_reports.push(EpochReport {
                epoch: *epoch,
                data_mb: *data_mb,
                time_s: *time_s,
            });
            state.report_floors.insert((tx.actor, *system), *epoch);
            Ok(())
        }

        Payload::Settlement {
            system,
            upto_epoch,
            payments,
            total_micro,
        } => {
            let sys = state
                .systems
                .get(system)
                .ok_or(TxError::SettlementMismatch("unknown system"))?;
            if !sys.is_active() {
                return Err(TxError::SettlementMismatch("system dissolved"));
            }
            if sys.leader != tx.actor {
                return Err(TxError::NotLeader);
            }
            if *upto_epoch > block_index {
                return Err(TxError::SettlementMismatch("settles a future epoch"));
            }
            if payments.is_empty() {
                return Err(TxError::SettlementMismatch("empty settlement"));
            }

            // Recompute what this settlement must contain for the payees it
            // names: every due report of each payee, in payee order.
            let payees: BTreeSet<NodeId> = payments.iter().map(|p| p.payee).collect();
            let mut expected_payments = Vec::new();
            let mut expected_updates = Vec::new();
            for payee in &payees {
                let member = sys
                    .members
                    .get(payee)
                    .ok_or(TxError::SettlementMismatch("payee is not a member"))?;
                let profile = state.profiles.get(payee).expect("members are subscribed");
                let plan = plan_member_settlement(
                    &sys.leader,
                    system,
                    &sys.config,
                    payee,
                    member,
                    profile.reputation,
                    *upto_epoch,
                )
                .map_err(|_| TxError::SettlementMismatch("payment computation failed"))?
                .ok_or(TxError::SettlementMismatch("payee has nothing due"))?;
                expected_payments.extend(plan.records);
                expected_updates.push(plan.update);
            }
            if &expected_payments != payments {
                return Err(TxError::SettlementMismatch("payment records differ"));
            }
            let sum: i64 = expected_payments.iter().map(|p| p.amount_micro).sum();
            if sum != *total_micro {
                return Err(TxError::SettlementMismatch("total does not equal record sum"));
            }

            // Move the credits and stage the reputation consequences.
            *state.balances.entry(tx.actor).or_insert(0) -= total_micro;
            for record in payments {
                *state.balances.entry(record.payee).or_insert(0) += record.amount_micro;
            }
            let upto = *upto_epoch;
            let sys = state.systems.get_mut(system).expect("checked above");
            for payee in &payees {
                let member = sys.members.get_mut(payee).expect("checked above");
                member.unsettled_reports.retain(|r| r.epoch > upto);
            }
            state.pending_updates.extend(expected_updates);
            Ok(())
        }

        Payload::ReputationUpdate(update) => {
            let expected = state
                .pending_updates
                .front()
                .ok_or(TxError::UnexpectedReputationUpdate)?;
            if update != expected {
                return Err(TxError::UnexpectedReputationUpdate);
            }
            let sys = state
                .systems
                .get(&update.system)
                .ok_or(TxError::UnexpectedReputationUpdate)?;
            if sys.leader != tx.actor {
                return Err(TxError::NotLeader);
            }
            let profile = state
                .profiles
                .get_mut(&update.node)
                .expect("staged updates reference subscribed nodes");
            profile.reputation = update.new;
            state.pending_updates.pop_front();
            Ok(())
        }

        Payload::Rejected { original, reason } => {
            if matches!(original.as_ref(), Payload::Rejected { .. }) {
                return Err(TxError::Malformed("nested rejection"));
            }
            // Re-run the embedded intent against a scratch state: it must
            // fail with exactly the recorded refusal.
            let probe_tx = Transaction {
                actor: tx.actor,
                seq: tx.seq,
                payload: original.as_ref().clone(),
                proof: tx.proof.clone(),
            };
            let mut probe = state.clone();
            match apply_tx(&mut probe, &probe_tx, block_index, params) {
                Ok(()) => Err(TxError::RejectionMismatch),
                Err(TxError::Refused(actual)) if actual == *reason => Ok(()),
                Err(TxError::Refused(_)) => Err(TxError::RejectionMismatch),
                Err(hard) => Err(hard),
            }
        }
    }
}
