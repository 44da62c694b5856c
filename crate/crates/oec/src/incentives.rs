//! Performance scoring, payment calculation and reputation updates.
//!
//! A member's pay for a report is `Z = f * X_T * (f / g)`: the delivered
//! performance score `f` times the system's credit rate, scaled by the ratio
//! of delivered over advertised performance. Under-delivery is therefore
//! penalized quadratically — delivering half of what was advertised earns a
//! quarter of the honest payment.
//!
//! `f` is a throughput ratio against the task's reference rate, clamped to
//! [0,1]; `g` is the bottleneck minimum over the three advertised capacities
//! relative to the task requirements, clamped to [0,1]. Both live behind a
//! single function boundary so alternative scorers can be swapped in.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::encoding::{Canonical, DecodeError, Decoder, Encoder};
use crate::types::{credits_to_micro, NodeId};

/// Reputation assigned to a freshly subscribed node: above the default join
/// threshold so new nodes can participate, below perfect so history matters.
pub const INITIAL_REPUTATION: f64 = 0.5;

/// Smoothing factor of the reputation moving average.
pub const REPUTATION_ALPHA: f64 = 0.2;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum IncentiveError {
    #[error("invalid report: {0}")]
    InvalidReport(&'static str),
    #[error("expected performance must be positive (admission should prevent this)")]
    DegenerateAdvertisement,
}

/// A task's computing requirement: the reference workload that defines the
/// full-performance rate, plus the capacities needed to serve it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskSpec {
    pub ref_data_mb: f64,
    pub ref_time_s: f64,
    pub req_processing: f64,
    pub req_storage_gb: f64,
    pub req_communication_mbps: f64,
}

impl TaskSpec {
    pub fn valid(&self) -> bool {
        [
            self.ref_data_mb,
            self.ref_time_s,
            self.req_processing,
            self.req_storage_gb,
            self.req_communication_mbps,
        ]
        .iter()
        .all(|v| v.is_finite() && *v > 0.0)
    }

    /// MB per second regarded as full performance.
    pub fn ref_rate(&self) -> f64 {
        self.ref_data_mb / self.ref_time_s
    }
}

impl Canonical for TaskSpec {
    fn encode(&self, enc: &mut Encoder) {
        enc.f64(self.ref_data_mb);
        enc.f64(self.ref_time_s);
        enc.f64(self.req_processing);
        enc.f64(self.req_storage_gb);
        enc.f64(self.req_communication_mbps);
    }

    fn decode(dec: &mut Decoder<'_>) -> Result<Self, DecodeError> {
        Ok(TaskSpec {
            ref_data_mb: dec.f64()?,
            ref_time_s: dec.f64()?,
            req_processing: dec.f64()?,
            req_storage_gb: dec.f64()?,
            req_communication_mbps: dec.f64()?,
        })
    }
}

/// A single (data processed, time taken) observation awaiting settlement.
#[derive(Debug, Clone, PartialEq)]
pub struct EpochReport {
    pub epoch: u64,
    pub data_mb: f64,
    pub time_s: f64,
}

/// Delivered-performance score: min(1, (D/T) / ref_rate).
pub fn compute_performance(task: &TaskSpec, data_mb: f64, time_s: f64) -> Result<f64, IncentiveError> {
    if !time_s.is_finite() || time_s <= 0.0 {
        return Err(IncentiveError::InvalidReport("time must be positive"));
    }
    if !data_mb.is_finite() || data_mb < 0.0 {
        return Err(IncentiveError::InvalidReport("data must be non-negative"));
    }
    Ok(((data_mb / time_s) / task.ref_rate()).min(1.0))
}

/// Expected-performance score from advertised capacities: the bottleneck
/// minimum of the three capacity ratios, clamped to [0,1].
pub fn expected_performance(task: &TaskSpec, processing: f64, storage_gb: f64, communication_mbps: f64) -> f64 {
    (processing / task.req_processing)
        .min(storage_gb / task.req_storage_gb)
        .min(communication_mbps / task.req_communication_mbps)
        .min(1.0)
}

/// The payment for one report: Z = f * X_T * (f / g), in credits.
pub fn compute_payment(f: f64, g: f64, rate: f64) -> Result<f64, IncentiveError> {
    if g <= 0.0 {
        return Err(IncentiveError::DegenerateAdvertisement);
    }
    Ok(f * rate * (f / g))
}

/// Exponential moving average toward the delivered/advertised ratio,
/// clamped to [0,1].
pub fn update_reputation(old: f64, ratio: f64, alpha: f64) -> f64 {
    ((1.0 - alpha) * old + alpha * ratio).clamp(0.0, 1.0)
}

/// One payee's pay for one settled report, recorded on-chain for audit.
#[derive(Debug, Clone, PartialEq)]
pub struct PaymentRecord {
    pub payer: NodeId,
    pub payee: NodeId,
    pub epoch_from: u64,
    pub epoch_to: u64,
    pub f_value: f64,
    pub g_value: f64,
    pub amount_micro: i64,
}

impl Canonical for PaymentRecord {
    fn encode(&self, enc: &mut Encoder) {
        self.payer.encode(enc);
        self.payee.encode(enc);
        enc.u64(self.epoch_from);
        enc.u64(self.epoch_to);
        enc.f64(self.f_value);
        enc.f64(self.g_value);
        enc.i64(self.amount_micro);
    }

    fn decode(dec: &mut Decoder<'_>) -> Result<Self, DecodeError> {
        Ok(PaymentRecord {
            payer: NodeId::decode(dec)?,
            payee: NodeId::decode(dec)?,
            epoch_from: dec.u64()?,
            epoch_to: dec.u64()?,
            f_value: dec.f64()?,
            g_value: dec.f64()?,
            amount_micro: dec.i64()?,
        })
    }
}

/// Micro-credit amount for one report under Eq-style payment.
pub fn report_amount_micro(f: f64, g: f64, rate: f64) -> Result<i64, IncentiveError> {
    compute_payment(f, g, rate).map(credits_to_micro)
}

/// One member's settlement consequence: per-report payment records plus the
/// reputation update over the settled window.
#[derive(Debug, Clone, PartialEq)]
pub struct MemberSettlement {
    pub records: Vec<PaymentRecord>,
    pub update: crate::tx::ReputationUpdatePayload,
}

/// Compute the payment records and reputation update for one member's due
/// reports (epoch <= upto). Returns `None` when nothing is due. This is the
/// single computation shared by settlement proposal and commit validation,
/// so recorded and recomputed values are bit-identical.
pub fn plan_member_settlement(
    leader: &crate::types::NodeId,
    system: &crate::types::SystemId,
    config: &crate::lifecycle::EdgeSystemConfig,
    node: &crate::types::NodeId,
    member: &crate::lifecycle::MembershipRecord,
    current_reputation: f64,
    upto_epoch: u64,
) -> Result<Option<MemberSettlement>, IncentiveError> {
    let due: Vec<&EpochReport> = member
        .unsettled_reports
        .iter()
        .filter(|r| r.epoch <= upto_epoch)
        .collect();
    if due.is_empty() {
        return Ok(None);
    }
    let g = member.g_advertised;
    let mut records = Vec::with_capacity(due.len());
    let mut sum_f = 0.0;
    let mut sum_g = 0.0;
    for report in due {
        let f = compute_performance(&config.task, report.data_mb, report.time_s)?;
        records.push(PaymentRecord {
            payer: *leader,
            payee: *node,
            epoch_from: report.epoch,
            epoch_to: report.epoch,
            f_value: f,
            g_value: g,
            amount_micro: report_amount_micro(f, g, config.rate)?,
        });
        sum_f += f;
        sum_g += g;
    }
    let ratio = (sum_f / sum_g).min(1.0);
    let old = current_reputation;
    let update = crate::tx::ReputationUpdatePayload {
        node: *node,
        system: *system,
        ratio,
        old,
        new: update_reputation(old, ratio, REPUTATION_ALPHA),
    };
    Ok(Some(MemberSettlement { records, update }))
}

/// A full settlement proposal for a system: every named member's due
/// reports, in member order.
#[derive(Debug, Clone, PartialEq)]
pub struct SettlementPlan {
    pub system: crate::types::SystemId,
    pub leader: crate::types::NodeId,
    pub upto_epoch: u64,
    pub payments: Vec<PaymentRecord>,
    pub total_micro: i64,
    pub updates: Vec<crate::tx::ReputationUpdatePayload>,
}

/// Plan the settlement of all due reports up to `upto_epoch`, optionally
/// scoped to a single departing member. Returns `None` when nothing is due.
pub fn plan_settlement(
    state: &crate::state::LedgerState,
    system: crate::types::SystemId,
    upto_epoch: u64,
    scope: Option<crate::types::NodeId>,
) -> Result<Option<SettlementPlan>, crate::state::OpError> {
    let sys = state
        .systems
        .get(&system)
        .ok_or(crate::state::OpError::UnknownSystem)?;
    let mut payments = Vec::new();
    let mut updates = Vec::new();
    for (node, member) in &sys.members {
        if let Some(only) = scope {
            if *node != only {
                continue;
            }
        }
        let reputation = state
            .profiles
            .get(node)
            .map(|p| p.reputation)
            .unwrap_or(INITIAL_REPUTATION);
        if let Some(plan) = plan_member_settlement(
            &sys.leader,
            &system,
            &sys.config,
            node,
            member,
            reputation,
            upto_epoch,
        )? {
            payments.extend(plan.records);
            updates.push(plan.update);
        }
    }
    if payments.is_empty() {
        return Ok(None);
    }
    let total_micro = payments.iter().map(|p| p.amount_micro).sum();
    Ok(Some(SettlementPlan {
        system,
        leader: sys.leader,
        upto_epoch,
        payments,
        total_micro,
        updates,
    }))
}

/// Build the signed [Settlement, ReputationUpdate...] transactions for a
/// settlement plan; empty when nothing is due (a no-op, no transaction).
pub fn settlement_txs(
    state: &crate::state::LedgerState,
    system: crate::types::SystemId,
    upto_epoch: u64,
    scope: Option<crate::types::NodeId>,
    signer: &mut dyn crate::tx::Signer,
) -> Result<Vec<crate::tx::Transaction>, crate::state::OpError> {
    let Some(plan) = plan_settlement(state, system, upto_epoch, scope)? else {
        return Ok(Vec::new());
    };
    let leader = plan.leader;
    let mut seq = state.next_seq(&leader);
    let mut txs = Vec::with_capacity(1 + plan.updates.len());
    let payload = crate::tx::Payload::Settlement {
        system,
        upto_epoch,
        payments: plan.payments,
        total_micro: plan.total_micro,
    };
    let proof = signer.sign(leader, seq, &payload)?;
    txs.push(crate::tx::Transaction {
        actor: leader,
        seq,
        payload,
        proof,
    });
    for update in plan.updates {
        seq += 1;
        let payload = crate::tx::Payload::ReputationUpdate(update);
        let proof = signer.sign(leader, seq, &payload)?;
        txs.push(crate::tx::Transaction {
            actor: leader,
            seq,
            payload,
            proof,
        });
    }
    Ok(txs)
}

/// Periodic settlement of everything due in a system up to `epoch`.
pub fn settle_epoch(
    state: &crate::state::LedgerState,
    system: crate::types::SystemId,
    epoch: u64,
    signer: &mut dyn crate::tx::Signer,
) -> Result<Vec<crate::tx::Transaction>, crate::state::OpError> {
    settlement_txs(state, system, epoch, None, signer)
}
