//! Run metrics derived purely from the ledger.
//!
//! The collector rides the same fold that verifies the chain, so every
//! number here is recomputable from an exported ledger file alone; the
//! simulator's "live" metrics and a replay of its export must be equal.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::Path;

use crate::incentives::compute_performance;
use crate::ledger::{fold_blocks, ChainFault, FoldObserver, Ledger};
use crate::state::LedgerState;
use crate::tx::{Block, Payload, RejectReason, Transaction, TxKind};
use crate::types::{Hash256, NodeId, SystemId};

#[derive(Debug, Clone, PartialEq)]
pub struct PaymentRow {
    pub epoch: u64,
    pub system: SystemId,
    pub payer: NodeId,
    pub payee: NodeId,
    pub f: f64,
    pub g: f64,
    pub amount_micro: i64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReputationRow {
    pub epoch: u64,
    pub node: NodeId,
    pub reputation: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RejectionRow {
    pub epoch: u64,
    pub actor: NodeId,
    pub action: TxKind,
    pub system: Option<SystemId>,
    pub reason: RejectReason,
}

#[derive(Debug, Clone, PartialEq)]
pub struct UtilizationRow {
    pub epoch: u64,
    pub system: SystemId,
    pub sum_f: f64,
    pub sum_g: f64,
    /// Delivered over expected performance for the epoch's reports.
    pub utilization: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpectrumRow {
    pub epoch: u64,
    /// Bandwidth advertised by all subscribed nodes.
    pub offered_mhz: f64,
    /// Bandwidth of nodes currently committed to a system.
    pub committed_mhz: f64,
}

/// Everything a run reports; recomputable from the exported ledger alone.
#[derive(Debug, Clone, PartialEq)]
pub struct Metrics {
    pub blocks: u64,
    pub tip_hash: Hash256,
    pub chain_ok: bool,
    pub tx_counts: BTreeMap<TxKind, u64>,
    pub payments: Vec<PaymentRow>,
    /// Micro-credits received per payee over the whole run.
    pub payment_totals: BTreeMap<NodeId, i64>,
    pub reputations: Vec<ReputationRow>,
    pub rejections: Vec<RejectionRow>,
    pub rejection_counts: BTreeMap<RejectReason, u64>,
    pub utilization: Vec<UtilizationRow>,
    pub spectrum: Vec<SpectrumRow>,
    pub final_balances: BTreeMap<NodeId, i64>,
    pub final_reputations: BTreeMap<NodeId, f64>,
}

#[derive(Default)]
struct Collector {
    tx_counts: BTreeMap<TxKind, u64>,
    payments: Vec<PaymentRow>,
    payment_totals: BTreeMap<NodeId, i64>,
    reputations: Vec<ReputationRow>,
    rejections: Vec<RejectionRow>,
    rejection_counts: BTreeMap<RejectReason, u64>,
    utilization: BTreeMap<(u64, SystemId), (f64, f64)>,
    spectrum: Vec<SpectrumRow>,
}

impl FoldObserver for Collector {
    fn on_tx(&mut self, tx: &Transaction, pre_state: &LedgerState, block_index: u64) {
        *self.tx_counts.entry(tx.kind()).or_insert(0) += 1;
        match &tx.payload {
            Payload::Settlement {
                system, payments, ..
            } => {
                for record in payments {
                    self.payments.push(PaymentRow {
                        epoch: record.epoch_from,
                        system: *system,
                        payer: record.payer,
                        payee: record.payee,
                        f: record.f_value,
                        g: record.g_value,
                        amount_micro: record.amount_micro,
                    });
                    *self.payment_totals.entry(record.payee).or_insert(0) +=
                        record.amount_micro;
                }
            }
            Payload::PerformanceReport {
                system,
                epoch,
                data_mb,
                time_s,
            } => {
                // The fold validates this tx right after us, so the lookups
                // hold whenever the block commits.
                if let Some(sys) = pre_state.systems.get(system) {
                    if let (Some(member), Ok(f)) = (
                        sys.members.get(&tx.actor),
                        compute_performance(&sys.config.task, *data_mb, *time_s),
                    ) {
                        let slot = self.utilization.entry((*epoch, *system)).or_insert((0.0, 0.0));
                        slot.0 += f;
                        slot.1 += member.g_advertised;
                    }
                }
            }
            Payload::Rejected { original, reason } => {
                self.rejections.push(RejectionRow {
                    epoch: block_index,
                    actor: tx.actor,
                    action: original.kind(),
                    system: original.system(),
                    reason: *reason,
                });
                *self.rejection_counts.entry(*reason).or_insert(0) += 1;
            }
            _ => {}
        }
    }

    fn on_block_end(&mut self, block: &Block, state: &LedgerState) {
        for profile in state.profiles.values() {
            self.reputations.push(ReputationRow {
                epoch: block.index,
                node: profile.id,
                reputation: profile.reputation,
            });
        }
        let offered: f64 = state
            .profiles
            .values()
            .map(|p| p.resources.total_bandwidth_mhz())
            .sum();
        let committed: f64 = state
            .memberships
            .keys()
            .filter_map(|id| state.profiles.get(id))
            .map(|p| p.resources.total_bandwidth_mhz())
            .sum();
        self.spectrum.push(SpectrumRow {
            epoch: block.index,
            offered_mhz: offered,
            committed_mhz: committed,
        });
    }
}

/// Derive all run metrics from the ledger, verifying the chain on the way.
pub fn compute_metrics(ledger: &Ledger) -> Result<Metrics, ChainFault> {
    let mut collector = Collector::default();
    let final_state = fold_blocks(ledger.params(), ledger.blocks(), &mut collector)?;
    let utilization = collector
        .utilization
        .into_iter()
        .map(|((epoch, system), (sum_f, sum_g))| UtilizationRow {
            epoch,
            system,
            sum_f,
            sum_g,
            utilization: sum_f / sum_g,
        })
        .collect();
    Ok(Metrics {
        blocks: ledger.blocks().len() as u64,
        tip_hash: ledger.tip().hash,
        chain_ok: true,
        tx_counts: collector.tx_counts,
        payments: collector.payments,
        payment_totals: collector.payment_totals,
        reputations: collector.reputations,
        rejections: collector.rejections,
        rejection_counts: collector.rejection_counts,
        utilization,
        spectrum: collector.spectrum,
        final_balances: final_state.balances.clone(),
        final_reputations: final_state
            .profiles
            .values()
            .map(|p| (p.id, p.reputation))
            .collect(),
    })
}

/// Fixed float rendering: 9 significant digits, scientific notation.
pub fn fmt_float(v: f64) -> String {
    format!("{v:.8e}")
}

impl Metrics {
    pub fn payments_csv(&self) -> String {
        let mut out = String::from("epoch,system,payer,payee,f,g,z_micro\n");
        for row in &self.payments {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{}",
                row.epoch,
                row.system,
                row.payer,
                row.payee,
                fmt_float(row.f),
                fmt_float(row.g),
                row.amount_micro
            );
        }
        out
    }

    pub fn reputations_csv(&self) -> String {
        let mut out = String::from("epoch,node,reputation\n");
        for row in &self.reputations {
            let _ = writeln!(
                out,
                "{},{},{}",
                row.epoch,
                row.node,
                fmt_float(row.reputation)
            );
        }
        out
    }

    pub fn rejections_csv(&self) -> String {
        let mut out = String::from("epoch,actor,action,system,reason\n");
        for row in &self.rejections {
            let system = row.system.map(|s| s.to_hex()).unwrap_or_default();
            let _ = writeln!(
                out,
                "{},{},{},{},{}",
                row.epoch, row.actor, row.action, system, row.reason
            );
        }
        out
    }

    pub fn utilization_csv(&self) -> String {
        let mut out = String::from("epoch,system,sum_f,sum_g,utilization\n");
        for row in &self.utilization {
            let _ = writeln!(
                out,
                "{},{},{},{},{}",
                row.epoch,
                row.system,
                fmt_float(row.sum_f),
                fmt_float(row.sum_g),
                fmt_float(row.utilization)
            );
        }
        out
    }

    pub fn spectrum_csv(&self) -> String {
        let mut out = String::from("epoch,offered_mhz,committed_mhz\n");
        for row in &self.spectrum {
            let _ = writeln!(
                out,
                "{},{},{}",
                row.epoch,
                fmt_float(row.offered_mhz),
                fmt_float(row.committed_mhz)
            );
        }
        out
    }

    pub fn summary_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "blocks: {}", self.blocks);
        let _ = writeln!(out, "tip: {}", self.tip_hash);
        let _ = writeln!(out, "chain: {}", if self.chain_ok { "ok" } else { "FAIL" });
        let _ = writeln!(out, "transactions:");
        for (kind, count) in &self.tx_counts {
            let _ = writeln!(out, "  {kind}: {count}");
        }
        let _ = writeln!(out, "rejections:");
        for (reason, count) in &self.rejection_counts {
            let _ = writeln!(out, "  {reason}: {count}");
        }
        let paid: i64 = self.payment_totals.values().sum();
        let _ = writeln!(out, "credits distributed (micro): {paid}");
        let _ = writeln!(out, "final balances (micro):");
        for (node, balance) in &self.final_balances {
            let _ = writeln!(out, "  {node}: {balance}");
        }
        let _ = writeln!(out, "final reputations:");
        for (node, rep) in &self.final_reputations {
            let _ = writeln!(out, "  {node}: {}", fmt_float(*rep));
        }
        out
    }

    /// Write every CSV plus the run summary into a directory.
    pub fn write_reports(&self, dir: &Path) -> io::Result<()> {
        fs::create_dir_all(dir)?;
        fs::write(dir.join("payments.csv"), self.payments_csv())?;
        fs::write(dir.join("reputations.csv"), self.reputations_csv())?;
        fs::write(dir.join("rejections.csv"), self.rejections_csv())?;
        fs::write(dir.join("utilization.csv"), self.utilization_csv())?;
        fs::write(dir.join("spectrum.csv"), self.spectrum_csv())?;
        fs::write(dir.join("summary.txt"), self.summary_text())?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn float_format_is_nine_significant_digits() {
        assert_eq!(fmt_float(2.5), "2.50000000e0");
        assert_eq!(fmt_float(0.5), "5.00000000e-1");
        assert_eq!(fmt_float(0.0), "0.00000000e0");
        assert_eq!(fmt_float(0.2786432), "2.78643200e-1");
    }
}
