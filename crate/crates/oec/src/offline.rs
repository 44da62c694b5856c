//! Deferred participation for nodes with intermittent connectivity.
//!
//! A disconnected node keeps acting: it signs transactions against its own
//! local belief and appends them to a per-node queue. On reconnection the
//! queue is flushed in order into the manager's next block. Actions that
//! went stale while offline (a join to a system that filled up, a report
//! for a membership that never materialized) are not dropped silently —
//! they commit as on-chain rejections, so the queue always drains fully and
//! every queued action gets exactly one on-chain disposition. A proof that
//! fails verification aborts the flush at that point: that is a possible
//! key-compromise signal, not staleness.

use std::collections::VecDeque;
use std::fs;
use std::io;
use std::path::Path;

use thiserror::Error;

use crate::encoding::{Canonical, DecodeError, Decoder, Encoder};
use crate::ledger::{BlockDraft, TxDisposition};
use crate::state::{OpError, TxError};
use crate::tx::{Payload, Signer, Transaction};
use crate::types::NodeId;

#[derive(Debug, Error)]
pub enum OfflineError {
    #[error("sequence gap: queue expects {expected}, got {got}")]
    SequenceGap { expected: u64, got: u64 },
    #[error("queued action signed by a different node")]
    WrongActor,
    #[error("i/o: {0}")]
    Io(#[from] io::Error),
    #[error("line {line}: {source}")]
    Decode {
        line: usize,
        #[source]
        source: DecodeError,
    },
}

#[derive(Debug, Error)]
pub enum FlushError {
    #[error("authentication failed for queued seq {seq}; flush aborted")]
    AuthFailed { seq: u64 },
    #[error("queued seq {seq} is invalid: {source}")]
    Invalid {
        seq: u64,
        #[source]
        source: TxError,
    },
    #[error("settlement expansion failed: {0}")]
    Expansion(#[from] OpError),
}

/// A transaction signed while offline, waiting for reconnection.
#[derive(Debug, Clone, PartialEq)]
pub struct QueuedAction {
    pub tx: Transaction,
    /// Local epoch at which the node queued this action.
    pub queued_at: u64,
}

impl Canonical for QueuedAction {
    fn encode(&self, enc: &mut Encoder) {
        self.tx.encode(enc);
        enc.u64(self.queued_at);
    }

    fn decode(dec: &mut Decoder<'_>) -> Result<Self, DecodeError> {
        Ok(QueuedAction {
            tx: Transaction::decode(dec)?,
            queued_at: dec.u64()?,
        })
    }
}

/// Per-node FIFO of fully signed actions.
#[derive(Debug, Clone, PartialEq)]
pub struct ActionQueue {
    node: NodeId,
    entries: VecDeque<QueuedAction>,
}

impl ActionQueue {
    pub fn new(node: NodeId) -> Self {
        ActionQueue {
            node,
            entries: VecDeque::new(),
        }
    }

    pub fn node(&self) -> NodeId {
        self.node
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> impl Iterator<Item = &QueuedAction> {
        self.entries.iter()
    }

    /// Append a signed action. Only in-queue sequence continuity is checked
    /// here; validity against global state is decided at flush time.
    pub fn queue_action(&mut self, tx: Transaction, local_epoch: u64) -> Result<(), OfflineError> {
        if tx.actor != self.node {
            return Err(OfflineError::WrongActor);
        }
        if let Some(last) = self.entries.back() {
            let expected = last.tx.seq + 1;
            if tx.seq != expected {
                return Err(OfflineError::SequenceGap {
                    expected,
                    got: tx.seq,
                });
            }
        }
        self.entries.push_back(QueuedAction {
            tx,
            queued_at: local_epoch,
        });
        Ok(())
    }

    /// Newline-delimited hex canonical encodings, one queued action per line.
    pub fn persist_string(&self) -> String {
        let mut out = String::new();
        for entry in &self.entries {
            out.push_str(&entry.canonical_hex());
            out.push('\n');
        }
        out
    }

    pub fn save(&self, path: &Path) -> Result<(), OfflineError> {
        fs::write(path, self.persist_string())?;
        Ok(())
    }

    pub fn load_string(node: NodeId, text: &str) -> Result<Self, OfflineError> {
        let mut queue = ActionQueue::new(node);
        for (line, raw) in text.lines().enumerate() {
            let raw = raw.trim();
            if raw.is_empty() {
                continue;
            }
            let entry = QueuedAction::from_canonical_hex(raw)
                .map_err(|source| OfflineError::Decode { line, source })?;
            let at = entry.queued_at;
            queue.queue_action(entry.tx, at)?;
        }
        Ok(queue)
    }

    pub fn load(node: NodeId, path: &Path) -> Result<Self, OfflineError> {
        let text = fs::read_to_string(path)?;
        Self::load_string(node, &text)
    }
}

/// Drain a queue into a block draft, in order. Stale actions commit as
/// on-chain rejections; exits are preceded by the leader's settlement of
/// the departing member, exactly as in the online path. On success the
/// queue is empty and the returned dispositions align one-to-one with the
/// drained actions.
pub fn flush(
    queue: &mut ActionQueue,
    draft: &mut BlockDraft,
    signer: &mut dyn Signer,
) -> Result<Vec<TxDisposition>, FlushError> {
    let mut dispositions = Vec::with_capacity(queue.len());
    while let Some(front) = queue.entries.front() {
        let tx = front.tx.clone();
        let seq = tx.seq;

        // Exits settle outstanding reports first; generate the leader-side
        // settlement against the pending state, as the online path does.
        match &tx.payload {
            Payload::Leave { system } => {
                if draft.state().memberships.get(&tx.actor) == Some(system) {
                    let txs = crate::incentives::settlement_txs(
                        draft.state(),
                        *system,
                        draft.epoch(),
                        Some(tx.actor),
                        signer,
                    )?;
                    for stx in txs {
                        draft
                            .try_add(stx)
                            .map_err(|source| FlushError::Invalid { seq, source })?;
                    }
                }
            }
            Payload::Break { system } => {
                let is_leader = draft
                    .state()
                    .systems
                    .get(system)
                    .is_some_and(|s| s.leader == tx.actor && s.is_active());
                if is_leader {
                    let txs = crate::incentives::settlement_txs(
                        draft.state(),
                        *system,
                        draft.epoch(),
                        None,
                        signer,
                    )?;
                    for stx in txs {
                        draft
                            .try_add(stx)
                            .map_err(|source| FlushError::Invalid { seq, source })?;
                    }
                }
            }
            _ => {}
        }

        match draft.add_or_reject(tx) {
            Ok(disposition) => {
                dispositions.push(disposition);
                queue.entries.pop_front();
            }
            Err(TxError::AuthFailed) => return Err(FlushError::AuthFailed { seq }),
            Err(source) => return Err(FlushError::Invalid { seq, source }),
        }
    }
    Ok(dispositions)
}
