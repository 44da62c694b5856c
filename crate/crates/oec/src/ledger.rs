//! The append-only hash-chained block store.
//!
//! A single writer commits blocks; the full platform state is re-derivable
//! by folding the transaction sequence from genesis. Verification replays
//! the entire chain: link hashes, block hashes, manager terms and every
//! transaction's validity are all checked by the same fold that builds the
//! state, so nothing can diverge between commit and audit.
//!
//! Manager terms partition block indexes into fixed-length runs. The
//! manager of term k is drawn from the BC peers subscribed as of the term's
//! anchor (the last block before the term), keyed by the anchor hash. A
//! term whose anchor state has no subscribed BC peers is a bootstrap term:
//! the committee is still forming and any committer is accepted. Genesis is
//! empty by construction, so term 0 always starts as a bootstrap term.

use std::io::{self, Write};

use thiserror::Error;

use crate::encoding::{Canonical, DecodeError};
use crate::identity::{manager_index, GroupParams, IdentityError};
use crate::state::{apply_tx, LedgerState, TxError};
use crate::tx::{Block, RejectReason, Transaction, TxKind};
use crate::types::{Hash256, NodeId};

/// Blocks per manager term.
pub const TERM_LENGTH: u64 = 4;

/// Term index of a non-genesis block.
pub fn term_of_block(index: u64) -> u64 {
    debug_assert!(index >= 1);
    (index - 1) / TERM_LENGTH
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum LedgerError {
    #[error("committer {got} is not the term manager {expected}")]
    NotManager { expected: NodeId, got: NodeId },
    #[error("invalid transaction at position {index}: {source}")]
    InvalidTransaction {
        index: usize,
        #[source]
        source: TxError,
    },
    #[error("settlement reputation updates left dangling at end of block")]
    DanglingUpdates,
}

/// A chain that fails verification, with the first bad block index.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("bad block at index {index}: {reason}")]
pub struct ChainFault {
    pub index: u64,
    pub reason: String,
}

/// Errors reading a ledger file into blocks.
#[derive(Debug, Error)]
pub enum ImportError {
    #[error("i/o: {0}")]
    Io(#[from] io::Error),
    #[error("line {line}: {source}")]
    Decode {
        line: usize,
        #[source]
        source: DecodeError,
    },
    #[error("empty ledger file")]
    Empty,
}

/// Per-term manager context: the anchor the selection hash keys off and the
/// candidate set frozen at the term boundary.
#[derive(Debug, Clone, PartialEq)]
struct TermAnchor {
    term: u64,
    anchor_hash: Hash256,
    candidates: Vec<NodeId>,
}

impl TermAnchor {
    fn manager(&self) -> Option<NodeId> {
        if self.candidates.is_empty() {
            return None;
        }
        let idx = manager_index(self.term, &self.anchor_hash, self.candidates.len());
        Some(self.candidates[idx])
    }
}

/// Observer hooks for the verification fold; lets callers derive metrics
/// from the exact same pass that validates the chain.
pub trait FoldObserver {
    fn on_tx(&mut self, _tx: &Transaction, _pre_state: &LedgerState, _block_index: u64) {}
    fn on_block_end(&mut self, _block: &Block, _state: &LedgerState) {}
}

/// No-op observer for plain verification and replay.
pub struct NoObserver;

impl FoldObserver for NoObserver {}

/// Verify a block sequence from genesis and fold it into the final state,
/// reporting the first bad block on failure.
pub fn fold_blocks(
    params: &GroupParams,
    blocks: &[Block],
    observer: &mut dyn FoldObserver,
) -> Result<LedgerState, ChainFault> {
    let fault = |index: u64, reason: &str| ChainFault {
        index,
        reason: reason.to_string(),
    };
    let Some(genesis) = blocks.first() else {
        return Err(fault(0, "missing genesis"));
    };
    if *genesis != Block::genesis() {
        return Err(fault(0, "malformed genesis block"));
    }

    let mut state = LedgerState::default();
    let mut anchor = TermAnchor {
        term: 0,
        anchor_hash: genesis.hash,
        candidates: Vec::new(),
    };
    let mut prev_hash = genesis.hash;

    for (i, block) in blocks.iter().enumerate().skip(1) {
        let index = i as u64;
        if block.index != index {
            return Err(fault(index, "block index out of sequence"));
        }
        if block.prev_hash != prev_hash {
            return Err(fault(index, "previous-hash link broken"));
        }
        let term = term_of_block(index);
        if block.term != term {
            return Err(fault(index, "wrong term index"));
        }
        if (index - 1) % TERM_LENGTH == 0 {
            anchor = TermAnchor {
                term,
                anchor_hash: prev_hash,
                candidates: state.bc_peers(),
            };
        }
        if let Some(expected) = anchor.manager() {
            if block.manager != expected {
                return Err(fault(index, "committed by a non-manager"));
            }
        }
        for tx in &block.txs {
            observer.on_tx(tx, &state, index);
            if let Err(e) = apply_tx(&mut state, tx, index, params) {
                return Err(fault(index, &format!("invalid transaction: {e}")));
            }
        }
        if !state.pending_updates.is_empty() {
            return Err(fault(index, "dangling settlement reputation updates"));
        }
        if !block.hash_consistent() {
            return Err(fault(index, "stored hash does not recompute"));
        }
        observer.on_block_end(block, &state);
        prev_hash = block.hash;
    }
    Ok(state)
}

/// Chain integrity verdict over raw blocks.
pub fn verify_blocks(params: &GroupParams, blocks: &[Block]) -> Result<(), ChainFault> {
    fold_blocks(params, blocks, &mut NoObserver).map(|_| ())
}

/// Pure re-derivation of state from blocks; fails on a corrupt ledger.
pub fn replay_blocks(params: &GroupParams, blocks: &[Block]) -> Result<LedgerState, ChainFault> {
    fold_blocks(params, blocks, &mut NoObserver)
}

/// Parse a newline-delimited hex ledger export.
pub fn parse_ledger_str(text: &str) -> Result<Vec<Block>, ImportError> {
    let mut blocks = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let block =
            Block::from_canonical_hex(line).map_err(|source| ImportError::Decode { line: i, source })?;
        blocks.push(block);
    }
    if blocks.is_empty() {
        return Err(ImportError::Empty);
    }
    Ok(blocks)
}

/// The live ledger: committed blocks plus the state they fold to.
#[derive(Debug, Clone)]
pub struct Ledger {
    params: GroupParams,
    blocks: Vec<Block>,
    state: LedgerState,
    anchor: TermAnchor,
}

impl Ledger {
    pub fn new(params: GroupParams) -> Self {
        let genesis = Block::genesis();
        let anchor = TermAnchor {
            term: 0,
            anchor_hash: genesis.hash,
            candidates: Vec::new(),
        };
        Ledger {
            params,
            blocks: vec![genesis],
            state: LedgerState::default(),
            anchor,
        }
    }

    pub fn params(&self) -> &GroupParams {
        &self.params
    }

    pub fn blocks(&self) -> &[Block] {
        &self.blocks
    }

    pub fn tip(&self) -> &Block {
        self.blocks.last().expect("genesis always present")
    }

    pub fn state(&self) -> &LedgerState {
        &self.state
    }

    /// The term context the next block will be committed under.
    fn upcoming_anchor(&self) -> TermAnchor {
        let next = self.tip().index + 1;
        let term = term_of_block(next);
        if (next - 1) % TERM_LENGTH == 0 {
            TermAnchor {
                term,
                anchor_hash: self.tip().hash,
                candidates: self.state.bc_peers(),
            }
        } else {
            debug_assert_eq!(self.anchor.term, term);
            self.anchor.clone()
        }
    }

    /// Manager expected for the next block; `None` while bootstrapping
    /// (no BC peers at the term anchor), in which case any committer is
    /// accepted.
    pub fn manager_for_next_block(&self) -> Option<NodeId> {
        self.upcoming_anchor().manager()
    }

    /// The manager of an arbitrary past (or current) term, recomputed from
    /// the chain prefix. Deterministic for a fixed ledger.
    pub fn select_manager(&self, term_index: u64) -> Result<NodeId, IdentityError> {
        let anchor_index = term_index * TERM_LENGTH;
        if anchor_index > self.tip().index {
            return Err(IdentityError::NoPeers);
        }
        let prefix = &self.blocks[..=anchor_index as usize];
        let state = replay_blocks(&self.params, prefix).expect("committed prefix verifies");
        let anchor = TermAnchor {
            term: term_index,
            anchor_hash: prefix.last().unwrap().hash,
            candidates: state.bc_peers(),
        };
        anchor.manager().ok_or(IdentityError::NoPeers)
    }

    /// Validate and commit one block of transactions. Nothing is committed
    /// if the committer is not the term manager or any transaction is
    /// invalid against the evolving state.
    pub fn append_block(
        &mut self,
        txs: Vec<Transaction>,
        manager: NodeId,
    ) -> Result<&Block, LedgerError> {
        let anchor = self.upcoming_anchor();
        if let Some(expected) = anchor.manager() {
            if manager != expected {
                return Err(LedgerError::NotManager {
                    expected,
                    got: manager,
                });
            }
        }
        let next_index = self.tip().index + 1;
        let mut scratch = self.state.clone();
        for (i, tx) in txs.iter().enumerate() {
            apply_tx(&mut scratch, tx, next_index, &self.params)
                .map_err(|source| LedgerError::InvalidTransaction { index: i, source })?;
        }
        if !scratch.pending_updates.is_empty() {
            return Err(LedgerError::DanglingUpdates);
        }
        let block = Block::seal(next_index, self.tip().hash, manager, anchor.term, txs);
        self.blocks.push(block);
        self.state = scratch;
        self.anchor = anchor;
        Ok(self.tip())
    }

    /// Start drafting the next block against a snapshot of the tip state.
    pub fn begin_block(&self) -> BlockDraft {
        BlockDraft {
            params: self.params.clone(),
            next_index: self.tip().index + 1,
            state: self.state.clone(),
            txs: Vec::new(),
        }
    }

    /// Integrity check of the whole chain.
    pub fn verify_chain(&self) -> Result<(), ChainFault> {
        verify_blocks(&self.params, &self.blocks)
    }

    /// Re-derive the state by folding from genesis.
    pub fn replay(&self) -> Result<LedgerState, ChainFault> {
        replay_blocks(&self.params, &self.blocks)
    }

    /// One lowercase-hex canonical block per line; line 0 is genesis.
    pub fn export_string(&self) -> String {
        let mut out = String::new();
        for block in &self.blocks {
            out.push_str(&block.canonical_hex());
            out.push('\n');
        }
        out
    }

    pub fn export_to(&self, w: &mut dyn Write) -> io::Result<()> {
        w.write_all(self.export_string().as_bytes())
    }

    /// Rebuild a ledger from raw blocks, verifying the whole chain.
    pub fn from_blocks(params: GroupParams, blocks: Vec<Block>) -> Result<Self, ChainFault> {
        let state = fold_blocks(&params, &blocks, &mut NoObserver)?;
        let tip_index = blocks.last().unwrap().index;
        let anchor = if tip_index == 0 {
            TermAnchor {
                term: 0,
                anchor_hash: blocks[0].hash,
                candidates: Vec::new(),
            }
        } else {
            // Recompute the current term's anchor from the prefix.
            let term = term_of_block(tip_index);
            let anchor_index = (term * TERM_LENGTH) as usize;
            let prefix_state = replay_blocks(&params, &blocks[..=anchor_index])?;
            TermAnchor {
                term,
                anchor_hash: blocks[anchor_index].hash,
                candidates: prefix_state.bc_peers(),
            }
        };
        Ok(Ledger {
            params,
            blocks,
            state,
            anchor,
        })
    }

    /// Import a hex export, verifying the chain in the process.
    pub fn import_str(params: GroupParams, text: &str) -> Result<Self, ImportFault> {
        let blocks = parse_ledger_str(text).map_err(ImportFault::Encoding)?;
        Ledger::from_blocks(params, blocks).map_err(ImportFault::Chain)
    }
}

/// Import failure: unreadable encoding versus a well-formed file whose
/// chain does not verify.
#[derive(Debug, Error)]
pub enum ImportFault {
    #[error("unreadable ledger: {0}")]
    Encoding(#[source] ImportError),
    #[error("chain verification failed: {0}")]
    Chain(#[source] ChainFault),
}

/// How a transaction offered to a draft was recorded.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TxDisposition {
    Committed(TxKind),
    Rejected(TxKind, RejectReason),
}

/// An in-progress block: transactions validated one by one against the
/// evolving pending state, so proposal-time decisions (admission order,
/// capacity races) match commit order exactly.
pub struct BlockDraft {
    params: GroupParams,
    next_index: u64,
    state: LedgerState,
    txs: Vec<Transaction>,
}

impl BlockDraft {
    /// Pending state: the tip state plus every transaction drafted so far.
    pub fn state(&self) -> &LedgerState {
        &self.state
    }

    /// The block index (and epoch) this draft will commit as.
    pub fn epoch(&self) -> u64 {
        self.next_index
    }

    pub fn txs(&self) -> &[Transaction] {
        &self.txs
    }

    /// Add a transaction or fail without touching the pending state.
    pub fn try_add(&mut self, tx: Transaction) -> Result<(), TxError> {
        let mut scratch = self.state.clone();
        apply_tx(&mut scratch, &tx, self.next_index, &self.params)?;
        self.state = scratch;
        self.txs.push(tx);
        Ok(())
    }

    /// Add a transaction, converting a refusal into its auditable on-chain
    /// rejection. Hard errors (bad proof, malformed content) still fail.
    pub fn add_or_reject(&mut self, tx: Transaction) -> Result<TxDisposition, TxError> {
        let kind = tx.kind();
        let mut scratch = self.state.clone();
        match apply_tx(&mut scratch, &tx, self.next_index, &self.params) {
            Ok(()) => {
                self.state = scratch;
                self.txs.push(tx);
                Ok(TxDisposition::Committed(kind))
            }
            Err(TxError::Refused(reason)) => {
                let rejected = tx.into_rejected(reason);
                let mut scratch = self.state.clone();
                apply_tx(&mut scratch, &rejected, self.next_index, &self.params)?;
                self.state = scratch;
                self.txs.push(rejected);
                Ok(TxDisposition::Rejected(kind, reason))
            }
            Err(hard) => Err(hard),
        }
    }

    pub fn into_txs(self) -> Vec<Transaction> {
        self.txs
    }
}
