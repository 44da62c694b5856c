//! A permissioned edge-chain platform: an event-sourced, hash-chained
//! ledger recording node subscription (authenticated by non-interactive
//! zero-knowledge proofs of key knowledge), edge-system lifecycle actions,
//! performance reports, incentive payments and reputation updates — plus a
//! seeded discrete-event simulator for driving honest and misbehaving node
//! populations against it.
//!
//! The full platform state is a pure fold over the committed transaction
//! sequence; exporting a ledger, re-importing it and re-folding reproduces
//! the state and every derived metric bit for bit.

pub mod encoding;
pub mod identity;
pub mod incentives;
pub mod ledger;
pub mod lifecycle;
pub mod metrics;
pub mod offline;
pub mod rng;
pub mod sim;
pub mod state;
pub mod tx;
pub mod types;

pub use encoding::{Canonical, DecodeError};
pub use identity::{
    generate_params, node_id_for_pk, prove_knowledge, subscribe, verify_proof, GroupParams,
    KeyPair, NodeProfile, Resources, SecurityLevel, SpectrumBand, ZkProof,
};
pub use incentives::{
    compute_payment, compute_performance, expected_performance, settle_epoch, update_reputation,
    PaymentRecord, TaskSpec, INITIAL_REPUTATION, REPUTATION_ALPHA,
};
pub use ledger::{
    fold_blocks, parse_ledger_str, replay_blocks, verify_blocks, BlockDraft, ChainFault,
    FoldObserver, Ledger, LedgerError, TxDisposition, TERM_LENGTH,
};
pub use lifecycle::{
    admission_check, break_system, create_system, join, leave, EdgeSystem, EdgeSystemConfig,
    JoinOutcome, MembershipRecord, SystemStatus,
};
pub use metrics::{compute_metrics, Metrics};
pub use offline::{flush, ActionQueue, QueuedAction};
pub use rng::SimRng;
pub use sim::{run_scenario, BehaviorSpec, NodeSpec, RunOutput, Scenario, SimError, SystemSpec};
pub use state::{apply_tx, LedgerState, OpError, TxError};
pub use tx::{
    hash_block, signing_context, Block, Payload, RejectReason, Signer, Transaction, TxKind,
};
pub use types::{credits_to_micro, Hash256, NodeId, SystemId, MICRO_PER_CREDIT};
