//! End-to-end platform flows through the public operation surface:
//! subscription, system lifecycle, reports, settlement, exits and the
//! offline queue, committed through real blocks.

use std::collections::BTreeMap;

use num_bigint::BigUint;
use oec::identity::{generate_params, prove_knowledge, KeyPair, SecurityLevel};
use oec::ledger::{Ledger, LedgerError, TxDisposition};
use oec::lifecycle::JoinOutcome;
use oec::offline::{flush, ActionQueue};
use oec::state::{OpError, TxError};
use oec::tx::{signing_context, Payload, RejectReason, Signer, Transaction, TxKind};
use oec::types::NodeId;
use oec::{
    EdgeSystemConfig, GroupParams, NodeProfile, Resources, SimRng, TaskSpec, ZkProof,
    INITIAL_REPUTATION,
};

struct TestSigner {
    params: GroupParams,
    keys: BTreeMap<NodeId, KeyPair>,
    rng: SimRng,
}

impl TestSigner {
    fn new(params: GroupParams) -> Self {
        TestSigner {
            params,
            keys: BTreeMap::new(),
            rng: SimRng::from_seed(7),
        }
    }

    fn add_node(&mut self, sk: u32) -> (NodeId, NodeProfile) {
        let kp = KeyPair::from_secret(&self.params, BigUint::from(sk)).unwrap();
        let id = kp.node_id();
        let profile = NodeProfile {
            id,
            pk: kp.pk.clone(),
            bc_node: true,
            resources: Resources {
                processing: 4.0,
                storage_gb: 8.0,
                communication_mbps: 100.0,
                spectrum: vec![],
            },
            payment_detail: String::new(),
            reputation: INITIAL_REPUTATION,
        };
        self.keys.insert(id, kp);
        (id, profile)
    }

    fn subscribe_tx(&mut self, ledger_state: &oec::LedgerState, profile: NodeProfile) -> Transaction {
        let actor = profile.id;
        let seq = ledger_state.next_seq(&actor);
        let payload = Payload::Subscribe { profile };
        let proof = self.sign(actor, seq, &payload).unwrap();
        oec::identity::subscribe(
            &self.params,
            ledger_state,
            match &payload {
                Payload::Subscribe { profile } => profile.clone(),
                _ => unreachable!(),
            },
            proof,
        )
        .unwrap()
    }
}

impl Signer for TestSigner {
    fn sign(
        &mut self,
        actor: NodeId,
        seq: u64,
        payload: &Payload,
    ) -> Result<ZkProof, oec::identity::IdentityError> {
        let kp = self.keys.get(&actor).unwrap().clone();
        let nonce = self.rng.scalar(&self.params.q);
        prove_knowledge(&self.params, &kp, &signing_context(&actor, seq, payload), &nonce)
    }
}

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
        target_capacity: 2.0,
        rate: 10.0,
        settlement_period: 1,
        min_reputation: 0.3,
        min_expected_perf: 0.25,
        task: task(),
    }
}

/// Ledger with a leader and two members subscribed and one system created,
/// committed across real blocks.
fn setup() -> (Ledger, TestSigner, NodeId, Vec<NodeId>, oec::SystemId) {
    let params = generate_params(SecurityLevel::Toy);
    let mut signer = TestSigner::new(params.clone());
    let (leader, leader_profile) = signer.add_node(7);
    let (m1, p1) = signer.add_node(3);
    let (m2, p2) = signer.add_node(5);

    let mut ledger = Ledger::new(params);
    let mut draft = ledger.begin_block();
    for profile in [leader_profile, p1, p2] {
        let tx = signer.subscribe_tx(draft.state(), profile);
        draft.try_add(tx).unwrap();
    }
    let create = oec::create_system(draft.state(), leader, config(), &mut signer).unwrap();
    let system = match &create.payload {
        Payload::CreateSystem { system, .. } => *system,
        _ => unreachable!(),
    };
    draft.try_add(create).unwrap();
    let manager = ledger.manager_for_next_block().unwrap_or(leader);
    ledger.append_block(draft.into_txs(), manager).unwrap();
    (ledger, signer, leader, vec![m1, m2], system)
}

fn commit(ledger: &mut Ledger, draft: oec::BlockDraft) {
    let manager = ledger
        .manager_for_next_block()
        .unwrap_or_else(|| NodeId::ZERO);
    ledger.append_block(draft.into_txs(), manager).unwrap();
}

fn report_payload(system: oec::SystemId, epoch: u64, f_target: f64) -> Payload {
    // ref rate is 10 MB/s over 10 s: data = f * 100 MB hits f exactly
    Payload::PerformanceReport {
        system,
        epoch,
        data_mb: f_target * 100.0,
        time_s: 10.0,
    }
}

#[test]
fn join_report_settle_conserves_credits() {
    let (mut ledger, mut signer, leader, members, system) = setup();
    let mut draft = ledger.begin_block();
    for m in &members {
        match oec::join(draft.state(), *m, system, &mut signer).unwrap() {
            JoinOutcome::Admitted(tx) => draft.try_add(tx).unwrap(),
            JoinOutcome::Refused(..) => panic!("admission expected"),
        }
    }
    // one report each: member 0 delivers half, member 1 full
    let epoch = draft.epoch();
    for (i, m) in members.iter().enumerate() {
        let seq = draft.state().next_seq(m);
        let payload = report_payload(system, epoch, if i == 0 { 0.5 } else { 1.0 });
        let proof = signer.sign(*m, seq, &payload).unwrap();
        draft
            .try_add(Transaction {
                actor: *m,
                seq,
                payload,
                proof,
            })
            .unwrap();
    }
    let txs = oec::settle_epoch(draft.state(), system, epoch, &mut signer).unwrap();
    assert_eq!(txs.len(), 3); // settlement + 2 reputation updates
    for tx in txs {
        draft.try_add(tx).unwrap();
    }
    commit(&mut ledger, draft);

    let state = ledger.state();
    // f=0.5,g=1: Z = 0.5*10*0.5 = 2.5; f=1,g=1: Z = 10
    assert_eq!(state.balance(&members[0]), 2_500_000);
    assert_eq!(state.balance(&members[1]), 10_000_000);
    assert_eq!(state.balance(&leader), -12_500_000);
    let total: i64 = state.balances.values().sum();
    assert_eq!(total, 0, "credits are conserved");

    // reputation moved toward the delivery ratio
    let r0 = state.reputation(&members[0]).unwrap();
    let r1 = state.reputation(&members[1]).unwrap();
    assert!((r0 - (0.8 * 0.5 + 0.2 * 0.5)).abs() < 1e-12);
    assert!((r1 - (0.8 * 0.5 + 0.2 * 1.0)).abs() < 1e-12);

    // settling again with no reports is a no-op
    let again = oec::settle_epoch(ledger.state(), system, epoch, &mut signer).unwrap();
    assert!(again.is_empty());
}

#[test]
fn leave_settles_then_removes_membership() {
    let (mut ledger, mut signer, _leader, members, system) = setup();
    let mut draft = ledger.begin_block();
    let m = members[0];
    match oec::join(draft.state(), m, system, &mut signer).unwrap() {
        JoinOutcome::Admitted(tx) => draft.try_add(tx).unwrap(),
        _ => panic!(),
    }
    let epoch = draft.epoch();
    let seq = draft.state().next_seq(&m);
    let payload = report_payload(system, epoch, 1.0);
    let proof = signer.sign(m, seq, &payload).unwrap();
    draft
        .try_add(Transaction { actor: m, seq, payload, proof })
        .unwrap();

    // leave emits settlement, reputation update, then the leave, in order
    let txs = oec::leave(draft.state(), m, system, epoch, &mut signer).unwrap();
    let kinds: Vec<TxKind> = txs.iter().map(|t| t.kind()).collect();
    assert_eq!(
        kinds,
        vec![TxKind::Settlement, TxKind::ReputationUpdate, TxKind::Leave]
    );
    for tx in txs {
        draft.try_add(tx).unwrap();
    }
    commit(&mut ledger, draft);

    let state = ledger.state();
    assert!(state.memberships.get(&m).is_none());
    assert_eq!(state.balance(&m), 10_000_000);
    let sys = &state.systems[&system];
    assert!(sys.members.is_empty());

    // leaving again: not a member any more
    let mut draft = ledger.begin_block();
    let err = oec::leave(draft.state(), m, system, draft.epoch(), &mut signer);
    assert_eq!(err.unwrap_err(), OpError::NotMember);
    // member with no unsettled reports leaves with a single Leave tx
    let m2 = members[1];
    match oec::join(draft.state(), m2, system, &mut signer).unwrap() {
        JoinOutcome::Admitted(tx) => draft.try_add(tx).unwrap(),
        _ => panic!(),
    }
    let txs = oec::leave(draft.state(), m2, system, draft.epoch(), &mut signer).unwrap();
    assert_eq!(txs.len(), 1);
    assert_eq!(txs[0].kind(), TxKind::Leave);
}

#[test]
fn leader_exits_by_break_only() {
    let (mut ledger, mut signer, leader, members, system) = setup();
    let mut draft = ledger.begin_block();
    assert_eq!(
        oec::leave(draft.state(), leader, system, draft.epoch(), &mut signer).unwrap_err(),
        OpError::LeaderMustBreak
    );
    assert_eq!(
        oec::break_system(draft.state(), members[0], system, draft.epoch(), &mut signer)
            .unwrap_err(),
        OpError::NotLeader
    );

    // two members with work owed, then break: everyone settled, Σ = debit
    for m in &members {
        match oec::join(draft.state(), *m, system, &mut signer).unwrap() {
            JoinOutcome::Admitted(tx) => draft.try_add(tx).unwrap(),
            _ => panic!(),
        }
        let seq = draft.state().next_seq(m);
        let payload = report_payload(system, draft.epoch(), 1.0);
        let proof = signer.sign(*m, seq, &payload).unwrap();
        draft
            .try_add(Transaction { actor: *m, seq, payload, proof })
            .unwrap();
    }
    let epoch = draft.epoch();
    let txs = oec::break_system(draft.state(), leader, system, epoch, &mut signer).unwrap();
    let kinds: Vec<TxKind> = txs.iter().map(|t| t.kind()).collect();
    assert_eq!(
        kinds,
        vec![
            TxKind::Settlement,
            TxKind::ReputationUpdate,
            TxKind::ReputationUpdate,
            TxKind::Break
        ]
    );
    for tx in txs {
        draft.try_add(tx).unwrap();
    }
    commit(&mut ledger, draft);

    let state = ledger.state();
    let sys = &state.systems[&system];
    assert!(!sys.is_active());
    assert!(sys.members.is_empty());
    assert!(state.memberships.is_empty());
    assert_eq!(state.balance(&leader), -20_000_000);
    assert_eq!(state.balance(&members[0]), 10_000_000);
    assert_eq!(state.balance(&members[1]), 10_000_000);

    // breaking again: already dissolved
    let draft = ledger.begin_block();
    assert_eq!(
        oec::break_system(draft.state(), leader, system, draft.epoch(), &mut signer).unwrap_err(),
        OpError::AlreadyDissolved
    );

    // dissolved systems accept no further joins
    let mut draft = ledger.begin_block();
    match oec::join(draft.state(), members[0], system, &mut signer).unwrap() {
        JoinOutcome::Refused(tx, reason) => {
            assert_eq!(reason, RejectReason::SystemDissolved);
            draft.try_add(tx).unwrap();
        }
        _ => panic!("join into dissolved system must be refused"),
    }
    commit(&mut ledger, draft);
    assert!(ledger.verify_chain().is_ok());
}

#[test]
fn refused_join_commits_as_rejection_and_is_auditable() {
    let (mut ledger, mut signer, _leader, members, system) = setup();
    // fill the system: two members with g=1 each reach the 2.0 target
    let mut draft = ledger.begin_block();
    for m in &members {
        match oec::join(draft.state(), *m, system, &mut signer).unwrap() {
            JoinOutcome::Admitted(tx) => draft.try_add(tx).unwrap(),
            _ => panic!(),
        }
    }
    // a third node arrives
    let (late, late_profile) = signer.add_node(9);
    let tx = signer.subscribe_tx(draft.state(), late_profile);
    draft.try_add(tx).unwrap();
    match oec::join(draft.state(), late, system, &mut signer).unwrap() {
        JoinOutcome::Refused(tx, reason) => {
            assert_eq!(reason, RejectReason::SystemFull);
            assert_eq!(tx.kind(), TxKind::RejectedAction);
            draft.try_add(tx).unwrap();
        }
        _ => panic!("fourth join must be refused"),
    }
    commit(&mut ledger, draft);

    // the refusal is on-chain; the node is in no system
    assert!(ledger.state().memberships.get(&late).is_none());
    assert!(ledger.verify_chain().is_ok());

    // a forged rejection reason would not verify
    let blocks = ledger.blocks().to_vec();
    let mut tampered = blocks.clone();
    let last = tampered.last_mut().unwrap();
    if let Some(tx) = last.txs.iter_mut().find(|t| t.kind() == TxKind::RejectedAction) {
        if let Payload::Rejected { reason, .. } = &mut tx.payload {
            *reason = RejectReason::LowReputation;
        }
    }
    let resealed = oec::tx::Block::seal(
        last.index,
        last.prev_hash,
        last.manager,
        last.term,
        last.txs.clone(),
    );
    *tampered.last_mut().unwrap() = resealed;
    assert!(oec::verify_blocks(ledger.params(), &tampered).is_err());
}

#[test]
fn append_rejects_invalid_transactions_atomically() {
    let (mut ledger, mut signer, _leader, members, system) = setup();
    let tip_before = ledger.tip().hash;
    let state_before = ledger.state().clone();

    // a join for a node already in another system is invalid as a raw tx
    let mut draft = ledger.begin_block();
    match oec::join(draft.state(), members[0], system, &mut signer).unwrap() {
        JoinOutcome::Admitted(tx) => draft.try_add(tx).unwrap(),
        _ => panic!(),
    }
    let mut txs = draft.into_txs();
    // duplicate the join (same seq): second application must fail and the
    // whole append with it
    txs.push(txs[0].clone());
    let manager = ledger.manager_for_next_block().unwrap_or(NodeId::ZERO);
    let err = ledger.append_block(txs, manager).unwrap_err();
    assert!(matches!(
        err,
        LedgerError::InvalidTransaction { index: 1, .. }
    ));
    assert_eq!(ledger.tip().hash, tip_before, "no partial commit");
    assert_eq!(ledger.state(), &state_before);
}

#[test]
fn non_manager_append_refused_after_bootstrap() {
    let (mut ledger, mut signer, _leader, members, system) = setup();
    // advance past the bootstrap term (term length is 4)
    while ledger.tip().index < oec::TERM_LENGTH {
        let draft = ledger.begin_block();
        commit(&mut ledger, draft);
    }
    let expected = ledger.manager_for_next_block().expect("BC peers subscribed");
    let wrong = members.iter().copied().find(|m| *m != expected).unwrap();
    let mut draft = ledger.begin_block();
    match oec::join(draft.state(), members[0], system, &mut signer).unwrap() {
        JoinOutcome::Admitted(tx) => draft.try_add(tx).unwrap(),
        _ => panic!(),
    }
    let err = ledger.append_block(draft.into_txs(), wrong).unwrap_err();
    assert!(matches!(err, LedgerError::NotManager { .. }));

    // select_manager agrees with the validation path and is pure
    let term = oec::ledger::term_of_block(ledger.tip().index + 1);
    assert_eq!(ledger.select_manager(term).unwrap(), expected);
    assert_eq!(ledger.select_manager(term).unwrap(), expected);
}

#[test]
fn offline_queue_flush_reconciles_in_order() {
    let (mut ledger, mut signer, _leader, members, system) = setup();
    let node = members[0];

    // while "offline", the node queues join -> report -> leave
    let mut queue = ActionQueue::new(node);
    let base_seq = ledger.state().next_seq(&node);
    let join_payload = Payload::Join { system };
    let proof = signer.sign(node, base_seq, &join_payload).unwrap();
    queue
        .queue_action(
            Transaction { actor: node, seq: base_seq, payload: join_payload, proof },
            2,
        )
        .unwrap();
    let report = report_payload(system, 2, 1.0);
    let proof = signer.sign(node, base_seq + 1, &report).unwrap();
    queue
        .queue_action(
            Transaction { actor: node, seq: base_seq + 1, payload: report, proof },
            2,
        )
        .unwrap();
    let leave_payload = Payload::Leave { system };
    let proof = signer.sign(node, base_seq + 2, &leave_payload).unwrap();
    queue
        .queue_action(
            Transaction { actor: node, seq: base_seq + 2, payload: leave_payload, proof },
            3,
        )
        .unwrap();

    // persistence round-trip survives a restart
    let persisted = queue.persist_string();
    let mut queue = ActionQueue::load_string(node, &persisted).unwrap();

    let mut draft = ledger.begin_block();
    let dispositions = flush(&mut queue, &mut draft, &mut signer).unwrap();
    assert!(queue.is_empty(), "flush drains fully");
    assert_eq!(
        dispositions,
        vec![
            TxDisposition::Committed(TxKind::Join),
            TxDisposition::Committed(TxKind::PerformanceReport),
            TxDisposition::Committed(TxKind::Leave),
        ]
    );
    commit(&mut ledger, draft);

    let state = ledger.state();
    assert!(state.memberships.get(&node).is_none(), "left after flush");
    assert_eq!(state.balance(&node), 10_000_000, "report settled at exit");
    assert!(ledger.verify_chain().is_ok());
}

#[test]
fn stale_queued_join_commits_as_rejection() {
    let (mut ledger, mut signer, _leader, members, system) = setup();
    let node = members[0];

    // sign the join while the system still has room
    let seq = ledger.state().next_seq(&node);
    let payload = Payload::Join { system };
    let proof = signer.sign(node, seq, &payload).unwrap();
    let mut queue = ActionQueue::new(node);
    queue
        .queue_action(Transaction { actor: node, seq, payload, proof }, 2)
        .unwrap();

    // meanwhile the system fills up
    let mut draft = ledger.begin_block();
    match oec::join(draft.state(), members[1], system, &mut signer).unwrap() {
        JoinOutcome::Admitted(tx) => draft.try_add(tx).unwrap(),
        _ => panic!(),
    }
    let (extra, extra_profile) = signer.add_node(9);
    let tx = signer.subscribe_tx(draft.state(), extra_profile);
    draft.try_add(tx).unwrap();
    match oec::join(draft.state(), extra, system, &mut signer).unwrap() {
        JoinOutcome::Admitted(tx) => draft.try_add(tx).unwrap(),
        _ => panic!(),
    }
    commit(&mut ledger, draft);

    // the queued join is now stale: it drains as an on-chain rejection
    let mut draft = ledger.begin_block();
    let dispositions = flush(&mut queue, &mut draft, &mut signer).unwrap();
    assert_eq!(
        dispositions,
        vec![TxDisposition::Rejected(TxKind::Join, RejectReason::SystemFull)]
    );
    assert!(queue.is_empty());
    commit(&mut ledger, draft);
    assert!(ledger.verify_chain().is_ok());
}

#[test]
fn flush_aborts_on_bad_proof() {
    let (ledger, mut signer, _leader, members, system) = setup();
    let node = members[0];
    let seq = ledger.state().next_seq(&node);
    let payload = Payload::Join { system };
    let mut proof = signer.sign(node, seq, &payload).unwrap();
    proof.response = (&proof.response + 1u32) % generate_params(SecurityLevel::Toy).q;
    let mut queue = ActionQueue::new(node);
    queue
        .queue_action(Transaction { actor: node, seq, payload, proof }, 1)
        .unwrap();

    let mut draft = ledger.begin_block();
    let err = flush(&mut queue, &mut draft, &mut signer).unwrap_err();
    assert!(matches!(err, oec::offline::FlushError::AuthFailed { .. }));
    assert_eq!(queue.len(), 1, "queue intact after abort");
}

#[test]
fn duplicate_and_future_reports_refused() {
    let (ledger, mut signer, _leader, members, system) = setup();
    let node = members[0];
    let mut draft = ledger.begin_block();
    match oec::join(draft.state(), node, system, &mut signer).unwrap() {
        JoinOutcome::Admitted(tx) => draft.try_add(tx).unwrap(),
        _ => panic!(),
    }
    let epoch = draft.epoch();
    let seq = draft.state().next_seq(&node);
    let payload = report_payload(system, epoch, 1.0);
    let proof = signer.sign(node, seq, &payload).unwrap();
    draft
        .try_add(Transaction { actor: node, seq, payload, proof })
        .unwrap();

    // same epoch again: refused as duplicate
    let seq = draft.state().next_seq(&node);
    let payload = report_payload(system, epoch, 0.5);
    let proof = signer.sign(node, seq, &payload).unwrap();
    let err = draft
        .try_add(Transaction { actor: node, seq, payload, proof })
        .unwrap_err();
    assert_eq!(err, TxError::Refused(RejectReason::DuplicateReport));

    // future epoch: malformed outright
    let payload = report_payload(system, epoch + 10, 0.5);
    let proof = signer.sign(node, seq, &payload).unwrap();
    let err = draft
        .try_add(Transaction { actor: node, seq, payload, proof })
        .unwrap_err();
    assert!(matches!(err, TxError::Malformed(_)));
}
