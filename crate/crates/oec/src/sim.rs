//! Seeded discrete-event simulator driving node populations against the
//! platform.
//!
//! Time is modeled as epochs, one committed block per epoch. Each epoch the
//! returning nodes flush their offline queues, every node takes its
//! behavior's actions (direct to the manager's draft block when online,
//! into its queue when not), due settlements run, and the manager commits
//! the block. All randomness flows from one seeded generator, so a
//! (scenario, seed) pair reproduces the exported ledger byte for byte.
//!
//! Behaviors: honest nodes deliver exactly what they advertise (f = g);
//! under-deliverers deliver a fixed fraction of it; churners cycle through
//! join / serve / leave with a configurable delivery factor; forgers submit
//! subscriptions with invalid proofs, which never reach the chain.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::identity::{
    generate_params, prove_knowledge, GroupParams, IdentityError, KeyPair, NodeProfile,
    Resources, SecurityLevel,
};
use crate::incentives::{expected_performance, TaskSpec, INITIAL_REPUTATION};
use crate::ledger::{ChainFault, Ledger, TxDisposition};
use crate::lifecycle::EdgeSystemConfig;
use crate::metrics::{compute_metrics, Metrics};
use crate::offline::{flush, ActionQueue};
use crate::rng::SimRng;
use crate::tx::{signing_context, Payload, RejectReason, Signer, Transaction, TxKind};
use crate::types::{NodeId, SystemId};

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid scenario: {0}")]
    InvalidScenario(String),
    #[error("corrupt ledger: {0}")]
    CorruptLedger(#[from] ChainFault),
    #[error("internal invariant violation: {0}")]
    Internal(String),
}

fn default_epoch() -> u64 {
    1
}

fn default_delta_one() -> f64 {
    1.0
}

fn default_min_reputation() -> f64 {
    crate::lifecycle::DEFAULT_MIN_REPUTATION
}

fn default_min_expected_perf() -> f64 {
    crate::lifecycle::DEFAULT_MIN_EXPECTED_PERF
}

/// What a simulated node does each epoch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BehaviorSpec {
    /// Joins its target system and delivers exactly as advertised.
    Honest,
    /// Joins and delivers `delta` times the advertised performance.
    UnderDeliverer { delta: f64 },
    /// Serves `period` epochs, leaves, stays out `period` epochs, rejoins.
    Churner {
        period: u64,
        #[serde(default = "default_delta_one")]
        delta: f64,
    },
    /// Attempts to subscribe with invalid proofs; never admitted.
    Forger,
}

impl Default for BehaviorSpec {
    fn default() -> Self {
        BehaviorSpec::Honest
    }
}

/// One node in a scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeSpec {
    pub name: String,
    #[serde(default)]
    pub bc_node: bool,
    pub resources: Resources,
    #[serde(default)]
    pub payment_detail: String,
    #[serde(default)]
    pub behavior: BehaviorSpec,
    /// Index into `systems` this node participates in. Defaults to system 0
    /// for non-leader nodes when any systems exist.
    #[serde(default)]
    pub system: Option<usize>,
    #[serde(default = "default_epoch")]
    pub subscribe_epoch: u64,
    /// Epoch at which the behavior starts acting (join/report/...).
    #[serde(default = "default_epoch")]
    pub start_epoch: u64,
    /// Inclusive epoch intervals during which the node queues instead of
    /// submitting.
    #[serde(default)]
    pub offline_windows: Vec<[u64; 2]>,
}

/// One edge system to be created by its leader.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemSpec {
    pub leader: String,
    pub target_capacity: f64,
    pub rate: f64,
    #[serde(default = "default_epoch")]
    pub settlement_period: u64,
    #[serde(default = "default_min_reputation")]
    pub min_reputation: f64,
    #[serde(default = "default_min_expected_perf")]
    pub min_expected_perf: f64,
    pub task: TaskSpec,
}

impl SystemSpec {
    pub fn config(&self) -> EdgeSystemConfig {
        EdgeSystemConfig {
            target_capacity: self.target_capacity,
            rate: self.rate,
            settlement_period: self.settlement_period,
            min_reputation: self.min_reputation,
            min_expected_perf: self.min_expected_perf,
            task: self.task.clone(),
        }
    }
}

/// A full simulation scenario; the JSON schema of scenario files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub seed: u64,
    pub epochs: u64,
    #[serde(default)]
    pub security: SecurityLevel,
    pub nodes: Vec<NodeSpec>,
    #[serde(default)]
    pub systems: Vec<SystemSpec>,
}

impl Scenario {
    pub fn validate(&self) -> Result<(), SimError> {
        let fail = |msg: String| Err(SimError::InvalidScenario(msg));
        if self.epochs < 1 {
            return fail("epochs must be >= 1".into());
        }
        if self.nodes.is_empty() {
            return fail("at least one node required".into());
        }
        let mut names = std::collections::BTreeSet::new();
        for node in &self.nodes {
            if node.name.is_empty() {
                return fail("node names must be non-empty".into());
            }
            if !names.insert(node.name.as_str()) {
                return fail(format!("duplicate node name {:?}", node.name));
            }
            if !node.resources.valid() {
                return fail(format!("node {:?} resources out of range", node.name));
            }
            match &node.behavior {
                BehaviorSpec::UnderDeliverer { delta } => {
                    if !(0.0..1.0).contains(delta) {
                        return fail(format!("node {:?}: delta must be in [0,1)", node.name));
                    }
                }
                BehaviorSpec::Churner { period, delta } => {
                    if *period < 1 {
                        return fail(format!("node {:?}: churn period must be >= 1", node.name));
                    }
                    if !(0.0..=1.0).contains(delta) {
                        return fail(format!("node {:?}: delta must be in [0,1]", node.name));
                    }
                }
                BehaviorSpec::Honest | BehaviorSpec::Forger => {}
            }
            if let Some(idx) = node.system {
                if idx >= self.systems.len() {
                    return fail(format!("node {:?} references missing system {idx}", node.name));
                }
            }
            if node.subscribe_epoch < 1 || node.start_epoch < 1 {
                return fail(format!("node {:?}: epochs are 1-based", node.name));
            }
            for w in &node.offline_windows {
                if w[0] < 1 || w[0] > w[1] {
                    return fail(format!("node {:?}: bad offline window {w:?}", node.name));
                }
            }
        }
        for (i, sys) in self.systems.iter().enumerate() {
            if !self.nodes.iter().any(|n| n.name == sys.leader) {
                return fail(format!("system {i} leader {:?} is not a node", sys.leader));
            }
            if !sys.config().valid() {
                return fail(format!("system {i} config out of range"));
            }
        }
        // The toy group has only q-1 = 10 distinct keys.
        if self.security == SecurityLevel::Toy && self.nodes.len() > 10 {
            return fail("toy group supports at most 10 nodes".into());
        }
        Ok(())
    }

    /// The system a node participates in, if any: its explicit choice, or
    /// system 0 for non-leaders when systems exist.
    fn target_of(&self, node_idx: usize) -> Option<usize> {
        let node = &self.nodes[node_idx];
        if let Some(idx) = node.system {
            return Some(idx);
        }
        let is_leader = self.systems.iter().any(|s| s.leader == node.name);
        if !is_leader && !self.systems.is_empty() {
            Some(0)
        } else {
            None
        }
    }
}

/// Key table plus nonce source: produces every proof in the simulation.
pub struct SimSigner {
    params: GroupParams,
    keys: BTreeMap<NodeId, KeyPair>,
    rng: SimRng,
}

impl SimSigner {
    pub fn new(params: GroupParams, keys: BTreeMap<NodeId, KeyPair>, rng: SimRng) -> Self {
        SimSigner { params, keys, rng }
    }

    fn sign_tx(
        &mut self,
        actor: NodeId,
        seq: u64,
        payload: Payload,
    ) -> Result<Transaction, IdentityError> {
        let proof = self.sign(actor, seq, &payload)?;
        Ok(Transaction {
            actor,
            seq,
            payload,
            proof,
        })
    }

    /// A structurally valid transaction whose proof cannot verify.
    fn sign_corrupted(
        &mut self,
        actor: NodeId,
        seq: u64,
        payload: Payload,
    ) -> Result<Transaction, IdentityError> {
        let mut tx = self.sign_tx(actor, seq, payload)?;
        tx.proof.response = (&tx.proof.response + 1u32) % &self.params.q;
        Ok(tx)
    }
}

impl Signer for SimSigner {
    fn sign(
        &mut self,
        actor: NodeId,
        seq: u64,
        payload: &Payload,
    ) -> Result<crate::identity::ZkProof, IdentityError> {
        let kp = self
            .keys
            .get(&actor)
            .ok_or(IdentityError::AuthFailed)?
            .clone();
        let nonce = self.rng.scalar(&self.params.q);
        let context = signing_context(&actor, seq, payload);
        prove_knowledge(&self.params, &kp, &context, &nonce)
    }
}

/// Everything a finished run yields.
pub struct RunOutput {
    pub ledger: Ledger,
    pub metrics: Metrics,
    /// Scenario node name to on-chain identity.
    pub node_ids: BTreeMap<String, NodeId>,
    /// System ids by scenario index, once their create action is issued.
    pub system_ids: Vec<Option<SystemId>>,
}

struct NodeRt {
    id: NodeId,
    profile: NodeProfile,
    queue: ActionQueue,
    target: Option<usize>,
    /// Local belief, kept in sync with dispositions when online.
    subscribed: bool,
    member: bool,
    ever_joined: bool,
    tenure: u64,
    out_epochs: u64,
    local_seq: u64,
}

impl NodeRt {
    fn online(&self, spec: &NodeSpec, epoch: u64) -> bool {
        // Forgers never queue: their proofs are refused at the door, which
        // would abort any flush.
        if matches!(spec.behavior, BehaviorSpec::Forger) {
            return true;
        }
        !spec
            .offline_windows
            .iter()
            .any(|w| w[0] <= epoch && epoch <= w[1])
    }
}

/// Run a scenario to completion: returns the ledger, metrics derived from
/// it, and the name/id mappings. Deterministic in (scenario, seed).
pub fn run_scenario(sc: &Scenario) -> Result<RunOutput, SimError> {
    sc.validate()?;
    let params = generate_params(sc.security);
    let mut rng = SimRng::from_seed(sc.seed);

    // Deterministic key generation in node order; redraw on the (toy-group)
    // chance of a duplicate secret.
    let mut used = std::collections::BTreeSet::new();
    let mut keys = BTreeMap::new();
    let mut nodes: Vec<NodeRt> = Vec::with_capacity(sc.nodes.len());
    let mut node_ids = BTreeMap::new();
    for (idx, spec) in sc.nodes.iter().enumerate() {
        let mut sk = rng.scalar(&params.q);
        while !used.insert(sk.clone()) {
            sk = rng.scalar(&params.q);
        }
        let kp = KeyPair::from_secret(&params, sk).map_err(|e| SimError::Internal(e.to_string()))?;
        let id = kp.node_id();
        let profile = NodeProfile {
            id,
            pk: kp.pk.clone(),
            bc_node: spec.bc_node,
            resources: spec.resources.clone(),
            payment_detail: spec.payment_detail.clone(),
            reputation: INITIAL_REPUTATION,
        };
        keys.insert(id, kp);
        node_ids.insert(spec.name.clone(), id);
        nodes.push(NodeRt {
            id,
            profile,
            queue: ActionQueue::new(id),
            target: sc.target_of(idx),
            subscribed: false,
            member: false,
            ever_joined: false,
            tenure: 0,
            out_epochs: 0,
            local_seq: 1,
        });
    }

    // Leaders in system order; a node may lead several systems.
    let leader_idx: Vec<usize> = sc
        .systems
        .iter()
        .map(|s| sc.nodes.iter().position(|n| n.name == s.leader).unwrap())
        .collect();
    let mut system_ids: Vec<Option<SystemId>> = vec![None; sc.systems.len()];
    let mut signer = SimSigner::new(params.clone(), keys, rng);

    // Until the first BC peer subscribes there is no manager candidate set;
    // the first BC node (or first node) commits the bootstrap blocks.
    let bootstrap = nodes
        .iter()
        .zip(&sc.nodes)
        .find(|(_, s)| s.bc_node)
        .map(|(n, _)| n.id)
        .unwrap_or(nodes[0].id);

    let mut ledger = Ledger::new(params.clone());

    for epoch in 1..=sc.epochs {
        let manager = ledger.manager_for_next_block().unwrap_or(bootstrap);
        let mut draft = ledger.begin_block();

        // Returning nodes reconcile their queues first.
        for (idx, spec) in sc.nodes.iter().enumerate() {
            let node = &mut nodes[idx];
            if node.online(spec, epoch) && !node.queue.is_empty() {
                let dispositions = flush(&mut node.queue, &mut draft, &mut signer)
                    .map_err(|e| SimError::Internal(format!("flush: {e}")))?;
                apply_dispositions(node, &dispositions);
                node.local_seq = draft.state().next_seq(&node.id);
            }
        }

        // Every node takes its turn, in scenario order.
        for idx in 0..nodes.len() {
            node_step(
                sc,
                idx,
                epoch,
                &mut nodes,
                &mut draft,
                &mut signer,
                &leader_idx,
                &mut system_ids,
            )?;
        }

        // Periodic settlements, in system order.
        for (sys_idx, maybe_id) in system_ids.iter().enumerate() {
            let Some(system_id) = maybe_id else { continue };
            if epoch % sc.systems[sys_idx].settlement_period != 0 {
                continue;
            }
            let leader = &nodes[leader_idx[sys_idx]];
            if !leader.online(&sc.nodes[leader_idx[sys_idx]], epoch) {
                continue;
            }
            if !draft
                .state()
                .systems
                .get(system_id)
                .is_some_and(|s| s.is_active())
            {
                continue;
            }
            let txs = crate::incentives::settle_epoch(draft.state(), *system_id, epoch, &mut signer)
                .map_err(|e| SimError::Internal(format!("settlement: {e}")))?;
            for tx in txs {
                draft
                    .try_add(tx)
                    .map_err(|e| SimError::Internal(format!("settlement commit: {e}")))?;
            }
        }

        ledger
            .append_block(draft.into_txs(), manager)
            .map_err(|e| SimError::Internal(format!("append: {e}")))?;
    }

    let metrics = compute_metrics(&ledger)?;
    Ok(RunOutput {
        ledger,
        metrics,
        node_ids,
        system_ids,
    })
}

fn apply_dispositions(node: &mut NodeRt, dispositions: &[TxDisposition]) {
    for d in dispositions {
        match d {
            TxDisposition::Committed(TxKind::Subscribe) => node.subscribed = true,
            TxDisposition::Committed(TxKind::Join) => node.member = true,
            TxDisposition::Committed(TxKind::Leave) => node.member = false,
            TxDisposition::Rejected(TxKind::Join, _) => node.member = false,
            TxDisposition::Rejected(TxKind::PerformanceReport, reason)
                if matches!(
                    reason,
                    RejectReason::NotMember | RejectReason::SystemDissolved
                ) =>
            {
                node.member = false
            }
            _ => {}
        }
    }
}

/// Submit a signed transaction directly or queue it, updating beliefs.
enum Submit {
    Committed,
    Rejected(RejectReason),
    Dropped,
}

#[allow(clippy::too_many_arguments)]
fn node_step(
    sc: &Scenario,
    idx: usize,
    epoch: u64,
    nodes: &mut [NodeRt],
    draft: &mut crate::ledger::BlockDraft,
    signer: &mut SimSigner,
    leader_idx: &[usize],
    system_ids: &mut [Option<SystemId>],
) -> Result<(), SimError> {
    let spec = &sc.nodes[idx];
    let online = nodes[idx].online(spec, epoch);

    let submit = |nodes: &mut [NodeRt],
                  draft: &mut crate::ledger::BlockDraft,
                  signer: &mut SimSigner,
                  payload: Payload,
                  epoch: u64|
     -> Result<Submit, SimError> {
        let node = &mut nodes[idx];
        let online = node.online(&sc.nodes[idx], epoch);
        let seq = if online {
            draft.state().next_seq(&node.id)
        } else {
            node.local_seq
        };
        let tx = signer
            .sign_tx(node.id, seq, payload)
            .map_err(|e| SimError::Internal(format!("sign: {e}")))?;
        if online {
            let outcome = match draft.add_or_reject(tx) {
                Ok(TxDisposition::Committed(_)) => Submit::Committed,
                Ok(TxDisposition::Rejected(_, reason)) => Submit::Rejected(reason),
                Err(_) => Submit::Dropped,
            };
            // Keep the local counter current so a later offline stretch
            // signs from the right sequence number.
            node.local_seq = draft.state().next_seq(&node.id);
            Ok(outcome)
        } else {
            node.queue
                .queue_action(tx, epoch)
                .map_err(|e| SimError::Internal(format!("queue: {e}")))?;
            node.local_seq = seq + 1;
            Ok(Submit::Committed) // assumed until flush corrects it
        }
    };

    // Forgers only ever push corrupt subscriptions, straight at the door.
    if matches!(spec.behavior, BehaviorSpec::Forger) {
        if epoch >= spec.subscribe_epoch && !nodes[idx].subscribed {
            let node = &nodes[idx];
            let payload = Payload::Subscribe {
                profile: node.profile.clone(),
            };
            let seq = draft.state().next_seq(&node.id);
            let tx = signer
                .sign_corrupted(node.id, seq, payload)
                .map_err(|e| SimError::Internal(format!("sign: {e}")))?;
            // AuthFailed at the door: dropped, never recorded.
            let _ = draft.add_or_reject(tx);
        }
        return Ok(());
    }

    // Subscription.
    if !nodes[idx].subscribed && epoch >= spec.subscribe_epoch {
        let payload = Payload::Subscribe {
            profile: nodes[idx].profile.clone(),
        };
        match submit(nodes, draft, signer, payload, epoch)? {
            Submit::Committed => nodes[idx].subscribed = true,
            _ => return Ok(()),
        }
    }
    if !nodes[idx].subscribed {
        return Ok(());
    }

    // System creation, for every system this node leads.
    for (sys_idx, &lead) in leader_idx.iter().enumerate() {
        if lead != idx || system_ids[sys_idx].is_some() || epoch < spec.start_epoch {
            continue;
        }
        let node = &nodes[idx];
        let seq = if online {
            draft.state().next_seq(&node.id)
        } else {
            node.local_seq
        };
        let system = crate::lifecycle::derive_system_id(&node.id, seq);
        let payload = Payload::CreateSystem {
            system,
            config: sc.systems[sys_idx].config(),
        };
        if let Submit::Committed = submit(nodes, draft, signer, payload, epoch)? {
            system_ids[sys_idx] = Some(system);
        }
    }

    // Behavior actions against the target system.
    let Some(target) = nodes[idx].target else {
        return Ok(());
    };
    if epoch < spec.start_epoch {
        return Ok(());
    }
    let Some(system_id) = system_ids[target] else {
        return Ok(());
    };

    let delta = match spec.behavior {
        BehaviorSpec::Honest => 1.0,
        BehaviorSpec::UnderDeliverer { delta } => delta,
        BehaviorSpec::Churner { delta, .. } => delta,
        BehaviorSpec::Forger => unreachable!(),
    };
    let churn_period = match spec.behavior {
        BehaviorSpec::Churner { period, .. } => Some(period),
        _ => None,
    };

    // Join when out (churners wait out their period between tenures).
    if !nodes[idx].member {
        let should_join = if !nodes[idx].ever_joined {
            true
        } else if let Some(period) = churn_period {
            nodes[idx].out_epochs += 1;
            nodes[idx].out_epochs > period
        } else {
            true
        };
        if should_join {
            let join_payload = Payload::Join { system: system_id };
            match submit(nodes, draft, signer, join_payload, epoch)? {
                Submit::Committed => {
                    let node = &mut nodes[idx];
                    node.member = true;
                    node.ever_joined = true;
                    node.tenure = 0;
                    node.out_epochs = 0;
                }
                Submit::Rejected(_) | Submit::Dropped => return Ok(()),
            }
        }
    }

    // Report this epoch's work, then possibly leave.
    if nodes[idx].member {
        let task = &sc.systems[target].task;
        let r = &nodes[idx].profile.resources;
        let g = expected_performance(task, r.processing, r.storage_gb, r.communication_mbps);
        let time_s = task.ref_time_s;
        let data_mb = delta * g * task.ref_rate() * time_s;
        let payload = Payload::PerformanceReport {
            system: system_id,
            epoch,
            data_mb,
            time_s,
        };
        match submit(nodes, draft, signer, payload, epoch)? {
            Submit::Committed => nodes[idx].tenure += 1,
            Submit::Rejected(RejectReason::NotMember | RejectReason::SystemDissolved) => {
                nodes[idx].member = false;
                return Ok(());
            }
            Submit::Rejected(_) | Submit::Dropped => return Ok(()),
        }

        if let Some(period) = churn_period {
            if nodes[idx].tenure >= period {
                leave_target(sc, idx, epoch, nodes, draft, signer, online, system_id)?;
            }
        }
    }
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn leave_target(
    sc: &Scenario,
    idx: usize,
    epoch: u64,
    nodes: &mut [NodeRt],
    draft: &mut crate::ledger::BlockDraft,
    signer: &mut SimSigner,
    online: bool,
    system_id: SystemId,
) -> Result<(), SimError> {
    let node = &mut nodes[idx];
    if online {
        let txs = crate::lifecycle::leave(draft.state(), node.id, system_id, epoch, signer)
            .map_err(|e| SimError::Internal(format!("leave: {e}")))?;
        for tx in txs {
            draft
                .try_add(tx)
                .map_err(|e| SimError::Internal(format!("leave commit: {e}")))?;
        }
        node.local_seq = draft.state().next_seq(&node.id);
    } else {
        // Queue only the leave itself; the leader-side settlement is
        // generated at flush time against the then-current state.
        let seq = node.local_seq;
        let tx = signer
            .sign_tx(node.id, seq, Payload::Leave { system: system_id })
            .map_err(|e| SimError::Internal(format!("sign: {e}")))?;
        node.queue
            .queue_action(tx, epoch)
            .map_err(|e| SimError::Internal(format!("queue: {e}")))?;
        node.local_seq = seq + 1;
    }
    node.member = false;
    node.tenure = 0;
    node.out_epochs = 0;
    let _ = sc;
    Ok(())
}
