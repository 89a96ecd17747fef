//! Epoch state machine: PREPARE, COMMIT, DECIDE over a spanner rebuilt at
//! every epoch start, with crash injection and node recovery.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::io::Write;
use std::sync::Arc;

use rand::Rng;
use thiserror::Error;

use crate::aggregation::{self, AggregationParams, ParamError, ReaggregationCtx, ReaggregationStatus};
use crate::deployment::{NodeId, NodePlacement};
use crate::fault::{CrashSchedule, FaultError, FaultState};
use crate::ledger::{Block, Blockchain, Transaction, TxId, View};
use crate::message::{Control, Message, MessageQueue, NodeContext, Payload, Role};
use crate::phy::{PhyError, SinrParams};
use crate::scalar::Scalar;
use crate::sim::{Medium, Trace};
use crate::spanner::{self, BuildMode, Spanner};

pub const DEFAULT_S: usize = 100;

#[derive(Clone, Debug, PartialEq)]
pub struct ProtocolParams<T> {
    pub sinr: SinrParams<T>,
    pub aggregation: AggregationParams,
    pub spanner_mode: BuildMode<T>,
    /// Recovery slack in the extract cut.
    pub s: usize,
    pub tx_per_node: usize,
    /// Probability that a generated transaction fails validation.
    pub invalid_rate: f64,
    /// Commit blocks with no valid transactions.
    pub empty_blocks: bool,
}

impl<T: Scalar> ProtocolParams<T> {
    pub fn for_sinr(sinr: SinrParams<T>) -> Self {
        Self {
            aggregation: AggregationParams::for_sinr(&sinr),
            sinr,
            spanner_mode: BuildMode::default(),
            s: DEFAULT_S,
            tx_per_node: 1,
            invalid_rate: 0.0,
            empty_blocks: true,
        }
    }

    pub fn validate(&self) -> Result<(), ProtocolError> {
        self.sinr.validate()?;
        self.aggregation.validate(&self.sinr)?;
        if !(0.0..=1.0).contains(&self.invalid_rate) {
            return Err(ProtocolError::InvalidRate(self.invalid_rate));
        }
        Ok(())
    }
}

impl<T: Scalar> Default for ProtocolParams<T> {
    fn default() -> Self {
        Self::for_sinr(SinrParams::default())
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum ProtocolError {
    #[error(transparent)]
    Params(#[from] ParamError),
    #[error(transparent)]
    Phy(#[from] PhyError),
    #[error(transparent)]
    Fault(#[from] FaultError),
    #[error("invalid transaction rate {0}")]
    InvalidRate(f64),
}

#[derive(Copy, Clone, Debug, PartialEq, Eq)]
pub enum AbandonReason {
    LeaderCrashed(Phase),
    ReaggregationCap(Phase),
    NoQuorum { matching: usize, needed: usize },
    EmptyBlock,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq)]
pub enum Phase {
    Prepare,
    Commit,
    Decide,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq)]
pub enum EpochOutcome {
    Committed { seq: u64 },
    Abandoned(AbandonReason),
}

impl EpochOutcome {
    pub fn is_committed(&self) -> bool {
        matches!(self, EpochOutcome::Committed { .. })
    }
}

impl fmt::Display for EpochOutcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EpochOutcome::Committed { .. } => f.write_str("committed"),
            EpochOutcome::Abandoned(AbandonReason::LeaderCrashed(_)) => f.write_str("abandoned-leader-crash"),
            EpochOutcome::Abandoned(AbandonReason::ReaggregationCap(_)) => f.write_str("abandoned-reaggregation-cap"),
            EpochOutcome::Abandoned(AbandonReason::NoQuorum { .. }) => f.write_str("abandoned-no-quorum"),
            EpochOutcome::Abandoned(AbandonReason::EmptyBlock) => f.write_str("abandoned-empty-block"),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EpochResult {
    pub epoch: u64,
    pub leader: NodeId,
    pub outcome: EpochOutcome,
    /// Slots from the leader's view broadcast to the end of the epoch.
    pub epoch_slots: u64,
    /// Slots charged (or measured) for the epoch-start spanner, not part of
    /// `epoch_slots`.
    pub construction_slots: u64,
    pub committed_txs: usize,
    /// Nodes that are crashed or off the leader's view after the epoch.
    pub faulty_count: usize,
    pub crashes: usize,
    pub checks: u32,
    pub rebuilds: u32,
    /// Distinct signers whose view matched the leader's.
    pub matching_views: usize,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct NodeState {
    pub chain: Blockchain,
    pub faulty: bool,
}

/// `node_recovery`: applies the decide suffix; the node is non-faulty iff
/// its view now equals the leader's.
pub fn node_recovery(chain: &mut Blockchain, suffix: &[Block], leader_view: &View) -> bool {
    chain.update(suffix).is_ok() && chain.view() == *leader_view
}

/// Number of `(seq, j)` positions at which two replicas hold different
/// transactions.
pub fn persistence_conflicts<'a>(chains: impl IntoIterator<Item = &'a Blockchain>) -> usize {
    let mut by_seq: BTreeMap<u64, Vec<&Block>> = BTreeMap::new();
    for c in chains {
        for (b, seq) in c.blocks().iter().zip(0u64..) {
            let slot = by_seq.entry(seq).or_default();
            if !slot.iter().any(|x| *x == b) {
                slot.push(b);
            }
        }
    }
    let mut conflicts = 0;
    for blocks in by_seq.values().filter(|v| v.len() > 1) {
        let width = blocks.iter().map(|b| b.txs.len()).max().unwrap_or(0);
        for j in 0..width {
            let distinct: BTreeSet<Option<&TxId>> = blocks.iter().map(|b| b.txs.get(j).map(|t| &t.id)).collect();
            let payloads: BTreeSet<Option<&Vec<u8>>> = blocks.iter().map(|b| b.txs.get(j).map(|t| &t.payload)).collect();
            if distinct.len() > 1 || payloads.len() > 1 {
                conflicts += 1;
            }
        }
    }
    conflicts
}

#[derive(Clone)]
pub struct Network<T> {
    medium: Medium<T>,
    nodes: Vec<NodeState>,
    params: ProtocolParams<T>,
    f: usize,
    epoch: u64,
    history: Vec<EpochResult>,
    last_spanner: Option<Spanner>,
}

impl<T: Scalar> Network<T> {
    pub fn new(
        placement: Arc<NodePlacement<T>>,
        params: ProtocolParams<T>,
        schedule: &CrashSchedule,
        seed: u64,
    ) -> Result<Self, ProtocolError> {
        params.validate()?;
        let n = placement.n();
        let f = n / 2;
        let faults = FaultState::new(schedule, n, f)?;
        Ok(Self {
            medium: Medium::new(placement, params.sinr, faults, seed),
            nodes: vec![NodeState::default(); n],
            params,
            f,
            epoch: 0,
            history: Vec::new(),
            last_spanner: None,
        })
    }

    pub fn with_trace(mut self, on: bool) -> Self {
        self.medium = self.medium.with_trace(on);
        self
    }

    /// Replaces the crash schedule; meant to be called between epochs.
    /// Scripted events at past slots fire on the next clock advance.
    pub fn set_schedule(&mut self, schedule: &CrashSchedule) -> Result<(), ProtocolError> {
        *self.medium.faults_mut() = FaultState::new(schedule, self.n(), self.f)?;
        Ok(())
    }

    pub fn f(&self) -> usize {
        self.f
    }

    pub fn n(&self) -> usize {
        self.nodes.len()
    }

    pub fn params(&self) -> &ProtocolParams<T> {
        &self.params
    }

    pub fn nodes(&self) -> &[NodeState] {
        &self.nodes
    }

    pub fn nodes_mut(&mut self) -> &mut [NodeState] {
        &mut self.nodes
    }

    pub fn medium(&self) -> &Medium<T> {
        &self.medium
    }

    pub fn history(&self) -> &[EpochResult] {
        &self.history
    }

    /// Spanner built at the start of the latest epoch.
    pub fn last_spanner(&self) -> Option<&Spanner> {
        self.last_spanner.as_ref()
    }

    pub fn take_trace(&mut self) -> Option<Trace> {
        self.medium.take_trace()
    }

    pub fn levels(&self) -> u32 {
        spanner::level_count(self.medium.placement())
    }

    /// Crash-free epoch length: two aggregation passes, two three-slot
    /// integrity checks and three single broadcasts.
    pub fn epoch_budget(&self) -> u64 {
        2 * self.params.aggregation.pass_slots(self.n(), self.levels()) + 9
    }

    /// Cost of one reaggregation iteration with a rebuild: spanner charge,
    /// one aggregation pass, three check slots and the forward slot.
    pub fn per_crash_allowance(&self, rebuild_slots: u64) -> u64 {
        rebuild_slots + self.params.aggregation.pass_slots(self.n(), self.levels()) + 4
    }

    pub fn persistence_conflicts(&self) -> usize {
        persistence_conflicts(self.nodes.iter().map(|s| &s.chain))
    }

    fn context(s: &Spanner, v: NodeId, leader: NodeId) -> NodeContext {
        let role = if v == leader {
            Role::Leader
        } else if v == s.collector() {
            Role::Collector
        } else {
            Role::Follower
        };
        NodeContext {
            id: v,
            parent: s.parent(v).map(|l| l.parent),
            role,
            level: s.top_level(v).unwrap_or(0),
        }
    }

    fn make_txs(&mut self, v: NodeId) -> Vec<Transaction> {
        let (k, rate, epoch) = (self.params.tx_per_node, self.params.invalid_rate, self.epoch);
        (0..k)
            .map(|nonce| {
                let rng = self.medium.rng();
                let payload: [u8; 16] = rng.random();
                let valid = rate == 0.0 || !rng.random_bool(rate);
                Transaction {
                    id: TxId { creator: v, epoch, nonce: nonce as u64 },
                    payload: payload.to_vec(),
                    valid,
                }
            })
            .collect()
    }

    /// Runs one full epoch and records its result.
    pub fn run_epoch(&mut self) -> EpochResult {
        self.epoch += 1;
        let epoch = self.epoch;
        let crashes_before = self.medium.faults().log().len();
        self.medium.faults_mut().recover_all();
        let alive = self.medium.alive_now();
        let seed = self.medium.derive_seed();
        let sp = spanner::build(self.medium.placement(), &alive, &self.params.spanner_mode, seed).expect("every node is up at an epoch boundary");
        let leader = sp.collector();
        let construction_slots = sp.construction_slots();
        let start = self.medium.now();
        let reference = self.nodes[leader.0].chain.view();
        self.medium.record(start, "epoch", leader, || format!("epoch={epoch}"));

        let mut result = EpochResult {
            epoch,
            leader,
            outcome: EpochOutcome::Abandoned(AbandonReason::LeaderCrashed(Phase::Prepare)),
            epoch_slots: 0,
            construction_slots,
            committed_txs: 0,
            faulty_count: 0,
            crashes: 0,
            checks: 0,
            rebuilds: 0,
            matching_views: 0,
        };
        let outcome = self.phases(&sp, leader, reference, &mut result);
        result.outcome = outcome;
        self.last_spanner = Some(sp);

        let reference = self.nodes[leader.0].chain.view();
        let alive_end = self.medium.alive_now();
        for (v, node) in self.nodes.iter_mut().enumerate() {
            node.faulty = !alive_end.contains(&NodeId(v)) || node.chain.view() != reference;
        }
        result.faulty_count = self.nodes.iter().filter(|n| n.faulty).count();
        result.epoch_slots = self.medium.now() - start;
        result.crashes = self.medium.faults().log().len() - crashes_before;
        let end = self.medium.now();
        self.medium.record(end, "epoch-end", leader, || outcome.to_string());
        self.history.push(result.clone());
        result
    }

    fn phases(&mut self, sp: &Spanner, leader: NodeId, leader_view: View, result: &mut EpochResult) -> EpochOutcome {
        let f = self.f;
        let max_checks = (f + 1) as u32;
        let params = self.params.aggregation;
        let mode = self.params.spanner_mode.clone();

        // PREPARE
        let prepare_slot = self.medium.now();
        let Some(o) = self.medium.broadcast(leader, leader_view) else {
            return EpochOutcome::Abandoned(AbandonReason::LeaderCrashed(Phase::Prepare));
        };
        let mut joined: BTreeSet<NodeId> = o.received.iter().filter(|(_, g)| !g.is_empty()).map(|(v, _)| *v).collect();
        joined.insert(leader);
        let views: BTreeMap<NodeId, Arc<Message>> = joined
            .iter()
            .map(|&v| {
                let ctx = Self::context(sp, v, leader);
                let view = self.nodes[v.0].chain.view();
                (v, Arc::new(Message::sign(Payload::View(view), &ctx, prepare_slot)))
            })
            .collect();
        let agg = aggregation::data_aggregation(&mut self.medium, sp, &params, &views);
        let ctx = ReaggregationCtx { leader, own: &views, max_checks, build_mode: &mode };
        let re = aggregation::reaggregation(&mut self.medium, &params, &ctx, agg.into_collector_queue());
        result.checks += re.checks;
        result.rebuilds += re.rebuilds;
        match re.status {
            ReaggregationStatus::Stop => {}
            ReaggregationStatus::Abandoned => return EpochOutcome::Abandoned(AbandonReason::ReaggregationCap(Phase::Prepare)),
            ReaggregationStatus::LeaderCrashed => return EpochOutcome::Abandoned(AbandonReason::LeaderCrashed(Phase::Prepare)),
        }
        let view_queue = re.leader_queue;
        let commit_spanner = match &re.spanner {
            Some(s) => s.rooted_at(leader),
            None => sp.clone(),
        };

        // COMMIT
        let matching: BTreeSet<NodeId> = view_queue.views().filter(|(_, v)| **v == leader_view).map(|(s, _)| s).collect();
        result.matching_views = matching.len();
        if matching.len() < f + 1 {
            let _ = self.medium.broadcast(leader, Control::Abandon);
            return EpochOutcome::Abandoned(AbandonReason::NoQuorum { matching: matching.len(), needed: f + 1 });
        }
        let correct_slot = self.medium.now();
        let Some(o) = self.medium.broadcast(leader, Control::Correct) else {
            return EpochOutcome::Abandoned(AbandonReason::LeaderCrashed(Phase::Commit));
        };
        let mut joined: BTreeSet<NodeId> = o.received.iter().filter(|(_, g)| !g.is_empty()).map(|(v, _)| *v).collect();
        joined.insert(leader);
        let mut txs = BTreeMap::new();
        for &v in &joined {
            let ctx = Self::context(&commit_spanner, v, leader);
            let data = Payload::Txs(self.make_txs(v));
            txs.insert(v, Arc::new(Message::sign(data, &ctx, correct_slot)));
        }
        let agg = aggregation::data_aggregation(&mut self.medium, &commit_spanner, &params, &txs);
        let ctx = ReaggregationCtx { leader, own: &txs, max_checks, build_mode: &mode };
        let re = aggregation::reaggregation(&mut self.medium, &params, &ctx, agg.into_collector_queue());
        result.checks += re.checks;
        result.rebuilds += re.rebuilds;
        match re.status {
            ReaggregationStatus::Stop => {}
            ReaggregationStatus::Abandoned => return EpochOutcome::Abandoned(AbandonReason::ReaggregationCap(Phase::Commit)),
            ReaggregationStatus::LeaderCrashed => return EpochOutcome::Abandoned(AbandonReason::LeaderCrashed(Phase::Commit)),
        }
        let tx_queue: MessageQueue = re.leader_queue;

        // DECIDE
        let decide_slot = self.medium.now();
        if !self.medium.alive_at(leader, decide_slot) {
            self.medium.advance(1);
            return EpochOutcome::Abandoned(AbandonReason::LeaderCrashed(Phase::Decide));
        }
        let chain = &mut self.nodes[leader.0].chain;
        let block = chain.packup(&tx_queue, leader, self.epoch);
        if block.txs.is_empty() && !self.params.empty_blocks {
            let _ = self.medium.broadcast(leader, Control::Abandon);
            return EpochOutcome::Abandoned(AbandonReason::EmptyBlock);
        }
        let committed = block.txs.len();
        chain.append(block).expect("packup builds on the head");
        let new_view = chain.view();
        let suffix: Arc<Vec<Block>> = Arc::new(chain.extract(view_queue.views().map(|(_, v)| v), f, self.params.s));
        let o = self.medium.broadcast(leader, suffix).expect("leader checked alive this slot");
        for (v, got) in &o.received {
            if let Some((_, suffix)) = got.first() {
                node_recovery(&mut self.nodes[v.0].chain, suffix, &new_view);
            }
        }
        result.committed_txs = committed;
        EpochOutcome::Committed { seq: new_view.seq }
    }

    /// CSV `epoch,outcome,leader,epoch_slots,committed_txs,faulty_count`.
    pub fn write_epoch_log<W: Write>(&self, out: W) -> csv::Result<()> {
        write_epoch_log(&self.history, out)
    }
}

pub fn write_epoch_log<W: Write>(history: &[EpochResult], out: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["epoch", "outcome", "leader", "epoch_slots", "committed_txs", "faulty_count"])?;
    for r in history {
        w.write_record([
            r.epoch.to_string(),
            r.outcome.to_string(),
            r.leader.to_string(),
            r.epoch_slots.to_string(),
            r.committed_txs.to_string(),
            r.faulty_count.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}
