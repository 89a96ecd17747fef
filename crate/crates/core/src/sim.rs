//! Shared slot clock, channel and crash state for one trial.

use std::collections::BTreeSet;
use std::io::Write;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Geometric};

use crate::deployment::{NodeId, NodePlacement};
use crate::fault::FaultState;
use crate::phy::{resolve_slot, SinrParams, SlotOutcome, TransmissionIntent};
use crate::scalar::Scalar;

/// Slot-level transmit times for each of `nodes` transmitting independently
/// with probability `p` in each of `len` slots, sorted by `(slot, node)`.
///
/// Sampled through geometric inter-transmission gaps, which gives the same
/// distribution as one Bernoulli draw per slot without walking idle slots.
pub fn transmission_schedule<R: Rng>(rng: &mut R, nodes: &[NodeId], p: f64, len: u64) -> Vec<(u64, NodeId)> {
    let mut out = Vec::new();
    if len == 0 || p <= 0.0 {
        return out;
    }
    if p >= 1.0 {
        for s in 0..len {
            out.extend(nodes.iter().map(|&v| (s, v)));
        }
        return out;
    }
    let gap = Geometric::new(p).expect("0 < p < 1");
    for &v in nodes {
        let mut s = gap.sample(rng);
        while s < len {
            out.push((s, v));
            s = s.saturating_add(1).saturating_add(gap.sample(rng));
        }
    }
    out.sort_unstable();
    out
}

/// One row of the optional per-slot trace.
#[derive(Clone, Debug, PartialEq)]
pub struct TraceRow {
    pub slot: u64,
    pub event: &'static str,
    pub node: NodeId,
    pub detail: String,
}

#[derive(Clone, Debug, Default)]
pub struct Trace {
    rows: Vec<TraceRow>,
}

impl Trace {
    pub fn rows(&self) -> &[TraceRow] {
        &self.rows
    }

    /// CSV with header `slot,event,node,detail`.
    pub fn write_csv<W: Write>(&self, out: W) -> csv::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["slot", "event", "node", "detail"])?;
        for r in &self.rows {
            w.write_record([r.slot.to_string(), r.event.to_string(), r.node.to_string(), r.detail.clone()])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// The simulated world of one trial: geometry, channel, clock, crashes and
/// the trial's random stream.
#[derive(Clone, Debug)]
pub struct Medium<T> {
    placement: Arc<NodePlacement<T>>,
    sinr: SinrParams<T>,
    faults: FaultState,
    slot: u64,
    rng: ChaCha8Rng,
    trace: Option<Trace>,
}

impl<T: Scalar> Medium<T> {
    pub fn new(placement: Arc<NodePlacement<T>>, sinr: SinrParams<T>, faults: FaultState, seed: u64) -> Self {
        Self {
            placement,
            sinr,
            faults,
            slot: 0,
            rng: ChaCha8Rng::seed_from_u64(seed),
            trace: None,
        }
    }

    pub fn with_trace(mut self, on: bool) -> Self {
        self.trace = on.then(Trace::default);
        self
    }

    pub fn placement(&self) -> &NodePlacement<T> {
        &self.placement
    }

    pub fn shared_placement(&self) -> Arc<NodePlacement<T>> {
        Arc::clone(&self.placement)
    }

    pub fn sinr(&self) -> &SinrParams<T> {
        &self.sinr
    }

    /// Number of slots elapsed; the next slot to be used has this index.
    pub fn now(&self) -> u64 {
        self.slot
    }

    pub fn rng(&mut self) -> &mut ChaCha8Rng {
        &mut self.rng
    }

    /// Fresh seed for a sub-procedure, drawn from the trial stream.
    pub fn derive_seed(&mut self) -> u64 {
        self.rng.random()
    }

    pub fn faults(&self) -> &FaultState {
        &self.faults
    }

    pub fn faults_mut(&mut self) -> &mut FaultState {
        &mut self.faults
    }

    /// Liveness of `v` during slot `slot` (crashes at `slot` take effect
    /// immediately).
    pub fn alive_at(&mut self, v: NodeId, slot: u64) -> bool {
        self.faults.advance_to(slot);
        self.faults.is_alive(v)
    }

    pub fn alive_now(&mut self) -> BTreeSet<NodeId> {
        self.faults.inject_crashes(self.slot)
    }

    /// Skips `k` slots in which nothing relevant happens.
    pub fn advance(&mut self, k: u64) {
        self.slot += k;
        self.faults.advance_to(self.slot);
    }

    /// Resolves a slot at absolute index `slot` without moving the clock.
    /// Dead senders and listeners are dropped first.
    pub fn resolve_at<P: Clone>(
        &mut self,
        slot: u64,
        intents: Vec<TransmissionIntent<T, P>>,
        listeners: &BTreeSet<NodeId>,
    ) -> SlotOutcome<T, P> {
        self.faults.advance_to(slot);
        let intents: Vec<_> = intents.into_iter().filter(|it| self.faults.is_alive(it.sender)).collect();
        let listeners: BTreeSet<NodeId> = listeners.iter().copied().filter(|&v| self.faults.is_alive(v)).collect();
        resolve_slot(&self.placement, &self.sinr, &intents, &listeners).expect("intents come from placement members")
    }

    /// Uses the current slot for one exchange and moves the clock past it.
    pub fn step<P: Clone>(&mut self, intents: Vec<TransmissionIntent<T, P>>, listeners: &BTreeSet<NodeId>) -> SlotOutcome<T, P> {
        let slot = self.slot;
        let out = self.resolve_at(slot, intents, listeners);
        self.slot += 1;
        out
    }

    /// One max-power broadcast from `sender` to every alive node. Returns
    /// `None` if the sender is down at this slot; the slot is consumed either
    /// way.
    pub fn broadcast<P: Clone>(&mut self, sender: NodeId, payload: P) -> Option<SlotOutcome<T, P>> {
        let slot = self.slot;
        if !self.alive_at(sender, slot) {
            self.slot += 1;
            return None;
        }
        let power = self.sinr.broadcast_power(self.placement.gamma());
        let listeners = self.faults.alive();
        Some(self.step(vec![TransmissionIntent { sender, power, payload }], &listeners))
    }

    pub fn tracing(&self) -> bool {
        self.trace.is_some()
    }

    pub fn record(&mut self, slot: u64, event: &'static str, node: NodeId, detail: impl FnOnce() -> String) {
        if let Some(t) = &mut self.trace {
            t.rows.push(TraceRow { slot, event, node, detail: detail() });
        }
    }

    pub fn take_trace(&mut self) -> Option<Trace> {
        self.trace.as_mut().map(std::mem::take)
    }
}
