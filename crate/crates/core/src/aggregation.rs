//! Level-by-level contention aggregation up the spanner, and the
//! integrity-check / re-collection loop that repairs it after crashes.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use thiserror::Error;

use crate::deployment::NodeId;
use crate::message::{Control, Message, MessageQueue, NodeContext, Payload, Role};
use crate::phy::{carrier_sense, SinrParams, TransmissionIntent};
use crate::scalar::{ceil_log2_count, Scalar};
use crate::sim::{transmission_schedule, Medium};
use crate::spanner::{self, BuildMode, ParentLink, Spanner};

/// Density constant `λ'`: bound on `V_{i-1}` nodes within `r_i` of a parent.
pub const LAMBDA_PRIME: u32 = 25;

#[derive(Debug, Error, PartialEq)]
pub enum ParamError {
    #[error("sigma {sigma} must exceed 48β(α−1)/(α−2) = {floor}")]
    SigmaTooSmall { sigma: f64, floor: f64 },
    #[error("mu {mu} is below 2/p̂ = {need}")]
    MuTooSmall { mu: u64, need: f64 },
    #[error("p̂ {p_hat} must lie in (0, p = {p}]")]
    BadPHat { p_hat: f64, p: f64 },
    #[error("lambda' must be {LAMBDA_PRIME}, got {0}")]
    LambdaPrime(u32),
}

#[derive(Copy, Clone, Debug, PartialEq)]
pub struct AggregationParams {
    /// Round-length constant; a round lasts `mu * ⌈log2 N⌉` slots.
    pub mu: u64,
    /// Contention constant.
    pub sigma: f64,
    pub lambda_prime: u32,
    /// Floor on the per-slot probability that a given child is heard by its
    /// parent.
    pub p_hat: f64,
}

/// `48β(α−1)/(α−2)`.
pub fn sigma_floor<T: Scalar>(sinr: &SinrParams<T>) -> f64 {
    let (a, b) = (sinr.alpha.as_f64(), sinr.beta.as_f64());
    48.0 * b * (a - 1.0) / (a - 2.0)
}

/// Smallest integer strictly above [`sigma_floor`].
pub fn default_sigma<T: Scalar>(sinr: &SinrParams<T>) -> f64 {
    let floor = sigma_floor(sinr);
    let r = floor.round();
    let base = if (floor - r).abs() <= 1e-9 * r.max(1.0) { r } else { floor.ceil() };
    base + 1.0
}

/// `p (1 - p)^{λ'-1}` lower-bounded by `p · exp(-λ'/(σλ' - 1))`.
pub fn default_p_hat(sigma: f64, lambda_prime: u32) -> f64 {
    let l = lambda_prime as f64;
    let p = 1.0 / (sigma * l);
    p * (-l / (sigma * l - 1.0)).exp()
}

impl AggregationParams {
    /// Defaults for a channel: smallest valid integer `σ`, the matching
    /// `p̂` floor, and `μ = ⌈2/p̂⌉`.
    pub fn for_sinr<T: Scalar>(sinr: &SinrParams<T>) -> Self {
        Self::with_sigma(default_sigma(sinr))
    }

    pub fn with_sigma(sigma: f64) -> Self {
        let p_hat = default_p_hat(sigma, LAMBDA_PRIME);
        Self {
            mu: (2.0 / p_hat).ceil() as u64,
            sigma,
            lambda_prime: LAMBDA_PRIME,
            p_hat,
        }
    }

    /// Per-slot transmission probability `1/(σλ')`.
    pub fn p(&self) -> f64 {
        1.0 / (self.sigma * self.lambda_prime as f64)
    }

    pub fn validate<T: Scalar>(&self, sinr: &SinrParams<T>) -> Result<(), ParamError> {
        if self.lambda_prime != LAMBDA_PRIME {
            return Err(ParamError::LambdaPrime(self.lambda_prime));
        }
        let floor = sigma_floor(sinr);
        if !(self.sigma > floor) {
            return Err(ParamError::SigmaTooSmall { sigma: self.sigma, floor });
        }
        let p = self.p();
        if !(self.p_hat > 0.0 && self.p_hat <= p) {
            return Err(ParamError::BadPHat { p_hat: self.p_hat, p });
        }
        let need = 2.0 / self.p_hat;
        if (self.mu as f64) < need {
            return Err(ParamError::MuTooSmall { mu: self.mu, need });
        }
        Ok(())
    }

    /// `μ·⌈log2 n⌉`.
    pub fn round_slots(&self, n: usize) -> u64 {
        self.mu * ceil_log2_count(n) as u64
    }

    /// Slots of one full pass over `levels` rounds.
    pub fn pass_slots(&self, n: usize, levels: u32) -> u64 {
        self.round_slots(n) * levels as u64
    }
}

/// What a child sends up: its signed header plus a snapshot of `M_v`.
#[derive(Clone, Debug)]
pub struct Envelope {
    pub header: Message,
    pub body: Arc<[Arc<Message>]>,
}

/// Receiver-side check that the header's identity and role agree with the
/// spanner for a round-`level` transmission from `sender` to `receiver`.
pub fn accepts(s: &Spanner, receiver: NodeId, sender: NodeId, env: &Envelope, level: u32) -> bool {
    let h = &env.header;
    h.verify()
        && h.signer == sender
        && h.kindred.own == sender
        && h.kindred.parent == Some(receiver)
        && h.role == Role::Follower
        && Some(h.level) == s.top_level(sender)
        && h.level + 1 == level
        && s.parent(sender) == Some(ParentLink { parent: receiver, level })
}

#[derive(Clone, Debug)]
pub struct AggregationOutcome {
    /// Final `M_v` of every node, indexed by id.
    pub queues: Vec<MessageQueue>,
    pub collector: NodeId,
    pub slots_used: u64,
    pub transmissions: u64,
    /// Envelopes decoded and accepted by the intended parent.
    pub deliveries: u64,
}

impl AggregationOutcome {
    pub fn collector_queue(&self) -> &MessageQueue {
        &self.queues[self.collector.0]
    }

    pub fn into_collector_queue(mut self) -> MessageQueue {
        std::mem::take(&mut self.queues[self.collector.0])
    }
}

/// Runs `L` rounds of `μ⌈log2 N⌉` slots starting at the medium's clock.
///
/// `inputs` seeds each node's queue with its own message. In round `i` every
/// alive node of `V_{i-1} \ V_i` with a non-empty queue sends it with
/// probability `p` at power `P_i`; its parent merges what it decodes.
pub fn data_aggregation<T: Scalar>(
    medium: &mut Medium<T>,
    s: &Spanner,
    params: &AggregationParams,
    inputs: &BTreeMap<NodeId, Arc<Message>>,
) -> AggregationOutcome {
    let n = medium.placement().n();
    let mut queues = vec![MessageQueue::new(); n];
    for (v, m) in inputs {
        queues[v.0].add(Arc::clone(m));
    }
    let round_slots = params.round_slots(n);
    let p = params.p();
    let start = medium.now();
    let (mut transmissions, mut deliveries) = (0, 0);

    for level in 1..=s.depth() {
        let round_start = medium.now();
        let power = medium.sinr().level_power(level);
        let children: Vec<NodeId> = s.round_children(level).filter(|v| !queues[v.0].is_empty()).collect();
        let envelopes: BTreeMap<NodeId, Arc<Envelope>> = children
            .iter()
            .map(|&v| {
                let ctx = NodeContext {
                    id: v,
                    parent: s.parent(v).map(|l| l.parent),
                    role: Role::Follower,
                    level: level - 1,
                };
                let body: Arc<[Arc<Message>]> = queues[v.0].snapshot().into();
                (v, Arc::new(Envelope { header: Message::sign(Payload::Control(Control::Relay), &ctx, round_start), body }))
            })
            .collect();
        let schedule = transmission_schedule(medium.rng(), &children, p, round_slots);

        for group in schedule.chunk_by(|a, b| a.0 == b.0) {
            let slot = round_start + group[0].0;
            let intents: Vec<TransmissionIntent<T, Arc<Envelope>>> = group
                .iter()
                .map(|&(_, v)| TransmissionIntent { sender: v, power, payload: Arc::clone(&envelopes[&v]) })
                .collect();
            let listeners: BTreeSet<NodeId> = group.iter().filter_map(|&(_, v)| s.parent(v).map(|l| l.parent)).collect();
            let outcome = medium.resolve_at(slot, intents, &listeners);
            transmissions += group.len() as u64;
            for (&u, got) in &outcome.received {
                for (sender, env) in got {
                    if accepts(s, u, *sender, env, level) {
                        deliveries += 1;
                        let added = queues[u.0].merge(env.body.iter());
                        if medium.tracing() {
                            medium.record(slot, "deliver", u, || format!("from={sender} level={level} new={added}"));
                        }
                    }
                }
            }
        }
        medium.advance(round_slots);
    }
    AggregationOutcome {
        queues,
        collector: s.collector(),
        slots_used: medium.now() - start,
        transmissions,
        deliveries,
    }
}

#[derive(Copy, Clone, Debug, PartialEq, Eq)]
pub enum ReaggregationStatus {
    /// The leader sensed no objection; its queue is complete.
    Stop,
    /// Integrity checks hit the iteration cap.
    Abandoned,
    /// The leader was down in one of its designated slots.
    LeaderCrashed,
}

pub struct ReaggregationCtx<'a, T> {
    pub leader: NodeId,
    /// Own message of every participating node.
    pub own: &'a BTreeMap<NodeId, Arc<Message>>,
    /// Maximum number of integrity checks (`f + 1`).
    pub max_checks: u32,
    pub build_mode: &'a BuildMode<T>,
}

#[derive(Clone, Debug)]
pub struct ReaggregationOutcome {
    pub status: ReaggregationStatus,
    pub leader_queue: MessageQueue,
    pub slots_used: u64,
    /// Integrity checks run, including the final one.
    pub checks: u32,
    pub rebuilds: u32,
    pub rebuild_slots: u64,
    /// Most recent rebuilt spanner (over alive nodes minus the leader).
    pub spanner: Option<Spanner>,
}

/// Integrity check and re-collection loop, entered right after a
/// [`data_aggregation`] pass whose collector is the leader.
pub fn reaggregation<T: Scalar>(
    medium: &mut Medium<T>,
    params: &AggregationParams,
    ctx: &ReaggregationCtx<'_, T>,
    mut leader_queue: MessageQueue,
) -> ReaggregationOutcome {
    let start = medium.now();
    let leader = ctx.leader;
    let noise = medium.sinr().noise;
    let mut out = ReaggregationOutcome {
        status: ReaggregationStatus::Stop,
        leader_queue: MessageQueue::new(),
        slots_used: 0,
        checks: 0,
        rebuilds: 0,
        rebuild_slots: 0,
        spanner: None,
    };
    let finish = |mut out: ReaggregationOutcome, status, q: MessageQueue, medium: &Medium<T>| {
        out.status = status;
        out.leader_queue = q;
        out.slots_used = medium.now() - start;
        out
    };

    loop {
        // Slot 1: leader broadcasts M_ℓ.
        let slot1 = medium.now();
        let Some(o) = medium.broadcast(leader, ()) else {
            return finish(out, ReaggregationStatus::LeaderCrashed, leader_queue, medium);
        };
        let heard: BTreeSet<NodeId> = o.received.iter().filter(|(_, g)| !g.is_empty()).map(|(v, _)| *v).collect();
        medium.record(slot1, "check", leader, || format!("queue={}", leader_queue.len()));

        // Slot 2: nodes missing from M_ℓ object at P̂; the leader senses.
        let slot2 = medium.now();
        let missing: Vec<NodeId> = ctx
            .own
            .iter()
            .filter(|(v, m)| **v != leader && heard.contains(v) && !leader_queue.contains(&m.key()))
            .map(|(v, _)| *v)
            .collect();
        let power = medium.sinr().broadcast_power(medium.placement().gamma());
        let intents = missing
            .iter()
            .map(|&v| TransmissionIntent { sender: v, power, payload: Control::Miss })
            .collect();
        let listeners = BTreeSet::from([leader]);
        let o = medium.step(intents, &listeners);
        let Ok(objection) = carrier_sense(&o, leader, noise) else {
            return finish(out, ReaggregationStatus::LeaderCrashed, leader_queue, medium);
        };
        if objection {
            medium.record(slot2, "miss", leader, || format!("objectors={}", missing.len()));
        }

        // Slot 3: stop, reaggregation or abandon.
        out.checks += 1;
        let verdict = if !objection {
            Control::Stop
        } else if out.checks >= ctx.max_checks {
            Control::Abandon
        } else {
            Control::Reaggregation
        };
        if medium.broadcast(leader, verdict).is_none() {
            return finish(out, ReaggregationStatus::LeaderCrashed, leader_queue, medium);
        }
        match verdict {
            Control::Stop => return finish(out, ReaggregationStatus::Stop, leader_queue, medium),
            Control::Abandon => return finish(out, ReaggregationStatus::Abandoned, leader_queue, medium),
            _ => {}
        }

        // Rebuild over everyone alive except the leader.
        let mut alive = medium.alive_now();
        alive.remove(&leader);
        if alive.is_empty() {
            continue;
        }
        let seed = medium.derive_seed();
        let rebuilt = spanner::build(medium.placement(), &alive, ctx.build_mode, seed).expect("alive set is non-empty");
        let now = medium.now();
        medium.record(now, "rebuild", rebuilt.collector(), || format!("members={}", alive.len()));
        medium.advance(rebuilt.construction_slots());
        out.rebuilds += 1;
        out.rebuild_slots += rebuilt.construction_slots();

        // Missed nodes re-run aggregation; others only relay.
        let inputs: BTreeMap<NodeId, Arc<Message>> = missing
            .iter()
            .filter(|v| alive.contains(v))
            .map(|v| (*v, Arc::clone(&ctx.own[v])))
            .collect();
        let agg = data_aggregation(medium, &rebuilt, params, &inputs);
        let collector = rebuilt.collector();
        let body: Arc<[Arc<Message>]> = agg.collector_queue().snapshot().into();

        // New collector forwards to the leader in one broadcast slot.
        let header = Message::sign(
            Payload::Control(Control::Relay),
            &NodeContext {
                id: collector,
                parent: Some(leader),
                role: Role::Collector,
                level: rebuilt.depth(),
            },
            medium.now(),
        );
        let env = Arc::new(Envelope { header, body });
        let fwd_slot = medium.now();
        if let Some(o) = medium.broadcast(collector, Arc::clone(&env)) {
            for (sender, e) in o.decoded(leader) {
                let h = &e.header;
                if *sender == collector && h.verify() && h.signer == collector && h.role == Role::Collector && h.kindred.parent == Some(leader) {
                    let added = leader_queue.merge(e.body.iter());
                    medium.record(fwd_slot, "forward", collector, || format!("new={added}"));
                }
            }
        }
        out.spanner = Some(rebuilt);
    }
}
