//! Slotted randomized MIS through the SINR channel.
//!
//! Each level runs phases of `phase_slots` slots. At phase start every
//! undecided node draws a random rank. During the phase undecided nodes and
//! members that already joined transmit (rank or JOINED) with probability
//! `p` at the level power. After the phase, a node that decoded a JOINED
//! message from within `r_i` drops out; a node whose rank is below every rank
//! it decoded from within `r_i` joins. Two joiners that never heard each
//! other may still be within `r_i`; the later one (by rank) is demoted back to
//! undecided and the repair is counted. After `MAX_PHASES` phases, any still
//! undecided nodes are settled greedily.

use std::collections::{BTreeMap, BTreeSet};

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::deployment::{NodeId, NodePlacement};
use crate::phy::{resolve_slot, SinrParams, TransmissionIntent};
use crate::scalar::Scalar;
use crate::sim::transmission_schedule;

const MAX_PHASES: u32 = 64;

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct DistributedStats {
    pub slots: u64,
    pub phases: u64,
    pub repaired_conflicts: u64,
    /// Nodes settled by the greedy fallback after the phase cap.
    pub settled_by_fallback: u64,
}

#[derive(Copy, Clone, Debug, PartialEq)]
enum Beacon {
    Rank(u64),
    Joined,
}

#[allow(clippy::too_many_arguments)]
pub(super) fn mis_level<T: Scalar>(
    placement: &NodePlacement<T>,
    sinr: &SinrParams<T>,
    prev: &[NodeId],
    level: u32,
    p: f64,
    phase_slots: u64,
    rng: &mut ChaCha8Rng,
    stats: &mut DistributedStats,
) -> Vec<NodeId> {
    let r: T = super::radius(level);
    let power = sinr.level_power(level);
    let mut undecided: BTreeSet<NodeId> = prev.iter().copied().collect();
    let mut members: BTreeSet<NodeId> = BTreeSet::new();

    let mut phase = 0;
    while !undecided.is_empty() && phase < MAX_PHASES {
        phase += 1;
        stats.phases += 1;
        stats.slots += phase_slots;

        let ranks: BTreeMap<NodeId, u64> = undecided.iter().map(|&v| (v, rng.random())).collect();
        let contenders: Vec<NodeId> = undecided.iter().chain(members.iter()).copied().collect();
        let schedule = transmission_schedule(rng, &contenders, p, phase_slots);

        let mut heard_joined: BTreeSet<NodeId> = BTreeSet::new();
        let mut min_heard: BTreeMap<NodeId, u64> = BTreeMap::new();
        for group in schedule.chunk_by(|a, b| a.0 == b.0) {
            let intents: Vec<TransmissionIntent<T, Beacon>> = group
                .iter()
                .map(|&(_, v)| TransmissionIntent {
                    sender: v,
                    power,
                    payload: match ranks.get(&v) {
                        Some(&k) => Beacon::Rank(k),
                        None => Beacon::Joined,
                    },
                })
                .collect();
            let senders: BTreeSet<NodeId> = group.iter().map(|e| e.1).collect();
            let listeners: BTreeSet<NodeId> = undecided
                .iter()
                .copied()
                .filter(|u| !senders.contains(u) && senders.iter().any(|&s| placement.d(s, *u) <= r))
                .collect();
            if listeners.is_empty() {
                continue;
            }
            let outcome = resolve_slot(placement, sinr, &intents, &listeners).expect("valid intents");
            for (&u, got) in &outcome.received {
                for &(s, beacon) in got {
                    if placement.d(s, u) > r {
                        continue;
                    }
                    match beacon {
                        Beacon::Joined => {
                            heard_joined.insert(u);
                        }
                        Beacon::Rank(k) => {
                            let e = min_heard.entry(u).or_insert(u64::MAX);
                            *e = (*e).min(k);
                        }
                    }
                }
            }
        }

        for u in &heard_joined {
            undecided.remove(u);
        }
        let mut winners: Vec<(u64, NodeId)> = undecided
            .iter()
            .filter(|u| ranks[u] < min_heard.get(u).copied().unwrap_or(u64::MAX))
            .map(|&u| (ranks[&u], u))
            .collect();
        winners.sort_unstable();
        for (_, u) in winners {
            if members.iter().any(|&m| placement.d(m, u) <= r) {
                stats.repaired_conflicts += 1;
                continue;
            }
            members.insert(u);
            undecided.remove(&u);
        }
    }

    for u in std::mem::take(&mut undecided) {
        stats.settled_by_fallback += 1;
        if !members.iter().any(|&m| placement.d(m, u) <= r) {
            members.insert(u);
        }
    }
    members.into_iter().collect()
}
