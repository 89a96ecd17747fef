//! Crash injection.
//!
//! A [`CrashSchedule`] is either a scripted list of `(slot, node)` events or
//! a Poisson process over slots. [`FaultState`] applies events lazily as the
//! simulation clock advances and caps the number of simultaneously crashed
//! nodes at `f`. Crashed nodes come back at the next epoch boundary.

use std::collections::BTreeSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::deployment::NodeId;

/// Slot duration used to convert per-second rates, in seconds.
pub const SLOT_SECONDS: f64 = 50e-6;

#[derive(Copy, Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct CrashEvent {
    pub slot: u64,
    pub node: NodeId,
}

#[derive(Clone, Debug, PartialEq, Default)]
pub enum CrashSchedule {
    #[default]
    None,
    Scripted(Vec<CrashEvent>),
    /// Crash events at `per_slot` expected events per slot, each hitting a
    /// uniformly chosen node.
    Poisson { per_slot: f64, seed: u64 },
}

#[derive(Debug, Error, PartialEq)]
pub enum FaultError {
    #[error("scripted schedule crashes {count} distinct nodes, more than f = {f}")]
    TooManyFaults { count: usize, f: usize },
    #[error("crash event for node {0} outside the network")]
    UnknownNode(NodeId),
    #[error("crash rate must be finite and non-negative, got {0}")]
    InvalidRate(f64),
}

impl CrashSchedule {
    /// Poisson schedule for a rate given as a fraction of `n` nodes per second.
    pub fn from_rate(fraction_per_second: f64, n: usize, seed: u64) -> Result<Self, FaultError> {
        if !fraction_per_second.is_finite() || fraction_per_second < 0.0 {
            return Err(FaultError::InvalidRate(fraction_per_second));
        }
        if fraction_per_second == 0.0 {
            return Ok(CrashSchedule::None);
        }
        Ok(CrashSchedule::Poisson {
            per_slot: fraction_per_second * n as f64 * SLOT_SECONDS,
            seed,
        })
    }

    /// Scripted schedules may not crash more than `f` distinct nodes.
    pub fn validate(&self, n: usize, f: usize) -> Result<(), FaultError> {
        match self {
            CrashSchedule::Scripted(events) => {
                if let Some(e) = events.iter().find(|e| e.node.0 >= n) {
                    return Err(FaultError::UnknownNode(e.node));
                }
                let distinct: BTreeSet<NodeId> = events.iter().map(|e| e.node).collect();
                if distinct.len() > f {
                    return Err(FaultError::TooManyFaults { count: distinct.len(), f });
                }
                Ok(())
            }
            CrashSchedule::Poisson { per_slot, .. } if !per_slot.is_finite() || *per_slot < 0.0 => {
                Err(FaultError::InvalidRate(*per_slot))
            }
            _ => Ok(()),
        }
    }
}

#[derive(Clone, Debug)]
enum Source {
    None,
    Scripted { events: Vec<CrashEvent>, next: usize },
    Poisson { gap: Exp<f64>, rng: ChaCha8Rng, next: f64 },
}

#[derive(Clone, Debug)]
pub struct FaultState {
    n: usize,
    f: usize,
    crashed: Vec<bool>,
    crashed_count: usize,
    source: Source,
    /// Slot up to which events have been applied (inclusive).
    applied_to: Option<u64>,
    log: Vec<CrashEvent>,
    dropped: u64,
}

impl FaultState {
    pub fn new(schedule: &CrashSchedule, n: usize, f: usize) -> Result<Self, FaultError> {
        schedule.validate(n, f)?;
        let source = match schedule {
            CrashSchedule::None => Source::None,
            CrashSchedule::Scripted(events) => {
                let mut events = events.clone();
                events.sort();
                Source::Scripted { events, next: 0 }
            }
            CrashSchedule::Poisson { per_slot, .. } if *per_slot == 0.0 => Source::None,
            CrashSchedule::Poisson { per_slot, seed } => {
                let gap = Exp::new(*per_slot).map_err(|_| FaultError::InvalidRate(*per_slot))?;
                let mut rng = ChaCha8Rng::seed_from_u64(*seed);
                let next = gap.sample(&mut rng);
                Source::Poisson { gap, rng, next }
            }
        };
        Ok(Self {
            n,
            f,
            crashed: vec![false; n],
            crashed_count: 0,
            source,
            applied_to: None,
            log: Vec::new(),
            dropped: 0,
        })
    }

    pub fn f(&self) -> usize {
        self.f
    }

    #[inline]
    pub fn is_alive(&self, v: NodeId) -> bool {
        !self.crashed[v.0]
    }

    pub fn crashed_count(&self) -> usize {
        self.crashed_count
    }

    /// Every crash applied so far, in order.
    pub fn log(&self) -> &[CrashEvent] {
        &self.log
    }

    /// Poisson events discarded because the target was already down or the
    /// cap `f` was reached.
    pub fn dropped(&self) -> u64 {
        self.dropped
    }

    /// Applies every event with `event.slot <= slot`.
    pub fn advance_to(&mut self, slot: u64) {
        if self.applied_to.is_some_and(|s| s >= slot) {
            return;
        }
        self.applied_to = Some(slot);
        match &mut self.source {
            Source::None => {}
            Source::Scripted { events, next } => {
                while *next < events.len() && events[*next].slot <= slot {
                    let e = events[*next];
                    *next += 1;
                    if !self.crashed[e.node.0] && self.crashed_count < self.f {
                        self.crashed[e.node.0] = true;
                        self.crashed_count += 1;
                        self.log.push(e);
                    }
                }
            }
            Source::Poisson { gap, rng, next } => {
                // Continuous-time arrivals; an event at time t lands in slot ⌊t⌋.
                while (*next as u64) <= slot {
                    let node = NodeId(rng.random_range(0..self.n));
                    let at = *next as u64;
                    *next += gap.sample(rng);
                    if self.crashed[node.0] || self.crashed_count >= self.f {
                        self.dropped += 1;
                        continue;
                    }
                    self.crashed[node.0] = true;
                    self.crashed_count += 1;
                    self.log.push(CrashEvent { slot: at, node });
                }
            }
        }
    }

    /// `inject_crashes`: applies events up to `slot` and returns the alive set.
    pub fn inject_crashes(&mut self, slot: u64) -> BTreeSet<NodeId> {
        self.advance_to(slot);
        self.alive()
    }

    pub fn alive(&self) -> BTreeSet<NodeId> {
        (0..self.n).map(NodeId).filter(|&v| self.is_alive(v)).collect()
    }

    /// Epoch boundary: every crashed node rejoins.
    pub fn recover_all(&mut self) -> Vec<NodeId> {
        let back: Vec<NodeId> = (0..self.n).map(NodeId).filter(|&v| self.crashed[v.0]).collect();
        self.crashed.iter_mut().for_each(|c| *c = false);
        self.crashed_count = 0;
        back
    }
}
