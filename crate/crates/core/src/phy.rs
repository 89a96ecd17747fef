//! Slot-level SINR resolution and physical carrier sensing.

use std::collections::{BTreeMap, BTreeSet};

use thiserror::Error;

use crate::deployment::{NodeId, NodePlacement};
use crate::scalar::{ceil_log2, Scalar};

#[derive(Debug, Error, PartialEq)]
pub enum PhyError {
    #[error("invalid SINR parameters: {0}")]
    InvalidParams(String),
    #[error("sender {0} is not part of the placement")]
    InvalidSender(NodeId),
    #[error("transmit power of sender {0} must be positive")]
    NonPositivePower(NodeId),
    #[error("node {0} did not listen in this slot")]
    NotListener(NodeId),
}

/// Path-loss exponent, SINR threshold and ambient noise.
#[derive(Copy, Clone, Debug, PartialEq)]
pub struct SinrParams<T> {
    pub alpha: T,
    pub beta: T,
    pub noise: T,
}

impl<T: Scalar> Default for SinrParams<T> {
    fn default() -> Self {
        Self {
            alpha: T::of(3.0),
            beta: T::of(3.0),
            noise: T::one(),
        }
    }
}

impl<T: Scalar> SinrParams<T> {
    pub fn new(alpha: T, beta: T, noise: T) -> Result<Self, PhyError> {
        let p = Self { alpha, beta, noise };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<(), PhyError> {
        if !(self.alpha > T::of(2.0) && self.alpha <= T::of(6.0)) {
            return Err(PhyError::InvalidParams(format!("alpha {} outside (2, 6]", self.alpha)));
        }
        if !(self.beta > T::one()) {
            return Err(PhyError::InvalidParams(format!("beta {} must exceed 1", self.beta)));
        }
        if !(self.noise > T::zero()) {
            return Err(PhyError::InvalidParams(format!("noise {} must be positive", self.noise)));
        }
        Ok(())
    }

    /// Received power `P * d^-alpha`.
    #[inline]
    pub fn received(&self, power: T, d: T) -> T {
        power * d.powf(-self.alpha)
    }

    /// Power that reaches distance `r` with SINR `2 beta` in a silent channel:
    /// `2 N beta r^alpha`.
    pub fn power_for_range(&self, r: T) -> T {
        T::of(2.0) * self.noise * self.beta * r.powf(self.alpha)
    }

    /// Aggregation power of round `i`, with `r_i = 2^i`.
    pub fn level_power(&self, level: u32) -> T {
        self.power_for_range(T::of(2f64.powi(level as i32)))
    }

    /// Maximum power `P̂ = 2 N beta (2^⌈log2 Γ⌉)^alpha`, heard everywhere in a
    /// deployment of diameter `gamma`.
    pub fn broadcast_power(&self, gamma: T) -> T {
        self.level_power(ceil_log2(gamma))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TransmissionIntent<T, P> {
    pub sender: NodeId,
    pub power: T,
    pub payload: P,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SlotOutcome<T, P> {
    /// Decoded `(sender, payload)` pairs per listener.
    pub received: BTreeMap<NodeId, Vec<(NodeId, P)>>,
    /// Total received power per listener.
    pub sensed_energy: BTreeMap<NodeId, T>,
}

impl<T: Scalar, P> SlotOutcome<T, P> {
    pub fn decoded(&self, v: NodeId) -> &[(NodeId, P)] {
        self.received.get(&v).map(Vec::as_slice).unwrap_or(&[])
    }
}

/// Sole SINR value of sender `u` at listener `v` given all concurrent
/// intents, summed in intent order.
pub fn sinr_at<T: Scalar, P>(
    placement: &NodePlacement<T>,
    params: &SinrParams<T>,
    intents: &[TransmissionIntent<T, P>],
    u: usize,
    v: NodeId,
) -> T {
    let signal = params.received(intents[u].power, placement.d(intents[u].sender, v));
    let interference = intents
        .iter()
        .enumerate()
        .filter(|&(w, _)| w != u)
        .fold(T::zero(), |acc, (_, it)| acc + params.received(it.power, placement.d(it.sender, v)));
    signal / (params.noise + interference)
}

/// Resolves one slot.
///
/// Listeners that also transmit are dropped (half-duplex). Because `beta > 1`,
/// a sender can only clear the threshold if its received power exceeds the
/// sum of all others, so only the strongest sender at each listener needs an
/// explicit evaluation.
pub fn resolve_slot<T: Scalar, P: Clone>(
    placement: &NodePlacement<T>,
    params: &SinrParams<T>,
    intents: &[TransmissionIntent<T, P>],
    listeners: &BTreeSet<NodeId>,
) -> Result<SlotOutcome<T, P>, PhyError> {
    let mut senders = BTreeSet::new();
    for it in intents {
        if !placement.contains(it.sender) {
            return Err(PhyError::InvalidSender(it.sender));
        }
        if !(it.power > T::zero()) {
            return Err(PhyError::NonPositivePower(it.sender));
        }
        senders.insert(it.sender);
    }

    let mut outcome = SlotOutcome {
        received: BTreeMap::new(),
        sensed_energy: BTreeMap::new(),
    };
    let mut powers: Vec<T> = Vec::with_capacity(intents.len());
    for &v in listeners {
        if senders.contains(&v) || !placement.contains(v) {
            continue;
        }
        powers.clear();
        powers.extend(intents.iter().map(|it| params.received(it.power, placement.d(it.sender, v))));
        let energy = powers.iter().fold(T::zero(), |a, &b| a + b);
        outcome.sensed_energy.insert(v, energy);

        let mut decoded = Vec::new();
        if let Some((best, _)) = powers
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.partial_cmp(b.1).expect("finite received power"))
        {
            if sinr_at(placement, params, intents, best, v) >= params.beta {
                decoded.push((intents[best].sender, intents[best].payload.clone()));
            }
        }
        outcome.received.insert(v, decoded);
    }
    Ok(outcome)
}

/// Physical carrier sensing: did `v` observe more than `threshold` energy?
pub fn carrier_sense<T: Scalar, P>(outcome: &SlotOutcome<T, P>, v: NodeId, threshold: T) -> Result<bool, PhyError> {
    outcome
        .sensed_energy
        .get(&v)
        .map(|&e| e > threshold)
        .ok_or(PhyError::NotListener(v))
}
