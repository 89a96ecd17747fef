//! Signed protocol messages and the deduplicating message queue `M_v`.
//!
//! Signatures are simulated: the tag is a SHA-256 over a per-node secret and
//! the canonical message bytes. Honest crash-prone nodes never forge, so the
//! tag only has to make accidental or deliberate field edits detectable.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use sha2::{Digest as _, Sha256};

use crate::deployment::NodeId;
use crate::ledger::{Digest, Transaction, View};

#[derive(Copy, Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Role {
    Follower,
    Collector,
    Leader,
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Role::Follower => "follower",
            Role::Collector => "collector",
            Role::Leader => "leader",
        })
    }
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Control {
    Correct,
    Abandon,
    Stop,
    Reaggregation,
    Miss,
    Relay,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Payload {
    View(View),
    Txs(Vec<Transaction>),
    Control(Control),
}

/// `(own id, parent id)`.
#[derive(Copy, Clone, Debug, PartialEq, Eq)]
pub struct Kindred {
    pub own: NodeId,
    pub parent: Option<NodeId>,
}

/// What a node knows about itself when it signs a message.
#[derive(Copy, Clone, Debug, PartialEq, Eq)]
pub struct NodeContext {
    pub id: NodeId,
    pub parent: Option<NodeId>,
    pub role: Role,
    pub level: u32,
}

/// Dedup key: `(signer, timestamp, digest of data)`.
#[derive(Copy, Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct MessageKey {
    pub signer: NodeId,
    pub timestamp: u64,
    pub data: Digest,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Message {
    pub data: Payload,
    pub signer: NodeId,
    pub timestamp: u64,
    pub kindred: Kindred,
    pub role: Role,
    pub level: u32,
    pub tag: Digest,
    key: MessageKey,
}

fn node_secret(v: NodeId) -> Digest {
    let mut h = Sha256::new();
    h.update(b"wchain/node-key");
    h.update((v.0 as u64).to_le_bytes());
    h.finalize().into()
}

pub(crate) fn encode_payload(p: &Payload, out: &mut Vec<u8>) {
    match p {
        Payload::View(v) => {
            out.push(0);
            out.extend_from_slice(&v.seq.to_le_bytes());
            out.extend_from_slice(&v.hash);
        }
        Payload::Txs(txs) => {
            out.push(1);
            out.extend_from_slice(&(txs.len() as u64).to_le_bytes());
            for tx in txs {
                tx.encode(out);
            }
        }
        Payload::Control(c) => {
            out.push(2);
            out.push(*c as u8);
        }
    }
}

fn payload_digest(p: &Payload) -> Digest {
    let mut buf = Vec::new();
    encode_payload(p, &mut buf);
    Sha256::digest(&buf).into()
}

impl Message {
    /// `MSG(data)`: populates every field from the signer's context.
    pub fn sign(data: Payload, ctx: &NodeContext, timestamp: u64) -> Self {
        let key = MessageKey {
            signer: ctx.id,
            timestamp,
            data: payload_digest(&data),
        };
        let mut m = Message {
            data,
            signer: ctx.id,
            timestamp,
            kindred: Kindred { own: ctx.id, parent: ctx.parent },
            role: ctx.role,
            level: ctx.level,
            tag: [0; 32],
            key,
        };
        m.tag = m.compute_tag(&key.data);
        m
    }

    fn compute_tag(&self, data_digest: &Digest) -> Digest {
        let mut h = Sha256::new();
        h.update(node_secret(self.signer));
        h.update(data_digest);
        h.update((self.signer.0 as u64).to_le_bytes());
        h.update(self.timestamp.to_le_bytes());
        h.update((self.kindred.own.0 as u64).to_le_bytes());
        match self.kindred.parent {
            Some(p) => {
                h.update([1]);
                h.update((p.0 as u64).to_le_bytes());
            }
            None => h.update([0]),
        }
        h.update([self.role as u8]);
        h.update(self.level.to_le_bytes());
        h.finalize().into()
    }

    /// Recomputes the tag from the current field values.
    pub fn verify(&self) -> bool {
        let d = payload_digest(&self.data);
        d == self.key.data && self.key.signer == self.signer && self.key.timestamp == self.timestamp && self.tag == self.compute_tag(&d)
    }

    pub fn key(&self) -> MessageKey {
        self.key
    }

    pub fn view(&self) -> Option<&View> {
        match &self.data {
            Payload::View(v) => Some(v),
            _ => None,
        }
    }
}

/// Ordered, deduplicated set of messages.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct MessageQueue {
    entries: BTreeMap<MessageKey, Arc<Message>>,
}

impl MessageQueue {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn contains(&self, key: &MessageKey) -> bool {
        self.entries.contains_key(key)
    }

    /// `add`: inserts `m` unless it is a duplicate or fails verification.
    /// Returns whether the queue grew.
    pub fn add(&mut self, m: Arc<Message>) -> bool {
        if self.entries.contains_key(&m.key) || !m.verify() {
            return false;
        }
        self.entries.insert(m.key, m);
        true
    }

    /// Adds every message of `other`; returns how many were new.
    pub fn merge<'a>(&mut self, other: impl IntoIterator<Item = &'a Arc<Message>>) -> usize {
        other.into_iter().filter(|m| self.add(Arc::clone(m))).count()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Arc<Message>> {
        self.entries.values()
    }

    pub fn snapshot(&self) -> Vec<Arc<Message>> {
        self.entries.values().cloned().collect()
    }

    pub fn views(&self) -> impl Iterator<Item = (NodeId, &View)> {
        self.iter().filter_map(|m| m.view().map(|v| (m.signer, v)))
    }

    pub fn transactions(&self) -> impl Iterator<Item = &Transaction> {
        self.iter().flat_map(|m| match &m.data {
            Payload::Txs(t) => t.as_slice(),
            _ => &[],
        })
    }

    pub fn signers(&self) -> impl Iterator<Item = NodeId> + '_ {
        self.iter().map(|m| m.signer)
    }
}
