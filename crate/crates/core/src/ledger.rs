//! Blocks, hash-chained ledgers and the chain utilities `packup`, `append`,
//! `extract` and `update`.

use std::collections::BTreeMap;
use std::fmt;
use std::io::Write;

use serde::Serialize;
use sha2::{Digest as _, Sha256};
use thiserror::Error;

use crate::deployment::NodeId;
use crate::message::MessageQueue;

pub type Digest = [u8; 32];

#[derive(Copy, Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub struct TxId {
    pub creator: NodeId,
    pub epoch: u64,
    pub nonce: u64,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Transaction {
    pub id: TxId,
    pub payload: Vec<u8>,
    pub valid: bool,
}

impl Transaction {
    pub(crate) fn encode(&self, out: &mut Vec<u8>) {
        out.extend_from_slice(&(self.id.creator.0 as u64).to_le_bytes());
        out.extend_from_slice(&self.id.epoch.to_le_bytes());
        out.extend_from_slice(&self.id.nonce.to_le_bytes());
        out.extend_from_slice(&(self.payload.len() as u64).to_le_bytes());
        out.extend_from_slice(&self.payload);
        out.push(self.valid as u8);
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Block {
    pub seq: u64,
    pub prev_hash: Digest,
    pub txs: Vec<Transaction>,
    pub proposer: NodeId,
    pub epoch: u64,
}

impl Block {
    pub fn genesis() -> Self {
        Block {
            seq: 0,
            prev_hash: [0; 32],
            txs: Vec::new(),
            proposer: NodeId(0),
            epoch: 0,
        }
    }

    /// SHA-256 over the canonical little-endian serialization.
    pub fn digest(&self) -> Digest {
        let mut buf = Vec::with_capacity(64 + self.txs.len() * 48);
        buf.extend_from_slice(&self.seq.to_le_bytes());
        buf.extend_from_slice(&self.prev_hash);
        buf.extend_from_slice(&(self.proposer.0 as u64).to_le_bytes());
        buf.extend_from_slice(&self.epoch.to_le_bytes());
        buf.extend_from_slice(&(self.txs.len() as u64).to_le_bytes());
        for tx in &self.txs {
            tx.encode(&mut buf);
        }
        Sha256::digest(&buf).into()
    }
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash)]
pub struct View {
    pub seq: u64,
    pub hash: Digest,
}

impl fmt::Display for View {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.seq, &hex::encode(self.hash)[..12])
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum LedgerError {
    #[error("block {seq} does not extend head {head}")]
    SeqMismatch { seq: u64, head: u64 },
    #[error("block {seq} does not carry the head's digest")]
    HashMismatch { seq: u64 },
    #[error("suffix starting at {first} cannot link to head {head}")]
    Unlinkable { first: u64, head: u64 },
    #[error("suffix disagrees with the local chain at {seq}")]
    Conflict { seq: u64 },
    #[error("suffix is not internally hash-consistent at {seq}")]
    Inconsistent { seq: u64 },
}

/// A node's replica, always starting from the shared genesis block.
#[derive(Clone, Debug, PartialEq)]
pub struct Blockchain {
    blocks: Vec<Block>,
    digests: Vec<Digest>,
}

impl Default for Blockchain {
    fn default() -> Self {
        Self::new()
    }
}

impl Blockchain {
    pub fn new() -> Self {
        let g = Block::genesis();
        let d = g.digest();
        Self { blocks: vec![g], digests: vec![d] }
    }

    pub fn blocks(&self) -> &[Block] {
        &self.blocks
    }

    pub fn head(&self) -> &Block {
        self.blocks.last().expect("genesis")
    }

    pub fn head_seq(&self) -> u64 {
        self.head().seq
    }

    pub fn block(&self, seq: u64) -> Option<&Block> {
        self.blocks.get(seq as usize)
    }

    pub fn digest_at(&self, seq: u64) -> Option<Digest> {
        self.digests.get(seq as usize).copied()
    }

    pub fn view(&self) -> View {
        View {
            seq: self.head_seq(),
            hash: *self.digests.last().expect("genesis"),
        }
    }

    /// Appends `b` if it links to the head; otherwise leaves the chain as is.
    pub fn append(&mut self, b: Block) -> Result<(), LedgerError> {
        let head = self.head_seq();
        if b.seq != head + 1 {
            return Err(LedgerError::SeqMismatch { seq: b.seq, head });
        }
        if b.prev_hash != self.view().hash {
            return Err(LedgerError::HashMismatch { seq: b.seq });
        }
        self.digests.push(b.digest());
        self.blocks.push(b);
        Ok(())
    }

    /// Block on top of the head holding the valid transactions in `q`,
    /// deduplicated by id and ordered by `(creator, nonce)`.
    pub fn packup(&self, q: &MessageQueue, proposer: NodeId, epoch: u64) -> Block {
        let txs: BTreeMap<TxId, &crate::ledger::Transaction> = q.transactions().filter(|t| t.valid).map(|t| (t.id, t)).collect();
        Block {
            seq: self.head_seq() + 1,
            prev_hash: self.view().hash,
            txs: txs.into_values().cloned().collect(),
            proposer,
            epoch,
        }
    }

    /// Suffix of blocks with `seq >= i`, where `i` is the `(f+s)`-th highest
    /// reported seq (or the lowest when fewer views exist), clamped to
    /// `[1, head]`. An empty report set yields everything after genesis.
    pub fn extract<'a>(&self, views: impl IntoIterator<Item = &'a View>, f: usize, s: usize) -> Vec<Block> {
        let mut seqs: Vec<u64> = views.into_iter().map(|v| v.seq).collect();
        seqs.sort_unstable_by(|a, b| b.cmp(a));
        let k = f + s;
        let i = if seqs.is_empty() {
            1
        } else if k >= 1 && seqs.len() >= k {
            seqs[k - 1]
        } else {
            *seqs.last().expect("non-empty")
        };
        let head = self.head_seq();
        if head == 0 {
            return Vec::new();
        }
        let i = i.clamp(1, head);
        self.blocks[i as usize..].to_vec()
    }

    /// Brings the chain up to date with a suffix from another replica.
    ///
    /// Blocks already present must match; the first new block must link to
    /// the head. On any error the chain is left untouched. Returns the number
    /// of appended blocks.
    pub fn update(&mut self, suffix: &[Block]) -> Result<usize, LedgerError> {
        let Some(first) = suffix.first() else {
            return Ok(0);
        };
        let mut digests = Vec::with_capacity(suffix.len());
        for (k, b) in suffix.iter().enumerate() {
            if k > 0 {
                let prev = &suffix[k - 1];
                if b.seq != prev.seq + 1 || b.prev_hash != digests[k - 1] {
                    return Err(LedgerError::Inconsistent { seq: b.seq });
                }
            }
            digests.push(b.digest());
        }
        let head = self.head_seq();
        if first.seq > head + 1 || first.seq == 0 {
            return Err(LedgerError::Unlinkable { first: first.seq, head });
        }
        for (b, d) in suffix.iter().zip(&digests) {
            if b.seq <= head && self.digests[b.seq as usize] != *d {
                return Err(LedgerError::Conflict { seq: b.seq });
            }
        }
        let start = (head + 1 - first.seq) as usize;
        if let Some(b) = suffix.get(start) {
            if b.prev_hash != self.view().hash {
                return Err(LedgerError::Conflict { seq: b.seq });
            }
        }
        let added = suffix.len().saturating_sub(start);
        for (b, d) in suffix.iter().zip(digests).skip(start) {
            self.blocks.push(b.clone());
            self.digests.push(d);
        }
        Ok(added)
    }

    /// Hash-chain and seq contiguity check over the whole replica.
    pub fn is_valid(&self) -> bool {
        self.blocks[0] == Block::genesis()
            && self.blocks.windows(2).zip(self.digests.iter()).all(|(w, d)| w[1].seq == w[0].seq + 1 && w[1].prev_hash == *d)
            && self.blocks.iter().zip(&self.digests).all(|(b, d)| b.digest() == *d)
    }

    /// One line per block: `seq epoch proposer tx_count digest_hex`.
    pub fn dump<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        for (b, d) in self.blocks.iter().zip(&self.digests) {
            writeln!(out, "{} {} {} {} {}", b.seq, b.epoch, b.proposer, b.txs.len(), hex::encode(d))?;
        }
        Ok(())
    }
}
