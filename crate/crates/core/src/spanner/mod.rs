//! Leveled MIS hierarchy `V_0 ⊇ V_1 ⊇ … ⊇ V_L` used as the aggregation
//! backbone.
//!
//! `V_i` is a maximal independent set of `V_{i-1}` with respect to
//! `r_i = 2^i`; every node that drops out at level `i` is attached to its
//! nearest `V_i` member, which is within `r_i` by maximality. With
//! `L = ⌈log2 Γ⌉` the top level holds a single node, the collector.

mod distributed;

use std::collections::BTreeSet;
use std::io::Write;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::deployment::{NodeId, NodePlacement};
use crate::phy::SinrParams;
use crate::scalar::{ceil_log2, ceil_log2_count, Scalar};

pub use distributed::DistributedStats;

/// Default charge factor for oracle-mode construction.
pub const DEFAULT_C_SPAN: u64 = 4;

#[derive(Debug, Error, PartialEq)]
pub enum SpannerError {
    #[error("cannot build a spanner over an empty node set")]
    EmptyAlive,
    #[error("node {0} is not part of the placement")]
    UnknownNode(NodeId),
    #[error("node {node} is not a member of level {level}")]
    NotAtLevel { node: NodeId, level: u32 },
}

/// A structural violation found by [`Spanner::verify`].
#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    NotNested { level: u32, node: NodeId },
    NotIndependent { level: u32, a: NodeId, b: NodeId },
    Uncovered { level: u32, node: NodeId },
    BadParent { level: u32, node: NodeId },
    RootNotSingle { size: usize },
}

#[derive(Copy, Clone, Debug, PartialEq, Eq)]
pub struct ParentLink {
    pub parent: NodeId,
    /// Level `i` at which the link was assigned: the child is in
    /// `V_{i-1} \ V_i`, the parent in `V_i`.
    pub level: u32,
}

/// How the MIS at each level is computed.
#[derive(Clone, Debug, PartialEq)]
pub enum BuildMode<T> {
    /// Centralized greedy MIS in seeded random order; charges
    /// `c_span * ⌈log2 N⌉ * L` slots.
    Oracle { c_span: u64 },
    /// Slotted randomized MIS run through the SINR channel; slots measured.
    Distributed {
        sinr: SinrParams<T>,
        /// Per-slot transmission probability of each contender.
        p: f64,
        /// Slots per rank-exchange phase.
        phase_slots: u64,
    },
}

impl<T> Default for BuildMode<T> {
    fn default() -> Self {
        BuildMode::Oracle { c_span: DEFAULT_C_SPAN }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Spanner {
    levels: Vec<Vec<NodeId>>,
    top: Vec<Option<u32>>,
    parent: Vec<Option<ParentLink>>,
    collector: NodeId,
    construction_slots: u64,
    distributed: Option<DistributedStats>,
}

/// Number of levels for a placement: `⌈log2 Γ⌉`, at least 1 when there is
/// more than one node.
pub fn level_count<T: Scalar>(placement: &NodePlacement<T>) -> u32 {
    let l = ceil_log2(placement.gamma());
    if placement.n() > 1 {
        l.max(1)
    } else {
        l
    }
}

#[inline]
pub fn radius<T: Scalar>(level: u32) -> T {
    T::of(2f64.powi(level as i32))
}

/// Builds the hierarchy over `alive`. Deterministic given `seed`.
pub fn build<T: Scalar>(
    placement: &NodePlacement<T>,
    alive: &BTreeSet<NodeId>,
    mode: &BuildMode<T>,
    seed: u64,
) -> Result<Spanner, SpannerError> {
    if alive.is_empty() {
        return Err(SpannerError::EmptyAlive);
    }
    if let Some(&bad) = alive.iter().find(|v| !placement.contains(**v)) {
        return Err(SpannerError::UnknownNode(bad));
    }
    let depth = level_count(placement);
    let mut levels: Vec<Vec<NodeId>> = vec![alive.iter().copied().collect()];
    let (slots, stats) = match mode {
        BuildMode::Oracle { c_span } => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            for i in 1..=depth {
                let next = greedy_mis(placement, &levels[(i - 1) as usize], radius(i), &mut rng);
                levels.push(next);
            }
            (c_span * ceil_log2_count(placement.n()) as u64 * depth as u64, None)
        }
        BuildMode::Distributed { sinr, p, phase_slots } => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut stats = DistributedStats::default();
            for i in 1..=depth {
                let next = distributed::mis_level(placement, sinr, &levels[(i - 1) as usize], i, *p, *phase_slots, &mut rng, &mut stats);
                levels.push(next);
            }
            (stats.slots, Some(stats))
        }
    };
    Ok(Spanner::assemble(placement, levels, slots, stats))
}

/// Greedy MIS of `prev` w.r.t. `r`, visiting nodes in a seeded random order.
fn greedy_mis<T: Scalar>(placement: &NodePlacement<T>, prev: &[NodeId], r: T, rng: &mut ChaCha8Rng) -> Vec<NodeId> {
    let mut order = prev.to_vec();
    order.shuffle(rng);
    let mut chosen: Vec<NodeId> = Vec::new();
    for v in order {
        if chosen.iter().all(|&x| placement.d(v, x) > r) {
            chosen.push(v);
        }
    }
    chosen.sort_unstable();
    chosen
}

/// Nearest member of `level_set` to `w`, ties to the lower id.
fn nearest<T: Scalar>(placement: &NodePlacement<T>, w: NodeId, level_set: &[NodeId]) -> NodeId {
    let mut best = level_set[0];
    let mut best_d = placement.d(w, best);
    for &x in &level_set[1..] {
        let d = placement.d(w, x);
        if d < best_d {
            best = x;
            best_d = d;
        }
    }
    best
}

impl Spanner {
    fn assemble<T: Scalar>(
        placement: &NodePlacement<T>,
        levels: Vec<Vec<NodeId>>,
        construction_slots: u64,
        distributed: Option<DistributedStats>,
    ) -> Self {
        let n = placement.n();
        let mut top = vec![None; n];
        let mut parent = vec![None; n];
        for (i, set) in levels.iter().enumerate() {
            for &v in set {
                top[v.0] = Some(i as u32);
            }
        }
        for i in 1..levels.len() {
            let upper = &levels[i];
            for &w in &levels[i - 1] {
                if top[w.0] == Some(i as u32 - 1) {
                    parent[w.0] = Some(ParentLink {
                        parent: nearest(placement, w, upper),
                        level: i as u32,
                    });
                }
            }
        }
        let last = levels.last().expect("at least V_0");
        debug_assert_eq!(last.len(), 1, "top level must be a single node");
        Self {
            collector: last[0],
            levels,
            top,
            parent,
            construction_slots,
            distributed,
        }
    }

    /// `L`, the index of the top level.
    pub fn depth(&self) -> u32 {
        (self.levels.len() - 1) as u32
    }

    pub fn levels(&self) -> &[Vec<NodeId>] {
        &self.levels
    }

    pub fn level(&self, i: u32) -> &[NodeId] {
        self.levels.get(i as usize).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn collector(&self) -> NodeId {
        self.collector
    }

    pub fn construction_slots(&self) -> u64 {
        self.construction_slots
    }

    pub fn distributed_stats(&self) -> Option<&DistributedStats> {
        self.distributed.as_ref()
    }

    pub fn members(&self) -> &[NodeId] {
        &self.levels[0]
    }

    pub fn contains(&self, v: NodeId) -> bool {
        self.top.get(v.0).is_some_and(Option::is_some)
    }

    /// Highest level `v` belongs to.
    pub fn top_level(&self, v: NodeId) -> Option<u32> {
        self.top.get(v.0).copied().flatten()
    }

    pub fn parent(&self, v: NodeId) -> Option<ParentLink> {
        self.parent.get(v.0).copied().flatten()
    }

    /// `{w ∈ V_{i-1} \ V_i : parent[w] = (v, i)}`.
    pub fn children(&self, v: NodeId, level: u32) -> Result<Vec<NodeId>, SpannerError> {
        if level == 0 || !self.top_level(v).is_some_and(|t| t >= level) {
            return Err(SpannerError::NotAtLevel { node: v, level });
        }
        Ok(self.level(level - 1)
            .iter()
            .copied()
            .filter(|&w| self.parent(w) == Some(ParentLink { parent: v, level }))
            .collect())
    }

    /// Children transmitting in round `i`: `V_{i-1} \ V_i`.
    pub fn round_children(&self, level: u32) -> impl Iterator<Item = NodeId> + '_ {
        self.level(level - 1)
            .iter()
            .copied()
            .filter(move |&w| self.top_level(w) == Some(level - 1))
    }

    /// Max over parents `v ∈ V_i` of `|V_{i-1} ∩ N_{r_i}(v)|`.
    pub fn density_check<T: Scalar>(&self, placement: &NodePlacement<T>) -> usize {
        let mut max = 0;
        for i in 1..=self.depth() {
            let r: T = radius(i);
            for &v in self.level(i) {
                let count = self
                    .level(i - 1)
                    .iter()
                    .filter(|&&w| w != v && placement.d(v, w) <= r)
                    .count();
                max = max.max(count);
            }
        }
        max
    }

    /// Checks nesting, independence, coverage with parentage, and the single
    /// root.
    pub fn verify<T: Scalar>(&self, placement: &NodePlacement<T>) -> Result<(), Violation> {
        for i in 1..=self.depth() {
            let r: T = radius(i);
            let prev: BTreeSet<NodeId> = self.level(i - 1).iter().copied().collect();
            let cur = self.level(i);
            if let Some(&node) = cur.iter().find(|v| !prev.contains(v)) {
                return Err(Violation::NotNested { level: i, node });
            }
            for (k, &a) in cur.iter().enumerate() {
                if let Some(&b) = cur[k + 1..].iter().find(|&&b| placement.d(a, b) <= r) {
                    return Err(Violation::NotIndependent { level: i, a, b });
                }
            }
            let cur_set: BTreeSet<NodeId> = cur.iter().copied().collect();
            for &w in prev.difference(&cur_set) {
                if !cur.iter().any(|&x| placement.d(w, x) <= r) {
                    return Err(Violation::Uncovered { level: i, node: w });
                }
                match self.parent(w) {
                    Some(ParentLink { parent, level }) if level == i && cur_set.contains(&parent) && placement.d(w, parent) <= r => {}
                    _ => return Err(Violation::BadParent { level: i, node: w }),
                }
            }
        }
        let root = self.level(self.depth());
        if root.len() != 1 || root[0] != self.collector {
            return Err(Violation::RootNotSingle { size: root.len() });
        }
        Ok(())
    }

    /// The same tree with `root` placed above the top level: every member of
    /// `V_{L-1}` (including the old collector) becomes a child of `root` in
    /// round `L`. `root` must not already be a member.
    ///
    /// All of `V_{L-1}` lies within the deployment diameter `Γ ≤ r_L` of
    /// `root`, so the round-`L` coverage bound still holds.
    pub fn rooted_at(&self, root: NodeId) -> Spanner {
        assert!(!self.contains(root), "external root must not be a spanner member");
        let depth = self.depth();
        if depth == 0 {
            // Degenerate single-level tree: the lone member reports to `root`.
            let mut s = self.clone();
            let only = s.levels[0][0];
            s.levels.push(vec![root]);
            s.top[root.0] = Some(1);
            s.parent[only.0] = Some(ParentLink { parent: root, level: 1 });
            s.collector = root;
            return s;
        }
        let mut s = self.clone();
        let old = s.collector;
        s.top[old.0] = Some(depth - 1);
        s.parent[old.0] = None;
        s.levels[depth as usize] = vec![root];
        s.top[root.0] = Some(depth);
        for &w in &self.levels[depth as usize - 1] {
            s.parent[w.0] = Some(ParentLink { parent: root, level: depth });
        }
        s.collector = root;
        s
    }

    /// Debug dump: one `id level parent_id` line per member, ascending id;
    /// the collector line reads `id level - collector`.
    pub fn dump<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        let mut members: BTreeSet<NodeId> = self.levels.iter().flatten().copied().collect();
        members.insert(self.collector);
        for v in members {
            let level = self.top_level(v).unwrap_or(0);
            match self.parent(v) {
                Some(link) => writeln!(out, "{} {} {}", v, level, link.parent)?,
                None => writeln!(out, "{} {} - collector", v, level)?,
            }
        }
        Ok(())
    }
}
