//! Best-first gain queue shared by the block safe rank, object safe rank and
//! validation stages of one shift.
//!
//! Every element carries a key that bounds the gain Δ_o (scaled) of each
//! object it stands for. Blocks of the new query's list are scanned in list
//! order; whatever the block stage did not scan is represented by one `Tail`
//! element so later stages stay complete.

use std::cmp::Ordering;
use std::collections::{BinaryHeap, HashSet};

use super::scale::{Mass, Scale};
use crate::geometry::{dist, max_dist, min_dist, ObjectSet};
use crate::irf::{block_upper_rank, locate_object, RankEntry, RankList};
use crate::window::RangeQuery;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum GainItem {
    Object(u32),
    Block(u32),
    /// Blocks from this index to the end of the list, not yet scanned.
    Tail(u32),
}

impl GainItem {
    fn kind_rank(&self) -> u8 {
        match self {
            GainItem::Object(_) => 2,
            GainItem::Block(_) => 1,
            GainItem::Tail(_) => 0,
        }
    }

    fn index(&self) -> u32 {
        match *self {
            GainItem::Object(i) | GainItem::Block(i) | GainItem::Tail(i) => i,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GainEntry {
    pub key: Mass,
    pub item: GainItem,
}

impl Ord for GainEntry {
    /// Larger key first; on ties objects before blocks, then lower index.
    fn cmp(&self, other: &Self) -> Ordering {
        self.key
            .cmp(&other.key)
            .then(self.item.kind_rank().cmp(&other.item.kind_rank()))
            .then(other.item.index().cmp(&self.item.index()))
    }
}

impl PartialOrd for GainEntry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

pub type GainQueue = BinaryHeap<GainEntry>;

/// Result of a safe-rank stage.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SafeRank {
    pub rank: u32,
    /// Δ↑ used in the inequality.
    pub delta_up: Mass,
}

/// Everything a shift needs to bound gains.
pub struct ShiftContext<'a> {
    pub objects: &'a ObjectSet,
    pub scale: &'a Scale,
    pub qn: &'a RangeQuery,
    pub qn_list: &'a RankList,
    pub qo: Option<(&'a RangeQuery, &'a RankList)>,
    /// Worst lower rank any object inside qo's range can have in qo's list.
    qo_worst: u32,
    /// Smallest scaled ζ any object can lose to qo's eviction, capped at 0.
    loss_floor: Mass,
    /// qn repeats qo exactly, so every gain is 0.
    identical: bool,
}

impl<'a> ShiftContext<'a> {
    pub fn new(
        objects: &'a ObjectSet,
        scale: &'a Scale,
        qn: &'a RangeQuery,
        qn_list: &'a RankList,
        qo: Option<(&'a RangeQuery, &'a RankList)>,
    ) -> Self {
        let qo_worst = qo.map_or(0, |(q, l)| l.last_rank_within(q.radius).unwrap_or(0));
        let loss_floor = if qo.is_some() && qo_worst > 0 { scale.zeta(qo_worst).min(0) } else { 0 };
        let identical = qo.is_some_and(|(q, _)| q.location == qn.location && q.radius == qn.radius);
        ShiftContext { objects, scale, qn, qn_list, qo, qo_worst, loss_floor, identical }
    }

    /// Upper bound on the ζ the new query gives any object of block `b` or later.
    fn gain_ceiling(&self, b: usize) -> Mass {
        let blk = &self.qn_list.blocks()[b];
        if blk.block_min_dist > self.qn.radius {
            return 0;
        }
        self.scale.zeta(self.qn_list.entries()[blk.start as usize].lower_rank).max(0)
    }

    /// Whether qn repeats qo, leaving every mass unchanged.
    pub fn is_identical(&self) -> bool {
        self.identical
    }

    /// Key of the tail element starting at block `b`.
    pub fn tail_key(&self, b: usize) -> Mass {
        if self.identical {
            return 0;
        }
        self.gain_ceiling(b) - self.loss_floor
    }

    /// Δ_b: optimistic ζ from qn minus pessimistic ζ lost from qo.
    pub fn block_gain(&self, b: usize) -> Mass {
        if self.identical {
            return 0;
        }
        let blk = &self.qn_list.blocks()[b];
        let q = self.qn;
        let up = if blk.block_min_dist > q.radius || min_dist(q.location, &blk.mbr) > q.radius {
            0
        } else {
            let z = self.scale.zeta(self.qn_list.entries()[blk.start as usize].lower_rank);
            if max_dist(q.location, &blk.mbr) <= q.radius {
                z
            } else {
                z.max(0)
            }
        };
        let down = match self.qo {
            None => 0,
            Some((qo, list)) => {
                if min_dist(qo.location, &blk.mbr) > qo.radius || self.qo_worst == 0 {
                    0
                } else {
                    let worst = block_upper_rank(blk, list).min(self.qo_worst);
                    let z = self.scale.zeta(worst);
                    if max_dist(qo.location, &blk.mbr) <= qo.radius {
                        z
                    } else {
                        z.min(0)
                    }
                }
            }
        };
        up - down
    }

    /// Scaled ζ from the evicted query for object `id`, 0 if out of range.
    pub fn lost(&self, id: u32) -> Mass {
        match self.qo {
            Some((qo, list)) => {
                let p = self.objects.get(id);
                if dist(p, qo.location) <= qo.radius {
                    self.scale.zeta(locate_object(list, id, p).entry.lower_rank)
                } else {
                    0
                }
            }
            None => 0,
        }
    }

    /// Exact Δ_o for an entry of qn's list.
    pub fn object_gain(&self, e: &RankEntry) -> Mass {
        let p = self.objects.get(e.object_id);
        let won = if dist(p, self.qn.location) <= self.qn.radius { self.scale.zeta(e.lower_rank) } else { 0 };
        won - self.lost(e.object_id)
    }

    /// Replace a block or tail element by what it stands for.
    pub fn expand(&self, pq: &mut GainQueue, item: GainItem) {
        match item {
            GainItem::Object(_) => {}
            GainItem::Block(b) => {
                for e in self.qn_list.block_entries(b as usize) {
                    pq.push(GainEntry { key: self.object_gain(e), item: GainItem::Object(e.object_id) });
                }
            }
            GainItem::Tail(b) => {
                let b = b as usize;
                pq.push(GainEntry { key: self.block_gain(b), item: GainItem::Block(b as u32) });
                if b + 1 < self.qn_list.blocks().len() {
                    pq.push(GainEntry { key: self.tail_key(b + 1), item: GainItem::Tail(b as u32 + 1) });
                }
            }
        }
    }
}

/// Block safe rank. Scans blocks of qn's list until no unscanned block can
/// beat the best block gain so far, then solves for the largest rank with
/// `slack + ζ(rank) ≥ outsider + Δ↑_b`, where `slack` is the m-th result mass
/// after removing qo.
pub fn block_safe_rank(pq: &mut GainQueue, ctx: &ShiftContext<'_>, outsider: Mass, slack: Mass) -> SafeRank {
    let nb = ctx.qn_list.blocks().len();
    let mut best = Mass::MIN;
    let mut b = 0;
    while b < nb {
        let key = ctx.block_gain(b);
        pq.push(GainEntry { key, item: GainItem::Block(b as u32) });
        best = best.max(key);
        b += 1;
        if b == nb {
            break;
        }
        let ceiling = ctx.gain_ceiling(b);
        // A zero ceiling is shared by every later block, so scanning on
        // cannot lower the tail bound.
        if ceiling == 0 || ctx.identical || ctx.tail_key(b) < best {
            break;
        }
    }
    if b < nb {
        pq.push(GainEntry { key: ctx.tail_key(b), item: GainItem::Tail(b as u32) });
    }
    let delta_up = pq.peek().map_or(0, |e| e.key);
    SafeRank { rank: ctx.scale.safe_rank(outsider + delta_up - slack), delta_up }
}

/// Object safe rank. Expands blocks best-first until an object heads the
/// queue; its gain is Δ↑_o. The object is left in the queue.
pub fn object_safe_rank(pq: &mut GainQueue, ctx: &ShiftContext<'_>, outsider: Mass, slack: Mass) -> SafeRank {
    let delta_up = loop {
        match pq.peek() {
            None => break ctx.scale.naive_gain(),
            Some(GainEntry { key, item: GainItem::Object(_) }) => break *key,
            Some(_) => {
                let e = pq.pop().unwrap();
                ctx.expand(pq, e.item);
            }
        }
    };
    SafeRank { rank: ctx.scale.safe_rank(outsider + delta_up - slack), delta_up }
}

/// Objects outside the current results whose optimistic mass can reach the
/// m-th result.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Validation {
    /// `(id, outsider + Δ_o)` in dequeue order, so bounds are non-increasing.
    pub objects: Vec<(u32, Mass)>,
    /// Largest optimistic mass among dequeued objects that tie the threshold
    /// but lose on id.
    pub tied_out: Option<Mass>,
}

/// Continue best-first consumption. Stops at the first element whose
/// optimistic mass falls below `threshold.0`, or whose gain is not positive;
/// that element stays queued. An object that did not gain still holds at
/// most its previous mass, so callers find those through exact tracking and
/// coverage bounds instead.
pub fn validation_objects(
    pq: &mut GainQueue,
    ctx: &ShiftContext<'_>,
    outsider: Mass,
    threshold: (Mass, u32),
    results: &HashSet<u32>,
) -> Validation {
    let mut out = Validation::default();
    while let Some(top) = pq.peek() {
        let bound = outsider + top.key;
        if top.key <= 0 || bound < threshold.0 {
            break;
        }
        let e = pq.pop().unwrap();
        match e.item {
            GainItem::Object(id) => {
                if results.contains(&id) {
                    continue;
                }
                if bound > threshold.0 || id < threshold.1 {
                    out.objects.push((id, bound));
                } else {
                    out.tied_out = Some(out.tied_out.map_or(bound, |t: Mass| t.max(bound)));
                }
            }
            other => ctx.expand(pq, other),
        }
    }
    out
}
