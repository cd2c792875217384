//! Inverted Rank File: per-leaf rank lists of all objects, sorted by lower
//! rank bound and cut into fixed-size blocks.
//!
//! A list depends only on its leaf cell and the object set, so lists are
//! built on first use and cached under an entry budget. When the whole index
//! fits in the budget every list is built up front.

mod io;

use std::collections::HashMap;
use std::sync::{Arc, Mutex};

use crate::error::Result;
use crate::geometry::{max_dist, max_dist_rect, min_dist, Cell, ObjectSet, Point};
use crate::grid::ObjectGrid;
use crate::partition::{build_quadtree_with_grid, LeafId, PartitionConfig, Quadtree, GRID_PER_BUCKET};

pub use io::FORMAT_VERSION;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RankEntry {
    pub object_id: u32,
    pub lower_rank: u32,
    pub min_distance: f64,
}

/// A run of at most B consecutive entries of a list.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RankBlock {
    pub start: u32,
    pub len: u32,
    /// MBR of the member object locations.
    pub mbr: Cell,
    /// Smallest member `min_distance` (the first entry's).
    pub block_min_dist: f64,
    /// Largest member `min_distance` (the last entry's).
    pub block_max_dist: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RankList {
    pub cell: Cell,
    entries: Vec<RankEntry>,
    blocks: Vec<RankBlock>,
}

impl RankList {
    /// Rank list of every object w.r.t. `cell`.
    pub fn build(objects: &ObjectSet, cell: Cell, block_size: usize) -> Self {
        let n = objects.len();
        let mut lo = Vec::with_capacity(n);
        let mut hi = Vec::with_capacity(n);
        for (_, p) in objects.iter() {
            lo.push(min_dist(p, &cell));
            hi.push(max_dist(p, &cell));
        }
        let mut sorted_hi = hi.clone();
        sorted_hi.sort_unstable_by(f64::total_cmp);
        let mut entries: Vec<RankEntry> = (0..n)
            .map(|i| {
                let below = sorted_hi.partition_point(|&v| v <= lo[i]) - usize::from(hi[i] <= lo[i]);
                RankEntry { object_id: i as u32, lower_rank: below as u32 + 1, min_distance: lo[i] }
            })
            .collect();
        entries.sort_unstable_by(|a, b| {
            a.lower_rank
                .cmp(&b.lower_rank)
                .then(a.min_distance.total_cmp(&b.min_distance))
                .then(a.object_id.cmp(&b.object_id))
        });
        Self::from_entries(objects, cell, entries, block_size)
    }

    /// Assemble blocks over already sorted entries.
    pub fn from_entries(objects: &ObjectSet, cell: Cell, entries: Vec<RankEntry>, block_size: usize) -> Self {
        let b = block_size.max(1);
        let blocks = entries
            .chunks(b)
            .enumerate()
            .map(|(k, chunk)| RankBlock {
                start: (k * b) as u32,
                len: chunk.len() as u32,
                mbr: Cell::bounding(chunk.iter().map(|e| objects.get(e.object_id))).expect("non-empty chunk"),
                block_min_dist: chunk.iter().map(|e| e.min_distance).fold(f64::INFINITY, f64::min),
                block_max_dist: chunk.iter().map(|e| e.min_distance).fold(f64::NEG_INFINITY, f64::max),
            })
            .collect();
        RankList { cell, entries, blocks }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[RankEntry] {
        &self.entries
    }

    pub fn blocks(&self) -> &[RankBlock] {
        &self.blocks
    }

    pub fn block_entries(&self, b: usize) -> &[RankEntry] {
        let blk = &self.blocks[b];
        &self.entries[blk.start as usize..(blk.start + blk.len) as usize]
    }

    /// Lower rank of the last entry whose `min_distance` is at most `d`.
    /// Any object within `d` of a point of the cell ranks no worse than this.
    pub fn last_rank_within(&self, d: f64) -> Option<u32> {
        let k = self.entries.partition_point(|e| e.min_distance <= d);
        (k > 0).then(|| self.entries[k - 1].lower_rank)
    }

    /// Lower rank of the first entry whose `min_distance` is at least `d`,
    /// a lower bound on the rank of every object at least `d` from the cell.
    pub fn first_rank_from(&self, d: f64) -> u32 {
        let k = self.entries.partition_point(|e| e.min_distance < d);
        self.entries.get(k).map_or(self.entries.len() as u32 + 1, |e| e.lower_rank)
    }
}

/// Where an object sits inside a list.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Located {
    pub block: usize,
    pub position: usize,
    pub entry: RankEntry,
}

/// Find `id` in `list`: binary search on the block distance range that may
/// hold its `min_distance`, then a scan.
pub fn locate_object(list: &RankList, id: u32, location: Point) -> Located {
    let d = min_dist(location, &list.cell);
    let blocks = list.blocks();
    let mut b = blocks.partition_point(|blk| blk.block_max_dist < d);
    while b < blocks.len() {
        for (k, e) in list.block_entries(b).iter().enumerate() {
            if e.object_id == id {
                return Located { block: b, position: blocks[b].start as usize + k, entry: *e };
            }
        }
        b += 1;
    }
    panic!("object {id} missing from its rank list");
}

/// Upper bound on the lower rank, in `other`, of every member of `block`:
/// the rank at the first block of `other` that starts strictly beyond the
/// farthest the block can be from `other`'s cell. `N+1` when none does.
pub fn block_upper_rank(block: &RankBlock, other: &RankList) -> u32 {
    let reach = max_dist_rect(&block.mbr, &other.cell);
    let blocks = other.blocks();
    let k = blocks.partition_point(|b| b.block_min_dist <= reach);
    blocks.get(k).map_or(other.len() as u32 + 1, |b| other.entries[b.start as usize].lower_rank)
}

/// Cap on cached entries (16 bytes each): about 1 GiB.
pub const DEFAULT_LIST_BUDGET: usize = 64 << 20;

#[derive(Debug, Default)]
struct ListStore {
    lists: HashMap<LeafId, (Arc<RankList>, u64)>,
    entries: usize,
    clock: u64,
}

/// The quadtree plus one rank list per leaf.
#[derive(Debug)]
pub struct IrfIndex {
    objects: Arc<ObjectSet>,
    tree: Quadtree,
    config: PartitionConfig,
    budget: usize,
    store: Mutex<ListStore>,
}

impl PartialEq for IrfIndex {
    /// Structural equality: objects, tree, config and the lists currently held.
    fn eq(&self, other: &Self) -> bool {
        if self.objects != other.objects || self.tree != other.tree || self.config != other.config {
            return false;
        }
        let a = self.store.lock().unwrap();
        let b = other.store.lock().unwrap();
        a.lists.len() == b.lists.len()
            && a.lists.iter().all(|(k, (l, _))| b.lists.get(k).is_some_and(|(m, _)| l == m))
    }
}

impl IrfIndex {
    pub fn build(objects: Arc<ObjectSet>, config: PartitionConfig) -> Result<Self> {
        Self::build_with_budget(objects, config, DEFAULT_LIST_BUDGET)
    }

    /// Build the tree; lists are built now if `leaves * N <= budget`, else on demand.
    pub fn build_with_budget(objects: Arc<ObjectSet>, config: PartitionConfig, budget: usize) -> Result<Self> {
        let grid = ObjectGrid::build(&objects, GRID_PER_BUCKET);
        let tree = build_quadtree_with_grid(&objects, &grid, &config)?;
        let index = Self::from_parts(objects, tree, config, budget);
        if index.tree.leaf_count().saturating_mul(index.n()) <= budget {
            index.materialize_all();
        }
        Ok(index)
    }

    pub(crate) fn from_parts(objects: Arc<ObjectSet>, tree: Quadtree, config: PartitionConfig, budget: usize) -> Self {
        IrfIndex { objects, tree, config, budget, store: Mutex::new(ListStore::default()) }
    }

    pub fn objects(&self) -> &Arc<ObjectSet> {
        &self.objects
    }

    pub fn n(&self) -> usize {
        self.objects.len()
    }

    pub fn tree(&self) -> &Quadtree {
        &self.tree
    }

    pub fn config(&self) -> &PartitionConfig {
        &self.config
    }

    pub fn epsilon(&self) -> f64 {
        self.config.epsilon
    }

    pub fn block_size(&self) -> usize {
        self.config.block_size
    }

    pub fn locate_leaf(&self, p: Point) -> Result<LeafId> {
        self.tree.locate_leaf(p)
    }

    /// Rank list of `leaf`, building and caching it if needed.
    pub fn list(&self, leaf: LeafId) -> Arc<RankList> {
        {
            let mut s = self.store.lock().unwrap();
            s.clock += 1;
            let now = s.clock;
            if let Some((l, used)) = s.lists.get_mut(&leaf) {
                *used = now;
                return l.clone();
            }
        }
        let list = Arc::new(RankList::build(&self.objects, self.tree.leaf_cell(leaf), self.config.block_size));
        self.insert(leaf, list.clone());
        list
    }

    pub(crate) fn insert(&self, leaf: LeafId, list: Arc<RankList>) {
        let mut s = self.store.lock().unwrap();
        s.clock += 1;
        let now = s.clock;
        let len = list.len();
        if s.lists.insert(leaf, (list, now)).is_none() {
            s.entries += len;
        }
        while s.entries > self.budget && s.lists.len() > 1 {
            let victim = s.lists.iter().filter(|(k, _)| **k != leaf).min_by_key(|(_, (_, u))| *u).map(|(k, _)| *k);
            let Some(v) = victim else { break };
            if let Some((l, _)) = s.lists.remove(&v) {
                s.entries -= l.len();
            }
        }
    }

    /// Build every leaf's list.
    pub fn materialize_all(&self) {
        for leaf in 0..self.tree.leaf_count() as LeafId {
            self.list(leaf);
        }
    }

    /// Build the lists of the leaves holding these points.
    pub fn warm<I: IntoIterator<Item = Point>>(&self, points: I) {
        for p in points {
            if let Ok(leaf) = self.locate_leaf(p) {
                self.list(leaf);
            }
        }
    }

    /// Leaves whose lists are currently held, ascending.
    pub fn materialized_leaves(&self) -> Vec<LeafId> {
        let s = self.store.lock().unwrap();
        let mut v: Vec<LeafId> = s.lists.keys().copied().collect();
        v.sort_unstable();
        v
    }

    pub(crate) fn cached(&self, leaf: LeafId) -> Option<Arc<RankList>> {
        self.store.lock().unwrap().lists.get(&leaf).map(|(l, _)| l.clone())
    }

    pub fn save(&self, path: impl AsRef<std::path::Path>) -> Result<()> {
        io::save(self, path.as_ref())
    }

    pub fn load(path: impl AsRef<std::path::Path>) -> Result<Self> {
        io::load(path.as_ref())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        io::encode(self)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        io::decode(bytes)
    }
}

#[cfg(test)]
mod tests;
