//! Rank bounds per cell and the ε-driven quadtree.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::geometry::{max_dist, min_dist, Cell, ObjectSet, Point};
use crate::grid::ObjectGrid;

/// Index of a leaf in depth-first (NW, NE, SW, SE) order.
pub type LeafId = u32;

const NO_NODE: u32 = u32::MAX;
/// Hard ceiling on `max_depth`; cell coordinates stop halving cleanly well before f64 runs out.
pub const DEPTH_LIMIT: u32 = 40;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PartitionConfig {
    pub epsilon: f64,
    pub max_depth: u32,
    pub block_size: usize,
    /// Explicit root cell. `None` derives it from the objects.
    pub dataspace: Option<Cell>,
}

impl Default for PartitionConfig {
    fn default() -> Self {
        PartitionConfig { epsilon: 3.0, max_depth: 16, block_size: 128, dataspace: None }
    }
}

impl PartitionConfig {
    pub fn with_epsilon(epsilon: f64) -> Self {
        PartitionConfig { epsilon, ..Default::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon >= 0.0 && self.epsilon.is_finite()) {
            return invalid(format!("epsilon must be finite and >= 0, got {}", self.epsilon));
        }
        if self.max_depth < 1 || self.max_depth > DEPTH_LIMIT {
            return invalid(format!("max_depth must be in 1..={DEPTH_LIMIT}, got {}", self.max_depth));
        }
        if self.block_size < 1 || self.block_size > u32::MAX as usize {
            return invalid("block size must be at least 1");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RankBounds {
    pub lower: u32,
    pub upper: u32,
    /// Set when ties pushed the raw upper count below the lower count and
    /// `upper` was raised to `lower`.
    pub tie_clamped: bool,
}

impl RankBounds {
    pub fn new(lower_count: u32, upper_count: u32) -> Self {
        let lower = lower_count + 1;
        let raw_upper = upper_count + 1;
        RankBounds { lower, upper: raw_upper.max(lower), tie_clamped: raw_upper < lower }
    }
}

/// r↓(o, c): one plus the objects that are surely closer to every point of `c`.
pub fn lower_rank_bound(o: u32, c: &Cell, objects: &ObjectSet) -> u32 {
    let d = min_dist(objects.get(o), c);
    let n = objects.iter().filter(|&(id, p)| id != o && max_dist(p, c) <= d).count();
    n as u32 + 1
}

/// r↑(o, c) before tie clamping: one plus the objects that may be closer.
pub fn upper_rank_bound(o: u32, c: &Cell, objects: &ObjectSet) -> u32 {
    let d = max_dist(objects.get(o), c);
    let n = objects.iter().filter(|&(id, p)| id != o && min_dist(p, c) < d).count();
    n as u32 + 1
}

/// Both bounds by direct evaluation, with the tie clamp applied.
pub fn rank_bounds(o: u32, c: &Cell, objects: &ObjectSet) -> RankBounds {
    RankBounds::new(lower_rank_bound(o, c, objects) - 1, upper_rank_bound(o, c, objects) - 1)
}

/// Split rule: the rank interval is wider than ε times the lower bound.
pub fn needs_split(bounds: RankBounds, epsilon: f64) -> bool {
    (bounds.upper - bounds.lower) as f64 > epsilon * bounds.lower as f64
}

/// Root cell: bounding box of the objects grown by 1% per side. A zero-width
/// axis borrows its padding from the other axis, and a single location gets a
/// unit square, so every object set yields a cell with positive area.
pub fn root_cell(objects: &ObjectSet) -> Result<Cell> {
    let bb = objects.bounding_box();
    let (w, h) = (bb.width(), bb.height());
    let (px, py) = match (w > 0.0, h > 0.0) {
        (true, true) => (0.01 * w, 0.01 * h),
        (true, false) => (0.01 * w, 0.01 * w),
        (false, true) => (0.01 * h, 0.01 * h),
        (false, false) => (0.5, 0.5),
    };
    let c = Cell::from_bounds(bb.min.x - px, bb.min.y - py, bb.max.x + px, bb.max.y + py);
    if !(c.area() > 0.0) || !c.min.is_finite() || !c.max.is_finite() {
        return Err(Error::DegenerateSpace);
    }
    Ok(c)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadtreeNode {
    pub cell: Cell,
    pub depth: u32,
    first_child: u32,
    leaf: u32,
    /// Leaf forced to stop at `max_depth` while some object still broke the split rule.
    pub capped: bool,
}

impl QuadtreeNode {
    pub fn is_leaf(&self) -> bool {
        self.first_child == NO_NODE
    }

    pub fn leaf_id(&self) -> Option<LeafId> {
        self.is_leaf().then_some(self.leaf)
    }
}

/// Quadtree stored as an arena. Children of a node are four consecutive
/// entries in NW, NE, SW, SE order.
#[derive(Debug, Clone, PartialEq)]
pub struct Quadtree {
    nodes: Vec<QuadtreeNode>,
    leaves: Vec<u32>,
    max_depth: u32,
}

/// Quadrants of `c` in NW, NE, SW, SE order. Coordinates on the midlines
/// belong to the higher-coordinate side when locating.
pub fn quadrants(c: &Cell) -> [Cell; 4] {
    let m = c.center();
    [
        Cell::from_bounds(c.min.x, m.y, m.x, c.max.y),
        Cell::from_bounds(m.x, m.y, c.max.x, c.max.y),
        Cell::from_bounds(c.min.x, c.min.y, m.x, m.y),
        Cell::from_bounds(m.x, c.min.y, c.max.x, m.y),
    ]
}

#[inline]
fn quadrant_of(c: &Cell, p: Point) -> usize {
    let m = c.center();
    match (p.x >= m.x, p.y >= m.y) {
        (false, true) => 0,
        (true, true) => 1,
        (false, false) => 2,
        (true, false) => 3,
    }
}

impl Quadtree {
    fn with_root(root: Cell, max_depth: u32) -> Self {
        let node = QuadtreeNode { cell: root, depth: 0, first_child: NO_NODE, leaf: NO_NODE, capped: false };
        Quadtree { nodes: vec![node], leaves: Vec::new(), max_depth }
    }

    fn split(&mut self, i: usize) -> u32 {
        let first = self.nodes.len() as u32;
        let depth = self.nodes[i].depth + 1;
        for cell in quadrants(&self.nodes[i].cell) {
            self.nodes.push(QuadtreeNode { cell, depth, first_child: NO_NODE, leaf: NO_NODE, capped: false });
        }
        self.nodes[i].first_child = first;
        first
    }

    fn mark_leaf(&mut self, i: usize, capped: bool) {
        self.nodes[i].leaf = self.leaves.len() as u32;
        self.nodes[i].capped = capped;
        self.leaves.push(i as u32);
    }

    pub fn root(&self) -> &QuadtreeNode {
        &self.nodes[0]
    }

    pub fn root_cell(&self) -> Cell {
        self.nodes[0].cell
    }

    pub fn max_depth(&self) -> u32 {
        self.max_depth
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn node(&self, i: usize) -> &QuadtreeNode {
        &self.nodes[i]
    }

    /// Arena indices of the four children, if any.
    pub fn children(&self, i: usize) -> Option<[usize; 4]> {
        let f = self.nodes[i].first_child;
        (f != NO_NODE).then(|| {
            let f = f as usize;
            [f, f + 1, f + 2, f + 3]
        })
    }

    pub fn leaf_count(&self) -> usize {
        self.leaves.len()
    }

    pub fn leaf(&self, leaf: LeafId) -> &QuadtreeNode {
        &self.nodes[self.leaves[leaf as usize] as usize]
    }

    pub fn leaf_cell(&self, leaf: LeafId) -> Cell {
        self.leaf(leaf).cell
    }

    pub fn leaves(&self) -> impl Iterator<Item = (LeafId, &QuadtreeNode)> + '_ {
        self.leaves.iter().enumerate().map(|(i, &n)| (i as LeafId, &self.nodes[n as usize]))
    }

    pub fn capped_leaf_count(&self) -> usize {
        self.leaves().filter(|(_, n)| n.capped).count()
    }

    pub fn depth(&self) -> u32 {
        self.nodes.iter().map(|n| n.depth).max().unwrap_or(0)
    }

    /// Leaf whose cell holds `p`.
    pub fn locate_leaf(&self, p: Point) -> Result<LeafId> {
        if !p.is_finite() || !self.nodes[0].cell.contains(p) {
            return Err(Error::OutOfBounds { x: p.x, y: p.y });
        }
        let mut i = 0usize;
        loop {
            let node = &self.nodes[i];
            if node.first_child == NO_NODE {
                return Ok(node.leaf);
            }
            i = node.first_child as usize + quadrant_of(&node.cell, p);
        }
    }

    /// Rebuild from the root cell and the leaves' (depth, capped) pairs in
    /// depth-first order. Used when loading a saved index.
    pub fn from_leaf_sequence(root: Cell, max_depth: u32, leaves: &[(u32, bool)]) -> Result<Self> {
        let mut tree = Quadtree::with_root(root, max_depth);
        let mut next = 0usize;
        // Explicit stack of nodes still to be resolved, in DFS order.
        let mut stack = vec![0usize];
        while let Some(i) = stack.pop() {
            let depth = tree.nodes[i].depth;
            let &(want, capped) = leaves.get(next).ok_or_else(|| Error::Corrupt("leaf sequence ends early".into()))?;
            if want == depth {
                tree.mark_leaf(i, capped);
                next += 1;
            } else if want > depth && depth < max_depth {
                let f = tree.split(i) as usize;
                stack.extend([f + 3, f + 2, f + 1, f]);
            } else {
                return Err(Error::Corrupt("leaf depths do not describe a quadtree".into()));
            }
        }
        if next != leaves.len() {
            return Err(Error::Corrupt("extra leaves after a complete quadtree".into()));
        }
        Ok(tree)
    }
}

/// Bound evaluation against one cell for a subset of objects, counting only
/// the objects that can matter: anything farther than the largest max
/// distance of the subset can affect neither count.
pub struct BoundCounter<'a> {
    objects: &'a ObjectSet,
    grid: &'a ObjectGrid,
    mins: Vec<f64>,
    maxs: Vec<f64>,
}

impl<'a> BoundCounter<'a> {
    pub fn new(objects: &'a ObjectSet, grid: &'a ObjectGrid) -> Self {
        BoundCounter { objects, grid, mins: Vec::new(), maxs: Vec::new() }
    }

    /// Bounds of every id in `ids` w.r.t. `cell`, identical to [`rank_bounds`].
    pub fn bounds(&mut self, cell: &Cell, ids: &[u32], out: &mut Vec<RankBounds>) {
        out.clear();
        if ids.is_empty() {
            return;
        }
        let reach = ids.iter().map(|&o| max_dist(self.objects.get(o), cell)).fold(0.0, f64::max);
        self.mins.clear();
        self.maxs.clear();
        let (objects, grid) = (self.objects, self.grid);
        let (mins, maxs) = (&mut self.mins, &mut self.maxs);
        grid.for_each_bucket_near(cell, reach, |b| {
            for &id in grid.members(b) {
                let p = objects.get(id);
                let lo = min_dist(p, cell);
                if lo <= reach {
                    mins.push(lo);
                    maxs.push(max_dist(p, cell));
                }
            }
        });
        mins.sort_unstable_by(f64::total_cmp);
        maxs.sort_unstable_by(f64::total_cmp);
        for &o in ids {
            let p = self.objects.get(o);
            let (lo, hi) = (min_dist(p, cell), max_dist(p, cell));
            // The object itself is among the candidates; remove its own hit.
            let below = self.maxs.partition_point(|&v| v <= lo) - usize::from(hi <= lo);
            let before = self.mins.partition_point(|&v| v < hi) - usize::from(lo < hi);
            out.push(RankBounds::new(below as u32, before as u32));
        }
    }
}

/// Grid resolution used for candidate gathering.
pub(crate) const GRID_PER_BUCKET: usize = 4;

/// Split while some object reaching a node breaks the split rule,
/// passing only the violators down.
pub fn build_quadtree(objects: &ObjectSet, config: &PartitionConfig) -> Result<Quadtree> {
    let grid = ObjectGrid::build(objects, GRID_PER_BUCKET);
    build_quadtree_with_grid(objects, &grid, config)
}

pub(crate) fn build_quadtree_with_grid(objects: &ObjectSet, grid: &ObjectGrid, config: &PartitionConfig) -> Result<Quadtree> {
    config.validate()?;
    let root = match config.dataspace {
        Some(c) => {
            if !(c.area() > 0.0) {
                return Err(Error::DegenerateSpace);
            }
            if let Some((id, _)) = objects.iter().find(|(_, p)| !c.contains(*p)) {
                return invalid(format!("object {id} lies outside the configured dataspace"));
            }
            c
        }
        None => root_cell(objects)?,
    };
    let mut tree = Quadtree::with_root(root, config.max_depth);
    let mut counter = BoundCounter::new(objects, grid);
    let mut bounds = Vec::new();
    let all: Vec<u32> = (0..objects.len() as u32).collect();
    // DFS with explicit stack so leaves are numbered NW, NE, SW, SE.
    let mut stack: Vec<(usize, Vec<u32>)> = vec![(0, all)];
    while let Some((i, ids)) = stack.pop() {
        let cell = tree.nodes[i].cell;
        counter.bounds(&cell, &ids, &mut bounds);
        let violators: Vec<u32> =
            ids.iter().zip(&bounds).filter(|(_, b)| needs_split(**b, config.epsilon)).map(|(&o, _)| o).collect();
        drop(ids);
        if violators.is_empty() {
            tree.mark_leaf(i, false);
        } else if tree.nodes[i].depth >= config.max_depth {
            tree.mark_leaf(i, true);
        } else {
            let f = tree.split(i) as usize;
            for k in (1..4).rev() {
                stack.push((f + k, violators.clone()));
            }
            stack.push((f, violators));
        }
    }
    Ok(tree)
}

/// Objects breaking the split rule at a leaf, checked over the full object set.
pub fn leaf_violators(tree: &Quadtree, leaf: LeafId, objects: &ObjectSet, grid: &ObjectGrid, epsilon: f64) -> Vec<u32> {
    let cell = tree.leaf_cell(leaf);
    let all: Vec<u32> = (0..objects.len() as u32).collect();
    let mut bounds = Vec::new();
    BoundCounter::new(objects, grid).bounds(&cell, &all, &mut bounds);
    all.into_iter().zip(bounds).filter(|(_, b)| needs_split(*b, epsilon)).map(|(o, _)| o).collect()
}

/// Spec-level convenience: the cell of the leaf holding `p`.
pub fn locate_leaf(tree: &Quadtree, p: Point) -> Result<Cell> {
    tree.locate_leaf(p).map(|l| tree.leaf_cell(l))
}
