//! Per-bucket upper bounds on approximate mass.
//!
//! Objects are grouped into small grid buckets. For every window query and
//! every bucket its range can reach, the query stores β = max(0, ζ(r)) where
//! r is a lower bound on the lower rank of any bucket member in the query's
//! list. The bucket bound is the sum of β over the window, so it dominates
//! the mass of every member. Open buckets have their members' masses tracked
//! exactly; closed buckets are ranked in a lazily cleaned max-heap.

use std::cmp::Reverse;
use std::collections::BinaryHeap;

use super::scale::{Mass, Scale};
use crate::geometry::{min_dist_rect, Cell, ObjectSet};
use crate::grid::ObjectGrid;
use crate::irf::RankList;
use crate::window::RangeQuery;

/// Target members per bucket.
pub const BUCKET_SIZE: usize = 4;

#[derive(Debug, Clone)]
pub struct Coverage {
    grid: ObjectGrid,
    ub: Vec<Mass>,
    open: Vec<bool>,
    heap: BinaryHeap<(Mass, Reverse<u32>)>,
    nonempty: usize,
}

impl Coverage {
    pub fn new(objects: &ObjectSet) -> Self {
        let grid = ObjectGrid::build(objects, BUCKET_SIZE);
        let k = grid.bucket_count();
        let nonempty = (0..k).filter(|&b| !grid.members(b).is_empty()).count();
        let mut c = Coverage { grid, ub: vec![0; k], open: vec![false; k], heap: BinaryHeap::new(), nonempty };
        c.rebuild_heap();
        c
    }

    fn rebuild_heap(&mut self) {
        let items: Vec<_> = (0..self.ub.len())
            .filter(|&b| !self.open[b] && !self.grid.members(b).is_empty())
            .map(|b| (self.ub[b], Reverse(b as u32)))
            .collect();
        self.heap = BinaryHeap::from(items);
    }

    /// β contributions of one query, sorted by bucket.
    pub fn contributions(&self, q: &RangeQuery, list: &RankList, scale: &Scale) -> Vec<(u32, Mass)> {
        let mut out = Vec::new();
        self.grid.for_each_bucket_near(&Cell::point(q.location), q.radius, |b| {
            let d = min_dist_rect(self.grid.mbr(b), &list.cell);
            let beta = scale.zeta(list.first_rank_from(d)).max(0);
            if beta > 0 {
                out.push((b as u32, beta));
            }
        });
        out
    }

    pub fn add(&mut self, contrib: &[(u32, Mass)]) {
        self.apply(contrib, 1);
    }

    pub fn remove(&mut self, contrib: &[(u32, Mass)]) {
        self.apply(contrib, -1);
    }

    fn apply(&mut self, contrib: &[(u32, Mass)], sign: Mass) {
        for &(b, beta) in contrib {
            let b = b as usize;
            self.ub[b] += sign * beta;
            if !self.open[b] {
                self.heap.push((self.ub[b], Reverse(b as u32)));
            }
        }
        if self.heap.len() > 8 * self.nonempty + 4096 {
            self.rebuild_heap();
        }
    }

    pub fn bound(&self, b: usize) -> Mass {
        self.ub[b]
    }

    pub fn is_open(&self, b: usize) -> bool {
        self.open[b]
    }

    pub fn open(&mut self, b: usize) {
        self.open[b] = true;
    }

    pub fn close(&mut self, b: usize) {
        self.open[b] = false;
        self.heap.push((self.ub[b], Reverse(b as u32)));
    }

    pub fn grid(&self) -> &ObjectGrid {
        &self.grid
    }

    fn clean_top(&mut self) {
        while let Some(&(v, Reverse(b))) = self.heap.peek() {
            let b = b as usize;
            if self.open[b] || self.ub[b] != v {
                self.heap.pop();
            } else {
                break;
            }
        }
    }

    /// Largest bound among closed non-empty buckets.
    pub fn max_closed(&mut self) -> Option<Mass> {
        self.clean_top();
        self.heap.peek().map(|&(v, _)| v)
    }

    /// Remove and return every closed bucket whose bound is at least `floor`,
    /// largest first. Callers re-insert those they do not open via
    /// [`Coverage::restore`].
    pub fn take_at_least(&mut self, floor: Mass) -> Vec<(Mass, u32)> {
        let mut out = Vec::new();
        loop {
            self.clean_top();
            match self.heap.peek() {
                Some(&(v, Reverse(b))) if v >= floor => {
                    self.heap.pop();
                    if out.last().is_none_or(|&(_, last)| last != b) && !out.iter().any(|&(_, x)| x == b) {
                        out.push((v, b));
                    }
                }
                _ => break,
            }
        }
        out
    }

    pub fn restore(&mut self, b: u32) {
        self.heap.push((self.ub[b as usize], Reverse(b)));
    }
}
