//! Exact baseline: rank every qualifying object of each arriving and
//! evicted query and keep exact popularity sums.

use std::cmp::Reverse;
use std::collections::{BinaryHeap, HashMap};
use std::sync::Arc;

use crate::error::{invalid, Result};
use crate::geometry::{dist, ObjectSet};
use crate::grid::ObjectGrid;
use crate::window::{RangeQuery, Scored, SlidingWindow};

/// 1-based position of `o` among the objects inside `q`'s range, ordered by
/// distance then id. `None` when `o` is out of range.
pub fn rank_in_query(o: u32, q: &RangeQuery, objects: &ObjectSet) -> Option<u32> {
    let d = dist(objects.get(o), q.location);
    if d > q.radius {
        return None;
    }
    let closer = objects
        .iter()
        .filter(|&(id, p)| {
            let dp = dist(p, q.location);
            id != o && (dp < d || (dp == d && id < o))
        })
        .count();
    Some(closer as u32 + 1)
}

/// ρ(o, W) by direct evaluation.
pub fn popularity<'a, I>(o: u32, window: I, objects: &ObjectSet) -> f64
where
    I: IntoIterator<Item = &'a RangeQuery>,
{
    let n = objects.len() as i64;
    let (mut sum, mut len) = (0i64, 0usize);
    for q in window {
        len += 1;
        if let Some(r) = rank_in_query(o, q, objects) {
            sum += n - r as i64 + 1;
        }
    }
    if len == 0 {
        0.0
    } else {
        sum as f64 / len as f64
    }
}

/// Ordering key shared by every top-m list: higher mass first, then lower id.
#[inline]
pub(crate) fn better<M: Ord>(a: (M, u32), b: (M, u32)) -> bool {
    a.0 > b.0 || (a.0 == b.0 && a.1 < b.1)
}

/// Top-`k` of `(id, mass)` pairs under the shared ordering, padded with the
/// lowest ids absent from `present` at mass zero.
pub(crate) fn top_k_padded<M, I>(pairs: I, k: usize, n: usize, present: impl Fn(u32) -> bool) -> Vec<(u32, M)>
where
    M: Ord + Copy + Default,
    I: IntoIterator<Item = (u32, M)>,
{
    // Min-heap of the best k seen so far; the root is the current k-th.
    let mut heap: BinaryHeap<Reverse<(M, Reverse<u32>)>> = BinaryHeap::with_capacity(k + 1);
    let zero = M::default();
    let consider = |id: u32, m: M, heap: &mut BinaryHeap<Reverse<(M, Reverse<u32>)>>| {
        if heap.len() < k {
            heap.push(Reverse((m, Reverse(id))));
        } else if let Some(Reverse((wm, Reverse(wid)))) = heap.peek() {
            if better((m, id), (*wm, *wid)) {
                heap.pop();
                heap.push(Reverse((m, Reverse(id))));
            }
        }
    };
    if k == 0 {
        return Vec::new();
    }
    for (id, m) in pairs {
        consider(id, m, &mut heap);
    }
    let mut filled = 0;
    for id in 0..n as u32 {
        if filled == k {
            break;
        }
        if !present(id) {
            consider(id, zero, &mut heap);
            filled += 1;
        }
    }
    let mut out: Vec<(u32, M)> = heap.into_iter().map(|Reverse((m, Reverse(id)))| (id, m)).collect();
    out.sort_unstable_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
    out
}

struct Entry {
    query: RangeQuery,
    ranks: Vec<(u32, u32)>,
}

/// Output of one exact step.
#[derive(Debug, Clone, PartialEq)]
pub struct ExactStep {
    pub results: Vec<Scored>,
    /// |O+_qn| + |O+_qo|.
    pub opq: usize,
}

pub struct ExactEngine {
    objects: Arc<ObjectSet>,
    grid: ObjectGrid,
    window: SlidingWindow<Entry>,
    m: usize,
    mass: HashMap<u32, i64>,
    hits: Vec<u32>,
    keyed: Vec<(f64, u32)>,
}

impl ExactEngine {
    pub fn new(objects: Arc<ObjectSet>, capacity: usize, m: usize) -> Result<Self> {
        if m == 0 || m > objects.len() {
            return invalid(format!("m must be in 1..={}, got {m}", objects.len()));
        }
        let grid = ObjectGrid::build(&objects, 8);
        Ok(ExactEngine {
            objects,
            grid,
            window: SlidingWindow::new(capacity)?,
            m,
            mass: HashMap::new(),
            hits: Vec::new(),
            keyed: Vec::new(),
        })
    }

    pub fn objects(&self) -> &Arc<ObjectSet> {
        &self.objects
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn window_len(&self) -> usize {
        self.window.len()
    }

    pub fn window(&self) -> impl Iterator<Item = &RangeQuery> {
        self.window.iter().map(|e| &e.query)
    }

    /// Σ (N − r + 1) over the window for `id`.
    pub fn mass(&self, id: u32) -> i64 {
        self.mass.get(&id).copied().unwrap_or(0)
    }

    pub fn popularity(&self, id: u32) -> f64 {
        if self.window.is_empty() {
            0.0
        } else {
            self.mass(id) as f64 / self.window.len() as f64
        }
    }

    /// Objects in `q`'s range with their ranks.
    pub fn rank_query(&mut self, q: &RangeQuery) -> Vec<(u32, u32)> {
        self.grid.range(&self.objects, q.location, q.radius, &mut self.hits);
        self.keyed.clear();
        self.keyed.extend(self.hits.iter().map(|&id| (dist(self.objects.get(id), q.location), id)));
        self.keyed.sort_unstable_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        self.keyed.iter().enumerate().map(|(i, &(_, id))| (id, i as u32 + 1)).collect()
    }

    pub fn step(&mut self, q: RangeQuery) -> ExactStep {
        let n = self.objects.len() as i64;
        let ranks = self.rank_query(&q);
        let mut opq = ranks.len();
        for &(id, r) in &ranks {
            *self.mass.entry(id).or_insert(0) += n - r as i64 + 1;
        }
        if let Some(old) = self.window.push(Entry { query: q, ranks }) {
            opq += old.ranks.len();
            for (id, r) in old.ranks {
                let slot = self.mass.get_mut(&id).expect("evicted object has mass");
                *slot -= n - r as i64 + 1;
                if *slot == 0 {
                    self.mass.remove(&id);
                }
            }
        }
        ExactStep { results: self.results(), opq }
    }

    /// Current top-m with popularity values.
    pub fn results(&self) -> Vec<Scored> {
        let w = self.window.len().max(1) as f64;
        self.top(self.m).into_iter().map(|(id, m)| Scored { id, score: m as f64 / w }).collect()
    }

    /// Top-`k` ids with masses under (mass desc, id asc).
    pub fn top(&self, k: usize) -> Vec<(u32, i64)> {
        let k = k.min(self.objects.len());
        top_k_padded(self.mass.iter().map(|(&id, &m)| (id, m)), k, self.objects.len(), |id| self.mass.contains_key(&id))
    }

    /// Mass of the k-th object in the full ranking (k ≥ 1).
    pub fn kth_mass(&self, k: usize) -> i64 {
        self.top(k).last().map_or(0, |&(_, m)| m)
    }
}
