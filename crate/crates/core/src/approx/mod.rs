//! Approximate top-m engine over the Inverted Rank File.
//!
//! Each shift proceeds in stages: remove the evicted query's contribution
//! from the current results, try the block safe rank, then the object safe
//! rank, then collect validation objects and update the results. Scores are
//! exact scaled integers (see [`scale`]), so the engine's output equals a
//! from-scratch evaluation of the approximate popularity at every shift.
//!
//! The inequalities need the (m+1)-th score of the previous window. Keeping
//! it exact would mean tracking every object, so the engine keeps a sound
//! upper bound instead: the minimum of what the gain queue proves and of
//! per-bucket coverage bounds ([`cover`]). Buckets whose bound reaches the
//! m-th result are opened and their members tracked exactly.

pub mod cover;
pub mod gain;
pub mod reuse;
pub mod scale;

use std::collections::{HashMap, HashSet, VecDeque};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::exact::better;
use crate::geometry::{dist, ObjectSet};
use crate::irf::{locate_object, IrfIndex, RankList};
use crate::window::{RangeQuery, Scored};

pub use cover::Coverage;
pub use gain::{
    block_safe_rank, object_safe_rank, validation_objects, GainEntry, GainItem, GainQueue, SafeRank, ShiftContext,
    Validation,
};
pub use reuse::{reusable, LookupTable};
pub use scale::{Mass, Scale};

/// r̂(o, q) = (1 + ε/2)·r↓(o, c_q), or `None` when `o` is outside q's range.
pub fn approx_rank(o: u32, q: &RangeQuery, index: &IrfIndex) -> Result<Option<f64>> {
    let p = index.objects().get(o);
    if dist(p, q.location) > q.radius {
        return Ok(None);
    }
    let list = index.list(index.locate_leaf(q.location)?);
    let r = locate_object(&list, o, p).entry.lower_rank;
    Ok(Some((1.0 + index.epsilon() / 2.0) * r as f64))
}

/// ρ̂(o, W): mean of N − r̂ + 1 over the window queries whose range holds `o`.
pub fn approx_popularity<'a, I>(o: u32, window: I, index: &IrfIndex) -> Result<f64>
where
    I: IntoIterator<Item = &'a RangeQuery>,
{
    let n = index.n() as f64;
    let (mut sum, mut len) = (0.0, 0usize);
    for q in window {
        len += 1;
        if let Some(r) = approx_rank(o, q, index)? {
            sum += n - r + 1.0;
        }
    }
    Ok(if len == 0 { 0.0 } else { sum / len as f64 })
}

/// Which stage settled a shift.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Tier {
    BsrSafe,
    OsrSafe,
    VoEmpty,
    VoUpdate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepStats {
    pub tier: Tier,
    /// Distinct objects whose approximate popularity was computed or updated.
    pub opq: usize,
    pub bsr: u32,
    pub osr: Option<u32>,
    pub validation: usize,
    /// Validation objects whose popularity had to be computed.
    pub evaluated: usize,
    /// Coverage buckets opened this shift.
    pub opened: usize,
    /// Objects that entered the results from a newly opened bucket. Always 0
    /// when a safe rank settled the shift.
    pub promoted: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ApproxStep {
    pub results: Vec<Scored>,
    pub stats: StepStats,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ApproxConfig {
    pub window: usize,
    pub m: usize,
    /// Open buckets are closed once their bound drops this many maximal
    /// query contributions below the m-th result.
    pub close_margin: u32,
}

impl ApproxConfig {
    pub fn new(window: usize, m: usize) -> Self {
        ApproxConfig { window, m, close_margin: 2 }
    }
}

struct WindowQuery {
    query: RangeQuery,
    /// Position in the stream, counted by the engine. The caller's `seq` is
    /// not trusted to be contiguous.
    pos: u64,
    list: Arc<RankList>,
    cover: Vec<(u32, Mass)>,
}

impl WindowQuery {
    fn lower_rank(&self, objects: &ObjectSet, id: u32) -> Option<u32> {
        let p = objects.get(id);
        (dist(p, self.query.location) <= self.query.radius).then(|| locate_object(&self.list, id, p).entry.lower_rank)
    }

    fn zeta(&self, scale: &Scale, objects: &ObjectSet, id: u32) -> Mass {
        self.lower_rank(objects, id).map_or(0, |r| scale.zeta(r))
    }
}

/// Window queries plus recently evicted ones, for reuse.
struct Stream {
    window: VecDeque<WindowQuery>,
    history: VecDeque<WindowQuery>,
    history_cap: usize,
    capacity: usize,
    seq: u64,
}

impl Stream {
    fn scratch(&self, scale: &Scale, objects: &ObjectSet, id: u32) -> Mass {
        self.window.iter().map(|w| w.zeta(scale, objects, id)).sum()
    }

    /// Incremental mass: cached + Σζ over arrivals − Σζ over evictions
    /// since window `j`. `None` when the gap is not reusable or the evicted
    /// queries are no longer held.
    fn reuse(&self, scale: &Scale, objects: &ObjectSet, id: u32, j: u64, cached: Mass) -> Option<Mass> {
        let now = self.seq;
        if j > now || j == 0 {
            return None;
        }
        let start_i = self.window.front().map_or(now, |w| w.pos);
        let start_j = (j + 1).saturating_sub(self.capacity as u64).max(1);
        let shared = if j >= start_i { (j - start_i + 1) as usize } else { 0 };
        if !reusable(shared, self.window.len()) {
            return None;
        }
        let mut mass = cached;
        for w in self.window.iter().rev().take_while(|w| w.pos > j) {
            mass += w.zeta(scale, objects, id);
        }
        if start_j < start_i {
            let gone: Vec<&WindowQuery> =
                self.history.iter().filter(|w| w.pos >= start_j && w.pos < start_i).collect();
            if gone.len() as u64 != start_i - start_j {
                return None;
            }
            for w in gone {
                mass -= w.zeta(scale, objects, id);
            }
        }
        Some(mass)
    }
}

/// Exactly tracked objects: members of open buckets.
struct Tracker {
    mass: HashMap<u32, Mass>,
    open: Vec<u32>,
    cover: Coverage,
    lookup: LookupTable,
    touched: HashSet<u32>,
}

impl Tracker {
    fn evaluate(&mut self, stream: &Stream, scale: &Scale, objects: &ObjectSet, id: u32) -> Mass {
        self.touched.insert(id);
        if let Some((j, cached)) = self.lookup.get(id) {
            if let Some(m) = stream.reuse(scale, objects, id, j, cached) {
                return m;
            }
        }
        stream.scratch(scale, objects, id)
    }

    /// Open bucket `b`, tracking its members. Returns the newly tracked ones.
    fn open_bucket(&mut self, b: usize, stream: &Stream, scale: &Scale, objects: &ObjectSet) -> Vec<(u32, Mass)> {
        self.cover.open(b);
        self.open.push(b as u32);
        let members = self.cover.grid().members(b).to_vec();
        let mut fresh = Vec::new();
        for id in members {
            if !self.mass.contains_key(&id) {
                let m = self.evaluate(stream, scale, objects, id);
                self.mass.insert(id, m);
                fresh.push((id, m));
            }
        }
        fresh
    }
}

fn raise(slot: &mut Option<Mass>, v: Mass) {
    *slot = Some(slot.map_or(v, |s| s.max(v)));
}

/// Insert into a list sorted best-first.
fn insert_sorted(list: &mut Vec<(u32, Mass)>, item: (u32, Mass)) {
    let pos = list.partition_point(|&(id, m)| better((m, id), (item.1, item.0)));
    list.insert(pos, item);
}

pub struct ApproxEngine {
    index: Arc<IrfIndex>,
    objects: Arc<ObjectSet>,
    scale: Scale,
    m: usize,
    margin: Mass,
    stream: Stream,
    tr: Tracker,
    results: Vec<u32>,
    outsider: Option<Mass>,
}

impl ApproxEngine {
    pub fn new(index: Arc<IrfIndex>, config: ApproxConfig) -> Result<Self> {
        let objects = index.objects().clone();
        let n = objects.len();
        if config.m == 0 || config.m > n {
            return invalid(format!("m must be in 1..={n}, got {}", config.m));
        }
        if config.window == 0 {
            return invalid("window capacity must be positive");
        }
        let scale = Scale::new(index.epsilon(), n)?;
        let margin = config.close_margin as Mass * (n as Mass + 1) * scale.unit();
        let stream = Stream {
            window: VecDeque::with_capacity(config.window + 1),
            history: VecDeque::new(),
            history_cap: config.window / 3 + 1,
            capacity: config.window,
            seq: 0,
        };
        let tr = Tracker {
            mass: HashMap::new(),
            open: Vec::new(),
            cover: Coverage::new(&objects),
            lookup: LookupTable::new(config.window),
            touched: HashSet::new(),
        };
        let mut e = ApproxEngine {
            index,
            objects,
            scale,
            m: config.m,
            margin,
            stream,
            tr,
            results: (0..config.m as u32).collect(),
            outsider: None,
        };
        for &id in &e.results.clone() {
            let b = e.tr.cover.grid().bucket_of(id);
            if !e.tr.cover.is_open(b) {
                e.tr.open_bucket(b, &e.stream, &e.scale, &e.objects);
            }
        }
        e.outsider = e.cell_bound();
        e.tr.touched.clear();
        Ok(e)
    }

    pub fn index(&self) -> &Arc<IrfIndex> {
        &self.index
    }

    pub fn scale(&self) -> &Scale {
        &self.scale
    }

    pub fn m(&self) -> usize {
        self.m
    }

    /// Sequence number of the newest window query (0 before any arrival).
    pub fn window_id(&self) -> u64 {
        self.stream.seq
    }

    pub fn window_len(&self) -> usize {
        self.stream.window.len()
    }

    pub fn window(&self) -> impl Iterator<Item = &RangeQuery> {
        self.stream.window.iter().map(|w| &w.query)
    }

    /// Current upper bound on the best mass outside the results.
    pub fn outsider_bound(&self) -> Option<Mass> {
        self.outsider
    }

    pub fn tracked_count(&self) -> usize {
        self.tr.mass.len()
    }

    /// Results with their exact scaled masses, best first.
    pub fn results_with_mass(&self) -> Vec<(u32, Mass)> {
        self.results.iter().map(|&id| (id, self.tr.mass[&id])).collect()
    }

    pub fn results(&self) -> Vec<Scored> {
        let w = self.stream.window.len();
        self.results.iter().map(|&id| Scored { id, score: self.scale.score(self.tr.mass[&id], w) }).collect()
    }

    /// Scaled mass of `id` over the current window, by direct evaluation.
    pub fn scratch_mass(&self, id: u32) -> Mass {
        self.stream.scratch(&self.scale, &self.objects, id)
    }

    /// Mass of `id` now, from its mass `cached` at window `window_id`
    /// `None` when the gap is not reusable.
    pub fn reuse_mass(&self, id: u32, window_id: u64, cached: Mass) -> Option<Mass> {
        self.stream.reuse(&self.scale, &self.objects, id, window_id, cached)
    }

    /// [`ApproxEngine::reuse_mass`] as a popularity value.
    pub fn reuse_popularity(&self, id: u32, window_id: u64, cached: Mass) -> Option<f64> {
        self.reuse_mass(id, window_id, cached).map(|m| self.scale.score(m, self.stream.window.len()))
    }

    fn worst(&self) -> (Mass, u32) {
        let id = *self.results.last().expect("m >= 1");
        (self.tr.mass[&id], id)
    }

    fn sort_results(&mut self) {
        let mass = &self.tr.mass;
        self.results.sort_unstable_by(|a, b| mass[b].cmp(&mass[a]).then(a.cmp(b)));
    }

    fn cell_bound(&mut self) -> Option<Mass> {
        let res: HashSet<u32> = self.results.iter().copied().collect();
        let mut best = self.tr.cover.max_closed();
        for (&id, &m) in &self.tr.mass {
            if !res.contains(&id) {
                raise(&mut best, m);
            }
        }
        best
    }

    /// Advance the window by one query.
    pub fn step(&mut self, q: RangeQuery) -> Result<ApproxStep> {
        let leaf = self.index.locate_leaf(q.location)?;
        let list = self.index.list(leaf);
        let scale = self.scale;
        let objects = self.objects.clone();
        let contrib = self.tr.cover.contributions(&q, &list, &scale);
        self.stream.seq += 1;
        let now = self.stream.seq;
        self.tr.touched.clear();

        // qo moves to the history right away so reuse within this shift sees it.
        let popped = if self.stream.window.len() == self.stream.capacity { self.stream.window.pop_front() } else { None };
        let has_qo = popped.is_some();
        self.tr.cover.add(&contrib);
        if let Some(old) = popped {
            self.tr.cover.remove(&old.cover);
            self.stream.history.push_back(old);
        }
        self.stream.window.push_back(WindowQuery { query: q, pos: now, list, cover: contrib });
        let evicted = if has_qo { self.stream.history.back() } else { None };

        let result_set: HashSet<u32> = self.results.iter().copied().collect();
        // Drop the evicted query from tracked masses.
        if let Some(old) = evicted {
            for (&id, mass) in self.tr.mass.iter_mut() {
                if let Some(r) = old.lower_rank(&objects, id) {
                    *mass -= scale.zeta(r);
                    self.tr.touched.insert(id);
                }
            }
        }
        // Removing qo can reorder the results, so take the minimum afresh.
        let slack = self.results.iter().map(|id| self.tr.mass[id]).min().expect("m >= 1");

        let stream = &self.stream;
        let tr = &mut self.tr;
        let newest = stream.window.back().expect("just pushed");
        // Add the new query for every tracked object, remembering ranks of results.
        let mut qn_rank: HashMap<u32, u32> = HashMap::new();
        for (&id, mass) in tr.mass.iter_mut() {
            if let Some(r) = newest.lower_rank(&objects, id) {
                *mass += scale.zeta(r);
                tr.touched.insert(id);
                if result_set.contains(&id) {
                    qn_rank.insert(id, r);
                }
            }
        }

        let Some(outsider) = self.outsider else {
            // Every object is a result; only the order can change.
            self.sort_results();
            let opq = self.tr.touched.len();
            self.finish_shift(now);
            let stats = StepStats {
                tier: Tier::BsrSafe,
                opq,
                bsr: self.objects.len() as u32 + 1,
                osr: None,
                validation: 0,
                evaluated: 0,
                opened: 0,
                promoted: 0,
            };
            return Ok(ApproxStep { results: self.results(), stats });
        };

        let ctx = ShiftContext::new(
            &objects,
            &scale,
            &newest.query,
            &newest.list,
            evicted.map(|w| (&w.query, &*w.list)),
        );
        let mut pq = GainQueue::new();
        let bsr = block_safe_rank(&mut pq, &ctx, outsider, slack);
        let all_safe = |rank: u32| self.results.iter().all(|id| qn_rank.get(id).is_some_and(|&r| scale.below(r, rank)));

        let mut drift: Option<Mass> = None;
        let mut osr = None;
        let (mut validation, mut evaluated) = (0, 0);
        let mut current: Vec<(u32, Mass)> = self.results.iter().map(|&id| (id, tr.mass[&id])).collect();
        current.sort_unstable_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
        // An exact repeat leaves every mass as it was, so R stays the top-m.
        let tier = if ctx.is_identical() || all_safe(bsr.rank) {
            Tier::BsrSafe
        } else {
            let o = object_safe_rank(&mut pq, &ctx, outsider, slack);
            osr = Some(o.rank);
            if all_safe(o.rank) {
                Tier::OsrSafe
            } else {
                let &(wid, wm) = current.last().unwrap();
                let vo = validation_objects(&mut pq, &ctx, outsider, (wm, wid), &result_set);
                if let Some(t) = vo.tied_out {
                    raise(&mut drift, t);
                }
                validation = vo.objects.len();
                let tier = if vo.objects.is_empty() {
                    Tier::VoEmpty
                } else {
                    for (id, bound) in vo.objects {
                        let &(wid, wm) = current.last().unwrap();
                        let mass = match tr.mass.get(&id) {
                            Some(&m) => m,
                            None => {
                                let tight = bound.min(tr.cover.bound(tr.cover.grid().bucket_of(id)));
                                if !better((tight, id), (wm, wid)) {
                                    raise(&mut drift, tight);
                                    continue;
                                }
                                evaluated += 1;
                                let m = tr.evaluate(stream, &scale, &objects, id);
                                tr.lookup.insert(id, now, m);
                                m
                            }
                        };
                        if better((mass, id), (wm, wid)) {
                            let dropped = current.pop().unwrap();
                            raise(&mut drift, dropped.1);
                            insert_sorted(&mut current, (id, mass));
                        } else {
                            raise(&mut drift, mass);
                        }
                    }
                    Tier::VoUpdate
                };
                // Tracked outsiders that did not gain may still pass a result
                // that lost mass to qo.
                let &(wid, wm) = current.last().unwrap();
                let in_current: HashSet<u32> = current.iter().map(|c| c.0).collect();
                let mut passing: Vec<(u32, Mass)> = tr
                    .mass
                    .iter()
                    .filter(|&(id, &m)| !in_current.contains(id) && better((m, *id), (wm, wid)))
                    .map(|(&id, &m)| (id, m))
                    .collect();
                passing.sort_unstable_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
                for (id, m) in passing {
                    let &(wid, wm) = current.last().unwrap();
                    if !better((m, id), (wm, wid)) {
                        break;
                    }
                    let dropped = current.pop().unwrap();
                    raise(&mut drift, dropped.1);
                    insert_sorted(&mut current, (id, m));
                }
                tier
            }
        };
        if let Some(top) = pq.peek() {
            raise(&mut drift, outsider + top.key);
        }
        drop(ctx);

        for &(id, m) in &current {
            tr.mass.entry(id).or_insert(m);
        }
        self.results = current.iter().map(|&(id, _)| id).collect();

        // Keep result buckets open, then open every closed bucket that could
        // still reach the m-th result.
        let mut opened = 0;
        let mut promoted = 0;
        for id in self.results.clone() {
            let b = self.tr.cover.grid().bucket_of(id);
            if !self.tr.cover.is_open(b) {
                promoted += self.open_and_promote(b, &mut drift);
                opened += 1;
            }
        }
        loop {
            let (tm, idm) = self.worst();
            let cands = self.tr.cover.take_at_least(tm);
            if cands.is_empty() {
                break;
            }
            let mut any = false;
            for (ub, b) in cands {
                let b = b as usize;
                let min_id = self.tr.cover.grid().members(b)[0];
                if ub > tm || min_id < idm {
                    any = true;
                    opened += 1;
                    promoted += self.open_and_promote(b, &mut drift);
                } else {
                    self.tr.cover.restore(b as u32);
                }
            }
            if !any {
                break;
            }
        }

        let opq = self.tr.touched.len();
        self.finish_shift(now);
        let cells = self.cell_bound();
        self.outsider = match (drift, cells) {
            (Some(a), Some(b)) => Some(a.min(b)),
            (a, b) => a.or(b),
        };
        let stats = StepStats { tier, opq, bsr: bsr.rank, osr, validation, evaluated, opened, promoted };
        Ok(ApproxStep { results: self.results(), stats })
    }

    /// Open bucket `b` and let its members displace weaker results. Returns
    /// how many entered.
    fn open_and_promote(&mut self, b: usize, drift: &mut Option<Mass>) -> usize {
        let mut promoted = 0;
        for (id, m) in self.tr.open_bucket(b, &self.stream, &self.scale, &self.objects) {
            let (wm, wid) = self.worst();
            if better((m, id), (wm, wid)) {
                promoted += 1;
                raise(drift, wm);
                self.results.pop();
                self.results.push(id);
                self.sort_results();
            }
        }
        promoted
    }

    /// Close buckets that fell well below the m-th result, expire the lookup
    /// table and trim the history.
    fn finish_shift(&mut self, now: u64) {
        let (tm, _) = self.worst();
        let res: HashSet<u32> = self.results.iter().copied().collect();
        let limit = tm - self.margin;
        let tr = &mut self.tr;
        let mut keep = Vec::with_capacity(tr.open.len());
        for &b in &tr.open {
            let bu = b as usize;
            let members = tr.cover.grid().members(bu);
            if tr.cover.bound(bu) >= limit || members.iter().any(|id| res.contains(id)) {
                keep.push(b);
                continue;
            }
            for &id in members {
                if let Some(m) = tr.mass.remove(&id) {
                    tr.lookup.insert(id, now, m);
                }
            }
            tr.cover.close(bu);
        }
        tr.open = keep;
        tr.lookup.expire(now);
        while self.stream.history.len() > self.stream.history_cap {
            self.stream.history.pop_front();
        }
    }
}

#[cfg(test)]
mod tests;
