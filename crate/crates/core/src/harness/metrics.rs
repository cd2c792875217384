//! Per-shift records and the aggregate quality metrics.

use serde::{Deserialize, Serialize};

use crate::approx::Tier;
use crate::exact::ExactEngine;
use crate::window::Scored;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EngineKind {
    Exact,
    Approx,
}

/// One JSON line per engine per shift.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRecord {
    pub repetition: u32,
    pub shift: u64,
    pub engine: EngineKind,
    /// Set until the window first fills; such shifts are left out of
    /// aggregates.
    pub warmup: bool,
    pub opq: usize,
    pub rpq_ns: u64,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub tier: Option<Tier>,
    pub result: Vec<Scored>,
}

/// k values the overlap is reported for.
pub fn overlap_ks() -> Vec<usize> {
    (10..=200).step_by(10).collect()
}

/// Percentage of `approx` ids that sit in the exact top-k, counting every
/// object tied with the exact k-th as inside it.
pub fn overlap_pct(approx: &[u32], exact: &ExactEngine, k: usize) -> f64 {
    if approx.is_empty() {
        return 100.0;
    }
    let kth = exact.kth_mass(k);
    let hit = approx.iter().filter(|&&id| exact.mass(id) >= kth).count();
    100.0 * hit as f64 / approx.len() as f64
}

/// Overlap at every k of [`overlap_ks`], computed from one top list.
pub fn overlap_row(approx: &[u32], exact: &ExactEngine, ks: &[usize]) -> Vec<f64> {
    if approx.is_empty() {
        return vec![100.0; ks.len()];
    }
    let kmax = ks.iter().copied().max().unwrap_or(0);
    let top = exact.top(kmax);
    ks.iter()
        .map(|&k| {
            let kth = top.get(k.min(top.len()).saturating_sub(1)).map_or(0, |t| t.1);
            let hit = approx.iter().filter(|&&id| exact.mass(id) >= kth).count();
            100.0 * hit as f64 / approx.len() as f64
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OverlapReport {
    pub m: usize,
    pub ks: Vec<usize>,
    /// Mean over measured shifts, per k.
    pub overlap_pct: Vec<f64>,
}

/// Accumulates overlap rows.
#[derive(Debug, Clone)]
pub struct OverlapAcc {
    m: usize,
    ks: Vec<usize>,
    sums: Vec<f64>,
    rows: u64,
}

impl OverlapAcc {
    pub fn new(m: usize) -> Self {
        let ks = overlap_ks();
        OverlapAcc { m, sums: vec![0.0; ks.len()], ks, rows: 0 }
    }

    pub fn ks(&self) -> &[usize] {
        &self.ks
    }

    pub fn add(&mut self, row: &[f64]) {
        for (s, v) in self.sums.iter_mut().zip(row) {
            *s += v;
        }
        self.rows += 1;
    }

    pub fn merge(&mut self, other: &OverlapAcc) {
        for (s, v) in self.sums.iter_mut().zip(&other.sums) {
            *s += v;
        }
        self.rows += other.rows;
    }

    pub fn report(&self) -> Option<OverlapReport> {
        (self.rows > 0).then(|| OverlapReport {
            m: self.m,
            ks: self.ks.clone(),
            overlap_pct: self.sums.iter().map(|s| s / self.rows as f64).collect(),
        })
    }
}

/// Ratio for one result position: the larger of ρ̂/ρ and ρ/ρ̂, so always ≥ 1.
/// `None` unless both values are positive.
pub fn position_ratio(approx_score: f64, exact_score: f64) -> Option<f64> {
    (approx_score > 0.0 && exact_score > 0.0).then(|| (approx_score / exact_score).max(exact_score / approx_score))
}

/// Both aggregations of the approximation ratio.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RatioStats {
    /// Mean over positions within a shift, then over shifts.
    pub per_shift_mean: f64,
    /// Mean over every (shift, position) pair.
    pub pooled_mean: f64,
    pub max: f64,
    pub pairs: u64,
    /// Positions skipped because a score was not positive.
    pub skipped: u64,
}

#[derive(Debug, Clone, Default)]
pub struct RatioAcc {
    shift_sum: f64,
    shifts: u64,
    pooled_sum: f64,
    pairs: u64,
    skipped: u64,
    max: f64,
}

impl RatioAcc {
    pub fn add_shift(&mut self, approx: &[Scored], exact: &[Scored]) {
        let (mut sum, mut count) = (0.0, 0u64);
        for (a, e) in approx.iter().zip(exact) {
            match position_ratio(a.score, e.score) {
                Some(r) => {
                    sum += r;
                    count += 1;
                    self.max = self.max.max(r);
                }
                None => self.skipped += 1,
            }
        }
        if count > 0 {
            self.shift_sum += sum / count as f64;
            self.shifts += 1;
            self.pooled_sum += sum;
            self.pairs += count;
        }
    }

    pub fn merge(&mut self, o: &RatioAcc) {
        self.shift_sum += o.shift_sum;
        self.shifts += o.shifts;
        self.pooled_sum += o.pooled_sum;
        self.pairs += o.pairs;
        self.skipped += o.skipped;
        self.max = self.max.max(o.max);
    }

    pub fn report(&self) -> Option<RatioStats> {
        (self.pairs > 0).then(|| RatioStats {
            per_shift_mean: self.shift_sum / self.shifts as f64,
            pooled_mean: self.pooled_sum / self.pairs as f64,
            max: self.max,
            pairs: self.pairs,
            skipped: self.skipped,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{ObjectSet, Point};
    use crate::window::RangeQuery;
    use std::sync::Arc;

    fn s(id: u32, score: f64) -> Scored {
        Scored { id, score }
    }

    #[test]
    fn ratio_is_symmetric_and_at_least_one() {
        assert_eq!(position_ratio(2.0, 4.0), Some(2.0));
        assert_eq!(position_ratio(4.0, 2.0), Some(2.0));
        assert_eq!(position_ratio(3.0, 3.0), Some(1.0));
        assert_eq!(position_ratio(0.0, 3.0), None);
        assert_eq!(position_ratio(-1.0, 3.0), None);
    }

    #[test]
    fn ratio_aggregations() {
        let mut acc = RatioAcc::default();
        acc.add_shift(&[s(0, 1.0), s(1, 1.0)], &[s(0, 1.0), s(1, 3.0)]);
        acc.add_shift(&[s(0, 2.0)], &[s(0, 2.0)]);
        acc.add_shift(&[s(0, 0.0)], &[s(0, 2.0)]);
        let r = acc.report().unwrap();
        assert_eq!(r.per_shift_mean, (2.0 + 1.0) / 2.0);
        assert_eq!(r.pooled_mean, 5.0 / 3.0);
        assert_eq!(r.max, 3.0);
        assert_eq!(r.skipped, 1);
        assert!(RatioAcc::default().report().is_none());
    }

    #[test]
    fn overlap_treats_ties_as_equal_and_grows_with_k() {
        let objs = Arc::new(ObjectSet::new((0..6).map(|i| Point::new(i as f64, 0.0)).collect()).unwrap());
        let mut e = ExactEngine::new(objs, 5, 2).unwrap();
        // Ranks 1..=3 for ids 0,1,2 from a query at the origin.
        e.step(RangeQuery::new(Point::new(0.0, 0.0), 2.5, 1).unwrap());
        assert_eq!(overlap_pct(&[0, 1], &e, 2), 100.0);
        assert_eq!(overlap_pct(&[0, 2], &e, 2), 50.0);
        assert_eq!(overlap_pct(&[0, 2], &e, 3), 100.0);
        // Objects 3..5 share mass 0, so they tie the exact 4th.
        assert_eq!(overlap_pct(&[5, 4], &e, 4), 100.0);
        let row = overlap_row(&[2, 5], &e, &[1, 2, 3, 4]);
        assert_eq!(row, vec![0.0, 0.0, 50.0, 100.0]);
        assert!(row.windows(2).all(|w| w[0] <= w[1]));
        assert_eq!(overlap_row(&[2, 5], &e, &[1, 3]), vec![overlap_pct(&[2, 5], &e, 1), overlap_pct(&[2, 5], &e, 3)]);
    }

    #[test]
    fn record_json_round_trip() {
        let r = MetricsRecord {
            repetition: 0,
            shift: 3,
            engine: EngineKind::Approx,
            warmup: false,
            opq: 4,
            rpq_ns: 100,
            tier: Some(Tier::OsrSafe),
            result: vec![s(1, 2.5)],
        };
        let line = serde_json::to_string(&r).unwrap();
        assert!(line.contains("\"engine\":\"approx\"") && line.contains("\"tier\":\"osr_safe\""));
        assert_eq!(serde_json::from_str::<MetricsRecord>(&line).unwrap(), r);
        let ex = MetricsRecord { engine: EngineKind::Exact, tier: None, ..r };
        assert!(!serde_json::to_string(&ex).unwrap().contains("tier"));
    }
}
