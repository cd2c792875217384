//! Drives both engines over one stream and aggregates the metrics.

use std::collections::BTreeMap;
use std::sync::Arc;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::gen::{Generator, QueryStream, StreamConfig};
use super::metrics::{overlap_row, EngineKind, MetricsRecord, OverlapAcc, OverlapReport, RatioAcc, RatioStats};
use crate::approx::{ApproxConfig, ApproxEngine, Tier};
use crate::error::{invalid, Error, Result};
use crate::exact::ExactEngine;
use crate::irf::IrfIndex;
use crate::partition::PartitionConfig;
use crate::window::RangeQuery;

/// Which engines a run drives.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EngineSel {
    Exact,
    Approx,
    #[default]
    Both,
}

impl EngineSel {
    fn exact(self) -> bool {
        self != EngineSel::Approx
    }

    fn approx(self) -> bool {
        self != EngineSel::Exact
    }
}

impl std::str::FromStr for EngineSel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "exact" => Ok(EngineSel::Exact),
            "approx" => Ok(EngineSel::Approx),
            "both" => Ok(EngineSel::Both),
            _ => Err(Error::Invalid(format!("unknown engine `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorkloadConfig {
    pub window: usize,
    pub m: usize,
    pub radius_pct: f64,
    pub epsilon: f64,
    pub block_size: usize,
    pub max_depth: u32,
    /// Measured shifts, after the window has filled.
    pub shifts: usize,
    pub seed: u64,
    pub generator: Generator,
    pub sites: usize,
    pub zipf_s: f64,
    pub repetitions: u32,
    pub engine: EngineSel,
}

impl Default for WorkloadConfig {
    fn default() -> Self {
        WorkloadConfig {
            window: 400,
            m: 10,
            radius_pct: 4.0,
            epsilon: 3.0,
            block_size: 128,
            max_depth: 16,
            shifts: 10_000,
            seed: 1,
            generator: Generator::Uniform,
            sites: 987,
            zipf_s: 1.0,
            repetitions: 3,
            engine: EngineSel::Both,
        }
    }
}

impl WorkloadConfig {
    pub fn validate(&self) -> Result<()> {
        if self.window == 0 || self.m == 0 || self.shifts == 0 || self.repetitions == 0 {
            return invalid("window, m, shifts and repetitions must be positive");
        }
        self.partition().validate()?;
        self.stream(0).validate()
    }

    pub fn partition(&self) -> PartitionConfig {
        PartitionConfig { epsilon: self.epsilon, max_depth: self.max_depth, block_size: self.block_size, dataspace: None }
    }

    /// Stream settings for repetition `rep`.
    pub fn stream(&self, rep: u32) -> StreamConfig {
        StreamConfig {
            generator: self.generator,
            radius_pct: self.radius_pct,
            seed: self.seed.wrapping_add(rep as u64),
            sites: self.sites,
            zipf_s: self.zipf_s,
        }
    }
}

/// Parameters a sweep can vary.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepParam {
    Window,
    M,
    RadiusPct,
    Epsilon,
    BlockSize,
}

impl std::str::FromStr for SweepParam {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "window" => SweepParam::Window,
            "m" => SweepParam::M,
            "radius_pct" | "radius-pct" | "radius" => SweepParam::RadiusPct,
            "epsilon" => SweepParam::Epsilon,
            "block_size" | "block-size" => SweepParam::BlockSize,
            _ => return Err(Error::Invalid(format!("unknown sweep parameter `{s}`"))),
        })
    }
}

impl SweepParam {
    /// Copy of `base` with this parameter set to `value`.
    pub fn apply(self, base: &WorkloadConfig, value: f64) -> Result<WorkloadConfig> {
        let whole = || {
            if value >= 1.0 && value.fract() == 0.0 {
                Ok(value as usize)
            } else {
                invalid(format!("{self:?} needs a positive integer, got {value}"))
            }
        };
        let mut c = base.clone();
        match self {
            SweepParam::Window => c.window = whole()?,
            SweepParam::M => c.m = whole()?,
            SweepParam::RadiusPct => c.radius_pct = value,
            SweepParam::Epsilon => c.epsilon = value,
            SweepParam::BlockSize => c.block_size = whole()?,
        }
        c.validate()?;
        Ok(c)
    }

    /// Whether changing this parameter needs a different index.
    pub fn rebuilds_index(self) -> bool {
        matches!(self, SweepParam::Epsilon | SweepParam::BlockSize)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EngineSummary {
    pub mean_opq: f64,
    pub mean_rpq_ns: f64,
    pub shifts: u64,
}

#[derive(Debug, Clone, Default)]
struct SummaryAcc {
    opq: u128,
    rpq: u128,
    shifts: u64,
}

impl SummaryAcc {
    fn add(&mut self, opq: usize, rpq: u64) {
        self.opq += opq as u128;
        self.rpq += rpq as u128;
        self.shifts += 1;
    }

    fn report(&self) -> Option<EngineSummary> {
        (self.shifts > 0).then(|| EngineSummary {
            mean_opq: self.opq as f64 / self.shifts as f64,
            mean_rpq_ns: self.rpq as f64 / self.shifts as f64,
            shifts: self.shifts,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub config: WorkloadConfig,
    pub n: usize,
    pub exact: Option<EngineSummary>,
    pub approx: Option<EngineSummary>,
    /// Measured approximate shifts per resolution tier.
    pub tiers: BTreeMap<String, u64>,
    /// Shifts where approx OPQ was strictly below exact OPQ.
    pub approx_opq_below_exact: u64,
    pub ratio: Option<RatioStats>,
    pub overlap: Option<OverlapReport>,
}

fn tier_name(t: Tier) -> String {
    serde_json::to_value(t).ok().and_then(|v| v.as_str().map(str::to_owned)).unwrap_or_default()
}

fn timed<T>(f: impl FnOnce() -> T) -> (T, u64) {
    let t = Instant::now();
    let out = f();
    (out, t.elapsed().as_nanos() as u64)
}

/// Run `config.repetitions` streams (seed, seed + 1, ...) through the selected
/// engines. Every record goes to `sink`, warm-up shifts included. When
/// `queries` is given it replaces the generated stream and a single pass is
/// made over it.
pub fn run_experiment(
    config: &WorkloadConfig,
    index: &Arc<IrfIndex>,
    queries: Option<&[RangeQuery]>,
    sink: &mut dyn FnMut(&MetricsRecord) -> Result<()>,
) -> Result<ExperimentReport> {
    config.validate()?;
    let objects = index.objects().clone();
    let n = objects.len();
    if config.m > n {
        return invalid(format!("m = {} exceeds the {n} objects", config.m));
    }
    if (index.epsilon() - config.epsilon).abs() > 0.0 || index.block_size() != config.block_size {
        return invalid("index was built with a different epsilon or block size");
    }
    let root = index.tree().root_cell();
    let mut exact_acc = SummaryAcc::default();
    let mut approx_acc = SummaryAcc::default();
    let mut tiers: BTreeMap<String, u64> = BTreeMap::new();
    let mut below = 0u64;
    let mut ratio = RatioAcc::default();
    let mut overlap = OverlapAcc::new(config.m);
    let ks = overlap.ks().to_vec();
    let reps = if queries.is_some() { 1 } else { config.repetitions };

    for rep in 0..reps {
        let stream: Box<dyn Iterator<Item = RangeQuery>> = match queries {
            Some(qs) => Box::new(qs.iter().copied()),
            None => {
                let s = QueryStream::new(&config.stream(rep), root)?;
                // Lists for the query sites are built up front, outside timing.
                if config.engine.approx() {
                    index.warm(s.locations());
                }
                Box::new(s.take(config.window - 1 + config.shifts))
            }
        };
        let mut exact = if config.engine.exact() { Some(ExactEngine::new(objects.clone(), config.window, config.m)?) } else { None };
        let mut approx = if config.engine.approx() {
            Some(ApproxEngine::new(index.clone(), ApproxConfig::new(config.window, config.m))?)
        } else {
            None
        };
        for (i, q) in stream.enumerate() {
            let shift = i as u64 + 1;
            let warmup = (shift as usize) < config.window;
            let ex = exact.as_mut().map(|e| timed(|| e.step(q)));
            let ap = match approx.as_mut() {
                Some(a) => {
                    let (r, ns) = timed(|| a.step(q));
                    Some((r?, ns))
                }
                None => None,
            };
            if let Some((s, ns)) = &ex {
                sink(&MetricsRecord {
                    repetition: rep,
                    shift,
                    engine: EngineKind::Exact,
                    warmup,
                    opq: s.opq,
                    rpq_ns: *ns,
                    tier: None,
                    result: s.results.clone(),
                })?;
                if !warmup {
                    exact_acc.add(s.opq, *ns);
                }
            }
            if let Some((s, ns)) = &ap {
                sink(&MetricsRecord {
                    repetition: rep,
                    shift,
                    engine: EngineKind::Approx,
                    warmup,
                    opq: s.stats.opq,
                    rpq_ns: *ns,
                    tier: Some(s.stats.tier),
                    result: s.results.clone(),
                })?;
                if !warmup {
                    approx_acc.add(s.stats.opq, *ns);
                    *tiers.entry(tier_name(s.stats.tier)).or_default() += 1;
                }
            }
            if let (Some((e, _)), Some((a, _)), false) = (&ex, &ap, warmup) {
                if a.stats.opq < e.opq {
                    below += 1;
                }
                ratio.add_shift(&a.results, &e.results);
                let ids: Vec<u32> = a.results.iter().map(|s| s.id).collect();
                overlap.add(&overlap_row(&ids, exact.as_ref().expect("exact engine present"), &ks));
            }
        }
    }
    Ok(ExperimentReport {
        config: config.clone(),
        n,
        exact: exact_acc.report(),
        approx: approx_acc.report(),
        tiers,
        approx_opq_below_exact: below,
        ratio: ratio.report(),
        overlap: overlap.report(),
    })
}
