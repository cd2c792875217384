//! Experiment plumbing: object and query files, stream generators, metrics
//! and the driver that runs both engines side by side.

pub mod data;
pub mod experiment;
pub mod gen;
pub mod metrics;

pub use data::{load_objects, load_queries, synthetic_objects, write_objects, Dataset, Distribution2d, ObjectSource};
pub use experiment::{run_experiment, EngineSel, EngineSummary, ExperimentReport, SweepParam, WorkloadConfig};
pub use gen::{Generator, QueryStream, Site, StreamConfig};
pub use metrics::{
    overlap_ks, overlap_pct, overlap_row, position_ratio, EngineKind, MetricsRecord, OverlapAcc, OverlapReport,
    RatioAcc, RatioStats,
};
