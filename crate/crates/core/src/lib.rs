//! Top-m spatial popularity monitoring over a count-based sliding window of
//! range queries.
//!
//! An object's popularity is its average score `N - rank + 1` over the
//! window queries whose range it falls into. [`exact::ExactEngine`] maintains
//! the exact top-m. [`approx::ApproxEngine`] maintains the top-m under
//! approximate ranks read from an [`irf::IrfIndex`], touching only a small
//! candidate set per arriving query.

pub mod approx;
pub mod error;
pub mod exact;
pub mod geometry;
pub mod grid;
pub mod harness;
pub mod irf;
pub mod partition;
pub mod window;

pub use error::{Error, Result};
pub use geometry::{dist, max_dist, max_dist_rect, min_dist, min_dist_rect, Cell, ObjectSet, Point};
pub use partition::{
    build_quadtree, locate_leaf, lower_rank_bound, needs_split, upper_rank_bound, LeafId, PartitionConfig, Quadtree,
    QuadtreeNode, RankBounds,
};
pub use irf::{block_upper_rank, locate_object, IrfIndex, RankBlock, RankEntry, RankList};
pub use exact::{popularity, rank_in_query, ExactEngine, ExactStep};
pub use window::{RangeQuery, Scored, SlidingWindow};
pub use approx::{approx_popularity, approx_rank, ApproxConfig, ApproxEngine, ApproxStep, Mass, StepStats, Tier};
pub use harness::{
    load_objects, run_experiment, Dataset, EngineKind, EngineSel, ExperimentReport, Generator, MetricsRecord,
    QueryStream, WorkloadConfig,
};
