//! Shared fixtures for the benchmarks.

use std::sync::Arc;

use srm_core::harness::{synthetic_objects, Distribution2d, StreamConfig};
use srm_core::{IrfIndex, ObjectSet, PartitionConfig, QueryStream, RangeQuery};

pub fn objects(n: usize, seed: u64) -> Arc<ObjectSet> {
    Arc::new(synthetic_objects(n, Distribution2d::Uniform, seed).expect("valid synthetic set"))
}

pub fn index(objects: Arc<ObjectSet>, epsilon: f64) -> Arc<IrfIndex> {
    Arc::new(IrfIndex::build(objects, PartitionConfig::with_epsilon(epsilon)).expect("index builds"))
}

/// Uniform stream over the index space at the default radius.
pub fn queries(index: &IrfIndex, len: usize, seed: u64) -> Vec<RangeQuery> {
    let cfg = StreamConfig { seed, ..StreamConfig::default() };
    let stream = QueryStream::new(&cfg, index.tree().root_cell()).expect("valid stream");
    index.warm(stream.locations());
    stream.take(len).collect()
}
