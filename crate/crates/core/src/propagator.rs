//! One-hop embedding propagation from a directly trained core set.
//!
//! An address outside the core gets the element-wise mean of up to
//! `sample_n` of its core neighbors (in the truncated neighbor store), sampled
//! without replacement with an RNG keyed by `(seed, address)`. Core members
//! keep their own vector; addresses with no core neighbor stay missing.

use std::collections::BTreeSet;

use rand::seq::index::sample;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::embedder::EmbeddingTable;
use crate::hashing::keyed_rng;
use crate::txgraph::NeighborSource;
use crate::{Addr, Error, Result};

pub const DEFAULT_SAMPLE_N: usize = 5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoreSet {
    pub members: BTreeSet<Addr>,
    pub seed: u64,
    pub source_snapshot: u64,
}

impl CoreSet {
    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn contains(&self, node: &str) -> bool {
        self.members.contains(node)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoverageReport {
    pub covered: usize,
    pub total: usize,
    pub fraction: f64,
}

impl CoverageReport {
    pub fn to_json_line(&self) -> String {
        serde_json::to_string(self).expect("plain struct serializes")
    }
}

/// Uniform sample of `size` candidates without replacement.
pub fn select_core_set<'a, I>(candidates: I, size: usize, seed: u64, source_snapshot: u64) -> Result<CoreSet>
where
    I: IntoIterator<Item = &'a Addr>,
{
    let pool: Vec<Addr> = candidates
        .into_iter()
        .cloned()
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    if size > pool.len() {
        return Err(Error::InvalidArgument(format!(
            "core size {size} exceeds {} candidates",
            pool.len()
        )));
    }
    let mut rng = keyed_rng(seed, "core-set", source_snapshot);
    let members = sample(&mut rng, pool.len(), size)
        .into_iter()
        .map(|i| pool[i].clone())
        .collect();
    Ok(CoreSet {
        members,
        seed,
        source_snapshot,
    })
}

/// The one-hop core neighbors of `address` that would be sampled from, in store order.
pub fn core_neighbors<S: NeighborSource>(address: &str, core: &EmbeddingTable, store: &S) -> Result<Vec<Addr>> {
    Ok(match store.neighbors(address)? {
        Some(list) => list
            .iter()
            .filter(|n| core.contains(&n.node))
            .map(|n| n.node.clone())
            .collect(),
        None => Vec::new(),
    })
}

/// The neighbors actually drawn for `address`.
pub fn sampled_neighbors<S: NeighborSource>(
    address: &str,
    core: &EmbeddingTable,
    store: &S,
    sample_n: usize,
    seed: u64,
) -> Result<Vec<Addr>> {
    let hood = core_neighbors(address, core, store)?;
    let take = sample_n.min(hood.len());
    let mut rng = keyed_rng(seed, address, 0);
    let mut idx = sample(&mut rng, hood.len(), take).into_vec();
    idx.sort_unstable();
    Ok(idx.into_iter().map(|i| hood[i].clone()).collect())
}

/// Embedding for one address, or `None` when it has no core neighbor.
/// `core` is the embedding table restricted to the core set.
pub fn propagate<S: NeighborSource>(
    address: &str,
    core: &EmbeddingTable,
    store: &S,
    sample_n: usize,
    seed: u64,
) -> Result<Option<Vec<f32>>> {
    if sample_n == 0 {
        return Err(Error::InvalidArgument("sample_n must be at least 1".into()));
    }
    if let Some(own) = core.get(address) {
        return Ok(Some(own.to_vec()));
    }
    let picked = sampled_neighbors(address, core, store, sample_n, seed)?;
    if picked.is_empty() {
        return Ok(None);
    }
    let mut acc = vec![0.0f64; core.dim()];
    for n in &picked {
        let v = core.get(n).expect("sampled from core");
        for (a, x) in acc.iter_mut().zip(v) {
            *a += *x as f64;
        }
    }
    let k = picked.len() as f64;
    Ok(Some(acc.into_iter().map(|a| (a / k) as f32).collect()))
}

/// Propagate to every node of the store, on `workers` threads.
pub fn propagate_all<S: NeighborSource>(
    core: &EmbeddingTable,
    store: &S,
    sample_n: usize,
    seed: u64,
    workers: usize,
) -> Result<(EmbeddingTable, CoverageReport)> {
    if workers == 0 {
        return Err(Error::InvalidArgument("workers must be at least 1".into()));
    }
    let nodes = store.nodes()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::InvalidArgument(format!("cannot build worker pool: {e}")))?;
    let results: Vec<Option<(Addr, Vec<f32>)>> = pool.install(|| {
        nodes
            .par_iter()
            .map(|n| Ok(propagate(n, core, store, sample_n, seed)?.map(|v| (n.clone(), v))))
            .collect::<Result<_>>()
    })?;
    let rows: Vec<(Addr, Vec<f32>)> = results.into_iter().flatten().collect();
    let covered = rows.len();
    let total = nodes.len();
    let table = EmbeddingTable::from_rows(core.dim(), core.snapshot_id(), rows)?;
    let fraction = if total == 0 { 0.0 } else { covered as f64 / total as f64 };
    Ok((table, CoverageReport { covered, total, fraction }))
}
