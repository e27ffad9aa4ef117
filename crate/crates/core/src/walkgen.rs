//! Second-order biased random walks over a [`NeighborSource`].
//!
//! Walks are generated split-apply-combine style: source nodes are spread over
//! `workers` threads, each walk draws from its own RNG stream keyed by
//! `(seed, source, walk_index)`, and the combine step sorts by
//! `(source, walk_index)`. The corpus is therefore independent of the worker
//! count and of scheduling order.
//!
//! A walker holds the current node's list only while choosing the next step.
//! The previous node's neighbor ids are kept as a set for the distance test.

use std::collections::HashSet;
use std::io::{BufRead, Write};

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::hashing::keyed_rng;
use crate::txgraph::{Neighbor, NeighborSource};
use crate::{Addr, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WalkParams {
    /// Walks per source node (r).
    pub num_walks: usize,
    /// Nodes per walk, including the source (l).
    pub walk_length: usize,
    /// Return parameter p.
    pub p: f64,
    /// In-out parameter q.
    pub q: f64,
    pub seed: u64,
}

impl WalkParams {
    pub fn new(seed: u64) -> Self {
        WalkParams {
            num_walks: 10,
            walk_length: 10,
            p: 1.0,
            q: 1.0,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_walks < 1 {
            return Err(Error::InvalidArgument("num_walks must be at least 1".into()));
        }
        if self.walk_length < 1 {
            return Err(Error::InvalidArgument("walk_length must be at least 1".into()));
        }
        if !(self.p > 0.0 && self.p.is_finite() && self.q > 0.0 && self.q.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "p and q must be positive, got p={} q={}",
                self.p, self.q
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Walk {
    pub source: Addr,
    pub index: u32,
    pub nodes: Vec<Addr>,
}

/// Walks sorted by `(source, index)`.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct WalkCorpus {
    walks: Vec<Walk>,
}

/// Which sources to walk from.
#[derive(Debug, Clone)]
pub enum NodeSelection {
    All,
    Nodes(Vec<Addr>),
}

/// Unnormalized second-order weights for stepping from `cur`.
///
/// `is_prev_neighbor` answers whether a candidate is in the previous node's
/// (truncated) neighbor list. With no previous node every weight is the raw
/// interaction count.
pub fn bias_weights<F>(prev: Option<&str>, is_prev_neighbor: F, cur_list: &[Neighbor], p: f64, q: f64) -> Vec<f64>
where
    F: Fn(&str) -> bool,
{
    cur_list
        .iter()
        .map(|n| {
            let w = n.count as f64;
            match prev {
                None => w,
                Some(prev) if *n.node == *prev => w / p,
                Some(_) if is_prev_neighbor(&n.node) => w,
                Some(_) => w / q,
            }
        })
        .collect()
}

/// Candidates and unnormalized weights for the step `prev -> cur -> ?`.
/// Unknown `cur` yields an empty list.
pub fn transition_weights<S: NeighborSource>(
    prev: Option<&str>,
    cur: &str,
    store: &S,
    p: f64,
    q: f64,
) -> Result<Vec<(Addr, f64)>> {
    let Some(cur_list) = store.neighbors(cur)? else {
        return Ok(Vec::new());
    };
    let prev_set: HashSet<Addr> = match prev {
        Some(prev) => match store.neighbors(prev)? {
            Some(l) => l.iter().map(|n| n.node.clone()).collect(),
            None => HashSet::new(),
        },
        None => HashSet::new(),
    };
    let weights = bias_weights(prev, |c| prev_set.contains(c), &cur_list, p, q);
    Ok(cur_list.iter().map(|n| n.node.clone()).zip(weights).collect())
}

fn pick<R: Rng>(rng: &mut R, weights: &[f64]) -> usize {
    let total: f64 = weights.iter().sum();
    let mut x = rng.gen::<f64>() * total;
    for (i, w) in weights.iter().enumerate() {
        if x < *w {
            return i;
        }
        x -= w;
    }
    // rounding can leave x a hair above the last weight
    weights.iter().rposition(|w| *w > 0.0).unwrap_or(0)
}

/// One walk from `source`. Unknown sources give the single-node walk `[source]`;
/// a walk stops early at a node with no neighbors.
pub fn generate_walk<S: NeighborSource>(
    source: &Addr,
    store: &S,
    params: &WalkParams,
    walk_index: u32,
) -> Result<Walk> {
    let mut rng = keyed_rng(params.seed, source, walk_index as u64);
    let mut nodes = Vec::with_capacity(params.walk_length);
    nodes.push(source.clone());
    let mut prev: Option<(Addr, HashSet<Addr>)> = None;
    while nodes.len() < params.walk_length {
        let cur = nodes.last().expect("walk is never empty").clone();
        let Some(list) = store.neighbors(&cur)? else {
            break;
        };
        if list.is_empty() {
            break;
        }
        let weights = match &prev {
            None => bias_weights(None, |_| false, &list, params.p, params.q),
            Some((prev, set)) => bias_weights(Some(prev), |c| set.contains(c), &list, params.p, params.q),
        };
        let next = list[pick(&mut rng, &weights)].node.clone();
        let cur_neighbors: HashSet<Addr> = list.iter().map(|n| n.node.clone()).collect();
        drop(list);
        prev = Some((cur, cur_neighbors));
        nodes.push(next);
    }
    Ok(Walk {
        source: source.clone(),
        index: walk_index,
        nodes,
    })
}

/// `num_walks` walks from every selected node, computed on `workers` threads.
pub fn generate_walks_partitioned<S: NeighborSource>(
    selection: &NodeSelection,
    store: &S,
    params: &WalkParams,
    workers: usize,
) -> Result<WalkCorpus> {
    params.validate()?;
    if workers == 0 {
        return Err(Error::InvalidArgument("workers must be at least 1".into()));
    }
    let mut sources = match selection {
        NodeSelection::All => store.nodes()?,
        NodeSelection::Nodes(n) => n.clone(),
    };
    sources.sort_unstable();
    sources.dedup();

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::InvalidArgument(format!("cannot build worker pool: {e}")))?;
    let per_source: Vec<Vec<Walk>> = pool.install(|| {
        sources
            .par_iter()
            .map(|src| {
                (0..params.num_walks as u32)
                    .map(|i| generate_walk(src, store, params, i))
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<Vec<_>>>()
    })?;
    Ok(WalkCorpus::from_walks(per_source.into_iter().flatten().collect()))
}

impl WalkCorpus {
    pub fn from_walks(mut walks: Vec<Walk>) -> Self {
        walks.sort_by(|a, b| a.source.cmp(&b.source).then(a.index.cmp(&b.index)));
        WalkCorpus { walks }
    }

    pub fn walks(&self) -> &[Walk] {
        &self.walks
    }

    pub fn len(&self) -> usize {
        self.walks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.walks.is_empty()
    }

    pub fn token_count(&self) -> usize {
        self.walks.iter().map(|w| w.nodes.len()).sum()
    }

    pub fn sources(&self) -> Vec<Addr> {
        let mut s: Vec<Addr> = self.walks.iter().map(|w| w.source.clone()).collect();
        s.dedup();
        s
    }

    /// Every node appearing anywhere in the corpus.
    pub fn node_set(&self) -> HashSet<Addr> {
        self.walks.iter().flat_map(|w| w.nodes.iter().cloned()).collect()
    }

    pub fn merge(mut self, other: WalkCorpus) -> WalkCorpus {
        self.walks.extend(other.walks);
        WalkCorpus::from_walks(self.walks)
    }

    /// One walk per line, space-separated, in `(source, index)` order.
    pub fn write_to<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        for walk in &self.walks {
            let mut first = true;
            for n in &walk.nodes {
                if !first {
                    w.write_all(b" ")?;
                }
                w.write_all(n.as_bytes())?;
                first = false;
            }
            w.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn to_text(&self) -> String {
        let mut buf = Vec::new();
        self.write_to(&mut buf).expect("writing to a Vec cannot fail");
        String::from_utf8(buf).expect("addresses are utf-8")
    }

    /// Inverse of [`WalkCorpus::write_to`]; walk indices are recovered from line order.
    pub fn read_from<R: BufRead>(r: R) -> Result<Self> {
        let mut walks: Vec<Walk> = Vec::new();
        for (i, line) in r.lines().enumerate() {
            let line = line.map_err(|e| Error::io("walk corpus", e))?;
            if line.is_empty() {
                continue;
            }
            let nodes: Vec<Addr> = line.split(' ').map(Addr::from).collect();
            if nodes.iter().any(|n| n.is_empty()) {
                return Err(Error::malformed(format!("walk corpus line {}", i + 1), "empty node"));
            }
            let source = nodes[0].clone();
            let index = match walks.last() {
                Some(prev) if prev.source == source => prev.index + 1,
                _ => 0,
            };
            walks.push(Walk { source, index, nodes });
        }
        Ok(WalkCorpus::from_walks(walks))
    }
}
