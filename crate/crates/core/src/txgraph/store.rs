//! Top-K neighbor lists and their partitioned on-disk form.
//!
//! Partition file line format (one node per line, nodes sorted by address):
//!
//! ```text
//! node|neighbor:count,neighbor:count,...
//! ```
//!
//! A node whose only transfers are to itself has an empty list (`node|`).

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::edgelog::{write_atomically, EdgeLog};
use super::record::TransactionRecord;
use super::NeighborSource;
use crate::hashing::partition_of;
use crate::{Addr, Error, Result};

pub const DEFAULT_TOP_K: usize = 200;
pub const DEFAULT_PARTITIONS: usize = 64;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Neighbor {
    pub node: Addr,
    pub count: u64,
}

/// Metadata stored next to the partition files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StoreMeta {
    pub snapshot_id: u64,
    pub top_k: usize,
    pub partitions: usize,
    pub node_count: usize,
}

pub const STORE_META_FILE: &str = "store.json";

pub fn partition_file_name(partition: usize) -> String {
    format!("part-{partition:05}.nbr")
}

/// In-memory neighbor store: every node with at least one transfer, mapped to
/// its top-K counterparties by interaction count (both directions summed).
#[derive(Debug, Clone, Default)]
pub struct NeighborStore {
    snapshot_id: u64,
    top_k: usize,
    lists: BTreeMap<Addr, Arc<[Neighbor]>>,
}

/// Descending count, then ascending address.
pub fn sort_neighbors(list: &mut [Neighbor]) {
    list.sort_by(|a, b| b.count.cmp(&a.count).then_with(|| a.node.cmp(&b.node)));
}

impl NeighborStore {
    pub fn from_records<'a, I>(records: I, top_k: usize, snapshot_id: u64) -> Result<Self>
    where
        I: IntoIterator<Item = &'a TransactionRecord>,
    {
        if top_k == 0 {
            return Err(Error::InvalidArgument("K must be at least 1".into()));
        }
        let mut counts: HashMap<Addr, HashMap<Addr, u64>> = HashMap::new();
        for r in records {
            if r.from == r.to {
                counts.entry(r.from.clone()).or_default();
                continue;
            }
            *counts
                .entry(r.from.clone())
                .or_default()
                .entry(r.to.clone())
                .or_insert(0) += 1;
            *counts
                .entry(r.to.clone())
                .or_default()
                .entry(r.from.clone())
                .or_insert(0) += 1;
        }
        let lists = counts
            .into_iter()
            .map(|(node, nbrs)| {
                let mut list: Vec<Neighbor> = nbrs
                    .into_iter()
                    .map(|(node, count)| Neighbor { node, count })
                    .collect();
                sort_neighbors(&mut list);
                list.truncate(top_k);
                (node, Arc::from(list))
            })
            .collect();
        Ok(NeighborStore {
            snapshot_id,
            top_k,
            lists,
        })
    }

    pub fn from_lists(snapshot_id: u64, top_k: usize, lists: BTreeMap<Addr, Arc<[Neighbor]>>) -> Self {
        NeighborStore {
            snapshot_id,
            top_k,
            lists,
        }
    }

    pub fn snapshot_id(&self) -> u64 {
        self.snapshot_id
    }

    pub fn top_k(&self) -> usize {
        self.top_k
    }

    pub fn len(&self) -> usize {
        self.lists.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lists.is_empty()
    }

    pub fn get(&self, node: &str) -> Option<&[Neighbor]> {
        self.lists.get(node).map(|l| &**l)
    }

    pub fn contains(&self, node: &str) -> bool {
        self.lists.contains_key(node)
    }

    /// Nodes in ascending address order.
    pub fn node_iter(&self) -> impl Iterator<Item = &Addr> {
        self.lists.keys()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&Addr, &[Neighbor])> {
        self.lists.iter().map(|(k, v)| (k, &**v))
    }

    pub fn edge_entry_count(&self) -> usize {
        self.lists.values().map(|l| l.len()).sum()
    }

    /// Write `partitions` files plus `store.json` into `dir`. Each partition is
    /// written by one worker to a temporary name and renamed when complete.
    pub fn write_partitions(&self, dir: &Path, partitions: usize) -> Result<()> {
        if partitions == 0 {
            return Err(Error::InvalidArgument("P must be at least 1".into()));
        }
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let mut buckets: Vec<Vec<(&Addr, &[Neighbor])>> = vec![Vec::new(); partitions];
        for (node, list) in self.iter() {
            buckets[partition_of(node, partitions)].push((node, list));
        }
        buckets
            .par_iter()
            .enumerate()
            .try_for_each(|(p, entries)| {
                let path = dir.join(partition_file_name(p));
                write_atomically(&path, |w| {
                    for (node, list) in entries {
                        writeln!(w, "{}", format_line(node, list))?;
                    }
                    Ok(())
                })
            })?;
        let meta = StoreMeta {
            snapshot_id: self.snapshot_id,
            top_k: self.top_k,
            partitions,
            node_count: self.len(),
        };
        let text = serde_json::to_string_pretty(&meta)?;
        write_atomically(&dir.join(STORE_META_FILE), |w| w.write_all(text.as_bytes()))
    }

    /// Load every partition file back into memory.
    pub fn read_partitions(dir: &Path) -> Result<Self> {
        let meta = read_meta(dir)?;
        let mut lists = BTreeMap::new();
        for p in 0..meta.partitions {
            let path = dir.join(partition_file_name(p));
            let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
            for (i, line) in text.lines().enumerate() {
                let (node, list) = parse_line(line)
                    .map_err(|m| Error::malformed(format!("{}:{}", path.display(), i + 1), m))?;
                lists.insert(node, Arc::from(list));
            }
        }
        Ok(NeighborStore {
            snapshot_id: meta.snapshot_id,
            top_k: meta.top_k,
            lists,
        })
    }
}

pub fn read_meta(dir: &Path) -> Result<StoreMeta> {
    let path = dir.join(STORE_META_FILE);
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    Ok(serde_json::from_str(&text)?)
}

pub fn format_line(node: &str, list: &[Neighbor]) -> String {
    let mut s = String::with_capacity(node.len() + 1 + list.len() * 48);
    s.push_str(node);
    s.push('|');
    for (i, n) in list.iter().enumerate() {
        if i > 0 {
            s.push(',');
        }
        s.push_str(&n.node);
        s.push(':');
        s.push_str(&n.count.to_string());
    }
    s
}

pub fn parse_line(line: &str) -> std::result::Result<(Addr, Vec<Neighbor>), String> {
    let (node, rest) = line
        .split_once('|')
        .ok_or_else(|| "missing '|' separator".to_string())?;
    if node.is_empty() {
        return Err("empty node".into());
    }
    let mut list = Vec::new();
    if !rest.is_empty() {
        for item in rest.split(',') {
            let (n, c) = item
                .rsplit_once(':')
                .ok_or_else(|| format!("bad neighbor entry {item:?}"))?;
            let count = c.parse::<u64>().map_err(|e| format!("bad count in {item:?}: {e}"))?;
            if n.is_empty() || count == 0 {
                return Err(format!("bad neighbor entry {item:?}"));
            }
            list.push(Neighbor {
                node: Addr::from(n),
                count,
            });
        }
    }
    Ok((Addr::from(node), list))
}

/// Build the neighbor store for a snapshot from the edge log and write it to
/// `out_dir` as `partitions` files.
pub fn build_neighbor_store(
    log: &EdgeLog,
    snapshot_id: u64,
    top_k: usize,
    partitions: usize,
    out_dir: &Path,
) -> Result<NeighborStore> {
    if partitions == 0 {
        return Err(Error::InvalidArgument("P must be at least 1".into()));
    }
    log.snapshot(snapshot_id)?;
    let records = log.records_through(snapshot_id)?;
    let store = NeighborStore::from_records(&records, top_k, snapshot_id)?;
    store.write_partitions(out_dir, partitions)?;
    Ok(store)
}

/// Default location of a snapshot's store under a store root directory.
pub fn store_dir(root: &Path, snapshot_id: u64) -> PathBuf {
    root.join(format!("snapshot-{snapshot_id}"))
}

impl NeighborSource for NeighborStore {
    type List<'a> = &'a [Neighbor];

    fn neighbors(&self, node: &str) -> Result<Option<&[Neighbor]>> {
        Ok(self.get(node))
    }

    fn nodes(&self) -> Result<Vec<Addr>> {
        Ok(self.lists.keys().cloned().collect())
    }
}
