use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::num::NonZeroUsize;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};

use lru::LruCache;

use super::store::{parse_line, partition_file_name, read_meta, Neighbor, StoreMeta};
use super::NeighborSource;
use crate::{Addr, Error, Result};

#[derive(Debug, Clone, Copy)]
struct Slot {
    partition: u32,
    offset: u64,
    len: u32,
}

/// Neighbor store that reads one node's line from its partition file on demand.
///
/// Only a node → file offset index is kept in memory, plus an optional LRU
/// cache holding at most `cache_capacity` lists.
pub struct DiskNeighborStore {
    dir: PathBuf,
    meta: StoreMeta,
    index: HashMap<Addr, Slot>,
    files: Vec<File>,
    cache: Option<Mutex<LruCache<Addr, Arc<[Neighbor]>>>>,
    cache_capacity: usize,
    loads: AtomicU64,
}

impl DiskNeighborStore {
    pub fn open(dir: &Path, cache_capacity: usize) -> Result<Self> {
        let meta = read_meta(dir)?;
        let mut index = HashMap::with_capacity(meta.node_count);
        let mut files = Vec::with_capacity(meta.partitions);
        for p in 0..meta.partitions {
            let path = dir.join(partition_file_name(p));
            let file = File::open(&path).map_err(|e| Error::io(&path, e))?;
            let mut reader = BufReader::new(file.try_clone().map_err(|e| Error::io(&path, e))?);
            let mut offset = 0u64;
            let mut line = Vec::new();
            loop {
                line.clear();
                let n = reader
                    .read_until(b'\n', &mut line)
                    .map_err(|e| Error::io(&path, e))?;
                if n == 0 {
                    break;
                }
                let sep = line
                    .iter()
                    .position(|&b| b == b'|')
                    .ok_or_else(|| Error::malformed(path.display().to_string(), "missing '|'"))?;
                let node = std::str::from_utf8(&line[..sep])
                    .map_err(|e| Error::malformed(path.display().to_string(), e.to_string()))?;
                let content_len = if line.ends_with(b"\n") { n - 1 } else { n };
                index.insert(
                    Addr::from(node),
                    Slot {
                        partition: p as u32,
                        offset,
                        len: content_len as u32,
                    },
                );
                offset += n as u64;
            }
            files.push(file);
        }
        let cache = NonZeroUsize::new(cache_capacity).map(|c| Mutex::new(LruCache::new(c)));
        Ok(DiskNeighborStore {
            dir: dir.to_path_buf(),
            meta,
            index,
            files,
            cache,
            cache_capacity,
            loads: AtomicU64::new(0),
        })
    }

    pub fn meta(&self) -> &StoreMeta {
        &self.meta
    }

    pub fn cache_capacity(&self) -> usize {
        self.cache_capacity
    }

    /// Lists currently held by the cache.
    pub fn cached_lists(&self) -> usize {
        self.cache
            .as_ref()
            .map_or(0, |c| c.lock().unwrap_or_else(|e| e.into_inner()).len())
    }

    /// Number of list reads that went to disk.
    pub fn disk_loads(&self) -> u64 {
        self.loads.load(Ordering::Relaxed)
    }

    fn load(&self, node: &str, slot: Slot) -> Result<Arc<[Neighbor]>> {
        let path = || self.dir.join(partition_file_name(slot.partition as usize));
        let mut buf = vec![0u8; slot.len as usize];
        read_exact_at(&self.files[slot.partition as usize], &mut buf, slot.offset)
            .map_err(|e| Error::io(path(), e))?;
        let text = std::str::from_utf8(&buf)
            .map_err(|e| Error::malformed(path().display().to_string(), e.to_string()))?;
        let (parsed, list) =
            parse_line(text).map_err(|m| Error::malformed(path().display().to_string(), m))?;
        if &*parsed != node {
            return Err(Error::malformed(
                path().display().to_string(),
                format!("index points at {parsed}, expected {node}"),
            ));
        }
        self.loads.fetch_add(1, Ordering::Relaxed);
        Ok(Arc::from(list))
    }
}

#[cfg(unix)]
fn read_exact_at(file: &File, buf: &mut [u8], offset: u64) -> std::io::Result<()> {
    use std::os::unix::fs::FileExt;
    file.read_exact_at(buf, offset)
}

#[cfg(not(unix))]
fn read_exact_at(file: &File, buf: &mut [u8], offset: u64) -> std::io::Result<()> {
    use std::io::{Read, Seek, SeekFrom};
    let mut f = file.try_clone()?;
    f.seek(SeekFrom::Start(offset))?;
    f.read_exact(buf)
}

impl NeighborSource for DiskNeighborStore {
    type List<'a> = Arc<[Neighbor]>;

    fn neighbors(&self, node: &str) -> Result<Option<Arc<[Neighbor]>>> {
        let Some((key, slot)) = self.index.get_key_value(node) else {
            return Ok(None);
        };
        if let Some(cache) = &self.cache {
            if let Some(hit) = cache.lock().unwrap_or_else(|e| e.into_inner()).get(node) {
                return Ok(Some(hit.clone()));
            }
        }
        let list = self.load(node, *slot)?;
        if let Some(cache) = &self.cache {
            cache
                .lock()
                .unwrap_or_else(|e| e.into_inner())
                .put(key.clone(), list.clone());
        }
        Ok(Some(list))
    }

    fn nodes(&self) -> Result<Vec<Addr>> {
        let mut nodes: Vec<Addr> = self.index.keys().cloned().collect();
        nodes.sort_unstable();
        Ok(nodes)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::txgraph::{Asset, NeighborStore, TransactionRecord};

    #[test]
    fn disk_store_matches_memory_store() {
        let mut recs = Vec::new();
        for i in 0..40 {
            for j in 0..(i % 5) {
                recs.push(TransactionRecord::new(
                    1,
                    &format!("n{i}"),
                    &format!("n{}", (i * 7 + j) % 40),
                    1.0,
                    Asset::Native,
                ));
            }
        }
        let mem = NeighborStore::from_records(&recs, 3, 1).unwrap();
        let dir = tempfile::tempdir().unwrap();
        mem.write_partitions(dir.path(), 4).unwrap();
        for cap in [0, 2] {
            let disk = DiskNeighborStore::open(dir.path(), cap).unwrap();
            assert_eq!(disk.nodes().unwrap(), mem.nodes().unwrap());
            for node in mem.node_iter() {
                let a = disk.neighbors(node).unwrap().unwrap();
                assert_eq!(&*a, mem.get(node).unwrap());
            }
            assert!(disk.neighbors("absent").unwrap().is_none());
            assert!(disk.cached_lists() <= cap);
        }
    }
}
