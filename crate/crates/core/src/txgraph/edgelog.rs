//! Append-only, snapshot-keyed edge log on disk.
//!
//! Layout of the log directory:
//!
//! ```text
//! snapshots.json        list of GraphSnapshot, ordered by id
//! snapshot-<id>.csv     records ingested for that snapshot (edge CSV format)
//! ```
//!
//! Snapshot `t` is the cumulative view of `snapshot-1.csv ..= snapshot-t.csv`.

use std::collections::{BTreeSet, HashSet};
use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::record::{read_edge_csv, write_edge_csv, ParsedRow, TransactionRecord};
use crate::{Addr, Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphSnapshot {
    pub snapshot_id: u64,
    pub time_upper_bound: i64,
    pub node_count: u64,
    pub edge_count: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RejectedRow {
    pub line: u64,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IngestReport {
    pub snapshot_id: u64,
    pub new_nodes: u64,
    pub new_edges: u64,
    pub rejected: Vec<RejectedRow>,
}

/// Addresses incident to at least one transaction in `(bound(prev), bound(cur)]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeltaNodeSet {
    pub prev_id: u64,
    pub cur_id: u64,
    pub nodes: BTreeSet<Addr>,
}

impl DeltaNodeSet {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }
}

/// Endpoints of records with `lo < timestamp <= hi`.
pub fn delta_nodes_in_window<'a, I>(records: I, lo: i64, hi: i64) -> BTreeSet<Addr>
where
    I: IntoIterator<Item = &'a TransactionRecord>,
{
    let mut out = BTreeSet::new();
    for r in records {
        if r.timestamp > lo && r.timestamp <= hi {
            out.insert(r.from.clone());
            out.insert(r.to.clone());
        }
    }
    out
}

pub struct EdgeLog {
    dir: PathBuf,
    snapshots: Vec<GraphSnapshot>,
}

impl EdgeLog {
    /// Open the log at `dir`, creating an empty one if it does not exist yet.
    pub fn open(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref().to_path_buf();
        fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        let meta = dir.join("snapshots.json");
        let snapshots = if meta.exists() {
            let text = fs::read_to_string(&meta).map_err(|e| Error::io(&meta, e))?;
            serde_json::from_str(&text)?
        } else {
            Vec::new()
        };
        Ok(EdgeLog { dir, snapshots })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn snapshots(&self) -> &[GraphSnapshot] {
        &self.snapshots
    }

    pub fn latest(&self) -> Option<&GraphSnapshot> {
        self.snapshots.last()
    }

    pub fn snapshot(&self, id: u64) -> Result<&GraphSnapshot> {
        self.snapshots
            .iter()
            .find(|s| s.snapshot_id == id)
            .ok_or(Error::MissingSnapshot(id))
    }

    fn snapshot_path(&self, id: u64) -> PathBuf {
        self.dir.join(format!("snapshot-{id}.csv"))
    }

    /// Ingest already-parsed records; `line` in rejections is the 1-based position in `records`.
    pub fn ingest_records<I>(&mut self, records: I, snapshot_id: u64) -> Result<IngestReport>
    where
        I: IntoIterator<Item = TransactionRecord>,
    {
        let rows = records.into_iter().enumerate().map(|(i, r)| {
            let checked = r.validate().map(|_| r);
            (i as u64 + 1, checked)
        });
        self.ingest_rows(rows, snapshot_id)
    }

    /// Ingest an edge-list CSV. A bad header is a data error; bad rows are only counted.
    pub fn ingest_csv<R: std::io::Read>(&mut self, reader: R, snapshot_id: u64) -> Result<IngestReport> {
        let rows = read_edge_csv(reader).map_err(|m| Error::malformed("edge csv", m))?;
        self.ingest_rows(rows, snapshot_id)
    }

    pub fn ingest_rows<I>(&mut self, rows: I, snapshot_id: u64) -> Result<IngestReport>
    where
        I: IntoIterator<Item = ParsedRow>,
    {
        let expected = self.latest().map_or(1, |s| s.snapshot_id + 1);
        if snapshot_id != expected {
            return Err(Error::InvalidArgument(format!(
                "snapshot id must be {expected} (latest + 1), got {snapshot_id}"
            )));
        }
        let prev_bound = self.latest().map(|s| s.time_upper_bound);

        let mut accepted = Vec::new();
        let mut rejected = Vec::new();
        for (line, row) in rows {
            match row {
                Ok(r) => match prev_bound {
                    Some(b) if r.timestamp <= b => rejected.push(RejectedRow {
                        line,
                        reason: format!(
                            "timestamp {} not after previous snapshot bound {b}",
                            r.timestamp
                        ),
                    }),
                    _ => accepted.push(r),
                },
                Err(reason) => rejected.push(RejectedRow { line, reason }),
            }
        }
        accepted.sort_by_key(|r| r.timestamp);

        let known: HashSet<Addr> = self
            .records_through(snapshot_id - 1)?
            .into_iter()
            .flat_map(|r| [r.from, r.to])
            .collect();
        let mut fresh: HashSet<&Addr> = HashSet::new();
        for r in &accepted {
            for a in [&r.from, &r.to] {
                if !known.contains(a) {
                    fresh.insert(a);
                }
            }
        }
        let new_nodes = fresh.len() as u64;
        let new_edges = accepted.len() as u64;

        let bound = accepted
            .iter()
            .map(|r| r.timestamp)
            .max()
            .into_iter()
            .chain(prev_bound)
            .max()
            .unwrap_or(0);
        let prev_counts = self.latest().map_or((0, 0), |s| (s.node_count, s.edge_count));

        let path = self.snapshot_path(snapshot_id);
        write_atomically(&path, |w| write_edge_csv(w, &accepted))?;
        self.snapshots.push(GraphSnapshot {
            snapshot_id,
            time_upper_bound: bound,
            node_count: prev_counts.0 + new_nodes,
            edge_count: prev_counts.1 + new_edges,
        });
        self.save_meta()?;

        Ok(IngestReport {
            snapshot_id,
            new_nodes,
            new_edges,
            rejected,
        })
    }

    fn save_meta(&self) -> Result<()> {
        let text = serde_json::to_string_pretty(&self.snapshots)?;
        write_atomically(&self.dir.join("snapshots.json"), |w| w.write_all(text.as_bytes()))
    }

    /// Records ingested for exactly this snapshot.
    pub fn records_in(&self, id: u64) -> Result<Vec<TransactionRecord>> {
        self.snapshot(id)?;
        let path = self.snapshot_path(id);
        let file = fs::File::open(&path).map_err(|_| Error::MissingSnapshot(id))?;
        let rows = read_edge_csv(std::io::BufReader::new(file))
            .map_err(|m| Error::malformed(path.display().to_string(), m))?;
        rows.into_iter()
            .map(|(line, r)| r.map_err(|m| Error::malformed(format!("{}:{line}", path.display()), m)))
            .collect()
    }

    /// Cumulative records for snapshots `1..=id` (empty for `id == 0`).
    pub fn records_through(&self, id: u64) -> Result<Vec<TransactionRecord>> {
        let mut out = Vec::new();
        for s in &self.snapshots {
            if s.snapshot_id <= id {
                out.extend(self.records_in(s.snapshot_id)?);
            }
        }
        if id > 0 && !self.snapshots.iter().any(|s| s.snapshot_id == id) {
            return Err(Error::MissingSnapshot(id));
        }
        Ok(out)
    }

    pub fn compute_delta_nodes(&self, prev_id: u64, cur_id: u64) -> Result<DeltaNodeSet> {
        if prev_id >= cur_id {
            return Err(Error::InvalidArgument(format!(
                "delta requires prev < cur, got {prev_id} >= {cur_id}"
            )));
        }
        let lo = self.snapshot(prev_id)?.time_upper_bound;
        let hi = self.snapshot(cur_id)?.time_upper_bound;
        let records = self.records_through(cur_id)?;
        Ok(DeltaNodeSet {
            prev_id,
            cur_id,
            nodes: delta_nodes_in_window(&records, lo, hi),
        })
    }
}

/// Write to `<path>.tmp` and rename over `path` once the write succeeded.
pub fn write_atomically<F>(path: &Path, write: F) -> Result<()>
where
    F: FnOnce(&mut BufWriter<fs::File>) -> std::io::Result<()>,
{
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    let file = fs::File::create(&tmp).map_err(|e| Error::io(&tmp, e))?;
    let mut w = BufWriter::new(file);
    write(&mut w)
        .and_then(|_| w.flush())
        .map_err(|e| Error::io(&tmp, e))?;
    drop(w);
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::txgraph::record::Asset;

    fn tx(ts: i64, a: &str, b: &str) -> TransactionRecord {
        TransactionRecord::new(ts, a, b, 1.0, Asset::Native)
    }

    #[test]
    fn three_valid_rows() {
        let dir = tempfile::tempdir().unwrap();
        let mut log = EdgeLog::open(dir.path()).unwrap();
        let rep = log
            .ingest_records(vec![tx(1, "a", "b"), tx(2, "c", "d"), tx(3, "a", "e")], 1)
            .unwrap();
        assert_eq!(rep.new_edges, 3);
        assert!(rep.new_nodes <= 6);
        assert_eq!(rep.new_nodes, 5);
        assert!(rep.rejected.is_empty());
        assert_eq!(log.latest().unwrap().time_upper_bound, 3);
    }

    #[test]
    fn negative_amount_is_rejected_not_fatal() {
        let dir = tempfile::tempdir().unwrap();
        let mut log = EdgeLog::open(dir.path()).unwrap();
        let csv = "timestamp,from,to,amount,asset\n1,a,b,-5,ETH\n2,a,b,5,ETH\n";
        let rep = log.ingest_csv(csv.as_bytes(), 1).unwrap();
        assert_eq!(rep.rejected.len(), 1);
        assert_eq!(rep.rejected[0].line, 2);
        assert_eq!(rep.new_edges, 1);
    }

    #[test]
    fn snapshot_ids_must_be_consecutive() {
        let dir = tempfile::tempdir().unwrap();
        let mut log = EdgeLog::open(dir.path()).unwrap();
        assert!(log.ingest_records(vec![tx(1, "a", "b")], 2).is_err());
        log.ingest_records(vec![tx(1, "a", "b")], 1).unwrap();
        assert!(log.ingest_records(vec![tx(5, "a", "b")], 1).is_err());
    }

    #[test]
    fn stale_timestamps_rejected_in_later_snapshots() {
        let dir = tempfile::tempdir().unwrap();
        let mut log = EdgeLog::open(dir.path()).unwrap();
        log.ingest_records(vec![tx(10, "a", "b")], 1).unwrap();
        let rep = log.ingest_records(vec![tx(10, "a", "c"), tx(11, "c", "d")], 2).unwrap();
        assert_eq!(rep.rejected.len(), 1);
        assert_eq!(rep.new_edges, 1);
        assert_eq!(rep.new_nodes, 2);
    }

    #[test]
    fn reopen_sees_same_snapshots() {
        let dir = tempfile::tempdir().unwrap();
        {
            let mut log = EdgeLog::open(dir.path()).unwrap();
            log.ingest_records(vec![tx(1, "a", "b")], 1).unwrap();
            log.ingest_records(vec![tx(2, "b", "c")], 2).unwrap();
        }
        let log = EdgeLog::open(dir.path()).unwrap();
        assert_eq!(log.snapshots().len(), 2);
        assert_eq!(log.records_through(2).unwrap().len(), 2);
        let s2 = log.snapshot(2).unwrap();
        assert_eq!((s2.node_count, s2.edge_count), (3, 2));
    }

    #[test]
    fn delta_nodes_window() {
        let dir = tempfile::tempdir().unwrap();
        let mut log = EdgeLog::open(dir.path()).unwrap();
        log.ingest_records(vec![tx(1, "a", "b")], 1).unwrap();
        log.ingest_records(Vec::new(), 2).unwrap();
        log.ingest_records(vec![tx(7, "a", "z")], 3).unwrap();
        assert!(log.compute_delta_nodes(1, 2).unwrap().is_empty());
        let d = log.compute_delta_nodes(2, 3).unwrap();
        let names: Vec<&str> = d.nodes.iter().map(|a| &**a).collect();
        assert_eq!(names, ["a", "z"]);
        assert!(log.compute_delta_nodes(3, 3).is_err());
        assert!(log.compute_delta_nodes(3, 1).is_err());
        assert!(matches!(log.compute_delta_nodes(1, 9), Err(Error::MissingSnapshot(9))));
    }
}
