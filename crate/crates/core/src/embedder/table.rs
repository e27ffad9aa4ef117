use std::collections::{BTreeMap, BTreeSet};
use std::io::{BufRead, Write};

use crate::{Addr, Error, Result};

/// Exported node vectors. Immutable once built; lookups of unknown nodes
/// return `None` rather than a default vector.
///
/// Text format: a header line `d=<int> snapshot=<int> count=<int>` followed
/// by one `address v1 ... vd` line per node, ascending by address, with every
/// component written to 9 significant digits (exact for f32).
#[derive(Debug, Clone, PartialEq, Default)]
pub struct EmbeddingTable {
    dim: usize,
    snapshot_id: u64,
    rows: BTreeMap<Addr, Vec<f32>>,
}

impl EmbeddingTable {
    pub fn from_rows<I>(dim: usize, snapshot_id: u64, rows: I) -> Result<Self>
    where
        I: IntoIterator<Item = (Addr, Vec<f32>)>,
    {
        let mut map = BTreeMap::new();
        for (addr, v) in rows {
            if v.len() != dim {
                return Err(Error::SchemaMismatch {
                    expected: format!("{dim} components"),
                    got: format!("{} for {addr}", v.len()),
                });
            }
            map.insert(addr, v);
        }
        Ok(EmbeddingTable {
            dim,
            snapshot_id,
            rows: map,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn snapshot_id(&self) -> u64 {
        self.snapshot_id
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn get(&self, node: &str) -> Option<&[f32]> {
        self.rows.get(node).map(Vec::as_slice)
    }

    pub fn contains(&self, node: &str) -> bool {
        self.rows.contains_key(node)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&Addr, &[f32])> {
        self.rows.iter().map(|(k, v)| (k, v.as_slice()))
    }

    /// Rows whose address is in `keep`.
    pub fn restrict(&self, keep: &BTreeSet<Addr>) -> EmbeddingTable {
        EmbeddingTable {
            dim: self.dim,
            snapshot_id: self.snapshot_id,
            rows: self
                .rows
                .iter()
                .filter(|(k, _)| keep.contains(*k))
                .map(|(k, v)| (k.clone(), v.clone()))
                .collect(),
        }
    }

    pub fn write_to<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "d={} snapshot={} count={}", self.dim, self.snapshot_id, self.rows.len())?;
        for (addr, v) in &self.rows {
            w.write_all(addr.as_bytes())?;
            for x in v {
                write!(w, " {x:.8e}")?;
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

    pub fn read_from<R: BufRead>(r: R) -> Result<Self> {
        let mut lines = r.lines();
        let header = lines
            .next()
            .ok_or_else(|| Error::malformed("embedding file", "missing header"))?
            .map_err(|e| Error::io("embedding file", e))?;
        let field = |name: &str| -> Result<u64> {
            header
                .split(' ')
                .find_map(|kv| kv.strip_prefix(name).and_then(|v| v.strip_prefix('=')))
                .ok_or_else(|| Error::malformed("embedding header", format!("missing {name}")))?
                .parse::<u64>()
                .map_err(|e| Error::malformed("embedding header", format!("{name}: {e}")))
        };
        let dim = field("d")? as usize;
        let snapshot_id = field("snapshot")?;
        let count = field("count")? as usize;
        let mut rows = Vec::with_capacity(count);
        for (i, line) in lines.enumerate() {
            let line = line.map_err(|e| Error::io("embedding file", e))?;
            if line.is_empty() {
                continue;
            }
            let ctx = || format!("embedding file line {}", i + 2);
            let mut parts = line.split(' ');
            let addr = parts.next().filter(|a| !a.is_empty()).ok_or_else(|| Error::malformed(ctx(), "empty address"))?;
            let v = parts
                .map(|p| p.parse::<f32>().map_err(|e| Error::malformed(ctx(), e.to_string())))
                .collect::<Result<Vec<f32>>>()?;
            rows.push((Addr::from(addr), v));
        }
        if rows.len() != count {
            return Err(Error::malformed(
                "embedding file",
                format!("header says {count} rows, found {}", rows.len()),
            ));
        }
        EmbeddingTable::from_rows(dim, snapshot_id, rows)
    }
}
