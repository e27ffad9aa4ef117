//! Model checkpoint format: one JSON metadata line, then the input and output
//! matrices as little-endian f64 (vocabulary order, row-major).

use std::collections::HashMap;
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use super::{SgnsHyper, SgnsModel};
use crate::{Addr, Error, Result};

const FORMAT: &str = "sgns-checkpoint-v1";

#[derive(Serialize, Deserialize)]
struct Meta {
    format: String,
    hyper: SgnsHyper,
    snapshot_id: u64,
    words: Vec<Addr>,
    counts: Vec<u64>,
}

impl SgnsModel {
    pub fn save<W: Write>(&self, mut w: W) -> Result<()> {
        let meta = Meta {
            format: FORMAT.into(),
            hyper: self.hyper,
            snapshot_id: self.snapshot_id,
            words: self.words.clone(),
            counts: self.counts.clone(),
        };
        let io = |e| Error::io("model checkpoint", e);
        serde_json::to_writer(&mut w, &meta)?;
        w.write_all(b"\n").map_err(io)?;
        for x in self.input.iter().chain(&self.output) {
            w.write_all(&x.to_le_bytes()).map_err(io)?;
        }
        w.flush().map_err(io)
    }

    pub fn load<R: BufRead>(mut r: R) -> Result<Self> {
        let io = |e| Error::io("model checkpoint", e);
        let mut line = String::new();
        r.read_line(&mut line).map_err(io)?;
        let meta: Meta = serde_json::from_str(line.trim_end())?;
        if meta.format != FORMAT {
            return Err(Error::SchemaMismatch {
                expected: FORMAT.into(),
                got: meta.format,
            });
        }
        if meta.words.len() != meta.counts.len() {
            return Err(Error::malformed("model checkpoint", "words and counts differ in length"));
        }
        let n = meta.words.len() * meta.hyper.dim;
        let mut read_matrix = || -> Result<Vec<f64>> {
            let mut bytes = vec![0u8; n * 8];
            r.read_exact(&mut bytes).map_err(io)?;
            Ok(bytes
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
                .collect())
        };
        let input = read_matrix()?;
        let output = read_matrix()?;
        let index: HashMap<Addr, usize> = meta.words.iter().cloned().enumerate().map(|(i, w)| (w, i)).collect();
        Ok(SgnsModel {
            hyper: meta.hyper,
            words: meta.words,
            index,
            counts: meta.counts,
            input,
            output,
            snapshot_id: meta.snapshot_id,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::walkgen::{Walk, WalkCorpus};

    #[test]
    fn checkpoint_round_trip() {
        let walks = vec![Walk {
            source: "a".into(),
            index: 0,
            nodes: vec!["a".into(), "b".into(), "c".into()],
        }];
        let h = SgnsHyper { dim: 4, ..SgnsHyper::new(1) };
        let m = SgnsModel::bootstrap_train(&WalkCorpus::from_walks(walks), &h, 2).unwrap();
        let mut buf = Vec::new();
        m.save(&mut buf).unwrap();
        let back = SgnsModel::load(&buf[..]).unwrap();
        assert_eq!(back, m);
        assert!(SgnsModel::load(&buf[..buf.len() - 1]).is_err());
    }
}
