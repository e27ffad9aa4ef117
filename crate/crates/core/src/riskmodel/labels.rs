use std::collections::BTreeMap;
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::{Addr, Error, Result};

pub const LABEL_CSV_HEADER: &str = "address,class,source";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RiskLabel {
    pub address: Addr,
    /// 0 = low risk, 1 = high risk.
    pub class: u8,
    pub source: String,
}

/// One class per address; when sources disagree the high-risk class wins.
pub fn resolve_labels<'a, I>(raw: I) -> BTreeMap<Addr, u8>
where
    I: IntoIterator<Item = &'a RiskLabel>,
{
    let mut out: BTreeMap<Addr, u8> = BTreeMap::new();
    for l in raw {
        let e = out.entry(l.address.clone()).or_insert(l.class);
        *e = (*e).max(l.class);
    }
    out
}

pub fn write_label_csv<W: Write>(mut w: W, labels: &[RiskLabel]) -> std::io::Result<()> {
    writeln!(w, "{LABEL_CSV_HEADER}")?;
    for l in labels {
        writeln!(w, "{},{},{}", l.address, l.class, l.source)?;
    }
    Ok(())
}

pub fn read_label_csv<R: BufRead>(r: R) -> Result<Vec<RiskLabel>> {
    let mut lines = r.lines();
    let header = lines
        .next()
        .ok_or_else(|| Error::malformed("label file", "missing header"))?
        .map_err(|e| Error::io("label file", e))?;
    if header.trim() != LABEL_CSV_HEADER {
        return Err(Error::SchemaMismatch {
            expected: LABEL_CSV_HEADER.into(),
            got: header,
        });
    }
    let mut out = Vec::new();
    for (i, line) in lines.enumerate() {
        let line = line.map_err(|e| Error::io("label file", e))?;
        if line.trim().is_empty() {
            continue;
        }
        let ctx = || format!("label file line {}", i + 2);
        let parts: Vec<&str> = line.splitn(3, ',').map(str::trim).collect();
        if parts.len() != 3 || parts[0].is_empty() {
            return Err(Error::malformed(ctx(), "expected address,class,source"));
        }
        let class = match parts[1] {
            "0" => 0,
            "1" => 1,
            other => return Err(Error::malformed(ctx(), format!("class must be 0 or 1, got {other:?}"))),
        };
        out.push(RiskLabel {
            address: Addr::from(parts[0]),
            class,
            source: parts[2].to_string(),
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn l(a: &str, c: u8, s: &str) -> RiskLabel {
        RiskLabel {
            address: a.into(),
            class: c,
            source: s.into(),
        }
    }

    #[test]
    fn high_risk_takes_precedence() {
        let r = resolve_labels(&[l("A", 0, "src1"), l("A", 1, "src2")]);
        assert_eq!(r[&Addr::from("A")], 1);
        let r = resolve_labels(&[l("A", 1, "src1"), l("A", 0, "src2")]);
        assert_eq!(r[&Addr::from("A")], 1);
        let r = resolve_labels(&[l("B", 0, "x")]);
        assert_eq!(r[&Addr::from("B")], 0);
    }

    #[test]
    fn idempotent() {
        let raw = vec![l("A", 0, "a"), l("A", 1, "b"), l("B", 0, "a"), l("C", 1, "c")];
        let once = resolve_labels(&raw);
        let again: Vec<RiskLabel> = once
            .iter()
            .map(|(a, c)| RiskLabel { address: a.clone(), class: *c, source: "resolved".into() })
            .collect();
        assert_eq!(resolve_labels(&again), once);
    }

    #[test]
    fn csv_round_trip() {
        let raw = vec![l("A", 0, "vendor"), l("B", 1, "internal")];
        let mut buf = Vec::new();
        write_label_csv(&mut buf, &raw).unwrap();
        assert_eq!(read_label_csv(&buf[..]).unwrap(), raw);
        assert!(read_label_csv("address,class,source\nA,2,x\n".as_bytes()).is_err());
        assert!(read_label_csv("addr,cls\n".as_bytes()).is_err());
    }
}
