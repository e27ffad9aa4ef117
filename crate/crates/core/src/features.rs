//! Behavioral feature extraction and model-row assembly.
//!
//! Each address gets two behavioral vectors, one over native-asset transfers
//! and one over token transfers. Records are put in canonical order before
//! any accumulation, so the output does not depend on input order. Amounts
//! are kept in raw base units; the classifier applies `log1p` itself.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::io::{BufRead, Write};

use crate::txgraph::TransactionRecord;
use crate::{Addr, Error, Result};

pub const SCHEMA_VERSION: &str = "features-v1";

const SECONDS_PER_DAY: i64 = 86_400;

/// Feature names, in vector order, shared by both buckets.
pub const BEHAVIORAL_FIELDS: [&str; 17] = [
    "in_tx_count",
    "out_tx_count",
    "in_amount_sum",
    "out_amount_sum",
    "in_amount_mean",
    "out_amount_mean",
    "in_amount_max",
    "out_amount_max",
    "in_amount_std",
    "out_amount_std",
    "unique_senders",
    "unique_receivers",
    "active_days",
    "lifetime_seconds",
    "mean_inter_tx_gap_seconds",
    "in_out_count_ratio",
    "in_out_amount_ratio",
];

/// Extra field of the token bucket.
pub const TOKEN_EXTRA_FIELD: &str = "distinct_tokens";

/// Offsets (within a bucket) of amount-denominated fields.
pub const AMOUNT_FIELD_OFFSETS: [usize; 8] = [2, 3, 4, 5, 6, 7, 8, 9];

/// `(in, out)` field pairs that swap when an address's direction is reversed.
pub const IN_OUT_PAIRS: [(usize, usize); 6] = [(0, 1), (2, 3), (4, 5), (6, 7), (8, 9), (10, 11)];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Bucket {
    Native,
    Token,
}

impl Bucket {
    pub fn len(self) -> usize {
        match self {
            Bucket::Native => BEHAVIORAL_FIELDS.len(),
            Bucket::Token => BEHAVIORAL_FIELDS.len() + 1,
        }
    }

    pub fn prefix(self) -> &'static str {
        match self {
            Bucket::Native => "native",
            Bucket::Token => "token",
        }
    }

    pub fn accepts(self, r: &TransactionRecord) -> bool {
        match self {
            Bucket::Native => r.asset.is_native(),
            Bucket::Token => !r.asset.is_native(),
        }
    }

    pub fn field_names(self) -> Vec<String> {
        let mut names: Vec<String> = BEHAVIORAL_FIELDS
            .iter()
            .map(|f| format!("{}_{f}", self.prefix()))
            .collect();
        if self == Bucket::Token {
            names.push(format!("token_{TOKEN_EXTRA_FIELD}"));
        }
        names
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BehavioralVector {
    pub bucket: Bucket,
    pub values: Vec<f64>,
}

impl BehavioralVector {
    pub fn zeros(bucket: Bucket) -> Self {
        BehavioralVector {
            bucket,
            values: vec![0.0; bucket.len()],
        }
    }
}

fn mean_std_max(xs: &[f64]) -> (f64, f64, f64, f64) {
    if xs.is_empty() {
        return (0.0, 0.0, 0.0, 0.0);
    }
    let n = xs.len() as f64;
    let sum: f64 = xs.iter().sum();
    let mean = sum / n;
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    let max = xs.iter().cloned().fold(f64::MIN, f64::max);
    (sum, mean, var.sqrt(), max)
}

/// Statistics over the records of `address` that fall in `bucket`.
/// Records not touching `address` or outside the bucket are ignored.
pub fn extract_behavioral<'a, I>(address: &str, records: I, bucket: Bucket) -> BehavioralVector
where
    I: IntoIterator<Item = &'a TransactionRecord>,
{
    let mut mine: Vec<&TransactionRecord> = records
        .into_iter()
        .filter(|r| bucket.accepts(r) && (&*r.from == address || &*r.to == address))
        .collect();
    if mine.is_empty() {
        return BehavioralVector::zeros(bucket);
    }
    mine.sort_by(|a, b| a.canonical_cmp(b));

    let incoming: Vec<&TransactionRecord> = mine.iter().copied().filter(|r| &*r.to == address).collect();
    let outgoing: Vec<&TransactionRecord> = mine.iter().copied().filter(|r| &*r.from == address).collect();
    let in_amounts: Vec<f64> = incoming.iter().map(|r| r.amount).collect();
    let out_amounts: Vec<f64> = outgoing.iter().map(|r| r.amount).collect();
    let (in_sum, in_mean, in_std, in_max) = mean_std_max(&in_amounts);
    let (out_sum, out_mean, out_std, out_max) = mean_std_max(&out_amounts);
    let senders: HashSet<&str> = incoming.iter().map(|r| &*r.from).collect();
    let receivers: HashSet<&str> = outgoing.iter().map(|r| &*r.to).collect();
    let days: HashSet<i64> = mine.iter().map(|r| r.timestamp.div_euclid(SECONDS_PER_DAY)).collect();
    let first = mine.first().expect("non-empty").timestamp;
    let last = mine.last().expect("non-empty").timestamp;
    let lifetime = (last - first) as f64;
    let gap = if mine.len() > 1 {
        lifetime / (mine.len() - 1) as f64
    } else {
        0.0
    };
    let n_in = incoming.len() as f64;
    let n_out = outgoing.len() as f64;

    let mut values = vec![
        n_in,
        n_out,
        in_sum,
        out_sum,
        in_mean,
        out_mean,
        in_max,
        out_max,
        in_std,
        out_std,
        senders.len() as f64,
        receivers.len() as f64,
        days.len() as f64,
        lifetime,
        gap,
        (n_in + 1.0) / (n_out + 1.0),
        (in_sum + 1.0) / (out_sum + 1.0),
    ];
    if bucket == Bucket::Token {
        let tokens: HashSet<&crate::txgraph::Asset> = mine.iter().map(|r| &r.asset).collect();
        values.push(tokens.len() as f64);
    }
    BehavioralVector { bucket, values }
}

/// Both buckets for every address in `addresses`, grouping records once.
pub fn extract_all(records: &[TransactionRecord], addresses: &[Addr]) -> BTreeMap<Addr, (BehavioralVector, BehavioralVector)> {
    let mut by_addr: HashMap<&str, Vec<&TransactionRecord>> = HashMap::new();
    for r in records {
        by_addr.entry(&r.from).or_default().push(r);
        if r.to != r.from {
            by_addr.entry(&r.to).or_default().push(r);
        }
    }
    addresses
        .iter()
        .map(|a| {
            let recs = by_addr.get(&**a).map(Vec::as_slice).unwrap_or(&[]);
            let native = extract_behavioral(a, recs.iter().copied(), Bucket::Native);
            let token = extract_behavioral(a, recs.iter().copied(), Bucket::Token);
            (a.clone(), (native, token))
        })
        .collect()
}

/// `[native ‖ token ‖ embedding(d) ‖ embedding_present]`
#[derive(Debug, Clone, PartialEq)]
pub struct AssembledRow {
    pub address: Addr,
    pub values: Vec<f64>,
    pub label: Option<u8>,
}

pub fn row_len(dim: usize) -> usize {
    Bucket::Native.len() + Bucket::Token.len() + dim + 1
}

pub fn column_names(dim: usize) -> Vec<String> {
    let mut cols = Bucket::Native.field_names();
    cols.extend(Bucket::Token.field_names());
    cols.extend((0..dim).map(|i| format!("emb_{i}")));
    cols.push("emb_present".into());
    cols
}

/// Column indices of amount-denominated features.
pub fn amount_columns() -> Vec<usize> {
    let token_base = Bucket::Native.len();
    AMOUNT_FIELD_OFFSETS
        .iter()
        .copied()
        .chain(AMOUNT_FIELD_OFFSETS.iter().map(|o| token_base + o))
        .collect()
}

/// Column range of the behavioral features.
pub fn behavioral_columns() -> std::ops::Range<usize> {
    0..Bucket::Native.len() + Bucket::Token.len()
}

/// Column range of the embedding plus its presence flag.
pub fn embedding_columns(dim: usize) -> std::ops::Range<usize> {
    let start = Bucket::Native.len() + Bucket::Token.len();
    start..start + dim + 1
}

pub fn assemble(
    address: &Addr,
    native: &BehavioralVector,
    token: &BehavioralVector,
    embedding: Option<&[f32]>,
    dim: usize,
) -> Result<AssembledRow> {
    let check = |what: &str, expected: usize, got: usize| {
        if expected == got {
            Ok(())
        } else {
            Err(Error::SchemaMismatch {
                expected: format!("{what} of length {expected}"),
                got: got.to_string(),
            })
        }
    };
    check("native vector", Bucket::Native.len(), native.values.len())?;
    check("token vector", Bucket::Token.len(), token.values.len())?;
    if let Some(e) = embedding {
        check("embedding", dim, e.len())?;
    }
    let mut values = Vec::with_capacity(row_len(dim));
    values.extend_from_slice(&native.values);
    values.extend_from_slice(&token.values);
    match embedding {
        Some(e) => {
            values.extend(e.iter().map(|&x| x as f64));
            values.push(1.0);
        }
        None => {
            values.extend(std::iter::repeat(0.0).take(dim + 1));
        }
    }
    Ok(AssembledRow {
        address: address.clone(),
        values,
        label: None,
    })
}

fn header_line(dim: usize) -> String {
    format!("address@{SCHEMA_VERSION},{}", column_names(dim).join(","))
}

/// Feature CSV: a versioned header naming every column, then one row per address.
pub fn write_feature_csv<W: Write>(mut w: W, rows: &[AssembledRow], dim: usize) -> Result<()> {
    let io = |e| Error::io("feature file", e);
    writeln!(w, "{}", header_line(dim)).map_err(io)?;
    for r in rows {
        if r.values.len() != row_len(dim) {
            return Err(Error::SchemaMismatch {
                expected: format!("{} values", row_len(dim)),
                got: format!("{} for {}", r.values.len(), r.address),
            });
        }
        w.write_all(r.address.as_bytes()).map_err(io)?;
        for v in &r.values {
            write!(w, ",{v}").map_err(io)?;
        }
        w.write_all(b"\n").map_err(io)?;
    }
    Ok(())
}

/// Returns the embedding dimension encoded in the header and the rows.
pub fn read_feature_csv<R: BufRead>(r: R) -> Result<(usize, Vec<AssembledRow>)> {
    let mut lines = r.lines();
    let header = lines
        .next()
        .ok_or_else(|| Error::malformed("feature file", "missing header"))?
        .map_err(|e| Error::io("feature file", e))?;
    let n_cols = header.split(',').count();
    let fixed = Bucket::Native.len() + Bucket::Token.len() + 2;
    if n_cols < fixed {
        return Err(Error::SchemaMismatch {
            expected: header_line(0),
            got: header,
        });
    }
    let dim = n_cols - fixed;
    if header != header_line(dim) {
        return Err(Error::SchemaMismatch {
            expected: header_line(dim),
            got: header,
        });
    }
    let mut rows = Vec::new();
    for (i, line) in lines.enumerate() {
        let line = line.map_err(|e| Error::io("feature file", e))?;
        if line.is_empty() {
            continue;
        }
        let ctx = || format!("feature file line {}", i + 2);
        let mut parts = line.split(',');
        let address = Addr::from(parts.next().unwrap_or_default());
        let values = parts
            .map(|p| p.parse::<f64>().map_err(|e| Error::malformed(ctx(), e.to_string())))
            .collect::<Result<Vec<f64>>>()?;
        if values.len() != row_len(dim) {
            return Err(Error::malformed(ctx(), format!("expected {} values, got {}", row_len(dim), values.len())));
        }
        rows.push(AssembledRow {
            address,
            values,
            label: None,
        });
    }
    Ok((dim, rows))
}
