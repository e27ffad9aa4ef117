use std::fmt;
use std::io::Read;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::Addr;

/// Header of the edge-list CSV.
pub const EDGE_CSV_HEADER: &str = "timestamp,from,to,amount,asset";

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Asset {
    Native,
    Token(String),
}

impl Asset {
    pub fn is_native(&self) -> bool {
        matches!(self, Asset::Native)
    }
}

impl fmt::Display for Asset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Asset::Native => f.write_str("ETH"),
            Asset::Token(id) => write!(f, "ERC20:{id}"),
        }
    }
}

impl FromStr for Asset {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s == "ETH" {
            return Ok(Asset::Native);
        }
        match s.strip_prefix("ERC20:") {
            Some(id) if !id.is_empty() && !id.contains(char::is_whitespace) => {
                Ok(Asset::Token(id.to_string()))
            }
            _ => Err(format!("unknown asset tag {s:?}")),
        }
    }
}

/// One directed value transfer.
#[derive(Debug, Clone, PartialEq)]
pub struct TransactionRecord {
    pub timestamp: i64,
    pub from: Addr,
    pub to: Addr,
    /// Base units, non-negative.
    pub amount: f64,
    pub asset: Asset,
}

/// Address characters that would collide with the partition and walk formats.
fn address_problem(addr: &str) -> Option<&'static str> {
    if addr.is_empty() {
        Some("empty address")
    } else if addr
        .chars()
        .any(|c| c.is_whitespace() || c == '|' || c == ':' || c == ',')
    {
        Some("address contains a reserved character")
    } else {
        None
    }
}

impl TransactionRecord {
    pub fn new(timestamp: i64, from: &str, to: &str, amount: f64, asset: Asset) -> Self {
        TransactionRecord {
            timestamp,
            from: Addr::from(from),
            to: Addr::from(to),
            amount,
            asset,
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.timestamp <= 0 {
            return Err(format!("timestamp must be positive, got {}", self.timestamp));
        }
        if let Some(p) = address_problem(&self.from) {
            return Err(format!("from: {p}"));
        }
        if let Some(p) = address_problem(&self.to) {
            return Err(format!("to: {p}"));
        }
        if !self.amount.is_finite() || self.amount < 0.0 {
            return Err(format!("amount must be finite and non-negative, got {}", self.amount));
        }
        Ok(())
    }

    /// Parse the five CSV fields of one row and validate them.
    pub fn from_fields(fields: &[&str]) -> Result<Self, String> {
        if fields.len() != 5 {
            return Err(format!("expected 5 fields, got {}", fields.len()));
        }
        let timestamp = fields[0]
            .trim()
            .parse::<i64>()
            .map_err(|e| format!("timestamp: {e}"))?;
        let amount = fields[3]
            .trim()
            .parse::<f64>()
            .map_err(|e| format!("amount: {e}"))?;
        let asset = fields[4].trim().parse::<Asset>()?;
        let rec = TransactionRecord::new(timestamp, fields[1].trim(), fields[2].trim(), amount, asset);
        rec.validate()?;
        Ok(rec)
    }

    pub fn to_csv_line(&self) -> String {
        format!(
            "{},{},{},{},{}",
            self.timestamp, self.from, self.to, self.amount, self.asset
        )
    }

    /// Total order used wherever record order must not matter.
    pub fn canonical_cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.timestamp
            .cmp(&other.timestamp)
            .then_with(|| self.from.cmp(&other.from))
            .then_with(|| self.to.cmp(&other.to))
            .then_with(|| self.amount.total_cmp(&other.amount))
            .then_with(|| self.asset.cmp(&other.asset))
    }
}

/// A parsed CSV row: 1-based line number plus the record or the reason it was rejected.
pub type ParsedRow = (u64, Result<TransactionRecord, String>);

/// Read an edge-list CSV. The header must match [`EDGE_CSV_HEADER`]; every
/// later row is returned individually so that one bad line never aborts the batch.
pub fn read_edge_csv<R: Read>(reader: R) -> Result<Vec<ParsedRow>, String> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_reader(reader);
    let header = rdr.headers().map_err(|e| e.to_string())?.clone();
    let header: Vec<&str> = header.iter().map(str::trim).collect();
    if header.join(",") != EDGE_CSV_HEADER {
        return Err(format!(
            "bad header {:?}, expected {EDGE_CSV_HEADER:?}",
            header.join(",")
        ));
    }
    let mut rows = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let line = rec
            .as_ref()
            .ok()
            .and_then(|r| r.position().map(|p| p.line()))
            .unwrap_or(i as u64 + 2);
        let parsed = match rec {
            Ok(r) => {
                let fields: Vec<&str> = r.iter().collect();
                TransactionRecord::from_fields(&fields)
            }
            Err(e) => Err(e.to_string()),
        };
        rows.push((line, parsed));
    }
    Ok(rows)
}

pub fn write_edge_csv<W: std::io::Write>(mut w: W, records: &[TransactionRecord]) -> std::io::Result<()> {
    writeln!(w, "{EDGE_CSV_HEADER}")?;
    for r in records {
        writeln!(w, "{}", r.to_csv_line())?;
    }
    Ok(())
}
