//! Transfer-log ingestion: CSV parsing, composite-key dedup, ordering, capping,
//! label joins, and dataset quality checks.
//!
//! Input CSVs carry one transfer per row. Rows are grouped per token, merged
//! across files, deduplicated on the composite key `(tx_hash, from_addr,
//! to_addr, quantity, timestamp)`, sorted by the total record order, and kept
//! to the earliest `cap` records per token.

pub mod quantity;

use chrono::{DateTime, NaiveDateTime};
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};
use std::str::FromStr;

pub use quantity::{Quantity, QuantityKey, QuantityMode, QuantityParseError};

/// Default per-token record cap.
pub const DEFAULT_CAP: usize = 5000;

/// Supervision label attached to a token.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize, schemars::JsonSchema)]
#[serde(rename_all = "snake_case")]
pub enum Label {
    HighRisk,
    NonHighRisk,
    /// No label on file; treated as `non_high_risk` when training.
    Unknown,
}

impl Label {
    /// Binary target used by the classifiers; `unknown` merges into the negative class.
    pub fn binarized(self) -> u8 {
        u8::from(self == Label::HighRisk)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Label::HighRisk => "high_risk",
            Label::NonHighRisk => "non_high_risk",
            Label::Unknown => "unknown",
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Label {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "high_risk" | "high-risk" | "1" => Ok(Label::HighRisk),
            "non_high_risk" | "non-high-risk" | "0" => Ok(Label::NonHighRisk),
            "unknown" | "" => Ok(Label::Unknown),
            other => Err(format!("unrecognized label {other:?}")),
        }
    }
}

/// One token transfer event.
#[derive(Debug, Clone, PartialEq)]
pub struct TransferRecord {
    /// Token contract address, lowercase hex.
    pub token_address: String,
    /// Transaction hash, lowercase hex.
    pub tx_hash: String,
    pub from_addr: String,
    pub to_addr: String,
    pub quantity: Quantity,
    /// Unix seconds, UTC, strictly positive.
    pub timestamp: i64,
}

/// Borrowing view of the dedup composite key.
pub type CompositeKey<'a> = (&'a str, &'a str, &'a str, QuantityKey, i64);

impl TransferRecord {
    /// Identity under deduplication: `(tx_hash, from, to, quantity, timestamp)`.
    pub fn composite_key(&self) -> CompositeKey<'_> {
        (
            &self.tx_hash,
            &self.from_addr,
            &self.to_addr,
            self.quantity.key(),
            self.timestamp,
        )
    }

    /// Total record order: timestamp, then tx hash, from, to, quantity key.
    pub fn order_key(&self) -> (i64, &str, &str, &str, QuantityKey) {
        (
            self.timestamp,
            &self.tx_hash,
            &self.from_addr,
            &self.to_addr,
            self.quantity.key(),
        )
    }
}

/// Per-token dataset after merge, dedup, ordering, and capping.
#[derive(Debug, Clone, PartialEq)]
pub struct TokenDataset {
    pub token_address: String,
    /// Sorted by the total record order; unique composite keys; `len() <= cap`.
    pub records: Vec<TransferRecord>,
    pub label: Label,
    pub cap: usize,
}

impl TokenDataset {
    /// First and last timestamps, if any records exist.
    pub fn span(&self) -> Option<(i64, i64)> {
        match (self.records.first(), self.records.last()) {
            (Some(a), Some(b)) => Some((a.timestamp, b.timestamp)),
            _ => None,
        }
    }
}

/// Column-name mapping from an input CSV header to the canonical fields.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq, Eq, schemars::JsonSchema)]
#[serde(default)]
pub struct CsvSchema {
    pub token_address: String,
    pub tx_hash: String,
    pub from: String,
    pub to: String,
    pub quantity: String,
    pub timestamp: String,
}

impl Default for CsvSchema {
    fn default() -> Self {
        Self {
            token_address: "token_address".into(),
            tx_hash: "tx_hash".into(),
            from: "from".into(),
            to: "to".into(),
            quantity: "quantity".into(),
            timestamp: "timestamp".into(),
        }
    }
}

/// A rejected input row: 1-based data-row number plus the reason.
#[derive(Debug, Clone, Serialize)]
pub struct RowError {
    pub row: usize,
    pub reason: String,
}

/// Result of parsing one CSV: accepted records plus per-row rejections.
#[derive(Debug, Default)]
pub struct ParsedCsv {
    pub records: Vec<TransferRecord>,
    pub row_errors: Vec<RowError>,
}

/// File-level ingestion failures. Row-level problems are collected as
/// [`RowError`]s instead of aborting the file.
#[derive(Debug, thiserror::Error)]
pub enum IngestError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("{path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },
    #[error("{path}: required column {column:?} not found in header")]
    MissingColumn { path: PathBuf, column: String },
    #[error("{path}: no data rows")]
    EmptyFile { path: PathBuf },
    #[error("{path} row {row}: invalid label: {message}")]
    InvalidLabel { path: PathBuf, row: usize, message: String },
}

/// Parses one input CSV per the given schema and quantity mode.
///
/// Malformed rows (bad quantity or timestamp, empty fields, short rows) are
/// excluded and reported; a file with a valid header but zero data rows is an
/// error.
pub fn parse_csv(path: &Path, schema: &CsvSchema, mode: QuantityMode) -> Result<ParsedCsv, IngestError> {
    let file = fs::File::open(path).map_err(|source| IngestError::Io { path: path.into(), source })?;
    parse_csv_reader(file, schema, mode, path)
}

/// Reader-based variant of [`parse_csv`]; `origin` is used in error messages.
pub fn parse_csv_reader<R: io::Read>(
    reader: R,
    schema: &CsvSchema,
    mode: QuantityMode,
    origin: &Path,
) -> Result<ParsedCsv, IngestError> {
    let mut rdr = csv::ReaderBuilder::new().flexible(true).from_reader(reader);
    let headers = rdr
        .headers()
        .map_err(|source| IngestError::Csv { path: origin.into(), source })?
        .clone();
    if headers.is_empty() || (headers.len() == 1 && headers[0].trim().is_empty()) {
        return Err(IngestError::EmptyFile { path: origin.into() });
    }
    let col = |name: &str| -> Result<usize, IngestError> {
        headers
            .iter()
            .position(|h| h.trim() == name)
            .ok_or_else(|| IngestError::MissingColumn { path: origin.into(), column: name.to_string() })
    };
    let idx_token = col(&schema.token_address)?;
    let idx_tx = col(&schema.tx_hash)?;
    let idx_from = col(&schema.from)?;
    let idx_to = col(&schema.to)?;
    let idx_qty = col(&schema.quantity)?;
    let idx_ts = col(&schema.timestamp)?;

    let mut out = ParsedCsv::default();
    let mut data_rows = 0usize;
    for (i, row) in rdr.records().enumerate() {
        let row_no = i + 1;
        data_rows += 1;
        let row = match row {
            Ok(r) => r,
            Err(e) => {
                out.row_errors.push(RowError { row: row_no, reason: e.to_string() });
                continue;
            }
        };
        match parse_row(&row, row_no, idx_token, idx_tx, idx_from, idx_to, idx_qty, idx_ts, mode) {
            Ok(rec) => out.records.push(rec),
            Err(err) => out.row_errors.push(err),
        }
    }
    if data_rows == 0 {
        return Err(IngestError::EmptyFile { path: origin.into() });
    }
    Ok(out)
}

#[allow(clippy::too_many_arguments)]
fn parse_row(
    row: &csv::StringRecord,
    row_no: usize,
    idx_token: usize,
    idx_tx: usize,
    idx_from: usize,
    idx_to: usize,
    idx_qty: usize,
    idx_ts: usize,
    mode: QuantityMode,
) -> Result<TransferRecord, RowError> {
    let field = |idx: usize, name: &str| -> Result<&str, RowError> {
        let v = row.get(idx).map(str::trim).unwrap_or("");
        if v.is_empty() {
            Err(RowError { row: row_no, reason: format!("missing field {name:?}") })
        } else {
            Ok(v)
        }
    };
    let token_address = field(idx_token, "token_address")?.to_ascii_lowercase();
    let tx_hash = field(idx_tx, "tx_hash")?.to_ascii_lowercase();
    let from_addr = field(idx_from, "from")?.to_ascii_lowercase();
    let to_addr = field(idx_to, "to")?.to_ascii_lowercase();
    let qty_raw = field(idx_qty, "quantity")?;
    let ts_raw = field(idx_ts, "timestamp")?;
    let quantity = Quantity::parse(qty_raw, mode)
        .map_err(|e| RowError { row: row_no, reason: format!("quantity: {e}") })?;
    let timestamp = parse_timestamp(ts_raw)
        .ok_or_else(|| RowError { row: row_no, reason: format!("timestamp: unparseable {ts_raw:?}") })?;
    if timestamp <= 0 {
        return Err(RowError { row: row_no, reason: format!("timestamp: non-positive {timestamp}") });
    }
    Ok(TransferRecord { token_address, tx_hash, from_addr, to_addr, quantity, timestamp })
}

/// Accepts unix seconds or ISO-8601 (with or without offset); returns unix seconds UTC.
pub fn parse_timestamp(raw: &str) -> Option<i64> {
    let s = raw.trim();
    if let Ok(v) = s.parse::<i64>() {
        return Some(v);
    }
    if let Ok(dt) = DateTime::parse_from_rfc3339(s) {
        return Some(dt.timestamp());
    }
    for fmt in ["%Y-%m-%dT%H:%M:%S%.f", "%Y-%m-%d %H:%M:%S%.f"] {
        if let Ok(naive) = NaiveDateTime::parse_from_str(s, fmt) {
            return Some(naive.and_utc().timestamp());
        }
    }
    None
}

/// Merges record chunks, drops composite-key duplicates, and sorts by the
/// total record order. Output is independent of chunk order and idempotent.
pub fn merge_and_dedup(chunks: Vec<Vec<TransferRecord>>) -> Vec<TransferRecord> {
    let total: usize = chunks.iter().map(Vec::len).sum();
    let mut seen: HashSet<(String, String, String, QuantityKey, i64)> = HashSet::with_capacity(total);
    let mut out = Vec::with_capacity(total);
    for rec in chunks.into_iter().flatten() {
        let key = (
            rec.tx_hash.clone(),
            rec.from_addr.clone(),
            rec.to_addr.clone(),
            rec.quantity.key(),
            rec.timestamp,
        );
        if seen.insert(key) {
            out.push(rec);
        }
    }
    out.sort_by(|a, b| a.order_key().cmp(&b.order_key()));
    out
}

/// Keeps the earliest `cap` records of an already-ordered slice.
pub fn cap_window(mut records: Vec<TransferRecord>, cap: usize) -> Vec<TransferRecord> {
    debug_assert!(records.windows(2).all(|w| w[0].order_key() <= w[1].order_key()));
    records.truncate(cap);
    records
}

/// Groups records by token address, preserving record order within each group.
pub fn group_by_token(records: Vec<TransferRecord>) -> BTreeMap<String, Vec<TransferRecord>> {
    let mut out: BTreeMap<String, Vec<TransferRecord>> = BTreeMap::new();
    for rec in records {
        out.entry(rec.token_address.clone()).or_default().push(rec);
    }
    out
}

/// Full ingestion: merge chunks, group per token, dedup + order + cap each
/// group, and join labels (absent entry means `unknown`).
pub fn build_datasets(
    chunks: Vec<Vec<TransferRecord>>,
    labels: &BTreeMap<String, Label>,
    cap: usize,
) -> Vec<TokenDataset> {
    group_by_token(chunks.into_iter().flatten().collect())
        .into_iter()
        .map(|(token_address, recs)| {
            let records = cap_window(merge_and_dedup(vec![recs]), cap);
            let label = labels.get(&token_address).copied().unwrap_or(Label::Unknown);
            TokenDataset { token_address, records, label, cap }
        })
        .collect()
}

/// Per-token data quality findings.
#[derive(Debug, Clone, Serialize)]
pub struct QualityReport {
    pub token_address: String,
    pub record_count: usize,
    /// Indices of records with an empty required field or non-positive timestamp.
    pub missing_field_violations: Vec<usize>,
    /// Indices `i` where record `i` sorts before record `i - 1`.
    pub order_violations: Vec<usize>,
    pub label: Label,
    /// Present when the label needs an auditing note (currently: unlabeled tokens).
    pub label_note: Option<String>,
}

impl QualityReport {
    pub fn violation_count(&self) -> usize {
        self.missing_field_violations.len() + self.order_violations.len()
    }
}

/// Audits field presence, temporal order, and label status of a dataset.
pub fn consistency_check(dataset: &TokenDataset) -> QualityReport {
    let mut missing = Vec::new();
    let mut order = Vec::new();
    for (i, rec) in dataset.records.iter().enumerate() {
        let empty = rec.token_address.is_empty()
            || rec.tx_hash.is_empty()
            || rec.from_addr.is_empty()
            || rec.to_addr.is_empty();
        if empty || rec.timestamp <= 0 {
            missing.push(i);
        }
        if i > 0 && rec.order_key() < dataset.records[i - 1].order_key() {
            order.push(i);
        }
    }
    let label_note = (dataset.label == Label::Unknown)
        .then(|| "label unknown; treated as non_high_risk when training".to_string());
    QualityReport {
        token_address: dataset.token_address.clone(),
        record_count: dataset.records.len(),
        missing_field_violations: missing,
        order_violations: order,
        label: dataset.label,
        label_note,
    }
}

/// Row of the dataset summary table.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TokenSummary {
    pub token_address: String,
    pub records: usize,
    pub label: Label,
}

/// Corpus-level record-count statistics.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DatasetSummary {
    pub token_count: usize,
    pub total_records: usize,
    pub cap: usize,
    pub min_records: usize,
    pub median_records: f64,
    pub max_records: usize,
    pub tokens: Vec<TokenSummary>,
}

/// Summarizes per-token record counts (median of counts; even length averages the middle pair).
pub fn summarize(datasets: &[TokenDataset]) -> DatasetSummary {
    let mut counts: Vec<usize> = datasets.iter().map(|d| d.records.len()).collect();
    counts.sort_unstable();
    let median_records = if counts.is_empty() {
        0.0
    } else if counts.len() % 2 == 1 {
        counts[counts.len() / 2] as f64
    } else {
        (counts[counts.len() / 2 - 1] + counts[counts.len() / 2]) as f64 / 2.0
    };
    DatasetSummary {
        token_count: datasets.len(),
        total_records: counts.iter().sum(),
        cap: datasets.first().map_or(DEFAULT_CAP, |d| d.cap),
        min_records: counts.first().copied().unwrap_or(0),
        median_records,
        max_records: counts.last().copied().unwrap_or(0),
        tokens: datasets
            .iter()
            .map(|d| TokenSummary {
                token_address: d.token_address.clone(),
                records: d.records.len(),
                label: d.label,
            })
            .collect(),
    }
}

/// Writes a dataset back out in the canonical input column order. The written
/// file re-ingests to the identical dataset (quantities round-trip exactly).
pub fn write_normalized_csv(dataset: &TokenDataset, path: &Path) -> Result<(), IngestError> {
    let mut w = csv::Writer::from_path(path).map_err(|source| IngestError::Csv { path: path.into(), source })?;
    w.write_record(["token_address", "tx_hash", "from", "to", "quantity", "timestamp"])
        .map_err(|source| IngestError::Csv { path: path.into(), source })?;
    for r in &dataset.records {
        w.write_record([
            r.token_address.as_str(),
            r.tx_hash.as_str(),
            r.from_addr.as_str(),
            r.to_addr.as_str(),
            &r.quantity.to_string(),
            &r.timestamp.to_string(),
        ])
        .map_err(|source| IngestError::Csv { path: path.into(), source })?;
    }
    w.flush().map_err(|source| IngestError::Io { path: path.into(), source })?;
    Ok(())
}

/// Reads a label file (`token_address,label` CSV) into a lowercase-keyed map.
pub fn read_label_file(path: &Path) -> Result<BTreeMap<String, Label>, IngestError> {
    let mut rdr = csv::Reader::from_path(path).map_err(|source| IngestError::Csv { path: path.into(), source })?;
    let headers = rdr
        .headers()
        .map_err(|source| IngestError::Csv { path: path.into(), source })?
        .clone();
    let idx_token = headers
        .iter()
        .position(|h| h.trim() == "token_address")
        .ok_or_else(|| IngestError::MissingColumn { path: path.into(), column: "token_address".into() })?;
    let idx_label = headers
        .iter()
        .position(|h| h.trim() == "label")
        .ok_or_else(|| IngestError::MissingColumn { path: path.into(), column: "label".into() })?;
    let mut out = BTreeMap::new();
    for (i, row) in rdr.records().enumerate() {
        let row = row.map_err(|source| IngestError::Csv { path: path.into(), source })?;
        let token = row.get(idx_token).map(str::trim).unwrap_or("").to_ascii_lowercase();
        let raw = row.get(idx_label).map(str::trim).unwrap_or("");
        let label = Label::from_str(raw).map_err(|message| IngestError::InvalidLabel {
            path: path.into(),
            row: i + 1,
            message,
        })?;
        if !token.is_empty() {
            out.insert(token, label);
        }
    }
    Ok(out)
}
