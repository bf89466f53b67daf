//! Evaluation: thresholded classification metrics, ranking metrics, and
//! warning lead time.
//!
//! AUC uses the rank-statistic form (average ranks over ties), PR-AUC uses
//! average precision (step integral over descending distinct score
//! thresholds). Lead time replays a token's history prefix by prefix and
//! reports the hours between the first warning and the rug-pull event.

use crate::features::{FeatureExtractor, FEATURE_NAMES};
use crate::ingest::{IngestError, TokenDataset};
use crate::models::{ModelError, TrainedModel};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::path::Path;

#[derive(Debug, thiserror::Error)]
pub enum MetricsError {
    #[error("invalid metric input: {0}")]
    InvalidInput(String),
}

/// Thresholded and ranking metrics for one model on one evaluation set.
///
/// `auc` and `pr_auc` are undefined (serialized as null) when only one class
/// is present; the thresholded metrics are still reported.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub auc: Option<f64>,
    pub pr_auc: Option<f64>,
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub tn: usize,
    /// Filled by evaluation runs that also replay lead times.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub lead_time_hours: Option<LeadTimeStats>,
}

fn validate_scored(y_true: &[u8], scores: &[f64]) -> Result<(), MetricsError> {
    if y_true.len() != scores.len() {
        return Err(MetricsError::InvalidInput(format!(
            "length mismatch: {} labels vs {} scores",
            y_true.len(),
            scores.len()
        )));
    }
    if y_true.is_empty() {
        return Err(MetricsError::InvalidInput("empty evaluation set".into()));
    }
    if let Some(l) = y_true.iter().find(|l| **l > 1) {
        return Err(MetricsError::InvalidInput(format!("label {l} is not binary")));
    }
    if let Some(s) = scores.iter().find(|s| !s.is_finite() || **s < 0.0 || **s > 1.0) {
        return Err(MetricsError::InvalidInput(format!("score {s} outside [0, 1]")));
    }
    Ok(())
}

/// Computes the full report at threshold `tau` (predicted positive means
/// score strictly above `tau`). Zero-denominator conventions: precision,
/// recall, and F1 are 0 when undefined.
pub fn classification_metrics(y_true: &[u8], scores: &[f64], tau: f64) -> Result<EvaluationReport, MetricsError> {
    validate_scored(y_true, scores)?;
    let mut tp = 0usize;
    let mut fp = 0usize;
    let mut fn_ = 0usize;
    let mut tn = 0usize;
    for (&t, &s) in y_true.iter().zip(scores) {
        match (t == 1, s > tau) {
            (true, true) => tp += 1,
            (false, true) => fp += 1,
            (true, false) => fn_ += 1,
            (false, false) => tn += 1,
        }
    }
    let n = y_true.len() as f64;
    let precision = if tp + fp == 0 { 0.0 } else { tp as f64 / (tp + fp) as f64 };
    let recall = if tp + fn_ == 0 { 0.0 } else { tp as f64 / (tp + fn_) as f64 };
    let f1 = if precision + recall == 0.0 { 0.0 } else { 2.0 * precision * recall / (precision + recall) };
    Ok(EvaluationReport {
        accuracy: (tp + tn) as f64 / n,
        precision,
        recall,
        f1,
        auc: roc_auc(y_true, scores),
        pr_auc: average_precision(y_true, scores),
        tp,
        fp,
        fn_,
        tn,
        lead_time_hours: None,
    })
}

/// ROC AUC by the rank statistic with average ranks over ties; `None` when a
/// class is absent.
pub fn roc_auc(y_true: &[u8], scores: &[f64]) -> Option<f64> {
    let n = y_true.len();
    let pos = y_true.iter().filter(|l| **l == 1).count();
    let neg = n - pos;
    if pos == 0 || neg == 0 {
        return None;
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut rank_sum_pos = 0.0;
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        // 1-based ranks i+1 ..= j+1 share the average rank.
        let avg_rank = (i + 1 + j + 1) as f64 / 2.0;
        for &idx in &order[i..=j] {
            if y_true[idx] == 1 {
                rank_sum_pos += avg_rank;
            }
        }
        i = j + 1;
    }
    let pos_f = pos as f64;
    Some((rank_sum_pos - pos_f * (pos_f + 1.0) / 2.0) / (pos_f * neg as f64))
}

/// Average precision: sum of `(recall_k - recall_{k-1}) * precision_k` over
/// descending distinct score thresholds (predicted positive means score at or
/// above the threshold); `None` when a class is absent.
pub fn average_precision(y_true: &[u8], scores: &[f64]) -> Option<f64> {
    let n = y_true.len();
    let total_pos = y_true.iter().filter(|l| **l == 1).count();
    if total_pos == 0 || total_pos == n {
        return None;
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let mut ap = 0.0;
    let mut tp = 0usize;
    let mut predicted = 0usize;
    let mut prev_recall = 0.0;
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        for &idx in &order[i..=j] {
            predicted += 1;
            if y_true[idx] == 1 {
                tp += 1;
            }
        }
        let recall = tp as f64 / total_pos as f64;
        let precision = tp as f64 / predicted as f64;
        ap += (recall - prev_recall) * precision;
        prev_recall = recall;
        i = j + 1;
    }
    Some(ap)
}

/// Summary statistics over realized lead times; all null when `n == 0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LeadTimeStats {
    pub n: usize,
    pub mean: Option<f64>,
    pub median: Option<f64>,
    pub min: Option<f64>,
    pub max: Option<f64>,
}

/// Aggregates lead-time hours.
pub fn lead_time_stats(hours: &[f64]) -> LeadTimeStats {
    if hours.is_empty() {
        return LeadTimeStats { n: 0, mean: None, median: None, min: None, max: None };
    }
    let mut sorted = hours.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    let median = if n % 2 == 1 { sorted[n / 2] } else { (sorted[n / 2 - 1] + sorted[n / 2]) / 2.0 };
    LeadTimeStats {
        n,
        mean: Some(sorted.iter().sum::<f64>() / n as f64),
        median: Some(median),
        min: Some(sorted[0]),
        max: Some(sorted[n - 1]),
    }
}

/// Prefix evaluation grid for lead-time replay.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum EvalGrid {
    /// Evaluate at the end of each active minute.
    #[default]
    PerMinute,
    /// Evaluate after every record.
    PerEvent,
}

/// One token's realized warning lead time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LeadTimeRecord {
    pub token_address: String,
    /// Timestamp of the last record of the first warning prefix.
    pub t_warning: i64,
    pub t_rugpull: i64,
    /// `(t_rugpull - t_warning) / 3600`; negative values are kept.
    pub hours: f64,
    /// True when no annotated event time existed and the last observed
    /// transaction stood in for it.
    pub rug_time_approximated: bool,
    pub negative: bool,
}

#[derive(Debug, thiserror::Error)]
pub enum LeadTimeError {
    #[error("lead time requires at least one record")]
    EmptyDataset,
    #[error("model column {0:?} cannot be evaluated on history prefixes")]
    UnsupportedColumn(String),
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Replays the dataset prefix by prefix on the grid and reports the lead time
/// of the first score strictly above the model threshold; `Ok(None)` when the
/// model never warns. `annotated_rug_time` overrides the last-transaction
/// approximation of the event time.
pub fn lead_time_v1(
    model: &TrainedModel,
    extractor: &FeatureExtractor,
    dataset: &TokenDataset,
    grid: EvalGrid,
    annotated_rug_time: Option<i64>,
) -> Result<Option<LeadTimeRecord>, LeadTimeError> {
    let records = &dataset.records;
    if records.is_empty() {
        return Err(LeadTimeError::EmptyDataset);
    }
    if let Some(unknown) = model.feature_columns.iter().find(|c| !FEATURE_NAMES.contains(&c.as_str())) {
        return Err(LeadTimeError::UnsupportedColumn(unknown.clone()));
    }

    let mut acc = extractor.accumulator();
    let mut warning_at: Option<i64> = None;
    for (i, record) in records.iter().enumerate() {
        acc.push(record);
        let at_grid_point = match grid {
            EvalGrid::PerEvent => true,
            EvalGrid::PerMinute => records
                .get(i + 1)
                .is_none_or(|next| next.timestamp.div_euclid(60) != record.timestamp.div_euclid(60)),
        };
        if !at_grid_point {
            continue;
        }
        let vector = acc.finalize().expect("non-empty prefix");
        let row: Vec<f64> = model
            .feature_columns
            .iter()
            .map(|c| vector.value(c).expect("validated column"))
            .collect();
        if model.warn(model.predict_row(&row)) {
            warning_at = Some(record.timestamp);
            break;
        }
    }
    let Some(t_warning) = warning_at else {
        return Ok(None);
    };
    let last = records.last().expect("non-empty").timestamp;
    let (t_rugpull, approximated) = match annotated_rug_time {
        Some(t) => (t, false),
        None => (last, true),
    };
    let hours = (t_rugpull - t_warning) as f64 / 3600.0;
    Ok(Some(LeadTimeRecord {
        token_address: dataset.token_address.clone(),
        t_warning,
        t_rugpull,
        hours,
        rug_time_approximated: approximated,
        negative: hours < 0.0,
    }))
}

/// Reads an event-time file (`token_address,t_rugpull_unix` CSV).
pub fn read_event_file(path: &Path) -> Result<BTreeMap<String, i64>, IngestError> {
    let mut rdr = csv::Reader::from_path(path).map_err(|source| IngestError::Csv { path: path.into(), source })?;
    let headers = rdr
        .headers()
        .map_err(|source| IngestError::Csv { path: path.into(), source })?
        .clone();
    let need = |name: &str| {
        headers
            .iter()
            .position(|h| h.trim() == name)
            .ok_or_else(|| IngestError::MissingColumn { path: path.into(), column: name.to_string() })
    };
    let idx_token = need("token_address")?;
    let idx_time = need("t_rugpull_unix")?;
    let mut out = BTreeMap::new();
    for (i, row) in rdr.records().enumerate() {
        let row = row.map_err(|source| IngestError::Csv { path: path.into(), source })?;
        let token = row.get(idx_token).map(str::trim).unwrap_or("").to_ascii_lowercase();
        let time = row
            .get(idx_time)
            .and_then(|v| v.trim().parse::<i64>().ok())
            .ok_or_else(|| IngestError::InvalidLabel {
                path: path.into(),
                row: i + 1,
                message: "t_rugpull_unix must be unix seconds".into(),
            })?;
        if !token.is_empty() {
            out.insert(token, time);
        }
    }
    Ok(out)
}
