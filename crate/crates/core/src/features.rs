//! Twelve-feature risk vector over a transfer sequence, plus matrix assembly
//! with feature-group masks for ablation.
//!
//! The extractor is incremental: records are pushed one at a time and the
//! vector can be finalized after any prefix. Whole-slice extraction folds the
//! same accumulator, so prefix replay (used for warning lead times) and batch
//! extraction always agree bit for bit.

use crate::ingest::{Label, TransferRecord};
use crate::patterns::PatternScores;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, HashMap, HashSet};

/// Number of base features.
pub const FEATURE_COUNT: usize = 12;

/// Canonical feature order; every matrix and artifact uses it.
pub const FEATURE_NAMES: [&str; FEATURE_COUNT] = [
    "tx_count",
    "unique_from",
    "unique_to",
    "from_to_ratio",
    "avg_quantity",
    "median_quantity",
    "std_quantity",
    "top10_addr_ratio",
    "burst_ratio",
    "net_flow_imbalance",
    "route_repeat_ratio",
    "active_minutes",
];

/// Names of the optional pattern-score columns appended after the base features.
pub const PATTERN_COLUMNS: [&str; 3] = ["self_score", "matched_score", "circular_score"];

/// Ablation groups.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize, schemars::JsonSchema)]
#[serde(rename_all = "snake_case")]
pub enum FeatureGroup {
    Trade,
    Address,
    Contract,
}

/// How per-address net-flow imbalances aggregate into one scalar.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default, schemars::JsonSchema)]
#[serde(rename_all = "snake_case")]
pub enum ImbalanceAggregation {
    /// Unweighted mean over touched addresses.
    #[default]
    Mean,
    /// Mean weighted by address participation count.
    ParticipationWeighted,
}

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum FeatureError {
    #[error("feature extraction requires at least one record")]
    EmptyInput,
    #[error("feature matrix requires at least one sample")]
    EmptySampleList,
    #[error("sample lists have mismatched lengths: {0} vectors vs {1} labels")]
    LengthMismatch(usize, usize),
    #[error("pattern-score columns must be present on all samples or none")]
    MixedPatternColumns,
    #[error("group assignment invalid: {0}")]
    BadAssignment(String),
}

/// Feature-name to ablation-group mapping.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroupAssignment(BTreeMap<String, FeatureGroup>);

impl Default for GroupAssignment {
    fn default() -> Self {
        use FeatureGroup::*;
        let pairs = [
            ("tx_count", Trade),
            ("unique_from", Address),
            ("unique_to", Address),
            ("from_to_ratio", Address),
            ("avg_quantity", Trade),
            ("median_quantity", Trade),
            ("std_quantity", Trade),
            ("top10_addr_ratio", Address),
            ("burst_ratio", Trade),
            ("net_flow_imbalance", Contract),
            ("route_repeat_ratio", Address),
            ("active_minutes", Trade),
        ];
        Self(pairs.into_iter().map(|(k, v)| (k.to_string(), v)).collect())
    }
}

impl GroupAssignment {
    /// Default mapping with per-feature overrides applied; rejects unknown names.
    pub fn with_overrides(overrides: &BTreeMap<String, FeatureGroup>) -> Result<Self, FeatureError> {
        let mut assignment = Self::default();
        for (name, group) in overrides {
            if !FEATURE_NAMES.contains(&name.as_str()) {
                return Err(FeatureError::BadAssignment(format!("unknown feature {name:?}")));
            }
            assignment.0.insert(name.clone(), *group);
        }
        Ok(assignment)
    }

    pub fn group_of(&self, feature: &str) -> Option<FeatureGroup> {
        self.0.get(feature).copied()
    }

    /// Feature count per group, in canonical feature order.
    pub fn group_size(&self, group: FeatureGroup) -> usize {
        FEATURE_NAMES.iter().filter(|n| self.group_of(n) == Some(group)).count()
    }
}

/// The per-sample feature vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RiskVector {
    pub tx_count: u64,
    pub unique_from: u64,
    pub unique_to: u64,
    pub from_to_ratio: f64,
    pub avg_quantity: f64,
    pub median_quantity: f64,
    pub std_quantity: f64,
    pub top10_addr_ratio: f64,
    pub burst_ratio: f64,
    pub net_flow_imbalance: f64,
    pub route_repeat_ratio: f64,
    pub active_minutes: u64,
    /// Present when the extended pattern-score columns are enabled.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub pattern_scores: Option<PatternScores>,
}

impl RiskVector {
    /// Base feature values in canonical order.
    pub fn values(&self) -> [f64; FEATURE_COUNT] {
        [
            self.tx_count as f64,
            self.unique_from as f64,
            self.unique_to as f64,
            self.from_to_ratio,
            self.avg_quantity,
            self.median_quantity,
            self.std_quantity,
            self.top10_addr_ratio,
            self.burst_ratio,
            self.net_flow_imbalance,
            self.route_repeat_ratio,
            self.active_minutes as f64,
        ]
    }

    /// Value by column name, including the pattern-score columns when present.
    pub fn value(&self, name: &str) -> Option<f64> {
        if let Some(pos) = FEATURE_NAMES.iter().position(|n| *n == name) {
            return Some(self.values()[pos]);
        }
        let p = self.pattern_scores.as_ref()?;
        match name {
            "self_score" => Some(p.self_score),
            "matched_score" => Some(p.matched_score),
            "circular_score" => Some(p.circular_score),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Default)]
struct AddrStats {
    in_qty: f64,
    out_qty: f64,
    participation: u64,
    out_cnt: u64,
    in_cnt: u64,
}

fn flow_ratio(in_qty: f64, out_qty: f64) -> f64 {
    let total = in_qty + out_qty;
    if total == 0.0 {
        // An address that only ever moved zero-quantity transfers is balanced.
        0.0
    } else {
        (in_qty - out_qty).abs() / total
    }
}

/// Incremental feature state; push records in time order, finalize any prefix.
#[derive(Debug, Clone)]
pub struct FeatureAccumulator {
    imbalance: ImbalanceAggregation,
    n: u64,
    qty_sorted: Vec<f64>,
    qty_sum: f64,
    welford_mean: f64,
    welford_m2: f64,
    addr: HashMap<String, AddrStats>,
    unique_from: u64,
    unique_to: u64,
    participation_multiset: BTreeMap<u64, u64>,
    imbalance_sum: f64,
    imbalance_weighted_sum: f64,
    minutes: HashMap<i64, u64>,
    minute_multiset: BTreeMap<u64, u64>,
    pairs: HashSet<(String, String)>,
    last_timestamp: Option<i64>,
}

impl FeatureAccumulator {
    pub fn new(imbalance: ImbalanceAggregation) -> Self {
        Self {
            imbalance,
            n: 0,
            qty_sorted: Vec::new(),
            qty_sum: 0.0,
            welford_mean: 0.0,
            welford_m2: 0.0,
            addr: HashMap::new(),
            unique_from: 0,
            unique_to: 0,
            participation_multiset: BTreeMap::new(),
            imbalance_sum: 0.0,
            imbalance_weighted_sum: 0.0,
            minutes: HashMap::new(),
            minute_multiset: BTreeMap::new(),
            pairs: HashSet::new(),
            last_timestamp: None,
        }
    }

    pub fn len(&self) -> u64 {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn push(&mut self, record: &TransferRecord) {
        debug_assert!(self.last_timestamp.is_none_or(|t| record.timestamp >= t));
        self.last_timestamp = Some(record.timestamp);
        self.n += 1;
        let q = record.quantity.as_f64();

        let at = self.qty_sorted.partition_point(|x| *x < q);
        self.qty_sorted.insert(at, q);
        self.qty_sum += q;
        let delta = q - self.welford_mean;
        self.welford_mean += delta / self.n as f64;
        self.welford_m2 += delta * (q - self.welford_mean);

        let minute = record.timestamp.div_euclid(60);
        let count = self.minutes.entry(minute).or_insert(0);
        if *count > 0 {
            multiset_remove(&mut self.minute_multiset, *count);
        }
        *count += 1;
        multiset_add(&mut self.minute_multiset, *count);

        self.pairs.insert((record.from_addr.clone(), record.to_addr.clone()));

        self.touch_address(&record.from_addr, q, true);
        self.touch_address(&record.to_addr, q, false);
    }

    fn touch_address(&mut self, address: &str, q: f64, outgoing: bool) {
        let stats = self.addr.entry(address.to_string()).or_default();
        if stats.participation > 0 {
            let old_ratio = flow_ratio(stats.in_qty, stats.out_qty);
            multiset_remove(&mut self.participation_multiset, stats.participation);
            self.imbalance_sum -= old_ratio;
            self.imbalance_weighted_sum -= stats.participation as f64 * old_ratio;
        }
        stats.participation += 1;
        if outgoing {
            stats.out_cnt += 1;
            stats.out_qty += q;
            if stats.out_cnt == 1 {
                self.unique_from += 1;
            }
        } else {
            stats.in_cnt += 1;
            stats.in_qty += q;
            if stats.in_cnt == 1 {
                self.unique_to += 1;
            }
        }
        let new_ratio = flow_ratio(stats.in_qty, stats.out_qty);
        multiset_add(&mut self.participation_multiset, stats.participation);
        self.imbalance_sum += new_ratio;
        self.imbalance_weighted_sum += stats.participation as f64 * new_ratio;
    }

    /// Snapshot of the twelve features for everything pushed so far.
    pub fn finalize(&self) -> Result<RiskVector, FeatureError> {
        if self.n == 0 {
            return Err(FeatureError::EmptyInput);
        }
        let n = self.n as f64;
        let median_quantity = median_of_sorted(&self.qty_sorted);
        let std_quantity = (self.welford_m2.max(0.0) / n).sqrt();

        // Sum of the ten largest participation counts; integer arithmetic, so
        // ties among addresses cannot change the value.
        let mut remaining = 10u64;
        let mut top10_sum = 0u64;
        for (&count, &multiplicity) in self.participation_multiset.iter().rev() {
            if remaining == 0 {
                break;
            }
            let take = multiplicity.min(remaining);
            top10_sum += count * take;
            remaining -= take;
        }

        let max_minute = self.minute_multiset.keys().next_back().copied().unwrap_or(0);
        let median_minute = multiset_median(&self.minute_multiset, self.minutes.len() as u64);
        let burst_ratio = max_minute as f64 / median_minute;

        let net_flow_imbalance = match self.imbalance {
            ImbalanceAggregation::Mean => self.imbalance_sum / self.addr.len() as f64,
            ImbalanceAggregation::ParticipationWeighted => self.imbalance_weighted_sum / (2.0 * n),
        }
        .clamp(0.0, 1.0);

        Ok(RiskVector {
            tx_count: self.n,
            unique_from: self.unique_from,
            unique_to: self.unique_to,
            from_to_ratio: self.unique_from as f64 / self.unique_to as f64,
            avg_quantity: self.qty_sum / n,
            median_quantity,
            std_quantity,
            top10_addr_ratio: top10_sum as f64 / (2.0 * n),
            burst_ratio,
            net_flow_imbalance,
            route_repeat_ratio: (n - self.pairs.len() as f64) / n,
            active_minutes: self.minutes.len() as u64,
            pattern_scores: None,
        })
    }
}

fn multiset_add(set: &mut BTreeMap<u64, u64>, value: u64) {
    *set.entry(value).or_insert(0) += 1;
}

fn multiset_remove(set: &mut BTreeMap<u64, u64>, value: u64) {
    match set.get_mut(&value) {
        Some(m) if *m > 1 => *m -= 1,
        Some(_) => {
            set.remove(&value);
        }
        None => debug_assert!(false, "removing absent multiset value"),
    }
}

fn median_of_sorted(sorted: &[f64]) -> f64 {
    let n = sorted.len();
    if n % 2 == 1 {
        sorted[n / 2]
    } else {
        (sorted[n / 2 - 1] + sorted[n / 2]) / 2.0
    }
}

/// Median of a count multiset holding `total` entries.
fn multiset_median(set: &BTreeMap<u64, u64>, total: u64) -> f64 {
    debug_assert!(total > 0);
    let lower_rank = (total - 1) / 2; // 0-based
    let upper_rank = total / 2;
    let mut seen = 0u64;
    let mut lower = None;
    let mut upper = None;
    for (&value, &multiplicity) in set {
        let next = seen + multiplicity;
        if lower.is_none() && lower_rank < next {
            lower = Some(value);
        }
        if upper.is_none() && upper_rank < next {
            upper = Some(value);
            break;
        }
        seen = next;
    }
    (lower.unwrap_or(0) as f64 + upper.unwrap_or(0) as f64) / 2.0
}

/// Extraction options; one extractor is shared across a run.
#[derive(Debug, Clone, Copy, Default)]
pub struct FeatureExtractor {
    pub imbalance: ImbalanceAggregation,
}

impl FeatureExtractor {
    pub fn accumulator(&self) -> FeatureAccumulator {
        FeatureAccumulator::new(self.imbalance)
    }

    /// Extracts the risk vector of a whole (time-ordered) slice.
    pub fn extract(&self, records: &[TransferRecord]) -> Result<RiskVector, FeatureError> {
        let mut acc = self.accumulator();
        for r in records {
            acc.push(r);
        }
        acc.finalize()
    }
}

/// Extracts the twelve features with default options.
pub fn compute_features(records: &[TransferRecord]) -> Result<RiskVector, FeatureError> {
    FeatureExtractor::default().extract(records)
}

/// Dense design matrix with named columns and a binary label vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureMatrix {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
    pub labels: Vec<u8>,
}

impl FeatureMatrix {
    pub fn n_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn n_cols(&self) -> usize {
        self.columns.len()
    }

    /// Row-subset view (e.g. the train or test side of a split).
    pub fn select_rows(&self, idx: &[usize]) -> FeatureMatrix {
        FeatureMatrix {
            columns: self.columns.clone(),
            rows: idx.iter().map(|&i| self.rows[i].clone()).collect(),
            labels: idx.iter().map(|&i| self.labels[i]).collect(),
        }
    }
}

/// Builds the design matrix in canonical column order, dropping features whose
/// group is excluded. Pattern-score columns, when present on the vectors, are
/// appended after the base features and are never masked by group exclusion.
pub fn feature_matrix(
    vectors: &[RiskVector],
    labels: &[Label],
    excluded: &[FeatureGroup],
    assignment: &GroupAssignment,
) -> Result<FeatureMatrix, FeatureError> {
    if vectors.is_empty() {
        return Err(FeatureError::EmptySampleList);
    }
    if vectors.len() != labels.len() {
        return Err(FeatureError::LengthMismatch(vectors.len(), labels.len()));
    }
    let with_patterns = vectors[0].pattern_scores.is_some();
    if vectors.iter().any(|v| v.pattern_scores.is_some() != with_patterns) {
        return Err(FeatureError::MixedPatternColumns);
    }
    let mut columns: Vec<String> = FEATURE_NAMES
        .iter()
        .filter(|name| {
            assignment
                .group_of(name)
                .is_none_or(|g| !excluded.contains(&g))
        })
        .map(|s| s.to_string())
        .collect();
    if with_patterns {
        columns.extend(PATTERN_COLUMNS.iter().map(|s| s.to_string()));
    }
    let rows = vectors
        .iter()
        .map(|v| columns.iter().map(|c| v.value(c).expect("known column")).collect())
        .collect();
    Ok(FeatureMatrix {
        columns,
        rows,
        labels: labels.iter().map(|l| l.binarized()).collect(),
    })
}
