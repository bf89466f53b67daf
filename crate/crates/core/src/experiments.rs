//! Experiment protocol: sample construction, stratified splitting, the
//! two-model comparison, feature-group ablation, and the error profile.
//!
//! Samples are either whole tokens or sliding record windows; every run's
//! randomness flows from one seed through tagged derivations so that split
//! and forest draws are independent but reproducible.

use crate::features::{
    feature_matrix, FeatureError, FeatureExtractor, FeatureGroup, GroupAssignment, RiskVector,
};
use crate::ingest::{Label, TokenDataset};
use crate::metrics::{classification_metrics, EvaluationReport, MetricsError};
use crate::models::{train, ModelError, ModelKind, ModelsConfig, TrainedModel};
use crate::seed::{derive_seed, tags};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

pub const DEFAULT_WINDOW_SIZE: usize = 500;
pub const DEFAULT_WINDOW_STRIDE: usize = 250;
/// Trailing partial windows below this record count are dropped.
pub const MIN_PARTIAL_WINDOW: usize = 50;
pub const DEFAULT_TRAIN_FRACTION: f64 = 0.7;
pub const DEFAULT_THRESHOLD: f64 = 0.5;

#[derive(Debug, thiserror::Error)]
pub enum ExperimentError {
    #[error("invalid experiment config: {0}")]
    InvalidConfig(String),
    #[error("dataset for token {0} has no records")]
    EmptyDataset(String),
    #[error("degenerate split: {0}")]
    DegenerateSplit(String),
    #[error(transparent)]
    Feature(#[from] FeatureError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
}

fn default_window_size() -> usize {
    DEFAULT_WINDOW_SIZE
}

fn default_window_stride() -> usize {
    DEFAULT_WINDOW_STRIDE
}

/// Unit of one supervised sample.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, schemars::JsonSchema)]
#[serde(tag = "unit", rename_all = "snake_case")]
pub enum SampleUnit {
    /// One sample per token.
    Token,
    /// Sliding record windows `[i*stride, i*stride + size)` per token.
    Window {
        #[serde(default = "default_window_size")]
        size: usize,
        #[serde(default = "default_window_stride")]
        stride: usize,
    },
}

impl Default for SampleUnit {
    fn default() -> Self {
        SampleUnit::Window { size: DEFAULT_WINDOW_SIZE, stride: DEFAULT_WINDOW_STRIDE }
    }
}

/// Protocol settings shared by the comparison, ablation, and profile runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, schemars::JsonSchema)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub sample_unit: SampleUnit,
    pub train_fraction: f64,
    /// Warn threshold tau applied to every trained model.
    pub threshold: f64,
    pub models: ModelsConfig,
    /// Optional reassignment of features to groups; empty keeps the default.
    pub feature_groups: BTreeMap<String, FeatureGroup>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            sample_unit: SampleUnit::default(),
            train_fraction: DEFAULT_TRAIN_FRACTION,
            threshold: DEFAULT_THRESHOLD,
            models: ModelsConfig::default(),
            feature_groups: BTreeMap::new(),
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<(), ExperimentError> {
        if let SampleUnit::Window { size, stride } = self.sample_unit {
            if size == 0 {
                return Err(ExperimentError::InvalidConfig("window size must be positive".into()));
            }
            if stride == 0 || stride > size {
                return Err(ExperimentError::InvalidConfig(format!(
                    "window stride must be in 1..={size}, got {stride}"
                )));
            }
        }
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return Err(ExperimentError::InvalidConfig(format!(
                "train_fraction must be in (0, 1), got {}",
                self.train_fraction
            )));
        }
        if !self.threshold.is_finite() || !(0.0..=1.0).contains(&self.threshold) {
            return Err(ExperimentError::InvalidConfig(format!(
                "threshold must be in [0, 1], got {}",
                self.threshold
            )));
        }
        Ok(())
    }

    pub fn assignment(&self) -> Result<GroupAssignment, ExperimentError> {
        Ok(GroupAssignment::with_overrides(&self.feature_groups)?)
    }
}

/// One supervised sample: a record span of one token.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Sample {
    /// Stable identifier (`token` or `token#wNNNN`).
    pub id: String,
    pub token_address: String,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub window_index: Option<usize>,
    /// Record index span `[start, end)` within the token's dataset.
    pub start: usize,
    pub end: usize,
    pub label: Label,
}

/// Stable sample identifier: the token address, plus `#wNNNN` in window mode.
pub fn sample_id(token_address: &str, window_index: Option<usize>) -> String {
    match window_index {
        Some(i) => format!("{token_address}#w{i:04}"),
        None => token_address.to_string(),
    }
}

/// Enumerates samples per the configured unit. Window mode slides
/// `[i*stride, i*stride + size)`; a clipped trailing window is kept only when
/// it has at least [`MIN_PARTIAL_WINDOW`] records and covers records beyond
/// the last full window. Tokens too short for any window yield no samples.
pub fn build_samples(datasets: &[TokenDataset], unit: SampleUnit) -> Result<Vec<Sample>, ExperimentError> {
    let mut out = Vec::new();
    for ds in datasets {
        let n = ds.records.len();
        if n == 0 {
            return Err(ExperimentError::EmptyDataset(ds.token_address.clone()));
        }
        match unit {
            SampleUnit::Token => out.push(Sample {
                id: sample_id(&ds.token_address, None),
                token_address: ds.token_address.clone(),
                window_index: None,
                start: 0,
                end: n,
                label: ds.label,
            }),
            SampleUnit::Window { size, stride } => {
                if size == 0 || stride == 0 || stride > size {
                    return Err(ExperimentError::InvalidConfig(format!(
                        "window size {size} / stride {stride} out of range"
                    )));
                }
                let mut last_full_end = 0usize;
                for i in 0.. {
                    let start = i * stride;
                    if start >= n {
                        break;
                    }
                    let end = (start + size).min(n);
                    let full = end - start == size;
                    if !full && (end - start < MIN_PARTIAL_WINDOW || end <= last_full_end) {
                        break;
                    }
                    if full {
                        last_full_end = end;
                    }
                    out.push(Sample {
                        id: sample_id(&ds.token_address, Some(i)),
                        token_address: ds.token_address.clone(),
                        window_index: Some(i),
                        start,
                        end,
                        label: ds.label,
                    });
                    if !full {
                        break;
                    }
                }
            }
        }
    }
    Ok(out)
}

/// Extracts one risk vector per sample (in sample order, in parallel).
pub fn sample_vectors(
    datasets: &[TokenDataset],
    samples: &[Sample],
    extractor: &FeatureExtractor,
) -> Result<Vec<RiskVector>, ExperimentError> {
    let by_token: BTreeMap<&str, &TokenDataset> =
        datasets.iter().map(|d| (d.token_address.as_str(), d)).collect();
    let vectors = samples
        .par_iter()
        .map(|s| {
            let ds = by_token
                .get(s.token_address.as_str())
                .ok_or_else(|| ExperimentError::EmptyDataset(s.token_address.clone()))?;
            Ok(extractor.extract(&ds.records[s.start..s.end])?)
        })
        .collect::<Result<Vec<_>, ExperimentError>>()?;
    Ok(vectors)
}

/// Row indices of one train/test partition.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitIndices {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

/// Seeded stratified split: each class is shuffled independently and cut at
/// `round(train_fraction * n_class)`, clamped so both sides keep at least one
/// sample of each class. Requires two classes with two samples each.
pub fn stratified_split(labels: &[u8], train_fraction: f64, seed: u64) -> Result<SplitIndices, ExperimentError> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(ExperimentError::InvalidConfig(format!(
            "train_fraction must be in (0, 1), got {train_fraction}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, tags::SPLIT));
    let mut train = Vec::new();
    let mut test = Vec::new();
    for class in [0u8, 1u8] {
        let mut idx: Vec<usize> = labels
            .iter()
            .enumerate()
            .filter(|(_, l)| **l == class)
            .map(|(i, _)| i)
            .collect();
        let n_class = idx.len();
        if n_class < 2 {
            return Err(ExperimentError::DegenerateSplit(format!(
                "class {class} has {n_class} sample(s); need at least 2 to cover both sides"
            )));
        }
        idx.shuffle(&mut rng);
        let n_train = ((train_fraction * n_class as f64).round() as usize).clamp(1, n_class - 1);
        train.extend_from_slice(&idx[..n_train]);
        test.extend_from_slice(&idx[n_train..]);
    }
    train.sort_unstable();
    test.sort_unstable();
    Ok(SplitIndices { train, test })
}

/// Everything one comparison run produces; keys are model kind names.
#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonOutcome {
    pub split: SplitIndices,
    pub models: BTreeMap<String, TrainedModel>,
    pub reports: BTreeMap<String, EvaluationReport>,
    /// Test-row scores per model, aligned with `split.test`.
    pub test_scores: BTreeMap<String, Vec<f64>>,
}

/// Trains both model families on the train side and evaluates them on the
/// test side of one shared stratified split.
pub fn run_main_comparison(
    vectors: &[RiskVector],
    labels: &[Label],
    config: &ExperimentConfig,
    seed: u64,
) -> Result<ComparisonOutcome, ExperimentError> {
    config.validate()?;
    let matrix = feature_matrix(vectors, labels, &[], &config.assignment()?)?;
    let split = stratified_split(&matrix.labels, config.train_fraction, seed)?;
    let train_matrix = matrix.select_rows(&split.train);
    let test_matrix = matrix.select_rows(&split.test);

    let mut models = BTreeMap::new();
    let mut reports = BTreeMap::new();
    let mut test_scores = BTreeMap::new();
    for kind in [ModelKind::LogisticRegression, ModelKind::RandomForest] {
        let model_seed = match kind {
            ModelKind::LogisticRegression => seed,
            ModelKind::RandomForest => derive_seed(seed, tags::FOREST),
        };
        let model = train(kind, &train_matrix, &config.models, model_seed, config.threshold)?;
        let scores = model.predict_proba(&test_matrix)?;
        let report = classification_metrics(&test_matrix.labels, &scores, config.threshold)?;
        models.insert(kind.as_str().to_string(), model);
        reports.insert(kind.as_str().to_string(), report);
        test_scores.insert(kind.as_str().to_string(), scores);
    }
    Ok(ComparisonOutcome { split, models, reports, test_scores })
}

pub const ABLATION_SETTINGS: [(&str, &[FeatureGroup]); 4] = [
    ("full", &[]),
    ("without_trade", &[FeatureGroup::Trade]),
    ("without_address", &[FeatureGroup::Address]),
    ("without_contract", &[FeatureGroup::Contract]),
];

/// One row of the feature-group ablation table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationResult {
    pub setting: String,
    pub remaining_features: usize,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub auc: f64,
    pub pr_auc: f64,
    /// Setting PR-AUC minus full-model PR-AUC; exactly 0 for the full row.
    pub delta_pr_auc: f64,
}

/// Retrains the forest with each feature group removed, on one shared split.
/// Pattern-score columns are excluded so every setting sees only the twelve
/// base features.
pub fn run_ablation(
    vectors: &[RiskVector],
    labels: &[Label],
    config: &ExperimentConfig,
    seed: u64,
) -> Result<Vec<AblationResult>, ExperimentError> {
    config.validate()?;
    let assignment = config.assignment()?;
    let base: Vec<RiskVector> = vectors
        .iter()
        .map(|v| {
            let mut v = v.clone();
            v.pattern_scores = None;
            v
        })
        .collect();
    let full_matrix = feature_matrix(&base, labels, &[], &assignment)?;
    let split = stratified_split(&full_matrix.labels, config.train_fraction, seed)?;
    let forest_seed = derive_seed(seed, tags::FOREST);

    let mut out = Vec::new();
    for (name, excluded) in ABLATION_SETTINGS {
        let matrix = feature_matrix(&base, labels, excluded, &assignment)?;
        let model = train(
            ModelKind::RandomForest,
            &matrix.select_rows(&split.train),
            &config.models,
            forest_seed,
            config.threshold,
        )?;
        let test_matrix = matrix.select_rows(&split.test);
        let scores = model.predict_proba(&test_matrix)?;
        let report = classification_metrics(&test_matrix.labels, &scores, config.threshold)?;
        let pr_auc = report.pr_auc.expect("split keeps both classes on the test side");
        out.push(AblationResult {
            setting: name.to_string(),
            remaining_features: matrix.n_cols(),
            precision: report.precision,
            recall: report.recall,
            f1: report.f1,
            auc: report.auc.expect("split keeps both classes on the test side"),
            pr_auc,
            delta_pr_auc: 0.0,
        });
    }
    let full_pr_auc = out[0].pr_auc;
    for row in &mut out {
        row.delta_pr_auc = row.pr_auc - full_pr_auc;
    }
    Ok(out)
}

/// One misclassified sample in the error profile.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorCase {
    pub id: String,
    pub score: f64,
    /// `|score - tau|`: how far past the threshold the mistake was.
    pub distance: f64,
}

/// False-positive / false-negative listing at one threshold.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorProfile {
    pub threshold: f64,
    pub fp_count: usize,
    pub fn_count: usize,
    pub false_positives: Vec<ErrorCase>,
    pub false_negatives: Vec<ErrorCase>,
}

/// Enumerates misclassifications, each list sorted by distance from the
/// threshold (closest first), ties broken by id.
pub fn error_profile(y_true: &[u8], scores: &[f64], tau: f64, sample_ids: &[String]) -> ErrorProfile {
    debug_assert_eq!(y_true.len(), scores.len());
    debug_assert_eq!(y_true.len(), sample_ids.len());
    let mut false_positives = Vec::new();
    let mut false_negatives = Vec::new();
    for ((&t, &s), id) in y_true.iter().zip(scores).zip(sample_ids) {
        let case = ErrorCase { id: id.clone(), score: s, distance: (s - tau).abs() };
        match (t == 1, s > tau) {
            (false, true) => false_positives.push(case),
            (true, false) => false_negatives.push(case),
            _ => {}
        }
    }
    let by_distance = |a: &ErrorCase, b: &ErrorCase| {
        a.distance.total_cmp(&b.distance).then_with(|| a.id.cmp(&b.id))
    };
    false_positives.sort_by(by_distance);
    false_negatives.sort_by(by_distance);
    ErrorProfile {
        threshold: tau,
        fp_count: false_positives.len(),
        fn_count: false_negatives.len(),
        false_positives,
        false_negatives,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::{Quantity, QuantityMode, TransferRecord};

    fn dataset(token: &str, n: usize, label: Label) -> TokenDataset {
        let records = (0..n)
            .map(|i| TransferRecord {
                token_address: token.into(),
                tx_hash: format!("0x{i:08x}"),
                from_addr: format!("0xa{:02}", i % 17),
                to_addr: format!("0xb{:02}", i % 13),
                quantity: Quantity::parse("2.5", QuantityMode::Float).unwrap(),
                timestamp: 1_700_000_000 + 30 * i as i64,
            })
            .collect();
        TokenDataset { token_address: token.into(), records, label, cap: 5000 }
    }

    fn window_count(n: usize) -> usize {
        let ds = dataset("0xt", n, Label::HighRisk);
        build_samples(&[ds], SampleUnit::default()).unwrap().len()
    }

    #[test]
    fn window_counts_match_enumeration() {
        assert_eq!(window_count(5000), 19);
        assert_eq!(window_count(300), 1);
        assert_eq!(window_count(49), 0);
        assert_eq!(window_count(50), 1);
        // [0,500) and [250,750) are full; the clipped [500,750) adds nothing.
        assert_eq!(window_count(750), 2);
        assert_eq!(window_count(800), 3);

        // Oracle: every kept window is new coverage or a full slide.
        for n in [1, 49, 50, 123, 499, 500, 501, 750, 1249, 1250, 1251, 4999, 5000, 5001] {
            let ds = dataset("0xt", n, Label::NonHighRisk);
            let samples = build_samples(std::slice::from_ref(&ds), SampleUnit::default()).unwrap();
            let mut covered = 0usize;
            for (k, s) in samples.iter().enumerate() {
                assert_eq!(s.window_index, Some(k));
                assert_eq!(s.start, k * 250);
                assert!(s.end > covered, "window adds no coverage");
                assert!(s.end - s.start == 500 || (s.end == n && s.end - s.start >= 50));
                covered = s.end.max(covered);
            }
            if !samples.is_empty() {
                assert!(covered == n || n - covered < 250);
            }
        }
    }

    #[test]
    fn token_mode_yields_one_sample_per_token() {
        let datasets: Vec<TokenDataset> = (0..7)
            .map(|i| dataset(&format!("0xtok{i}"), 60 + i, if i < 3 { Label::HighRisk } else { Label::NonHighRisk }))
            .collect();
        let samples = build_samples(&datasets, SampleUnit::Token).unwrap();
        assert_eq!(samples.len(), 7);
        assert_eq!(samples[0].id, "0xtok0");
        assert_eq!(samples[0].end, 60);
        assert_eq!(samples[0].label, Label::HighRisk);
        assert_eq!(samples[6].label, Label::NonHighRisk);
    }

    #[test]
    fn windows_inherit_label_and_get_unique_ids() {
        let ds = dataset("0xabc", 1300, Label::HighRisk);
        let samples = build_samples(&[ds], SampleUnit::Window { size: 500, stride: 250 }).unwrap();
        let mut ids: Vec<&str> = samples.iter().map(|s| s.id.as_str()).collect();
        ids.sort_unstable();
        ids.dedup();
        assert_eq!(ids.len(), samples.len());
        assert!(samples.iter().all(|s| s.label == Label::HighRisk));
        assert!(samples.iter().all(|s| s.id.starts_with("0xabc#w")));
    }

    #[test]
    fn sample_vectors_match_direct_extraction() {
        let ds = dataset("0xt", 700, Label::NonHighRisk);
        let samples = build_samples(std::slice::from_ref(&ds), SampleUnit::default()).unwrap();
        let ex = FeatureExtractor::default();
        let vectors = sample_vectors(std::slice::from_ref(&ds), &samples, &ex).unwrap();
        for (s, v) in samples.iter().zip(&vectors) {
            assert_eq!(v, &ex.extract(&ds.records[s.start..s.end]).unwrap());
        }
    }

    #[test]
    fn split_is_deterministic_stratified_and_partitioning() {
        let labels: Vec<u8> = (0..40).map(|i| u8::from(i % 3 == 0)).collect();
        let a = stratified_split(&labels, 0.7, 11).unwrap();
        let b = stratified_split(&labels, 0.7, 11).unwrap();
        assert_eq!(a, b);
        let c = stratified_split(&labels, 0.7, 12).unwrap();
        assert_ne!(a, c);

        let mut all: Vec<usize> = a.train.iter().chain(&a.test).copied().collect();
        all.sort_unstable();
        assert_eq!(all, (0..40).collect::<Vec<_>>());

        let pos = labels.iter().filter(|l| **l == 1).count();
        let train_pos = a.train.iter().filter(|&&i| labels[i] == 1).count();
        assert_eq!(train_pos, ((0.7 * pos as f64).round() as usize).clamp(1, pos - 1));
        let neg = labels.len() - pos;
        let train_neg = a.train.len() - train_pos;
        assert_eq!(train_neg, ((0.7 * neg as f64).round() as usize).clamp(1, neg - 1));
        assert!(a.test.iter().any(|&i| labels[i] == 1));
        assert!(a.test.iter().any(|&i| labels[i] == 0));
    }

    #[test]
    fn tiny_classes_are_degenerate() {
        assert!(matches!(
            stratified_split(&[0, 0, 0, 1], 0.7, 1),
            Err(ExperimentError::DegenerateSplit(_))
        ));
        assert!(matches!(
            stratified_split(&[0, 0, 0, 0], 0.7, 1),
            Err(ExperimentError::DegenerateSplit(_))
        ));
        assert!(stratified_split(&[0, 0, 1, 1], 0.7, 1).is_ok());
    }

    fn vector(avg_quantity: f64, unique_from: u64) -> RiskVector {
        RiskVector {
            tx_count: 100,
            unique_from,
            unique_to: 10,
            from_to_ratio: unique_from as f64 / 10.0,
            avg_quantity,
            median_quantity: avg_quantity * 0.9,
            std_quantity: 1.0,
            top10_addr_ratio: 0.8,
            burst_ratio: 2.0,
            net_flow_imbalance: 0.5,
            route_repeat_ratio: 0.3,
            active_minutes: 40,
            pattern_scores: None,
        }
    }

    // 20 positive and 20 negative samples separated by avg_quantity alone.
    fn separable() -> (Vec<RiskVector>, Vec<Label>) {
        let mut vectors = Vec::new();
        let mut labels = Vec::new();
        for i in 0..20 {
            vectors.push(vector(200.0 + i as f64, 5 + (i % 3) as u64));
            labels.push(Label::HighRisk);
            vectors.push(vector(10.0 + i as f64, 5 + (i % 4) as u64));
            labels.push(Label::NonHighRisk);
        }
        (vectors, labels)
    }

    #[test]
    fn separable_samples_score_perfectly_for_both_models() {
        let (vectors, labels) = separable();
        let config = ExperimentConfig::default();
        let outcome = run_main_comparison(&vectors, &labels, &config, 5).unwrap();
        assert_eq!(outcome.models.len(), 2);
        for (name, report) in &outcome.reports {
            assert_eq!(report.accuracy, 1.0, "{name}");
            assert_eq!((report.precision, report.recall, report.f1), (1.0, 1.0, 1.0), "{name}");
            assert_eq!(report.auc, Some(1.0), "{name}");
            assert_eq!(report.pr_auc, Some(1.0), "{name}");
        }
        assert_eq!(outcome.test_scores["random_forest"].len(), outcome.split.test.len());
        // Same seed twice is bytewise identical.
        let again = run_main_comparison(&vectors, &labels, &config, 5).unwrap();
        assert_eq!(
            serde_json::to_string(&outcome.reports).unwrap(),
            serde_json::to_string(&again.reports).unwrap()
        );
        assert_eq!(outcome.models, again.models);
    }

    #[test]
    fn ablation_counts_settings_and_deltas() {
        let (vectors, labels) = separable();
        let config = ExperimentConfig::default();
        let rows = run_ablation(&vectors, &labels, &config, 5).unwrap();
        assert_eq!(
            rows.iter().map(|r| r.setting.as_str()).collect::<Vec<_>>(),
            vec!["full", "without_trade", "without_address", "without_contract"]
        );
        assert_eq!(
            rows.iter().map(|r| r.remaining_features).collect::<Vec<_>>(),
            vec![12, 6, 7, 11]
        );
        assert_eq!(rows[0].delta_pr_auc, 0.0);
        assert_eq!(rows[0].delta_pr_auc.to_bits(), 0.0f64.to_bits());

        // The label signal lives in a trade feature, so dropping trade hurts
        // more than dropping the contract group.
        let wo_trade = rows.iter().find(|r| r.setting == "without_trade").unwrap();
        let wo_contract = rows.iter().find(|r| r.setting == "without_contract").unwrap();
        assert!(
            wo_trade.delta_pr_auc < wo_contract.delta_pr_auc,
            "{} vs {}",
            wo_trade.delta_pr_auc,
            wo_contract.delta_pr_auc
        );
    }

    #[test]
    fn ablation_reuses_one_split_and_strips_pattern_columns() {
        let (mut vectors, labels) = separable();
        for v in &mut vectors {
            v.pattern_scores = Some(crate::patterns::PatternScores {
                self_score: 1.0,
                matched_score: 1.0,
                circular_score: 1.0,
                window_minutes: 60,
                max_cycle_len: 5,
            });
        }
        let config = ExperimentConfig::default();
        let rows = run_ablation(&vectors, &labels, &config, 9).unwrap();
        // Pattern columns would make these 15/9/10/14.
        assert_eq!(
            rows.iter().map(|r| r.remaining_features).collect::<Vec<_>>(),
            vec![12, 6, 7, 11]
        );
    }

    #[test]
    fn error_profile_matches_hand_fixture_and_confusion_counts() {
        let y = vec![1, 1, 0, 0, 1, 0];
        let s = vec![0.9, 0.2, 0.8, 0.1, 0.45, 0.55];
        let ids: Vec<String> = ["a", "b", "c", "d", "e", "f"].iter().map(|s| s.to_string()).collect();
        let profile = error_profile(&y, &s, 0.5, &ids);
        assert_eq!(profile.fp_count, 2);
        assert_eq!(profile.fn_count, 2);
        let fp_ids: Vec<&str> = profile.false_positives.iter().map(|c| c.id.as_str()).collect();
        let fn_ids: Vec<&str> = profile.false_negatives.iter().map(|c| c.id.as_str()).collect();
        // Sorted by |score - tau|: f (0.05) before c (0.3); e (0.05) before b (0.3).
        assert_eq!(fp_ids, vec!["f", "c"]);
        assert_eq!(fn_ids, vec!["e", "b"]);

        let report = classification_metrics(&y, &s, 0.5).unwrap();
        assert_eq!(report.fp, profile.fp_count);
        assert_eq!(report.fn_, profile.fn_count);

        let perfect = error_profile(&[1, 0], &[0.9, 0.1], 0.5, &["x".into(), "y".into()]);
        assert_eq!((perfect.fp_count, perfect.fn_count), (0, 0));
        let never = error_profile(&[1, 1, 0], &[0.1, 0.2, 0.3], 0.5, &ids[..3]);
        assert_eq!((never.fp_count, never.fn_count), (0, 2));
    }

    #[test]
    fn config_validation_rejects_bad_settings() {
        let c = ExperimentConfig { train_fraction: 1.0, ..ExperimentConfig::default() };
        assert!(c.validate().is_err());
        let c = ExperimentConfig {
            sample_unit: SampleUnit::Window { size: 100, stride: 101 },
            ..ExperimentConfig::default()
        };
        assert!(c.validate().is_err());
        let c = ExperimentConfig { threshold: 1.5, ..ExperimentConfig::default() };
        assert!(c.validate().is_err());
        assert!(ExperimentConfig::default().validate().is_ok());

        let parsed: ExperimentConfig = serde_json::from_str("{}").unwrap();
        assert_eq!(parsed, ExperimentConfig::default());
        let unit: SampleUnit = serde_json::from_str(r#"{"unit":"window"}"#).unwrap();
        assert_eq!(unit, SampleUnit::default());
    }
}
