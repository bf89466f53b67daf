//! Stage runners behind the CLI subcommands. Each stage reads the artifacts
//! of the stage before it from disk and writes its own documented outputs, so
//! running stages one at a time is equivalent to running `pipeline`, and any
//! stage can be rerun in isolation.
//!
//! Every JSON artifact embeds a `run` block (seed, wall-clock write time, and
//! the resolved config) so a result is reproducible from its artifacts alone.
//! The write time is the only field that may differ between two runs of the
//! same config; everything else is deterministic.

use crate::config::{ConfigError, RunConfig};
use crate::experiments::{
    build_samples, error_profile, run_ablation, run_main_comparison, sample_id, sample_vectors,
    AblationResult, ErrorProfile, ExperimentError, Sample,
};
use crate::features::{FeatureError, FeatureExtractor, RiskVector, FEATURE_NAMES};
use crate::ingest::{
    build_datasets, consistency_check, parse_csv, read_label_file, summarize, write_normalized_csv,
    CsvSchema, DatasetSummary, IngestError, Label, TokenDataset,
};
use crate::metrics::{
    classification_metrics, lead_time_stats, lead_time_v1, read_event_file, EvalGrid,
    EvaluationReport, LeadTimeError, LeadTimeRecord, MetricsError,
};
use crate::models::{ModelError, ModelKind, TrainedModel};
use crate::patterns::{score_patterns, PatternError, PatternScores};
use crate::synth::{generate, write_outputs, SynthError};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

/// File names of the shared (non-per-token) artifacts.
pub const RUN_CONFIG_FILE: &str = "run_config.json";
pub const DATASET_SUMMARY_FILE: &str = "dataset_summary.json";
pub const FEATURES_FILE: &str = "features.csv";
pub const SPLIT_FILE: &str = "split.json";
pub const METRICS_FILE: &str = "metrics.json";
pub const ERROR_PROFILE_FILE: &str = "error_profile.json";
pub const ABLATION_FILE: &str = "ablation.json";
pub const LEAD_TIMES_FILE: &str = "lead_times.csv";

/// Model artifact file name for one classifier kind.
pub fn model_file(kind: ModelKind) -> String {
    format!("{}.model.json", kind.as_str())
}

/// A failure inside one stage, before the stage name is attached.
#[derive(Debug, thiserror::Error)]
pub enum StageFailure {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("missing input: {what} ({path})")]
    MissingInput { path: PathBuf, what: String },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
    #[error("bad artifact {path}: {message}")]
    BadArtifact { path: PathBuf, message: String },
    #[error(transparent)]
    Synth(#[from] SynthError),
    #[error(transparent)]
    Ingest(#[from] IngestError),
    #[error(transparent)]
    Pattern(#[from] PatternError),
    #[error(transparent)]
    Feature(#[from] FeatureError),
    #[error(transparent)]
    Experiment(#[from] ExperimentError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error(transparent)]
    LeadTime(#[from] LeadTimeError),
}

impl StageFailure {
    /// Machine-readable failure class for the CLI error report.
    pub fn kind(&self) -> &'static str {
        match self {
            StageFailure::Config(_) => "config_invalid",
            StageFailure::MissingInput { .. } => "missing_input",
            _ => "stage_failure",
        }
    }
}

/// A stage failure tagged with the stage it happened in.
#[derive(Debug, thiserror::Error)]
#[error("stage {stage}: {source}")]
pub struct StageError {
    pub stage: &'static str,
    #[source]
    pub source: StageFailure,
}

/// What one stage run produced: artifact paths plus non-fatal warnings.
#[derive(Debug, Default)]
pub struct StageOutcome {
    pub artifacts: Vec<PathBuf>,
    pub warnings: Vec<String>,
}

impl StageOutcome {
    fn merge(&mut self, other: StageOutcome) {
        self.artifacts.extend(other.artifacts);
        self.warnings.extend(other.warnings);
    }
}

/// Run-identity block embedded in every JSON artifact.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunStamp {
    pub seed: u64,
    /// Wall-clock write time (unix seconds); the one nondeterministic field.
    pub generated_at_unix: u64,
    pub config: RunConfig,
}

impl RunStamp {
    fn new(config: &RunConfig) -> Self {
        let generated_at_unix = SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or_default();
        Self { seed: config.seed, generated_at_unix, config: config.clone() }
    }
}

#[derive(Serialize)]
struct SummaryArtifact<'a> {
    run: &'a RunStamp,
    #[serde(flatten)]
    summary: &'a DatasetSummary,
}

#[derive(Serialize)]
struct PatternArtifact<'a> {
    run: &'a RunStamp,
    token_address: &'a str,
    #[serde(flatten)]
    scores: &'a PatternScores,
}

/// Persisted train/test partition; row indices refer to the labeled rows of
/// `features.csv` in file order.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SplitArtifact {
    pub run: RunStamp,
    /// Labeled row count the indices were computed over.
    pub n_rows: usize,
    pub train: Vec<usize>,
    pub test: Vec<usize>,
    pub train_ids: Vec<String>,
    pub test_ids: Vec<String>,
}

#[derive(Serialize)]
struct MetricsArtifact<'a> {
    run: &'a RunStamp,
    models: &'a BTreeMap<String, EvaluationReport>,
}

#[derive(Serialize)]
struct ErrorProfileArtifact<'a> {
    run: &'a RunStamp,
    model: &'a str,
    #[serde(flatten)]
    profile: &'a ErrorProfile,
}

#[derive(Serialize)]
struct AblationArtifact<'a> {
    run: &'a RunStamp,
    settings: &'a [AblationResult],
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), StageFailure> {
    let json = serde_json::to_string_pretty(value)
        .map_err(|source| StageFailure::Json { path: path.into(), source })?;
    fs::write(path, json).map_err(|source| StageFailure::Io { path: path.into(), source })
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path, what: &str) -> Result<T, StageFailure> {
    if !path.is_file() {
        return Err(StageFailure::MissingInput { path: path.into(), what: what.into() });
    }
    let text =
        fs::read_to_string(path).map_err(|source| StageFailure::Io { path: path.into(), source })?;
    serde_json::from_str(&text).map_err(|source| StageFailure::Json { path: path.into(), source })
}

/// Creates the output directory and writes the `run_config.json` echo.
fn stamp_output(config: &RunConfig) -> Result<(RunStamp, PathBuf), StageFailure> {
    let out = config.paths.output_dir.clone();
    fs::create_dir_all(&out).map_err(|source| StageFailure::Io { path: out.clone(), source })?;
    let stamp = RunStamp::new(config);
    let echo = out.join(RUN_CONFIG_FILE);
    write_json(&echo, &stamp)?;
    Ok((stamp, out))
}

/// Reads the normalized per-token CSVs plus labels back from the output
/// directory, in summary (token address) order.
fn load_normalized(config: &RunConfig) -> Result<Vec<TokenDataset>, StageFailure> {
    let out = &config.paths.output_dir;
    let summary: DatasetSummary = read_json(
        &out.join(DATASET_SUMMARY_FILE),
        "dataset summary (run the ingest stage first)",
    )?;
    let schema = CsvSchema::default();
    summary
        .tokens
        .iter()
        .map(|t| {
            let path = out.join(format!("{}.normalized.csv", t.token_address));
            if !path.is_file() {
                return Err(StageFailure::MissingInput {
                    path,
                    what: "normalized token CSV (run the ingest stage first)".into(),
                });
            }
            let parsed = parse_csv(&path, &schema, config.ingest.quantity_mode)?;
            if let Some(err) = parsed.row_errors.first() {
                return Err(StageFailure::BadArtifact {
                    path,
                    message: format!("row {}: {}", err.row, err.reason),
                });
            }
            Ok(TokenDataset {
                token_address: t.token_address.clone(),
                records: parsed.records,
                label: t.label,
                cap: config.ingest.cap,
            })
        })
        .collect()
}

/// Annotated rug times from the resolved event file, or empty when none exists.
fn load_event_times(config: &RunConfig) -> Result<BTreeMap<String, i64>, StageFailure> {
    match config.paths.resolved_event_file() {
        Some(path) => Ok(read_event_file(&path)?),
        None => Ok(BTreeMap::new()),
    }
}

const FEATURE_META_COLUMNS: [&str; 3] = ["token_address", "window_id", "label"];

fn write_features_csv(
    path: &Path,
    samples: &[Sample],
    vectors: &[RiskVector],
) -> Result<(), StageFailure> {
    let mut w = csv::Writer::from_path(path)
        .map_err(|source| StageFailure::Io { path: path.into(), source: source.into() })?;
    let io_err = |source: csv::Error| StageFailure::Io { path: path.into(), source: source.into() };
    let header: Vec<&str> = FEATURE_META_COLUMNS.iter().chain(FEATURE_NAMES.iter()).copied().collect();
    w.write_record(&header).map_err(io_err)?;
    for (sample, vector) in samples.iter().zip(vectors) {
        let window_id = sample.window_index.map(|i| i.to_string()).unwrap_or_default();
        let mut row = vec![
            sample.token_address.clone(),
            window_id,
            sample.label.as_str().to_string(),
        ];
        row.extend(vector.values().iter().map(|v| v.to_string()));
        w.write_record(&row).map_err(io_err)?;
    }
    w.flush().map_err(|source| StageFailure::Io { path: path.into(), source })?;
    Ok(())
}

/// The feature table read back from `features.csv`, in file order.
struct FeatureTable {
    ids: Vec<String>,
    labels: Vec<Label>,
    vectors: Vec<RiskVector>,
}

fn read_features_csv(path: &Path) -> Result<FeatureTable, StageFailure> {
    if !path.is_file() {
        return Err(StageFailure::MissingInput {
            path: path.into(),
            what: "feature table (run the features stage first)".into(),
        });
    }
    let bad = |message: String| StageFailure::BadArtifact { path: path.into(), message };
    let mut rdr = csv::Reader::from_path(path)
        .map_err(|source| StageFailure::Io { path: path.into(), source: source.into() })?;
    let header: Vec<String> = rdr
        .headers()
        .map_err(|e| bad(e.to_string()))?
        .iter()
        .map(str::to_string)
        .collect();
    let expected: Vec<&str> = FEATURE_META_COLUMNS.iter().chain(FEATURE_NAMES.iter()).copied().collect();
    if header != expected {
        return Err(bad(format!("unexpected header {header:?}")));
    }

    let mut table = FeatureTable { ids: Vec::new(), labels: Vec::new(), vectors: Vec::new() };
    for (i, row) in rdr.records().enumerate() {
        let row = row.map_err(|e| bad(e.to_string()))?;
        let row_bad = |msg: &str| bad(format!("row {}: {msg}", i + 1));
        let field = |idx: usize| row.get(idx).unwrap_or("").trim();
        let float = |idx: usize| {
            field(idx)
                .parse::<f64>()
                .map_err(|_| row_bad(&format!("bad float in column {:?}", expected[idx])))
        };
        let int = |idx: usize| {
            field(idx)
                .parse::<u64>()
                .map_err(|_| row_bad(&format!("bad count in column {:?}", expected[idx])))
        };
        let token = field(0).to_string();
        let window_index = match field(1) {
            "" => None,
            raw => Some(raw.parse::<usize>().map_err(|_| row_bad("bad window_id"))?),
        };
        let label: Label = field(2).parse().map_err(|e: String| row_bad(&e))?;
        table.ids.push(sample_id(&token, window_index));
        table.labels.push(label);
        table.vectors.push(RiskVector {
            tx_count: int(3)?,
            unique_from: int(4)?,
            unique_to: int(5)?,
            from_to_ratio: float(6)?,
            avg_quantity: float(7)?,
            median_quantity: float(8)?,
            std_quantity: float(9)?,
            top10_addr_ratio: float(10)?,
            burst_ratio: float(11)?,
            net_flow_imbalance: float(12)?,
            route_repeat_ratio: float(13)?,
            active_minutes: int(14)?,
            pattern_scores: None,
        });
    }
    if table.ids.is_empty() {
        return Err(bad("no feature rows".into()));
    }
    Ok(table)
}

/// Drops rows without a ground-truth label, warning when any were present.
fn labeled_rows(table: FeatureTable, warnings: &mut Vec<String>) -> (Vec<String>, Vec<Label>, Vec<RiskVector>) {
    let unknown = table.labels.iter().filter(|l| **l == Label::Unknown).count();
    if unknown > 0 {
        warnings.push(format!("{unknown} unlabeled sample(s) excluded from supervised runs"));
    }
    let mut ids = Vec::with_capacity(table.ids.len() - unknown);
    let mut labels = Vec::with_capacity(ids.capacity());
    let mut vectors = Vec::with_capacity(ids.capacity());
    for ((id, label), vector) in table.ids.into_iter().zip(table.labels).zip(table.vectors) {
        if label != Label::Unknown {
            ids.push(id);
            labels.push(label);
            vectors.push(vector);
        }
    }
    (ids, labels, vectors)
}

fn in_stage<T>(stage: &'static str, result: Result<T, StageFailure>) -> Result<T, StageError> {
    result.map_err(|source| StageError { stage, source })
}

/// Generates the configured synthetic scenario into the input directory.
pub fn run_synth(config: &RunConfig) -> Result<StageOutcome, StageError> {
    in_stage("synth", synth_inner(config))
}

fn synth_inner(config: &RunConfig) -> Result<StageOutcome, StageFailure> {
    let scenario = config.effective_scenario().ok_or_else(|| {
        StageFailure::Config(ConfigError::Invalid(
            "scenario is null; synth needs one to generate data".into(),
        ))
    })?;
    let (_, out) = stamp_output(config)?;
    let (datasets, truth) = generate(&scenario)?;
    let dir = &config.paths.input_dir;
    write_outputs(&datasets, &truth, dir)?;

    let mut artifacts: Vec<PathBuf> = datasets
        .iter()
        .map(|ds| dir.join(format!("{}.csv", ds.token_address)))
        .collect();
    artifacts.extend([
        dir.join("labels.csv"),
        dir.join("events.csv"),
        dir.join("ground_truth.json"),
        out.join(RUN_CONFIG_FILE),
    ]);
    Ok(StageOutcome { artifacts, warnings: Vec::new() })
}

/// Parses, merges, dedups, orders, caps, and labels the input CSVs; writes one
/// normalized CSV per token plus the dataset summary.
pub fn run_ingest(config: &RunConfig) -> Result<StageOutcome, StageError> {
    in_stage("ingest", ingest_inner(config))
}

fn ingest_inner(config: &RunConfig) -> Result<StageOutcome, StageFailure> {
    let input_dir = &config.paths.input_dir;
    if !input_dir.is_dir() {
        return Err(StageFailure::MissingInput {
            path: input_dir.clone(),
            what: "input directory".into(),
        });
    }
    let mut files: Vec<PathBuf> = fs::read_dir(input_dir)
        .map_err(|source| StageFailure::Io { path: input_dir.clone(), source })?
        .filter_map(|entry| entry.ok().map(|e| e.path()))
        .filter(|p| {
            let name = p.file_name().and_then(|n| n.to_str()).unwrap_or("");
            name.ends_with(".csv")
                && !name.ends_with(".normalized.csv")
                && name != "labels.csv"
                && name != "events.csv"
        })
        .collect();
    files.sort();
    if files.is_empty() {
        return Err(StageFailure::MissingInput {
            path: input_dir.clone(),
            what: "transfer CSVs".into(),
        });
    }

    let mut outcome = StageOutcome::default();
    let labels = match config.paths.resolved_label_file() {
        Some(path) => read_label_file(&path)?,
        None => {
            outcome
                .warnings
                .push("no label file found; every token is labeled unknown".into());
            BTreeMap::new()
        }
    };

    let mut chunks = Vec::with_capacity(files.len());
    for file in &files {
        let parsed = parse_csv(file, &config.ingest.schema, config.ingest.quantity_mode)?;
        if !parsed.row_errors.is_empty() {
            outcome.warnings.push(format!(
                "{}: skipped {} malformed row(s)",
                file.display(),
                parsed.row_errors.len()
            ));
        }
        chunks.push(parsed.records);
    }

    let datasets = build_datasets(chunks, &labels, config.ingest.cap);
    let unlabeled = datasets.iter().filter(|d| d.label == Label::Unknown).count();
    if unlabeled > 0 && !labels.is_empty() {
        outcome
            .warnings
            .push(format!("{unlabeled} token(s) missing from the label file; labeled unknown"));
    }
    for ds in &datasets {
        let report = consistency_check(ds);
        if report.violation_count() > 0 {
            outcome.warnings.push(format!(
                "{}: {} data quality violation(s)",
                ds.token_address,
                report.violation_count()
            ));
        }
    }

    let (stamp, out) = stamp_output(config)?;
    for ds in &datasets {
        let path = out.join(format!("{}.normalized.csv", ds.token_address));
        write_normalized_csv(ds, &path)?;
        outcome.artifacts.push(path);
    }
    let summary = summarize(&datasets);
    let summary_path = out.join(DATASET_SUMMARY_FILE);
    write_json(&summary_path, &SummaryArtifact { run: &stamp, summary: &summary })?;
    outcome.artifacts.extend([summary_path, out.join(RUN_CONFIG_FILE)]);
    Ok(outcome)
}

/// Scores the wash-trading patterns of every normalized token dataset.
pub fn run_patterns(config: &RunConfig) -> Result<StageOutcome, StageError> {
    in_stage("patterns", patterns_inner(config))
}

fn patterns_inner(config: &RunConfig) -> Result<StageOutcome, StageFailure> {
    let datasets = load_normalized(config)?;
    let scored: Vec<(String, PatternScores)> = datasets
        .par_iter()
        .map(|ds| {
            score_patterns(&ds.records, &config.patterns)
                .map(|scores| (ds.token_address.clone(), scores))
        })
        .collect::<Result<_, _>>()?;

    let (stamp, out) = stamp_output(config)?;
    let mut artifacts = Vec::with_capacity(scored.len() + 1);
    for (token_address, scores) in &scored {
        let path = out.join(format!("{token_address}.patterns.json"));
        write_json(&path, &PatternArtifact { run: &stamp, token_address, scores })?;
        artifacts.push(path);
    }
    artifacts.push(out.join(RUN_CONFIG_FILE));
    Ok(StageOutcome { artifacts, warnings: Vec::new() })
}

/// Extracts one risk vector per sample and writes the feature table.
pub fn run_features(config: &RunConfig) -> Result<StageOutcome, StageError> {
    in_stage("features", features_inner(config))
}

fn features_inner(config: &RunConfig) -> Result<StageOutcome, StageFailure> {
    let datasets = load_normalized(config)?;
    let samples = build_samples(&datasets, config.experiment.sample_unit)?;
    if samples.is_empty() {
        return Err(StageFailure::BadArtifact {
            path: config.paths.output_dir.join(DATASET_SUMMARY_FILE),
            message: "no token is long enough to yield a sample".into(),
        });
    }
    let extractor = FeatureExtractor { imbalance: config.features.imbalance };
    let vectors = sample_vectors(&datasets, &samples, &extractor)?;

    let (_, out) = stamp_output(config)?;
    let path = out.join(FEATURES_FILE);
    write_features_csv(&path, &samples, &vectors)?;
    Ok(StageOutcome { artifacts: vec![path, out.join(RUN_CONFIG_FILE)], warnings: Vec::new() })
}

/// Trains both classifiers on the train side of one stratified split and
/// writes the model artifacts plus the split itself.
pub fn run_train(config: &RunConfig) -> Result<StageOutcome, StageError> {
    in_stage("train", train_inner(config))
}

fn train_inner(config: &RunConfig) -> Result<StageOutcome, StageFailure> {
    let table = read_features_csv(&config.paths.output_dir.join(FEATURES_FILE))?;
    let mut outcome = StageOutcome::default();
    let (ids, labels, vectors) = labeled_rows(table, &mut outcome.warnings);
    let comparison = run_main_comparison(&vectors, &labels, &config.experiment, config.seed)?;

    let (stamp, out) = stamp_output(config)?;
    for model in comparison.models.values() {
        let path = out.join(model_file(model.kind()));
        model.save(&path)?;
        outcome.artifacts.push(path);
    }
    let pick = |rows: &[usize]| rows.iter().map(|&i| ids[i].clone()).collect();
    let split = SplitArtifact {
        run: stamp,
        n_rows: ids.len(),
        train_ids: pick(&comparison.split.train),
        test_ids: pick(&comparison.split.test),
        train: comparison.split.train,
        test: comparison.split.test,
    };
    let split_path = out.join(SPLIT_FILE);
    write_json(&split_path, &split)?;
    outcome.artifacts.extend([split_path, out.join(RUN_CONFIG_FILE)]);
    Ok(outcome)
}

/// Replays every positively labeled token prefix by prefix and collects the
/// realized warning lead times of one model.
fn replay_lead_times(
    model: &TrainedModel,
    extractor: &FeatureExtractor,
    datasets: &[TokenDataset],
    events: &BTreeMap<String, i64>,
) -> Result<Vec<LeadTimeRecord>, StageFailure> {
    datasets
        .iter()
        .filter(|ds| ds.label == Label::HighRisk)
        .filter_map(|ds| {
            lead_time_v1(
                model,
                extractor,
                ds,
                EvalGrid::PerMinute,
                events.get(&ds.token_address).copied(),
            )
            .map_err(StageFailure::from)
            .transpose()
        })
        .collect()
}

/// Scores both trained models on the held-out test rows; writes the metrics
/// report (with lead-time stats) and the error profile of the forest.
pub fn run_evaluate(config: &RunConfig) -> Result<StageOutcome, StageError> {
    in_stage("evaluate", evaluate_inner(config))
}

fn evaluate_inner(config: &RunConfig) -> Result<StageOutcome, StageFailure> {
    let out_dir = config.paths.output_dir.clone();
    let table = read_features_csv(&out_dir.join(FEATURES_FILE))?;
    let mut outcome = StageOutcome::default();
    let (ids, labels, vectors) = labeled_rows(table, &mut outcome.warnings);

    let split_path = out_dir.join(SPLIT_FILE);
    let split: SplitArtifact = read_json(&split_path, "train/test split (run the train stage first)")?;
    if split.n_rows != ids.len() || split.test.iter().any(|&i| i >= ids.len()) {
        return Err(StageFailure::BadArtifact {
            path: split_path,
            message: format!(
                "split was computed over {} labeled rows but the feature table has {}",
                split.n_rows,
                ids.len()
            ),
        });
    }

    let assignment = config.experiment.assignment()?;
    let matrix = crate::features::feature_matrix(&vectors, &labels, &[], &assignment)?;
    let test = matrix.select_rows(&split.test);
    let test_ids: Vec<String> = split.test.iter().map(|&i| ids[i].clone()).collect();

    let datasets = load_normalized(config)?;
    let events = load_event_times(config)?;
    let extractor = FeatureExtractor { imbalance: config.features.imbalance };

    let (stamp, out) = stamp_output(config)?;
    let mut reports = BTreeMap::new();
    for kind in [ModelKind::LogisticRegression, ModelKind::RandomForest] {
        let path = out.join(model_file(kind));
        if !path.is_file() {
            return Err(StageFailure::MissingInput {
                path,
                what: "model artifact (run the train stage first)".into(),
            });
        }
        let model = TrainedModel::load(&path)?;
        let scores = model.predict_proba(&test)?;
        let mut report = classification_metrics(&test.labels, &scores, model.threshold)?;
        let lead_times = replay_lead_times(&model, &extractor, &datasets, &events)?;
        let hours: Vec<f64> = lead_times.iter().map(|r| r.hours).collect();
        report.lead_time_hours = Some(lead_time_stats(&hours));

        if kind == ModelKind::RandomForest {
            let profile = error_profile(&test.labels, &scores, model.threshold, &test_ids);
            let path = out.join(ERROR_PROFILE_FILE);
            write_json(
                &path,
                &ErrorProfileArtifact { run: &stamp, model: kind.as_str(), profile: &profile },
            )?;
            outcome.artifacts.push(path);
        }
        reports.insert(kind.as_str().to_string(), report);
    }

    let metrics_path = out.join(METRICS_FILE);
    write_json(&metrics_path, &MetricsArtifact { run: &stamp, models: &reports })?;
    outcome.artifacts.extend([metrics_path, out.join(RUN_CONFIG_FILE)]);
    Ok(outcome)
}

/// Retrains the forest with each feature group removed and writes the table.
pub fn run_ablate(config: &RunConfig) -> Result<StageOutcome, StageError> {
    in_stage("ablate", ablate_inner(config))
}

fn ablate_inner(config: &RunConfig) -> Result<StageOutcome, StageFailure> {
    let table = read_features_csv(&config.paths.output_dir.join(FEATURES_FILE))?;
    let mut outcome = StageOutcome::default();
    let (_, labels, vectors) = labeled_rows(table, &mut outcome.warnings);
    let settings = run_ablation(&vectors, &labels, &config.experiment, config.seed)?;

    let (stamp, out) = stamp_output(config)?;
    let path = out.join(ABLATION_FILE);
    write_json(&path, &AblationArtifact { run: &stamp, settings: &settings })?;
    outcome.artifacts.extend([path, out.join(RUN_CONFIG_FILE)]);
    Ok(outcome)
}

/// Replays the forest over every positively labeled token and writes the
/// per-token warning lead times.
pub fn run_leadtime(config: &RunConfig) -> Result<StageOutcome, StageError> {
    in_stage("leadtime", leadtime_inner(config))
}

fn leadtime_inner(config: &RunConfig) -> Result<StageOutcome, StageFailure> {
    let datasets = load_normalized(config)?;
    let events = load_event_times(config)?;
    let model_path = config.paths.output_dir.join(model_file(ModelKind::RandomForest));
    if !model_path.is_file() {
        return Err(StageFailure::MissingInput {
            path: model_path,
            what: "model artifact (run the train stage first)".into(),
        });
    }
    let model = TrainedModel::load(&model_path)?;
    let extractor = FeatureExtractor { imbalance: config.features.imbalance };
    let records = replay_lead_times(&model, &extractor, &datasets, &events)?;

    let (_, out) = stamp_output(config)?;
    let path = out.join(LEAD_TIMES_FILE);
    let io_err = |source: csv::Error| StageFailure::Io { path: path.clone(), source: source.into() };
    let mut w = csv::Writer::from_path(&path).map_err(io_err)?;
    w.write_record(["token_address", "t_warning", "t_rugpull", "hours", "approximation_flag"])
        .map_err(io_err)?;
    for r in &records {
        w.write_record([
            r.token_address.as_str(),
            &r.t_warning.to_string(),
            &r.t_rugpull.to_string(),
            &r.hours.to_string(),
            &r.rug_time_approximated.to_string(),
        ])
        .map_err(io_err)?;
    }
    w.flush().map_err(|source| StageFailure::Io { path: path.clone(), source })?;
    Ok(StageOutcome { artifacts: vec![path, out.join(RUN_CONFIG_FILE)], warnings: Vec::new() })
}

/// Runs the whole experiment from one config: synthetic generation when a
/// scenario is configured, then ingest, features, train, evaluate, ablate,
/// and leadtime, each stage reading the artifacts of the one before.
pub fn run_pipeline(config: &RunConfig) -> Result<StageOutcome, StageError> {
    let mut outcome = StageOutcome::default();
    if config.scenario.is_some() {
        outcome.merge(run_synth(config)?);
    }
    for stage in [run_ingest, run_features, run_train, run_evaluate, run_ablate, run_leadtime] {
        outcome.merge(stage(config)?);
    }
    outcome.artifacts.sort();
    outcome.artifacts.dedup();
    Ok(outcome)
}
