//! Whole-run configuration: one JSON file binds every stage's options and the
//! global seed, and every output artifact embeds the resolved value, so a run
//! is reproducible from its artifacts alone.

use crate::experiments::{ExperimentConfig, ExperimentError};
use crate::features::ImbalanceAggregation;
use crate::ingest::{CsvSchema, QuantityMode, DEFAULT_CAP};
use crate::patterns::{PatternParams, MAX_SUPPORTED_CYCLE_LEN, MIN_CYCLE_LEN};
use crate::synth::{ScenarioSpec, SynthError};
use schemars::JsonSchema;
use serde::{Deserialize, Serialize};
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

/// Config schema version accepted by this build.
pub const CONFIG_VERSION: u32 = 1;

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("{path}: {source}")]
    Parse {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
    #[error("invalid config: {0}")]
    Invalid(String),
}

impl From<ExperimentError> for ConfigError {
    fn from(e: ExperimentError) -> Self {
        ConfigError::Invalid(e.to_string())
    }
}

impl From<SynthError> for ConfigError {
    fn from(e: SynthError) -> Self {
        ConfigError::Invalid(e.to_string())
    }
}

/// Input and output locations; relative paths resolve against the working
/// directory of the invocation.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, JsonSchema)]
#[serde(default, deny_unknown_fields)]
pub struct PathsConfig {
    /// Directory holding one transfer CSV per token.
    pub input_dir: PathBuf,
    /// Directory all artifacts are written into.
    pub output_dir: PathBuf,
    /// Token label CSV; when null, `<input_dir>/labels.csv` is used if it
    /// exists, otherwise tokens are labeled `unknown`.
    pub label_file: Option<PathBuf>,
    /// Rug-event annotation CSV; when null, `<input_dir>/events.csv` is used
    /// if it exists, otherwise event times fall back to the last observed
    /// transaction.
    pub event_file: Option<PathBuf>,
}

impl Default for PathsConfig {
    fn default() -> Self {
        Self {
            input_dir: PathBuf::from("data"),
            output_dir: PathBuf::from("out"),
            label_file: None,
            event_file: None,
        }
    }
}

impl PathsConfig {
    /// The label file to read, honoring the `labels.csv` fallback.
    pub fn resolved_label_file(&self) -> Option<PathBuf> {
        resolve_with_fallback(&self.label_file, &self.input_dir, "labels.csv")
    }

    /// The event file to read, honoring the `events.csv` fallback.
    pub fn resolved_event_file(&self) -> Option<PathBuf> {
        resolve_with_fallback(&self.event_file, &self.input_dir, "events.csv")
    }
}

fn resolve_with_fallback(explicit: &Option<PathBuf>, dir: &Path, name: &str) -> Option<PathBuf> {
    if let Some(p) = explicit {
        return Some(p.clone());
    }
    let fallback = dir.join(name);
    fallback.is_file().then_some(fallback)
}

/// CSV ingestion options.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, JsonSchema)]
#[serde(default, deny_unknown_fields)]
pub struct IngestOptions {
    /// Per-token record cap; the earliest records by (timestamp, tx_hash) win.
    pub cap: usize,
    /// Column-name mapping from the input header to the canonical fields.
    pub schema: CsvSchema,
    pub quantity_mode: QuantityMode,
}

impl Default for IngestOptions {
    fn default() -> Self {
        Self { cap: DEFAULT_CAP, schema: CsvSchema::default(), quantity_mode: QuantityMode::default() }
    }
}

/// Feature-extraction options.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default, JsonSchema)]
#[serde(default, deny_unknown_fields)]
pub struct FeatureOptions {
    /// How per-address net-flow imbalances aggregate into one scalar.
    pub imbalance: ImbalanceAggregation,
}

/// The single source of truth every subcommand reads.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Config schema version; must equal the version this build accepts.
    pub version: u32,
    /// Master seed; every randomized stage derives its own stream from it.
    pub seed: u64,
    pub paths: PathsConfig,
    pub ingest: IngestOptions,
    pub patterns: PatternParams,
    pub features: FeatureOptions,
    pub experiment: ExperimentConfig,
    /// Synthetic scenario used by `synth` (and by `pipeline` as its first
    /// step). The run seed overrides the scenario's own seed field. Null
    /// skips generation and expects transfer CSVs in `input_dir`.
    pub scenario: Option<ScenarioSpec>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            version: CONFIG_VERSION,
            seed: 42,
            paths: PathsConfig::default(),
            ingest: IngestOptions::default(),
            patterns: PatternParams::default(),
            features: FeatureOptions::default(),
            experiment: ExperimentConfig::default(),
            scenario: Some(ScenarioSpec::default()),
        }
    }
}

impl RunConfig {
    /// Reads and validates a config file.
    pub fn from_file(path: &Path) -> Result<Self, ConfigError> {
        let text = fs::read_to_string(path).map_err(|source| ConfigError::Io { path: path.into(), source })?;
        let config: RunConfig =
            serde_json::from_str(&text).map_err(|source| ConfigError::Parse { path: path.into(), source })?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.version != CONFIG_VERSION {
            return Err(ConfigError::Invalid(format!(
                "unsupported config version {} (this build accepts {CONFIG_VERSION})",
                self.version
            )));
        }
        if self.ingest.cap == 0 {
            return Err(ConfigError::Invalid("ingest.cap must be positive".into()));
        }
        if self.patterns.window_minutes == 0 {
            return Err(ConfigError::Invalid("patterns.window_minutes must be positive".into()));
        }
        if !(MIN_CYCLE_LEN..=MAX_SUPPORTED_CYCLE_LEN).contains(&self.patterns.max_cycle_len) {
            return Err(ConfigError::Invalid(format!(
                "patterns.max_cycle_len must be within {MIN_CYCLE_LEN}..={MAX_SUPPORTED_CYCLE_LEN}, got {}",
                self.patterns.max_cycle_len
            )));
        }
        self.experiment.validate()?;
        self.experiment.assignment()?;
        if let Some(scenario) = &self.scenario {
            self.effective_scenario_for(scenario).validate()?;
        }
        Ok(())
    }

    /// The scenario `synth` actually runs: the run seed wins.
    pub fn effective_scenario(&self) -> Option<ScenarioSpec> {
        self.scenario.as_ref().map(|s| self.effective_scenario_for(s))
    }

    fn effective_scenario_for(&self, scenario: &ScenarioSpec) -> ScenarioSpec {
        ScenarioSpec { seed: self.seed, ..scenario.clone() }
    }
}

/// JSON Schema of [`RunConfig`], with defaults, for `config.schema.json`.
pub fn config_schema_json() -> String {
    let schema = schemars::schema_for!(RunConfig);
    serde_json::to_string_pretty(&schema).expect("schema serializes")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_config_is_valid_and_round_trips() {
        let config = RunConfig::default();
        config.validate().unwrap();
        let json = serde_json::to_string_pretty(&config).unwrap();
        let back: RunConfig = serde_json::from_str(&json).unwrap();
        assert_eq!(back, config);
        assert_eq!(config.seed, 42);
        assert!(config.scenario.is_some());
    }

    #[test]
    fn empty_object_fills_every_default() {
        let config: RunConfig = serde_json::from_str("{}").unwrap();
        assert_eq!(config, RunConfig::default());
    }

    #[test]
    fn unknown_fields_are_rejected() {
        let err = serde_json::from_str::<RunConfig>(r#"{"tau": 0.5}"#).unwrap_err();
        assert!(err.to_string().contains("unknown field"));
        let err = serde_json::from_str::<RunConfig>(r#"{"ingest": {"gap": 1}}"#).unwrap_err();
        assert!(err.to_string().contains("unknown field"));
    }

    #[test]
    fn invalid_values_fail_validation() {
        let config = RunConfig { version: 99, ..RunConfig::default() };
        assert!(matches!(config.validate(), Err(ConfigError::Invalid(_))));

        let mut config = RunConfig::default();
        config.ingest.cap = 0;
        assert!(config.validate().is_err());

        let mut config = RunConfig::default();
        config.patterns.max_cycle_len = 9;
        assert!(config.validate().is_err());

        let mut config = RunConfig::default();
        config.experiment.train_fraction = 1.5;
        assert!(config.validate().is_err());

        let mut config = RunConfig::default();
        config
            .experiment
            .feature_groups
            .insert("no_such_feature".into(), crate::features::FeatureGroup::Trade);
        assert!(config.validate().is_err());

        let mut config = RunConfig::default();
        if let Some(s) = &mut config.scenario {
            s.records_per_minute = -1.0;
        }
        assert!(config.validate().is_err());
    }

    #[test]
    fn label_and_event_files_fall_back_to_input_dir() {
        let dir = tempfile::tempdir().unwrap();
        let mut paths = PathsConfig { input_dir: dir.path().into(), ..Default::default() };
        assert_eq!(paths.resolved_label_file(), None);
        assert_eq!(paths.resolved_event_file(), None);

        fs::write(dir.path().join("labels.csv"), "token_address,label\n").unwrap();
        fs::write(dir.path().join("events.csv"), "token_address,t_rugpull_unix\n").unwrap();
        assert_eq!(paths.resolved_label_file(), Some(dir.path().join("labels.csv")));
        assert_eq!(paths.resolved_event_file(), Some(dir.path().join("events.csv")));

        let explicit = dir.path().join("custom.csv");
        paths.label_file = Some(explicit.clone());
        assert_eq!(paths.resolved_label_file(), Some(explicit));
    }

    #[test]
    fn run_seed_overrides_the_scenario_seed() {
        let config = RunConfig { seed: 7, ..RunConfig::default() };
        let scenario = config.effective_scenario().unwrap();
        assert_eq!(scenario.seed, 7);
    }

    #[test]
    fn file_loading_reports_io_parse_and_validation_errors() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("config.json");
        assert!(matches!(RunConfig::from_file(&path), Err(ConfigError::Io { .. })));

        fs::write(&path, "not json").unwrap();
        assert!(matches!(RunConfig::from_file(&path), Err(ConfigError::Parse { .. })));

        fs::write(&path, r#"{"version": 3}"#).unwrap();
        assert!(matches!(RunConfig::from_file(&path), Err(ConfigError::Invalid(_))));

        fs::write(&path, serde_json::to_string(&RunConfig::default()).unwrap()).unwrap();
        assert_eq!(RunConfig::from_file(&path).unwrap(), RunConfig::default());
    }

    #[test]
    fn schema_document_describes_the_config() {
        let schema = config_schema_json();
        let parsed: serde_json::Value = serde_json::from_str(&schema).unwrap();
        let props = parsed["properties"].as_object().unwrap();
        for key in ["version", "seed", "paths", "ingest", "patterns", "features", "experiment", "scenario"] {
            assert!(props.contains_key(key), "schema misses {key}");
        }
    }
}
