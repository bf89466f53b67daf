//! Classifier training, scoring, and the versioned model artifact.
//!
//! Both classifiers share one artifact envelope carrying the seed, the warn
//! threshold, and the exact feature columns the model was fitted on; scoring
//! validates the columns so a model is never applied to a reordered or masked
//! matrix it was not trained for.

pub mod forest;
pub mod logreg;
pub mod scaler;

use crate::features::FeatureMatrix;
use serde::{Deserialize, Serialize};
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

pub use forest::{DecisionTree, ForestModel, ForestParams, TreeNode};
pub use logreg::{LogRegModel, LogRegParams};
pub use scaler::Scaler;

/// Bump when the serialized artifact layout changes.
pub const ARTIFACT_VERSION: u32 = 1;

#[derive(Debug, thiserror::Error)]
pub enum ModelError {
    #[error("training requires at least one sample")]
    EmptyTrainingSet,
    #[error("training labels contain a single class")]
    SingleClassTraining,
    #[error("non-finite feature value at row {row}, column {column}")]
    NonFiniteFeature { row: usize, column: usize },
    #[error("feature columns do not match the model: expected {expected:?}, got {got:?}")]
    ColumnMismatch { expected: Vec<String>, got: Vec<String> },
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
}

/// Which classifier an artifact holds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    LogisticRegression,
    RandomForest,
}

impl ModelKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ModelKind::LogisticRegression => "logistic_regression",
            ModelKind::RandomForest => "random_forest",
        }
    }
}

/// Kind-specific payload, tagged inline in the artifact JSON.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ModelPayload {
    LogisticRegression(LogRegModel),
    RandomForest(ForestModel),
}

/// A trained classifier plus everything needed to reproduce and apply it.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct TrainedModel {
    pub version: u32,
    pub seed: u64,
    /// Warn threshold tau; a warning fires on score strictly above it.
    pub threshold: f64,
    pub feature_columns: Vec<String>,
    #[serde(flatten)]
    pub payload: ModelPayload,
}

/// Training hyperparameters for both model families.
#[derive(Debug, Clone, Serialize, Deserialize, Default, PartialEq, schemars::JsonSchema)]
#[serde(default)]
pub struct ModelsConfig {
    pub logreg: LogRegParams,
    pub forest: ForestParams,
}

fn validate_matrix(m: &FeatureMatrix) -> Result<(), ModelError> {
    if m.rows.is_empty() {
        return Err(ModelError::EmptyTrainingSet);
    }
    for (row_idx, row) in m.rows.iter().enumerate() {
        for (col_idx, v) in row.iter().enumerate() {
            if !v.is_finite() {
                return Err(ModelError::NonFiniteFeature { row: row_idx, column: col_idx });
            }
        }
    }
    Ok(())
}

/// Trains one model kind on the matrix; requires both classes and finite values.
pub fn train(
    kind: ModelKind,
    matrix: &FeatureMatrix,
    config: &ModelsConfig,
    seed: u64,
    threshold: f64,
) -> Result<TrainedModel, ModelError> {
    validate_matrix(matrix)?;
    let first = matrix.labels[0];
    if matrix.labels.iter().all(|&l| l == first) {
        return Err(ModelError::SingleClassTraining);
    }
    let payload = match kind {
        ModelKind::LogisticRegression => {
            ModelPayload::LogisticRegression(logreg::train_logreg(&matrix.rows, &matrix.labels, &config.logreg)?)
        }
        ModelKind::RandomForest => {
            ModelPayload::RandomForest(forest::train_forest(&matrix.rows, &matrix.labels, &config.forest, seed)?)
        }
    };
    Ok(TrainedModel {
        version: ARTIFACT_VERSION,
        seed,
        threshold,
        feature_columns: matrix.columns.clone(),
        payload,
    })
}

impl TrainedModel {
    pub fn kind(&self) -> ModelKind {
        match self.payload {
            ModelPayload::LogisticRegression(_) => ModelKind::LogisticRegression,
            ModelPayload::RandomForest(_) => ModelKind::RandomForest,
        }
    }

    /// Scores one row already in the model's column order.
    pub fn predict_row(&self, row: &[f64]) -> f64 {
        match &self.payload {
            ModelPayload::LogisticRegression(m) => m.predict_row(row),
            ModelPayload::RandomForest(m) => m.predict_row(row),
        }
    }

    /// Positive-class probabilities for a matrix with matching columns.
    pub fn predict_proba(&self, matrix: &FeatureMatrix) -> Result<Vec<f64>, ModelError> {
        if matrix.columns != self.feature_columns {
            return Err(ModelError::ColumnMismatch {
                expected: self.feature_columns.clone(),
                got: matrix.columns.clone(),
            });
        }
        validate_matrix(matrix)?;
        Ok(matrix.rows.iter().map(|r| self.predict_row(r)).collect())
    }

    /// Warning flag: probability strictly above the threshold.
    pub fn warn(&self, score: f64) -> bool {
        score > self.threshold
    }

    pub fn save(&self, path: &Path) -> Result<(), ModelError> {
        let json = serde_json::to_string_pretty(self)
            .map_err(|source| ModelError::Json { path: path.into(), source })?;
        fs::write(path, json).map_err(|source| ModelError::Io { path: path.into(), source })
    }

    pub fn load(path: &Path) -> Result<Self, ModelError> {
        let text = fs::read_to_string(path).map_err(|source| ModelError::Io { path: path.into(), source })?;
        serde_json::from_str(&text).map_err(|source| ModelError::Json { path: path.into(), source })
    }
}
