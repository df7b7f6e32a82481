//! Classical classifiers over pooled tweet vectors: one-vs-rest logistic
//! regression, a Gini decision tree and a bagged random forest.

pub mod forest;
pub mod logistic;
pub mod tree;

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::Label;
use crate::embedding::EncodedDataset;

pub use forest::{rf_predict, rf_train, RandomForest, RfConfig};
pub use logistic::{lr_predict, lr_train, LrConfig, LrModel};
pub use tree::{dt_predict, dt_train, DecisionTree, DtConfig, DtNode};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum MlError {
    #[error("training data holds fewer than two classes")]
    SingleClassData,
    #[error("training data is empty")]
    EmptyDataset,
    #[error("expected vectors of length {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("invalid model file: {0}")]
    InvalidModel(String),
    #[error("unsupported schema version {0}")]
    SchemaVersion(u32),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T> = std::result::Result<T, MlError>;

pub(crate) fn check_dim(expected: usize, found: usize) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(MlError::DimensionMismatch { expected, found })
    }
}

/// Distinct labels of the dataset in class order.
pub(crate) fn class_list(data: &EncodedDataset) -> Vec<Label> {
    let mut seen = [false; 3];
    for r in &data.records {
        seen[r.label.index()] = true;
    }
    Label::ALL.into_iter().filter(|l| seen[l.index()]).collect()
}

/// Index of the largest value; the earliest wins ties.
pub(crate) fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate() {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

/// Most frequent label; ties go to the lowest class index.
pub fn vote_mode(votes: &[Label]) -> Option<Label> {
    let mut counts = [0usize; 3];
    for v in votes {
        counts[v.index()] += 1;
    }
    let best = (0..3).fold(0, |b, i| if counts[i] > counts[b] { i } else { b });
    (counts[best] > 0).then(|| Label::ALL[best])
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelType {
    LogisticRegression,
    DecisionTree,
    RandomForest,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelEnvelope {
    pub schema_version: u32,
    pub model_type: ModelType,
    pub config: serde_json::Value,
    pub parameters: serde_json::Value,
}

/// Any trained classical model.
#[derive(Debug, Clone, PartialEq)]
pub enum MlModel {
    Lr(LrModel),
    Dt(DecisionTree),
    Rf(RandomForest),
}

impl MlModel {
    pub fn model_type(&self) -> ModelType {
        match self {
            MlModel::Lr(_) => ModelType::LogisticRegression,
            MlModel::Dt(_) => ModelType::DecisionTree,
            MlModel::Rf(_) => ModelType::RandomForest,
        }
    }

    pub fn predict(&self, x: &[f64]) -> Result<Label> {
        match self {
            MlModel::Lr(m) => lr_predict(m, x).map(|p| p.0),
            MlModel::Dt(t) => dt_predict(t, x),
            MlModel::Rf(f) => rf_predict(f, x),
        }
    }

    /// Class probabilities indexed by `Label::index`.
    pub fn predict_proba(&self, x: &[f64]) -> Result<[f64; 3]> {
        let mut p = [0.0; 3];
        match self {
            MlModel::Lr(m) => {
                let scores = m.scores(x)?;
                let sum: f64 = scores.iter().sum();
                for (c, s) in m.classes.iter().zip(&scores) {
                    p[c.index()] = if sum > 0.0 { s / sum } else { 1.0 / scores.len() as f64 };
                }
            }
            MlModel::Dt(t) => p = t.leaf_distribution(x)?,
            MlModel::Rf(f) => p = f.vote_fractions(x)?,
        }
        Ok(p)
    }

    pub fn to_envelope(&self) -> ModelEnvelope {
        let to = |v: serde_json::Result<serde_json::Value>| v.expect("model serializes");
        let (config, parameters) = match self {
            MlModel::Lr(m) => (
                to(serde_json::to_value(m.config)),
                to(serde_json::to_value(m)),
            ),
            MlModel::Dt(t) => (to(serde_json::to_value(t.config)), to(serde_json::to_value(t))),
            MlModel::Rf(f) => (to(serde_json::to_value(f.config)), to(serde_json::to_value(f))),
        };
        ModelEnvelope {
            schema_version: SCHEMA_VERSION,
            model_type: self.model_type(),
            config,
            parameters,
        }
    }

    pub fn from_envelope(env: ModelEnvelope) -> Result<MlModel> {
        if env.schema_version != SCHEMA_VERSION {
            return Err(MlError::SchemaVersion(env.schema_version));
        }
        let bad = |e: serde_json::Error| MlError::InvalidModel(e.to_string());
        Ok(match env.model_type {
            ModelType::LogisticRegression => MlModel::Lr(serde_json::from_value(env.parameters).map_err(bad)?),
            ModelType::DecisionTree => MlModel::Dt(serde_json::from_value(env.parameters).map_err(bad)?),
            ModelType::RandomForest => MlModel::Rf(serde_json::from_value(env.parameters).map_err(bad)?),
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.to_envelope()).expect("envelope serializes")
    }

    pub fn from_json(s: &str) -> Result<MlModel> {
        let env: ModelEnvelope = serde_json::from_str(s).map_err(|e| MlError::InvalidModel(e.to_string()))?;
        MlModel::from_envelope(env)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()).map_err(|source| MlError::Io {
            path: path.display().to_string(),
            source,
        })
    }

    pub fn load(path: &Path) -> Result<MlModel> {
        let s = std::fs::read_to_string(path).map_err(|source| MlError::Io {
            path: path.display().to_string(),
            source,
        })?;
        MlModel::from_json(&s)
    }
}

/// Predictions for every record of a dataset.
pub fn predict_all(model: &MlModel, data: &EncodedDataset) -> Result<Vec<Label>> {
    data.records.iter().map(|r| model.predict(&r.vector)).collect()
}
