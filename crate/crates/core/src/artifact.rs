//! The self-contained model document: everything needed to score and explain
//! raw-unit inputs without the training data.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::data::{ColumnKind, FeatureSchema, ScalerStats};
use crate::error::{Error, Result};
use crate::explain::{BackgroundSet, ExplainOptions, PartitionAB};
use crate::learners::{Algorithm, ModelConfig, TrainedModel};

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelArtifact {
    pub format_version: u32,
    pub algorithm: Algorithm,
    pub config: ModelConfig,
    /// Master seed of the run that produced the model.
    pub master_seed: u64,
    /// Selected features, in model input order.
    pub selected_features: Vec<String>,
    /// Schema restricted to the selected features and the label, with text
    /// levels for categorical columns.
    pub schema: FeatureSchema,
    pub scaler: ScalerStats,
    pub model: TrainedModel,
    /// Standardized reference rows for attributions.
    pub background: BackgroundSet,
    pub explain: ExplainOptions,
    /// Explained test partition, when the producing run kept one.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub partition: Option<PartitionAB>,
}

/// Hex SHA-256 of an artifact file's bytes.
pub fn content_hash(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

impl ModelArtifact {
    pub fn validate(&self) -> Result<()> {
        if self.format_version != FORMAT_VERSION {
            return Err(Error::Contract(format!(
                "artifact format {} is not supported (expected {FORMAT_VERSION})",
                self.format_version
            )));
        }
        let d = self.selected_features.len();
        if self.schema.feature_names() != self.selected_features {
            return Err(Error::Contract("artifact schema does not match its selected features".into()));
        }
        if self.model.n_features != d || self.background.n_features() != d {
            return Err(Error::Contract(format!(
                "artifact model or background width differs from {d} selected features"
            )));
        }
        for c in self.schema.features() {
            if c.kind == ColumnKind::Continuous && self.scaler.get(&c.name).is_none() {
                return Err(Error::Contract(format!("no scaler statistics for `{}`", c.name)));
            }
        }
        Ok(())
    }

    pub fn to_json_bytes(&self) -> Vec<u8> {
        let mut bytes = serde_json::to_vec_pretty(self).expect("artifact serializes");
        bytes.push(b'\n');
        bytes
    }

    pub fn from_json_bytes(bytes: &[u8]) -> Result<Self> {
        let a: ModelArtifact = serde_json::from_slice(bytes)?;
        a.validate()?;
        Ok(a)
    }

    /// Writes the artifact and returns its content hash.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<String> {
        let path = path.as_ref();
        let bytes = self.to_json_bytes();
        std::fs::write(path, &bytes).map_err(|e| Error::io(path, e))?;
        Ok(content_hash(&bytes))
    }

    /// Reads an artifact and returns it with its content hash.
    pub fn load(path: impl AsRef<Path>) -> Result<(Self, String)> {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Ok((Self::from_json_bytes(&bytes)?, content_hash(&bytes)))
    }

    /// Converts one raw-unit value of `feature` into the model's input
    /// space. Categorical values must be integral codes inside the declared
    /// level list when one exists.
    pub fn standardize_value(&self, feature: &str, raw: f64) -> Result<f64> {
        let col = self
            .schema
            .column(feature)
            .filter(|c| c.kind != ColumnKind::Label)
            .ok_or_else(|| Error::Schema(format!("`{feature}` is not a model feature")))?;
        if !raw.is_finite() {
            return Err(Error::Contract(format!("`{feature}` is not finite")));
        }
        match col.kind {
            ColumnKind::Categorical => {
                let in_range = col.levels.is_empty() || (raw >= 0.0 && (raw as usize) < col.levels.len());
                if raw.fract() != 0.0 || !in_range {
                    return Err(Error::Schema(format!(
                        "`{feature}` = {raw} is not a declared category code"
                    )));
                }
                Ok(raw)
            }
            _ => Ok(self.scaler.transform(feature, raw)),
        }
    }

    /// Category code of a text level, if `feature` declares one.
    pub fn level_code(&self, feature: &str, level: &str) -> Option<f64> {
        let col = self.schema.column(feature)?;
        col.levels.iter().position(|l| l == level).map(|i| i as f64)
    }

    /// Model input for a raw-unit patient record naming exactly the selected
    /// features.
    pub fn model_input(&self, raw: &BTreeMap<String, f64>) -> Result<Vec<f64>> {
        if let Some(extra) = raw.keys().find(|k| !self.selected_features.contains(k)) {
            return Err(Error::Schema(format!("`{extra}` is not a model feature")));
        }
        self.selected_features
            .iter()
            .map(|f| {
                let v = raw
                    .get(f)
                    .ok_or_else(|| Error::Schema(format!("missing feature `{f}`")))?;
                self.standardize_value(f, *v)
            })
            .collect()
    }

    /// Standardizes a raw row given in model feature order.
    pub fn model_row(&self, raw: &[f64]) -> Result<Vec<f64>> {
        if raw.len() != self.selected_features.len() {
            return Err(Error::Contract(format!(
                "row has {} values, model expects {}",
                raw.len(),
                self.selected_features.len()
            )));
        }
        self.selected_features
            .iter()
            .zip(raw)
            .map(|(f, v)| self.standardize_value(f, *v))
            .collect()
    }
}
