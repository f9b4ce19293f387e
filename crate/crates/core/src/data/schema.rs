use std::collections::HashSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ColumnKind {
    Continuous,
    Categorical,
    Label,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Column {
    pub name: String,
    pub kind: ColumnKind,
    /// Text levels of a categorical column; code `i` stands for `levels[i]`.
    /// Empty for numerically coded categoricals.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub levels: Vec<String>,
}

impl Column {
    pub fn new(name: impl Into<String>, kind: ColumnKind) -> Self {
        Column {
            name: name.into(),
            kind,
            levels: Vec::new(),
        }
    }
}

/// Ordered column list with exactly one label column.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "SchemaDoc", into = "SchemaDoc")]
pub struct FeatureSchema {
    columns: Vec<Column>,
    label: usize,
}

#[derive(Serialize, Deserialize)]
struct SchemaDoc {
    columns: Vec<Column>,
}

impl TryFrom<SchemaDoc> for FeatureSchema {
    type Error = Error;

    fn try_from(doc: SchemaDoc) -> Result<Self> {
        FeatureSchema::new(doc.columns)
    }
}

impl From<FeatureSchema> for SchemaDoc {
    fn from(schema: FeatureSchema) -> Self {
        SchemaDoc {
            columns: schema.columns,
        }
    }
}

pub const LABEL_COLUMN: &str = "Status";

const CONTINUOUS: [&str; 18] = [
    "GOT",
    "Weight",
    "Hypertension",
    "Blood lipids",
    "SBP",
    "DBP",
    "TC",
    "Triglycerides",
    "Blood Glucose",
    "Alkaline Phosphatase",
    "HDL-C",
    "LDL-C",
    "GPT",
    "GGT",
    "Age",
    "HOMA",
    "Residual Cholesterol",
    "BMI",
];

const CATEGORICAL: [&str; 6] = [
    "Education",
    "Job",
    "Marital Status",
    "Diabetes condition",
    "Smoke",
    "Gender",
];

/// The ten features retained for the mortality models: nine ranked by
/// boosted-tree relevance plus Gender, which is always forced in.
pub const REFERENCE_SELECTION: [&str; 10] = [
    "Age",
    "HDL-C",
    "HOMA",
    "BMI",
    "Weight",
    "LDL-C",
    "Blood Glucose",
    "TC",
    "Triglycerides",
    "Gender",
];

impl FeatureSchema {
    pub fn new(columns: Vec<Column>) -> Result<Self> {
        let mut seen = HashSet::new();
        for c in &columns {
            if c.name.trim().is_empty() {
                return Err(Error::Schema("column with empty name".into()));
            }
            if !seen.insert(c.name.as_str()) {
                return Err(Error::Schema(format!("duplicate column `{}`", c.name)));
            }
        }
        let labels: Vec<usize> = columns
            .iter()
            .enumerate()
            .filter(|(_, c)| c.kind == ColumnKind::Label)
            .map(|(i, _)| i)
            .collect();
        match labels.as_slice() {
            [label] => Ok(FeatureSchema {
                columns,
                label: *label,
            }),
            [] => Err(Error::Schema("schema declares no label column".into())),
            _ => Err(Error::Schema(format!(
                "schema declares {} label columns, expected exactly one",
                labels.len()
            ))),
        }
    }

    /// The 25-column cohort layout: 18 continuous measurements, the Status
    /// label and six categorical descriptors.
    pub fn cohort_default() -> Self {
        let mut columns: Vec<Column> = CONTINUOUS
            .iter()
            .map(|n| Column::new(*n, ColumnKind::Continuous))
            .collect();
        columns.push(Column::new(LABEL_COLUMN, ColumnKind::Label));
        columns.extend(
            CATEGORICAL
                .iter()
                .map(|n| Column::new(*n, ColumnKind::Categorical)),
        );
        FeatureSchema::new(columns).expect("default schema is valid")
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Schema(e.to_string()))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("schema serializes")
    }

    pub fn columns(&self) -> &[Column] {
        &self.columns
    }

    pub fn label(&self) -> &Column {
        &self.columns[self.label]
    }

    /// Non-label columns in schema order. These define the feature axis of a
    /// cohort's row matrix.
    pub fn features(&self) -> impl Iterator<Item = &Column> {
        self.columns.iter().filter(|c| c.kind != ColumnKind::Label)
    }

    pub fn feature_names(&self) -> Vec<String> {
        self.features().map(|c| c.name.clone()).collect()
    }

    pub fn n_features(&self) -> usize {
        self.columns.len() - 1
    }

    pub fn column(&self, name: &str) -> Option<&Column> {
        self.columns.iter().find(|c| c.name == name)
    }

    pub fn feature_index(&self, name: &str) -> Option<usize> {
        self.features().position(|c| c.name == name)
    }

    pub(crate) fn feature_mut(&mut self, index: usize) -> &mut Column {
        let pos = self
            .columns
            .iter()
            .enumerate()
            .filter(|(_, c)| c.kind != ColumnKind::Label)
            .nth(index)
            .map(|(i, _)| i)
            .expect("feature index in range");
        &mut self.columns[pos]
    }

    /// Keeps the label plus the named features, preserving schema order.
    pub fn restrict(&self, names: &[String]) -> Result<Self> {
        for n in names {
            match self.column(n) {
                Some(c) if c.kind != ColumnKind::Label => {}
                Some(_) => return Err(Error::Schema(format!("`{n}` is the label column"))),
                None => return Err(Error::Schema(format!("unknown column `{n}`"))),
            }
        }
        let columns = self
            .columns
            .iter()
            .filter(|c| c.kind == ColumnKind::Label || names.contains(&c.name))
            .cloned()
            .collect();
        FeatureSchema::new(columns)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_schema_has_25_columns() {
        let s = FeatureSchema::cohort_default();
        assert_eq!(s.columns().len(), 25);
        assert_eq!(s.label().name, "Status");
        assert_eq!(s.n_features(), 24);
        assert_eq!(
            s.features()
                .filter(|c| c.kind == ColumnKind::Continuous)
                .count(),
            18
        );
        for f in REFERENCE_SELECTION {
            assert!(s.column(f).is_some(), "{f}");
        }
    }

    #[test]
    fn rejects_duplicate_and_missing_label() {
        let dup = vec![
            Column::new("a", ColumnKind::Continuous),
            Column::new("a", ColumnKind::Label),
        ];
        assert!(matches!(FeatureSchema::new(dup), Err(Error::Schema(_))));
        let none = vec![Column::new("a", ColumnKind::Continuous)];
        assert!(matches!(FeatureSchema::new(none), Err(Error::Schema(_))));
        let two = vec![
            Column::new("a", ColumnKind::Label),
            Column::new("b", ColumnKind::Label),
        ];
        assert!(FeatureSchema::new(two).is_err());
    }

    #[test]
    fn toml_round_trip() {
        let s = FeatureSchema::cohort_default();
        let back = FeatureSchema::from_toml_str(&s.to_toml_string()).unwrap();
        assert_eq!(s, back);
    }

    #[test]
    fn toml_parsing_validates() {
        let text = r#"
[[columns]]
name = "x"
kind = "continuous"
"#;
        assert!(FeatureSchema::from_toml_str(text).is_err());
    }

    #[test]
    fn restrict_keeps_schema_order() {
        let s = FeatureSchema::cohort_default();
        let r = s
            .restrict(&["Gender".to_string(), "Age".to_string()])
            .unwrap();
        assert_eq!(r.feature_names(), vec!["Age", "Gender"]);
        assert!(s.restrict(&["Nope".to_string()]).is_err());
    }
}
