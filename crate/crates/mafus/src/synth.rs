//! Synthetic cohorts in the 25-column layout.
//!
//! Every continuous column is Gaussian with a fixed location and scale in
//! clinical units. Class-1 rows are shifted by `signal` standard deviations
//! on Age, Blood Glucose and HOMA; nothing else depends on the label.

use mafus_core::data::{Cohort, ColumnKind, FeatureSchema};
use mafus_core::rng;
use mafus_core::{Error, Result};
use rand::seq::index;
use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

/// Shifted columns for class-1 rows.
pub const SIGNAL_FEATURES: [&str; 3] = ["Age", "Blood Glucose", "HOMA"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthSpec {
    pub n: usize,
    pub prevalence: f64,
    pub signal: f64,
    pub seed: u64,
    /// Exactly `round(prevalence * n)` class-1 rows instead of Bernoulli draws.
    pub exact_count: bool,
    /// Rows that get one blanked cell.
    pub missing_rows: usize,
}

impl Default for SynthSpec {
    fn default() -> Self {
        SynthSpec {
            n: 1000,
            prevalence: 0.2,
            signal: 3.0,
            seed: 1,
            exact_count: true,
            missing_rows: 0,
        }
    }
}

/// (mean, sd) per continuous column.
fn location(name: &str) -> (f64, f64) {
    match name {
        "GOT" => (25.0, 10.0),
        "Weight" => (75.0, 14.0),
        "Hypertension" => (0.4, 0.2),
        "Blood lipids" => (1.0, 0.5),
        "SBP" => (130.0, 18.0),
        "DBP" => (80.0, 10.0),
        "TC" => (200.0, 38.0),
        "Triglycerides" => (130.0, 60.0),
        "Blood Glucose" => (100.0, 22.0),
        "Alkaline Phosphatase" => (70.0, 20.0),
        "HDL-C" => (50.0, 13.0),
        "LDL-C" => (125.0, 33.0),
        "GPT" => (27.0, 14.0),
        "GGT" => (30.0, 20.0),
        "Age" => (55.0, 11.0),
        "HOMA" => (2.6, 1.4),
        "Residual Cholesterol" => (25.0, 12.0),
        "BMI" => (27.0, 4.5),
        _ => (0.0, 1.0),
    }
}

/// Text levels of the categorical columns; an empty list means a 0/1 code
/// with the given class-1 probability.
fn categories(name: &str) -> (&'static [&'static str], f64) {
    match name {
        "Education" => (&["primary", "secondary", "high school", "degree"], 0.0),
        "Job" => (&["employed", "retired", "unemployed", "other"], 0.0),
        "Marital Status" => (&["married", "single", "widowed", "divorced"], 0.0),
        "Gender" => (&["M", "F"], 0.0),
        "Diabetes condition" => (&[], 0.15),
        "Smoke" => (&[], 0.25),
        _ => (&[], 0.5),
    }
}

pub fn gen_synthetic(spec: &SynthSpec) -> Result<Cohort> {
    if !(spec.prevalence > 0.0 && spec.prevalence < 1.0) {
        return Err(Error::Config(format!("prevalence {} must lie in (0, 1)", spec.prevalence)));
    }
    if spec.n < 20 {
        return Err(Error::Config(format!("n = {} is below the minimum of 20", spec.n)));
    }
    if !spec.signal.is_finite() {
        return Err(Error::Config("signal must be finite".into()));
    }
    if spec.missing_rows > spec.n {
        return Err(Error::Config("missing_rows exceeds n".into()));
    }

    let columns: Vec<_> = FeatureSchema::cohort_default()
        .columns()
        .iter()
        .cloned()
        .map(|mut c| {
            if c.kind == ColumnKind::Categorical {
                c.levels = categories(&c.name).0.iter().map(|s| s.to_string()).collect();
            }
            c
        })
        .collect();
    let schema = FeatureSchema::new(columns)?;
    let features: Vec<_> = schema.features().cloned().collect();

    let mut rng = rng::seeded(spec.seed);
    let labels: Vec<u8> = if spec.exact_count {
        let k = (spec.prevalence * spec.n as f64).round() as usize;
        let mut l = vec![0u8; spec.n];
        for i in index::sample(&mut rng, spec.n, k) {
            l[i] = 1;
        }
        l
    } else {
        (0..spec.n).map(|_| rng.random_bool(spec.prevalence) as u8).collect()
    };

    let mut rows = Vec::with_capacity(spec.n);
    for &y in &labels {
        let mut row = Vec::with_capacity(features.len());
        for col in &features {
            let v = match col.kind {
                ColumnKind::Continuous => {
                    let (mean, sd) = location(&col.name);
                    let z: f64 = StandardNormal.sample(&mut rng);
                    let shift = if y == 1 && SIGNAL_FEATURES.contains(&col.name.as_str()) {
                        spec.signal
                    } else {
                        0.0
                    };
                    ((mean + sd * (z + shift)) * 100.0).round() / 100.0
                }
                _ => {
                    let (levels, p) = categories(&col.name);
                    if levels.is_empty() {
                        rng.random_bool(p) as u8 as f64
                    } else {
                        rng.random_range(0..levels.len()) as f64
                    }
                }
            };
            row.push(v);
        }
        rows.push(row);
    }

    let mut with_label: Vec<Option<u8>> = labels.into_iter().map(Some).collect();
    for i in index::sample(&mut rng, spec.n, spec.missing_rows) {
        // one blank cell per chosen row; the label counts as a cell
        let j = rng.random_range(0..=features.len());
        if j == features.len() {
            with_label[i] = None;
        } else {
            rows[i][j] = f64::NAN;
        }
    }
    Cohort::with_missing(schema, rows, with_label, (0..spec.n).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use mafus_core::data::drop_incomplete;

    #[test]
    fn exact_count_mode() {
        let c = gen_synthetic(&SynthSpec {
            n: 1000,
            prevalence: 0.2,
            ..Default::default()
        })
        .unwrap();
        assert_eq!(c.class_counts(), [800, 200]);
        assert_eq!(c.n_features(), 24);
    }

    #[test]
    fn missing_rows_are_dropped() {
        let c = gen_synthetic(&SynthSpec {
            n: 1674,
            missing_rows: 113,
            ..Default::default()
        })
        .unwrap();
        assert_eq!(c.len(), 1674);
        assert_eq!(drop_incomplete(&c).unwrap().len(), 1561);
    }

    #[test]
    fn deterministic_in_seed() {
        let spec = SynthSpec {
            n: 50,
            ..Default::default()
        };
        assert_eq!(gen_synthetic(&spec).unwrap(), gen_synthetic(&spec).unwrap());
        let other = SynthSpec { seed: 2, ..spec };
        assert_ne!(gen_synthetic(&other).unwrap().rows(), gen_synthetic(&SynthSpec { seed: 1, ..other.clone() }).unwrap().rows());
    }

    #[test]
    fn rejects_bad_spec() {
        assert!(gen_synthetic(&SynthSpec { n: 10, ..Default::default() }).is_err());
        assert!(gen_synthetic(&SynthSpec { prevalence: 1.0, ..Default::default() }).is_err());
    }
}
