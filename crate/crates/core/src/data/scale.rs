use serde::{Deserialize, Serialize};

use super::cohort::Cohort;
use super::schema::ColumnKind;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureStats {
    pub name: String,
    pub mean: f64,
    /// Population standard deviation (divisor n).
    pub std: f64,
}

/// Per-feature location and scale for every continuous column.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ScalerStats {
    pub features: Vec<FeatureStats>,
}

impl ScalerStats {
    pub fn get(&self, name: &str) -> Option<&FeatureStats> {
        self.features.iter().find(|f| f.name == name)
    }

    /// `(v - mean) / std`, or `v - mean` for a constant feature. Features the
    /// scaler does not know are returned unchanged.
    pub fn transform(&self, name: &str, v: f64) -> f64 {
        match self.get(name) {
            Some(s) if s.std > 0.0 => (v - s.mean) / s.std,
            Some(s) => v - s.mean,
            None => v,
        }
    }

    pub fn inverse(&self, name: &str, z: f64) -> f64 {
        match self.get(name) {
            Some(s) if s.std > 0.0 => z * s.std + s.mean,
            Some(s) => z + s.mean,
            None => z,
        }
    }
}

pub fn fit_scaler(cohort: &Cohort) -> Result<ScalerStats> {
    if cohort.is_empty() {
        return Err(Error::EmptyInput("cannot fit a scaler on an empty cohort".into()));
    }
    let n = cohort.len() as f64;
    let features = cohort
        .schema()
        .features()
        .enumerate()
        .filter(|(_, c)| c.kind == ColumnKind::Continuous)
        .map(|(j, c)| {
            let mean = cohort.rows().iter().map(|r| r[j]).sum::<f64>() / n;
            let var = cohort
                .rows()
                .iter()
                .map(|r| (r[j] - mean).powi(2))
                .sum::<f64>()
                / n;
            FeatureStats {
                name: c.name.clone(),
                mean,
                std: var.sqrt(),
            }
        })
        .collect();
    Ok(ScalerStats { features })
}

pub fn apply_scaler(cohort: &Cohort, stats: &ScalerStats) -> Result<Cohort> {
    let continuous: Vec<(usize, &FeatureStats)> = cohort
        .schema()
        .features()
        .enumerate()
        .filter(|(_, c)| c.kind == ColumnKind::Continuous)
        .map(|(j, c)| {
            stats
                .get(&c.name)
                .map(|s| (j, s))
                .ok_or_else(|| Error::Contract(format!("no scaler statistics for `{}`", c.name)))
        })
        .collect::<Result<_>>()?;
    let rows = cohort
        .rows()
        .iter()
        .map(|r| {
            let mut out = r.clone();
            for &(j, s) in &continuous {
                out[j] = if s.std > 0.0 {
                    (r[j] - s.mean) / s.std
                } else {
                    r[j] - s.mean
                };
            }
            out
        })
        .collect();
    Ok(cohort.with_rows(rows))
}
