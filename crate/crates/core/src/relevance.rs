//! Boosted-tree feature relevance and thresholded selection.
//!
//! The default relevance of a feature is the number of splits that use it
//! across the whole fitted ensemble (the booster's "F score"). Total split
//! gain is available as an alternative.

use serde::{Deserialize, Serialize};

use crate::data::Cohort;
use crate::error::{Error, Result};
use crate::learners::{self, Algorithm, ModelConfig};

pub const DEFAULT_THRESHOLD: f64 = 105.0;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Importance {
    #[default]
    Splits,
    Gain,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureScore {
    pub feature: String,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RelevanceReport {
    pub importance: Importance,
    /// One entry per candidate feature, in schema order.
    pub scores: Vec<FeatureScore>,
    /// Feature names by descending score; ties keep schema order.
    pub ranking: Vec<String>,
    pub threshold: Option<f64>,
    pub forced: Vec<String>,
    /// Filled in by [`RelevanceReport::with_selection`], in schema order.
    pub selected: Vec<String>,
}

impl RelevanceReport {
    pub fn from_scores(importance: Importance, scores: Vec<FeatureScore>) -> Self {
        let mut order: Vec<usize> = (0..scores.len()).collect();
        order.sort_by(|&a, &b| scores[b].score.total_cmp(&scores[a].score).then(a.cmp(&b)));
        RelevanceReport {
            importance,
            ranking: order.iter().map(|&i| scores[i].feature.clone()).collect(),
            scores,
            threshold: None,
            forced: Vec::new(),
            selected: Vec::new(),
        }
    }

    pub fn score(&self, feature: &str) -> Option<f64> {
        self.scores.iter().find(|s| s.feature == feature).map(|s| s.score)
    }

    pub fn with_selection(mut self, threshold: f64, forced: &[String]) -> Result<Self> {
        self.selected = select_features(&self, threshold, forced)?;
        self.threshold = Some(threshold);
        self.forced = forced.to_vec();
        Ok(self)
    }

    /// Candidate features left out of the selection, in ranking order.
    pub fn excluded(&self) -> Vec<&FeatureScore> {
        self.ranking
            .iter()
            .filter(|f| !self.selected.contains(f))
            .filter_map(|f| self.scores.iter().find(|s| &s.feature == f))
            .collect()
    }
}

/// Booster used for scoring when none is configured: 100 rounds, depth 6,
/// learning rate 0.1.
pub fn default_booster(seed: u64) -> ModelConfig {
    ModelConfig::new(Algorithm::Xgb, seed)
        .with("n_estimators", 100)
        .with("max_depth", 6)
        .with("learning_rate", 0.1)
}

pub fn relevance_scores(
    train: &Cohort,
    booster: &ModelConfig,
    importance: Importance,
) -> Result<RelevanceReport> {
    if booster.algorithm != Algorithm::Xgb {
        return Err(Error::Config(format!(
            "relevance needs an xgb booster, got {}",
            booster.algorithm
        )));
    }
    let model = learners::fit(booster, train)?;
    let values: Vec<f64> = match importance {
        Importance::Splits => model
            .split_counts()
            .expect("boosted models count splits")
            .into_iter()
            .map(|c| c as f64)
            .collect(),
        Importance::Gain => model.split_gains().expect("boosted models record gains"),
    };
    let scores = train
        .feature_names()
        .into_iter()
        .zip(values)
        .map(|(feature, score)| FeatureScore { feature, score })
        .collect();
    Ok(RelevanceReport::from_scores(importance, scores))
}

/// Features scoring strictly above `threshold`, plus every forced feature,
/// in schema order.
pub fn select_features(report: &RelevanceReport, threshold: f64, forced: &[String]) -> Result<Vec<String>> {
    for f in forced {
        if report.score(f).is_none() {
            return Err(Error::Selection(format!("forced feature `{f}` is not a candidate")));
        }
    }
    let selected: Vec<String> = report
        .scores
        .iter()
        .filter(|s| s.score > threshold || forced.contains(&s.feature))
        .map(|s| s.feature.clone())
        .collect();
    if selected.is_empty() {
        return Err(Error::Selection(format!(
            "no feature scores above {threshold} and none is forced"
        )));
    }
    Ok(selected)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn report(pairs: &[(&str, f64)]) -> RelevanceReport {
        RelevanceReport::from_scores(
            Importance::Splits,
            pairs
                .iter()
                .map(|(f, s)| FeatureScore {
                    feature: f.to_string(),
                    score: *s,
                })
                .collect(),
        )
    }

    #[test]
    fn threshold_rule() {
        let r = report(&[("A", 200.0), ("B", 50.0)]);
        assert_eq!(select_features(&r, 105.0, &[]).unwrap(), vec!["A"]);
        assert_eq!(select_features(&r, -1.0, &[]).unwrap(), vec!["A", "B"]);
        assert_eq!(select_features(&r, 105.0, &["B".into()]).unwrap(), vec!["A", "B"]);
    }

    #[test]
    fn empty_selection_errors() {
        let r = report(&[("A", 1.0)]);
        assert!(matches!(select_features(&r, 5.0, &[]), Err(Error::Selection(_))));
        assert!(matches!(
            select_features(&r, 0.0, &["Z".into()]),
            Err(Error::Selection(_))
        ));
    }

    #[test]
    fn ranking_breaks_ties_by_schema_order() {
        let r = report(&[("A", 1.0), ("B", 3.0), ("C", 1.0)]);
        assert_eq!(r.ranking, vec!["B", "A", "C"]);
    }
}
