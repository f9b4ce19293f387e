//! The five classifier families behind one fit/predict/score contract.
//!
//! Scores are the learner's natural ranking output: the signed margin for the
//! SVM, the positive-vote fraction for the forest, and a class-1 probability
//! for the boosters and the MLP. `predict` thresholds the score at
//! [`TrainedModel::threshold`], ties going to class 1.

pub mod boost;
mod coalition;
pub mod forest;
pub mod mlp;
pub mod params;
pub mod svm;
pub mod tree;

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::data::Cohort;
use crate::error::{Error, Result};

pub use boost::{BoostParams, BoostedModel};
pub use forest::{ForestModel, ForestParams};
pub use mlp::{MlpModel, MlpParams};
pub use params::ParamValue;
pub use svm::{SvmModel, SvmParams};
pub use tree::{DecisionTree, GrowthPolicy, Node};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Algorithm {
    Svm,
    Rf,
    Xgb,
    Lgbm,
    Mlp,
}

impl Algorithm {
    pub const ALL: [Algorithm; 5] = [
        Algorithm::Svm,
        Algorithm::Rf,
        Algorithm::Xgb,
        Algorithm::Lgbm,
        Algorithm::Mlp,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Algorithm::Svm => "svm",
            Algorithm::Rf => "rf",
            Algorithm::Xgb => "xgb",
            Algorithm::Lgbm => "lgbm",
            Algorithm::Mlp => "mlp",
        }
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Algorithm::ALL
            .into_iter()
            .find(|a| a.as_str().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| Error::Config(format!("unknown algorithm `{s}`")))
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ClassWeighting {
    #[default]
    None,
    Balanced,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub algorithm: Algorithm,
    #[serde(default)]
    pub params: BTreeMap<String, ParamValue>,
    pub seed: u64,
    #[serde(default)]
    pub class_weighting: ClassWeighting,
}

impl ModelConfig {
    pub fn new(algorithm: Algorithm, seed: u64) -> Self {
        ModelConfig {
            algorithm,
            params: BTreeMap::new(),
            seed,
            class_weighting: ClassWeighting::None,
        }
    }

    pub fn with(mut self, key: &str, value: impl Into<ParamValue>) -> Self {
        self.params.insert(key.to_string(), value.into());
        self
    }

    pub fn balanced(mut self) -> Self {
        self.class_weighting = ClassWeighting::Balanced;
        self
    }

    /// Parses the hyperparameters without fitting, surfacing unknown keys and
    /// out-of-domain values.
    pub fn validate(&self, n_features: usize) -> Result<()> {
        match self.algorithm {
            Algorithm::Svm => SvmParams::from_config(self, n_features).map(drop),
            Algorithm::Rf => ForestParams::from_config(self).map(drop),
            Algorithm::Xgb => BoostParams::xgb_from_config(self).map(drop),
            Algorithm::Lgbm => BoostParams::lgbm_from_config(self).map(drop),
            Algorithm::Mlp => MlpParams::from_config(self).map(drop),
        }
    }

    /// Per-class sample weights: `n / (2 n_c)` when balanced, otherwise 1.
    pub fn class_weights(&self, labels: &[u8]) -> [f64; 2] {
        match self.class_weighting {
            ClassWeighting::None => [1.0, 1.0],
            ClassWeighting::Balanced => {
                let n = labels.len() as f64;
                let n1 = labels.iter().filter(|&&y| y == 1).count() as f64;
                let n0 = n - n1;
                let w = |c: f64| if c > 0.0 { n / (2.0 * c) } else { 1.0 };
                [w(n0), w(n1)]
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ModelKind {
    /// Training labels held a single class; always predicts it.
    Degenerate { class: u8 },
    Svm(SvmModel),
    Forest(ForestModel),
    Boosted(BoostedModel),
    Mlp(MlpModel),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainedModel {
    pub config: ModelConfig,
    pub n_features: usize,
    pub model: ModelKind,
}

/// Anything that maps a feature vector to a real score with a decision
/// threshold. Explanations work against this rather than `TrainedModel` so
/// hand-built scorers can be explained too.
pub trait Scorer: Sync {
    fn n_features(&self) -> usize;
    fn score_unchecked(&self, x: &[f64]) -> f64;
    fn threshold(&self) -> f64 {
        0.5
    }

    /// Fills `out[mask]` (length `2^features.len()`) with the score of the
    /// input taking `x[features[k]]` where bit `k` of `mask` is set and
    /// `template` everywhere else. `template` must already equal `x` outside
    /// `features`.
    fn coalition_scores(&self, x: &[f64], template: &[f64], features: &[usize], out: &mut [f64]) {
        coalition::by_evaluation(self, x, template, features, out)
    }
}

impl Scorer for TrainedModel {
    fn n_features(&self) -> usize {
        self.n_features
    }

    fn score_unchecked(&self, x: &[f64]) -> f64 {
        match &self.model {
            ModelKind::Degenerate { class } => *class as f64,
            ModelKind::Svm(m) => m.decision(x),
            ModelKind::Forest(m) => m.score(x),
            ModelKind::Boosted(m) => m.score(x),
            ModelKind::Mlp(m) => m.score(x),
        }
    }

    fn threshold(&self) -> f64 {
        TrainedModel::threshold(self)
    }

    fn coalition_scores(&self, x: &[f64], template: &[f64], features: &[usize], out: &mut [f64]) {
        let pos = || coalition::bit_positions(self.n_features, features);
        match &self.model {
            ModelKind::Degenerate { class } => out.fill(*class as f64),
            ModelKind::Svm(m) => coalition::svm_table(m, x, template, features, out),
            ModelKind::Forest(m) if !m.trees.is_empty() => {
                let pos = pos();
                let n = m.trees.len() as f64;
                let vote = |v: f64| if v >= 0.5 { 1.0 / n } else { 0.0 };
                out.fill(0.0);
                for t in &m.trees {
                    coalition::add_tree(t, x, template, &pos, &vote, out);
                }
            }
            ModelKind::Boosted(m) => {
                let pos = pos();
                out.fill(m.base_margin);
                for t in &m.trees {
                    coalition::add_tree(t, x, template, &pos, &|v| v, out);
                }
                out.iter_mut().for_each(|v| *v = boost::sigmoid(*v));
            }
            _ => coalition::by_evaluation(self, x, template, features, out),
        }
    }
}

pub fn fit(config: &ModelConfig, train: &Cohort) -> Result<TrainedModel> {
    fit_rows(config, train.rows(), train.labels())
}

pub fn fit_rows(config: &ModelConfig, rows: &[Vec<f64>], labels: &[u8]) -> Result<TrainedModel> {
    if rows.is_empty() {
        return Err(Error::EmptyInput("training set has no rows".into()));
    }
    if rows.len() != labels.len() {
        return Err(Error::Contract(format!(
            "{} rows but {} labels",
            rows.len(),
            labels.len()
        )));
    }
    let d = rows[0].len();
    if d == 0 {
        return Err(Error::Contract("training rows have no features".into()));
    }
    for (i, r) in rows.iter().enumerate() {
        if r.len() != d {
            return Err(Error::Contract(format!("row {i} has {} features, expected {d}", r.len())));
        }
        if let Some(j) = r.iter().position(|v| !v.is_finite()) {
            return Err(Error::Contract(format!("row {i} feature {j} is not finite")));
        }
    }
    if let Some(y) = labels.iter().find(|&&y| y > 1) {
        return Err(Error::Contract(format!("label {y} is not 0 or 1")));
    }
    config.validate(d)?;

    let model = if labels.iter().all(|&y| y == labels[0]) {
        ModelKind::Degenerate { class: labels[0] }
    } else {
        let cw = config.class_weights(labels);
        match config.algorithm {
            Algorithm::Svm => ModelKind::Svm(svm::fit(&SvmParams::from_config(config, d)?, rows, labels, cw)),
            Algorithm::Rf => ModelKind::Forest(forest::fit(
                &ForestParams::from_config(config)?,
                rows,
                labels,
                cw,
                config.seed,
            )),
            Algorithm::Xgb => ModelKind::Boosted(boost::fit(
                &BoostParams::xgb_from_config(config)?,
                rows,
                labels,
                cw,
                config.seed,
            )),
            Algorithm::Lgbm => ModelKind::Boosted(boost::fit(
                &BoostParams::lgbm_from_config(config)?,
                rows,
                labels,
                cw,
                config.seed,
            )),
            Algorithm::Mlp => {
                let m = mlp::fit(&MlpParams::from_config(config)?, rows, labels, cw, config.seed);
                if m.loss_curve.last().is_some_and(|l| !l.is_finite()) {
                    return Err(Error::Training("mlp: training loss diverged".into()));
                }
                ModelKind::Mlp(m)
            }
        }
    };
    Ok(TrainedModel {
        config: config.clone(),
        n_features: d,
        model,
    })
}

impl TrainedModel {
    pub fn is_degenerate(&self) -> bool {
        matches!(self.model, ModelKind::Degenerate { .. })
    }

    /// Decision threshold on [`TrainedModel::score`]: 0 for SVM margins, one
    /// half for probabilities and vote fractions.
    pub fn threshold(&self) -> f64 {
        match self.model {
            ModelKind::Svm(_) => 0.0,
            _ => 0.5,
        }
    }

    fn check(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.n_features {
            return Err(Error::Contract(format!(
                "expected {} features, got {}",
                self.n_features,
                x.len()
            )));
        }
        Ok(())
    }

    pub fn score(&self, x: &[f64]) -> Result<f64> {
        self.check(x)?;
        Ok(self.score_unchecked(x))
    }

    pub fn predict(&self, x: &[f64]) -> Result<u8> {
        Ok((self.score(x)? >= self.threshold()) as u8)
    }

    pub fn scores(&self, rows: &[Vec<f64>]) -> Result<Vec<f64>> {
        rows.iter().map(|r| self.score(r)).collect()
    }

    pub fn predictions(&self, rows: &[Vec<f64>]) -> Result<Vec<u8>> {
        rows.iter().map(|r| self.predict(r)).collect()
    }

    /// Per-feature split-use counts for tree ensembles, `None` otherwise.
    pub fn split_counts(&self) -> Option<Vec<usize>> {
        let d = self.n_features;
        match &self.model {
            ModelKind::Boosted(m) => Some(m.split_counts(d)),
            ModelKind::Forest(m) => Some(m.trees.iter().fold(vec![0; d], |mut acc, t| {
                acc.iter_mut().zip(t.split_counts(d)).for_each(|(a, c)| *a += c);
                acc
            })),
            ModelKind::Degenerate { .. } => Some(vec![0; d]),
            _ => None,
        }
    }

    pub fn split_gains(&self) -> Option<Vec<f64>> {
        let d = self.n_features;
        match &self.model {
            ModelKind::Boosted(m) => Some(m.split_gains(d)),
            ModelKind::Degenerate { .. } => Some(vec![0.0; d]),
            _ => None,
        }
    }
}
