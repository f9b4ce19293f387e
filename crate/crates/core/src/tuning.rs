//! Stratified k-fold assignment and exhaustive grid search maximising the mean
//! class-1 F1 across folds.

use std::path::Path;

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::data::Cohort;
use crate::error::{Error, Result};
use crate::learners::{self, Algorithm, ClassWeighting, ModelConfig, ParamValue};
use crate::metrics::EvalReport;
use crate::rng;

/// Value type tag of a grid axis, as written in grid files.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AxisType {
    Integer,
    Float,
    String,
    Integers,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Axis {
    pub name: String,
    #[serde(rename = "type")]
    pub kind: AxisType,
    pub values: Vec<ParamValue>,
}

impl Axis {
    pub fn new(name: &str, kind: AxisType, values: Vec<ParamValue>) -> Self {
        Axis {
            name: name.to_string(),
            kind,
            values,
        }
    }

    fn check(&self) -> Result<()> {
        if self.values.is_empty() {
            return Err(Error::Config(format!("axis `{}` has no values", self.name)));
        }
        for v in &self.values {
            let ok = v.is_none()
                || match self.kind {
                    AxisType::Integer => matches!(v, ParamValue::Int(_)),
                    AxisType::Float => v.as_f64().is_some(),
                    AxisType::String => matches!(v, ParamValue::Text(_)),
                    AxisType::Integers => matches!(v, ParamValue::Ints(_)),
                };
            if !ok {
                return Err(Error::Config(format!(
                    "axis `{}`: value {v} does not match type {:?}",
                    self.name, self.kind
                )));
            }
        }
        Ok(())
    }
}

/// Cartesian hyperparameter grid. Enumeration is odometer order: the last
/// axis varies fastest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HyperGrid {
    pub algorithm: Algorithm,
    #[serde(rename = "axis", default)]
    pub axes: Vec<Axis>,
}

fn ints(v: &[i64]) -> Vec<ParamValue> {
    v.iter().map(|&i| ParamValue::Int(i)).collect()
}

fn floats(v: &[f64]) -> Vec<ParamValue> {
    v.iter().map(|&x| ParamValue::Float(x)).collect()
}

fn texts(v: &[&str]) -> Vec<ParamValue> {
    v.iter().map(|&s| ParamValue::from(s)).collect()
}

impl HyperGrid {
    pub fn new(algorithm: Algorithm, axes: Vec<Axis>) -> Result<Self> {
        let g = HyperGrid { algorithm, axes };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<()> {
        for (i, a) in self.axes.iter().enumerate() {
            a.check()?;
            if self.axes[..i].iter().any(|b| b.name == a.name) {
                return Err(Error::Config(format!("duplicate axis `{}`", a.name)));
            }
        }
        Ok(())
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let g: HyperGrid = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        g.validate()?;
        Ok(g)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("grid serializes")
    }

    /// The shipped grid for each algorithm.
    ///
    /// MLP hidden sizes use the fixed per-layer set {128, 256, 512} and
    /// `lbfgs` appears only as a solver. XGB `max_depth` is 3..=18 step 3 and
    /// `colsample_bytree` is 0.3..=0.9 step 0.1.
    pub fn full(algorithm: Algorithm) -> Self {
        use AxisType::*;
        let seed = Axis::new("seed", Integer, ints(&[1]));
        let balanced = Axis::new("class_weight", String, texts(&["balanced"]));
        let axes = match algorithm {
            Algorithm::Mlp => {
                let widths = [128, 256, 512];
                let mut hidden = Vec::new();
                for a in widths {
                    for b in widths {
                        for c in widths {
                            hidden.push(ParamValue::Ints(vec![a, b, c]));
                        }
                    }
                }
                vec![
                    seed,
                    Axis::new("hidden_layer_sizes", Integers, hidden),
                    Axis::new("activation", String, texts(&["tanh", "relu"])),
                    Axis::new("solver", String, texts(&["sgd", "adam", "lbfgs"])),
                    Axis::new("alpha", Float, floats(&[0.0001, 0.001, 0.01, 0.1, 0.9])),
                    Axis::new("learning_rate", String, texts(&["constant", "adaptive"])),
                ]
            }
            Algorithm::Rf => {
                let mut depth = ints(&[80, 90, 100, 110, 120, 130, 140, 150]);
                depth.push(ParamValue::from("none"));
                vec![
                    seed,
                    Axis::new("n_estimators", Integer, ints(&[100, 200, 300, 400, 500])),
                    Axis::new("max_features", String, texts(&["auto", "sqrt", "log2"])),
                    Axis::new("max_depth", Integer, depth),
                    Axis::new("criterion", String, texts(&["gini", "entropy"])),
                    balanced,
                ]
            }
            Algorithm::Svm => vec![
                seed,
                balanced,
                Axis::new("kernel", String, texts(&["rbf", "linear"])),
                Axis::new("gamma", Float, floats(&[1.0, 0.1, 0.001, 0.0001])),
            ],
            Algorithm::Xgb => vec![
                seed,
                Axis::new("gamma", Float, floats(&[1.0, 0.1, 0.01, 0.001, 0.0001])),
                Axis::new("learning_rate", Float, floats(&[0.0001, 0.001, 0.01, 0.1, 1.0])),
                Axis::new("max_depth", Integer, ints(&[3, 6, 9, 12, 15, 18])),
                Axis::new(
                    "colsample_bytree",
                    Float,
                    (3..10).map(|i| ParamValue::Float(i as f64 / 10.0)).collect(),
                ),
                Axis::new("reg_alpha", Float, floats(&[1e-5, 1e-2, 0.1, 1.0, 10.0, 100.0])),
            ],
            Algorithm::Lgbm => {
                let with_none = |v: &[f64]| {
                    let mut out = vec![ParamValue::from("none")];
                    out.extend(floats(v));
                    out
                };
                vec![
                    seed,
                    Axis::new("learning_rate", Float, floats(&[0.1, 0.05])),
                    Axis::new("num_leaves", Integer, ints(&[3, 10, 31, 50, 100, 200])),
                    Axis::new("reg_alpha", Float, with_none(&[0.01, 0.05, 0.1])),
                    Axis::new("colsample_bytree", Float, floats(&[0.6, 0.8, 1.0])),
                    Axis::new("max_depth", Integer, ints(&[-1, 3, 5, 8, 10])),
                    Axis::new("reg_lambda", Float, with_none(&[0.01, 0.02, 0.03])),
                    Axis::new("n_estimators", Integer, ints(&[50, 100, 300])),
                ]
            }
        };
        HyperGrid { algorithm, axes }
    }

    pub fn len(&self) -> usize {
        self.axes.iter().map(|a| a.values.len()).product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Axis value indices of grid point `index`.
    fn digits(&self, mut index: usize) -> Vec<usize> {
        let mut out = vec![0; self.axes.len()];
        for (slot, axis) in out.iter_mut().zip(&self.axes).rev() {
            *slot = index % axis.values.len();
            index /= axis.values.len();
        }
        out
    }

    /// The model configuration at grid point `index`.
    ///
    /// A `seed` axis sets the model seed; otherwise it is `base_seed + index`.
    /// A `class_weight` axis sets the class weighting. Every other axis
    /// becomes a hyperparameter.
    pub fn config_at(&self, index: usize, base_seed: u64) -> Result<ModelConfig> {
        let mut config = ModelConfig::new(self.algorithm, base_seed.wrapping_add(index as u64));
        for (axis, d) in self.axes.iter().zip(self.digits(index)) {
            let v = &axis.values[d];
            match axis.name.as_str() {
                "seed" => {
                    config.seed = v
                        .as_i64()
                        .filter(|s| *s >= 0)
                        .ok_or_else(|| Error::Config(format!("seed value {v} is not a non-negative integer")))?
                        as u64;
                }
                "class_weight" => {
                    config.class_weighting = match v.to_string().to_ascii_lowercase().as_str() {
                        "balanced" => ClassWeighting::Balanced,
                        "none" => ClassWeighting::None,
                        other => {
                            return Err(Error::Config(format!("class_weight `{other}` is not balanced or none")))
                        }
                    };
                }
                name => {
                    config.params.insert(name.to_string(), v.clone());
                }
            }
        }
        Ok(config)
    }

    pub fn configs(&self, base_seed: u64) -> Result<Vec<ModelConfig>> {
        (0..self.len()).map(|i| self.config_at(i, base_seed)).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldAssignment {
    pub k: usize,
    pub seed: u64,
    /// Fold index of each sample.
    pub folds: Vec<usize>,
}

impl FoldAssignment {
    /// (train positions, validation positions) for fold `f`.
    pub fn partition(&self, f: usize) -> (Vec<usize>, Vec<usize>) {
        (0..self.folds.len()).partition(|&i| self.folds[i] != f)
    }

    pub fn fold_sizes(&self) -> Vec<usize> {
        let mut s = vec![0; self.k];
        for &f in &self.folds {
            s[f] += 1;
        }
        s
    }

    /// Hex SHA-256 of the assignment, used to show every configuration saw
    /// the same folds.
    pub fn digest(&self) -> String {
        let mut h = Sha256::new();
        h.update((self.k as u64).to_le_bytes());
        for &f in &self.folds {
            h.update((f as u64).to_le_bytes());
        }
        hex::encode(h.finalize())
    }
}

/// Shuffles each class's positions with the seed, lays class 0 then class 1
/// end to end and deals them round-robin into `k` folds. Fold sizes differ by
/// at most one and each class is spread as evenly as possible.
pub fn stratified_kfold(labels: &[u8], k: usize, seed: u64) -> Result<FoldAssignment> {
    if k < 2 {
        return Err(Error::Stratification(format!("k must be at least 2, got {k}")));
    }
    let mut rng = rng::seeded(seed);
    let mut order = Vec::with_capacity(labels.len());
    for class in [0u8, 1] {
        let mut members: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == class).collect();
        if members.len() < k {
            return Err(Error::Stratification(format!(
                "class {class} has {} members, fewer than k = {k}",
                members.len()
            )));
        }
        members.shuffle(&mut rng);
        order.extend(members);
    }
    if order.len() != labels.len() {
        return Err(Error::Stratification("labels must be 0 or 1".into()));
    }
    let mut folds = vec![0; labels.len()];
    for (pos, &i) in order.iter().enumerate() {
        folds[i] = pos % k;
    }
    Ok(FoldAssignment { k, seed, folds })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CVResult {
    /// Enumeration index within the grid.
    pub index: usize,
    pub config: ModelConfig,
    pub folds: Vec<EvalReport>,
    pub fold_f1: Vec<f64>,
    pub mean_f1: f64,
    /// 1-based position in the sorted result list.
    pub rank: usize,
    pub failure: Option<String>,
    pub folds_digest: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSearch {
    pub best: ModelConfig,
    pub best_index: usize,
    pub folds: FoldAssignment,
    /// Sorted by descending mean F1, then enumeration index.
    pub results: Vec<CVResult>,
}

/// Fits `config` on each training fold and evaluates on its held-out fold.
pub fn cross_validate(
    config: &ModelConfig,
    train: &Cohort,
    folds: &FoldAssignment,
) -> Result<Vec<EvalReport>> {
    (0..folds.k)
        .map(|f| {
            let (tr, va) = folds.partition(f);
            let fit_set = train.subset(&tr);
            let val = train.subset(&va);
            let model = learners::fit(config, &fit_set)?;
            let scores = model.scores(val.rows())?;
            let preds = model.predictions(val.rows())?;
            EvalReport::evaluate(val.labels(), &preds, &scores)
        })
        .collect()
}

pub fn grid_search(grid: &HyperGrid, train: &Cohort, k: usize, seed: u64) -> Result<GridSearch> {
    grid.validate()?;
    if grid.is_empty() {
        return Err(Error::Config(format!("{} grid is empty", grid.algorithm)));
    }
    let folds = stratified_kfold(train.labels(), k, seed)?;
    let digest = folds.digest();
    let configs = grid.configs(seed)?;
    let mut results: Vec<CVResult> = configs
        .into_par_iter()
        .enumerate()
        .map(|(index, config)| {
            let (reports, failure) = match cross_validate(&config, train, &folds) {
                Ok(r) => (r, None),
                Err(e) => (Vec::new(), Some(e.to_string())),
            };
            let fold_f1: Vec<f64> = reports.iter().map(|r| r.yes.f1.value).collect();
            let mean_f1 = if fold_f1.is_empty() {
                0.0
            } else {
                fold_f1.iter().sum::<f64>() / fold_f1.len() as f64
            };
            CVResult {
                index,
                config,
                folds: reports,
                fold_f1,
                mean_f1,
                rank: 0,
                failure,
                folds_digest: digest.clone(),
            }
        })
        .collect();
    results.sort_by(|a, b| b.mean_f1.total_cmp(&a.mean_f1).then(a.index.cmp(&b.index)));
    for (r, res) in results.iter_mut().enumerate() {
        res.rank = r + 1;
    }
    Ok(GridSearch {
        best: results[0].config.clone(),
        best_index: results[0].index,
        folds,
        results,
    })
}
