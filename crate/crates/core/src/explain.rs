//! Shapley-value attributions of a model's real-valued score, the A/B
//! partition of explained predictions, and plot-data tables built from it.
//!
//! A coalition `F` is valued interventionally: features in `F` keep the
//! explained sample's values, the remaining explained features take each
//! background row's values, and the model scores are averaged over the
//! background. Features outside the explained set `S` always keep the
//! sample's values.

use std::collections::HashMap;

use rand::seq::{index, SliceRandom};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{Cohort, ScalerStats};
use crate::error::{Error, Result};
use crate::learners::Scorer;
use crate::rng;

/// Largest explained-feature count handled by full coalition enumeration.
pub const EXACT_CAP: usize = 15;
pub const DEFAULT_BACKGROUND: usize = 100;
pub const DEFAULT_PERMUTATIONS: usize = 1000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BackgroundSet {
    rows: Vec<Vec<f64>>,
}

impl BackgroundSet {
    pub fn new(rows: Vec<Vec<f64>>) -> Result<Self> {
        let Some(first) = rows.first() else {
            return Err(Error::EmptyInput("background set needs at least one row".into()));
        };
        let d = first.len();
        if rows.iter().any(|r| r.len() != d) {
            return Err(Error::Contract("background rows differ in width".into()));
        }
        Ok(BackgroundSet { rows })
    }

    /// `size` rows drawn without replacement (kept in source order), or all
    /// rows when there are no more than `size`.
    pub fn sample(rows: &[Vec<f64>], size: usize, seed: u64) -> Result<Self> {
        if rows.len() <= size {
            return Self::new(rows.to_vec());
        }
        let mut picks = index::sample(&mut rng::seeded(seed), rows.len(), size.max(1)).into_vec();
        picks.sort_unstable();
        Self::new(picks.into_iter().map(|i| rows[i].clone()).collect())
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.rows
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn n_features(&self) -> usize {
        self.rows[0].len()
    }

    pub fn mean(&self) -> Vec<f64> {
        let b = self.rows.len() as f64;
        let mut m = vec![0.0; self.n_features()];
        for r in &self.rows {
            m.iter_mut().zip(r).for_each(|(a, v)| *a += v);
        }
        m.iter_mut().for_each(|a| *a /= b);
        m
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Exact,
    Sampled,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Attribution {
    /// One value per model feature; zero for features outside the explained set.
    pub phi: Vec<f64>,
    pub base_value: f64,
    /// Model score of the explained sample.
    pub score: f64,
    pub sample_id: Option<usize>,
    pub mode: Mode,
    /// Sampled mode only: permutations drawn.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub permutations: Option<usize>,
    /// True when a sampled estimate was rescaled to restore additivity.
    pub adjusted: bool,
}

impl Attribution {
    /// `score - base_value - sum(phi)`.
    pub fn residual(&self) -> f64 {
        self.score - self.base_value - self.phi.iter().sum::<f64>()
    }
}

fn check_inputs<M: Scorer + ?Sized>(model: &M, x: &[f64], features: &[usize], bg: &BackgroundSet) -> Result<()> {
    let d = model.n_features();
    if x.len() != d {
        return Err(Error::Contract(format!("sample has {} features, model expects {d}", x.len())));
    }
    if bg.n_features() != d {
        return Err(Error::Contract(format!(
            "background has {} features, model expects {d}",
            bg.n_features()
        )));
    }
    for (i, &f) in features.iter().enumerate() {
        if f >= d || features[..i].contains(&f) {
            return Err(Error::Contract(format!("feature index {f} is out of range or repeated")));
        }
    }
    Ok(())
}

/// Shared evaluation state for one explained sample.
struct Game<'a, M: ?Sized> {
    model: &'a M,
    x: &'a [f64],
    features: &'a [usize],
    /// Background rows with every feature outside `features` set to `x`.
    templates: Vec<Vec<f64>>,
}

impl<'a, M: Scorer + ?Sized> Game<'a, M> {
    fn new(model: &'a M, x: &'a [f64], features: &'a [usize], bg: &BackgroundSet) -> Self {
        let mut inside = vec![false; x.len()];
        features.iter().for_each(|&f| inside[f] = true);
        let templates = bg
            .rows()
            .iter()
            .map(|r| {
                r.iter()
                    .zip(x)
                    .zip(&inside)
                    .map(|((&rv, &xv), &ins)| if ins { rv } else { xv })
                    .collect()
            })
            .collect();
        Game {
            model,
            x,
            features,
            templates,
        }
    }

    /// Value of the coalition whose members are `present[k]` for `features[k]`.
    fn value(&self, present: impl Fn(usize) -> bool) -> f64 {
        let mut buf = vec![0.0; self.x.len()];
        let mut total = 0.0;
        for t in &self.templates {
            buf.copy_from_slice(t);
            for (k, &f) in self.features.iter().enumerate() {
                if present(k) {
                    buf[f] = self.x[f];
                }
            }
            total += self.model.score_unchecked(&buf);
        }
        total / self.templates.len() as f64
    }
}

/// Mean background score of the hybrid sample that takes `x` on `coalition`
/// and the background row elsewhere.
pub fn coalition_value<M: Scorer + ?Sized>(
    model: &M,
    x: &[f64],
    coalition: &[usize],
    bg: &BackgroundSet,
) -> Result<f64> {
    let all: Vec<usize> = (0..model.n_features()).collect();
    check_inputs(model, x, &all, bg)?;
    check_inputs(model, x, coalition, bg)?;
    let game = Game::new(model, x, &all, bg);
    Ok(game.value(|k| coalition.contains(&k)))
}

/// Weight `|F|! (m - |F| - 1)! / m!` indexed by `|F|`.
fn shapley_weights(m: usize) -> Vec<f64> {
    // 1 / (m * C(m-1, s))
    let mut w = Vec::with_capacity(m);
    let mut binom = 1.0;
    for s in 0..m {
        if s > 0 {
            binom = binom * (m - s) as f64 / s as f64;
        }
        w.push(1.0 / (m as f64 * binom));
    }
    w
}

pub fn shapley_exact<M: Scorer + ?Sized>(
    model: &M,
    x: &[f64],
    features: &[usize],
    bg: &BackgroundSet,
) -> Result<Attribution> {
    shapley_exact_capped(model, x, features, bg, EXACT_CAP)
}

pub fn shapley_exact_capped<M: Scorer + ?Sized>(
    model: &M,
    x: &[f64],
    features: &[usize],
    bg: &BackgroundSet,
    cap: usize,
) -> Result<Attribution> {
    check_inputs(model, x, features, bg)?;
    let m = features.len();
    if m > cap.min(30) {
        return Err(Error::OverExactCap { features: m, cap });
    }
    let game = Game::new(model, x, features, bg);
    let n = 1usize << m;
    // fixed chunks summed in order keep the result independent of thread
    // scheduling
    let partials: Vec<Vec<f64>> = game
        .templates
        .par_chunks(16)
        .map(|chunk| {
            let mut acc = vec![0.0; n];
            let mut table = vec![0.0; n];
            for t in chunk {
                model.coalition_scores(x, t, features, &mut table);
                acc.iter_mut().zip(&table).for_each(|(a, v)| *a += v);
            }
            acc
        })
        .collect();
    let mut values = vec![0.0; n];
    for p in &partials {
        values.iter_mut().zip(p).for_each(|(a, v)| *a += v);
    }
    let count = game.templates.len() as f64;
    values.iter_mut().for_each(|v| *v /= count);
    let weights = shapley_weights(m);
    let mut phi = vec![0.0; x.len()];
    for (k, &f) in features.iter().enumerate() {
        let bit = 1usize << k;
        let mut acc = 0.0;
        for mask in 0..1usize << m {
            if mask & bit == 0 {
                acc += weights[mask.count_ones() as usize] * (values[mask | bit] - values[mask]);
            }
        }
        phi[f] = acc;
    }
    Ok(Attribution {
        phi,
        base_value: values[0],
        score: model.score_unchecked(x),
        sample_id: None,
        mode: Mode::Exact,
        permutations: None,
        adjusted: false,
    })
}

/// Permutation-sampling estimate. Each drawn ordering contributes the
/// marginal gain of every feature over its predecessors; coalition values
/// are cached across orderings. Any residual against `score - base` is then
/// spread over the features in proportion to `|phi|` and the result flagged.
pub fn shapley_sampled<M: Scorer + ?Sized>(
    model: &M,
    x: &[f64],
    features: &[usize],
    bg: &BackgroundSet,
    permutations: usize,
    seed: u64,
) -> Result<Attribution> {
    check_inputs(model, x, features, bg)?;
    if permutations == 0 {
        return Err(Error::Contract("permutations must be at least 1".into()));
    }
    let m = features.len();
    let game = Game::new(model, x, features, bg);
    let mut cache: HashMap<Vec<bool>, f64> = HashMap::new();
    let mut value = |present: &[bool]| -> f64 {
        if let Some(v) = cache.get(present) {
            return *v;
        }
        let v = game.value(|k| present[k]);
        cache.insert(present.to_vec(), v);
        v
    };
    let base_value = value(&vec![false; m]);
    let full = value(&vec![true; m]);

    let mut rng = rng::seeded(seed);
    let mut order: Vec<usize> = (0..m).collect();
    let mut sums = vec![0.0; m];
    for _ in 0..permutations {
        order.shuffle(&mut rng);
        let mut present = vec![false; m];
        let mut prev = base_value;
        for &k in &order {
            present[k] = true;
            let v = value(&present);
            sums[k] += v - prev;
            prev = v;
        }
    }
    let mut est: Vec<f64> = sums.iter().map(|s| s / permutations as f64).collect();
    let residual = (full - base_value) - est.iter().sum::<f64>();
    let adjusted = residual != 0.0 && m > 0;
    if adjusted {
        let total_abs: f64 = est.iter().map(|v| v.abs()).sum();
        for v in &mut est {
            *v += if total_abs > 0.0 {
                residual * v.abs() / total_abs
            } else {
                residual / m as f64
            };
        }
    }
    let mut phi = vec![0.0; x.len()];
    for (k, &f) in features.iter().enumerate() {
        phi[f] = est[k];
    }
    Ok(Attribution {
        phi,
        base_value,
        score: model.score_unchecked(x),
        sample_id: None,
        mode: Mode::Sampled,
        permutations: Some(permutations),
        adjusted,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExplainOptions {
    pub exact_cap: usize,
    pub permutations: usize,
    pub seed: u64,
}

impl Default for ExplainOptions {
    fn default() -> Self {
        ExplainOptions {
            exact_cap: EXACT_CAP,
            permutations: DEFAULT_PERMUTATIONS,
            seed: 1,
        }
    }
}

/// Exact attribution over all model features when within the cap, sampled
/// otherwise.
pub fn explain<M: Scorer + ?Sized>(
    model: &M,
    x: &[f64],
    bg: &BackgroundSet,
    opts: &ExplainOptions,
) -> Result<Attribution> {
    let features: Vec<usize> = (0..model.n_features()).collect();
    if features.len() <= opts.exact_cap {
        shapley_exact_capped(model, x, &features, bg, opts.exact_cap)
    } else {
        shapley_sampled(model, x, &features, bg, opts.permutations, opts.seed)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExplainedSample {
    pub sample_id: usize,
    pub x: Vec<f64>,
    pub attribution: Attribution,
    pub yhat: u8,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FailedSample {
    pub sample_id: usize,
    pub message: String,
}

/// Explained test samples split by predicted class: `a` holds predicted 0,
/// `b` predicted 1. Both keep test order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PartitionAB {
    pub feature_names: Vec<String>,
    pub a: Vec<ExplainedSample>,
    pub b: Vec<ExplainedSample>,
    #[serde(default)]
    pub failed: Vec<FailedSample>,
}

impl PartitionAB {
    pub fn len(&self) -> usize {
        self.a.len() + self.b.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Every explained sample ordered by sample id: the union of all
    /// attributions.
    pub fn samples(&self) -> Vec<&ExplainedSample> {
        let mut all: Vec<&ExplainedSample> = self.a.iter().chain(&self.b).collect();
        all.sort_by_key(|s| s.sample_id);
        all
    }

    pub fn feature_index(&self, name: &str) -> Result<usize> {
        self.feature_names
            .iter()
            .position(|f| f == name)
            .ok_or_else(|| Error::Contract(format!("unknown feature `{name}`")))
    }
}

pub fn partition_run<M: Scorer + ?Sized>(
    model: &M,
    test: &Cohort,
    bg: &BackgroundSet,
    opts: &ExplainOptions,
) -> Result<PartitionAB> {
    if test.n_features() != model.n_features() {
        return Err(Error::Contract(format!(
            "test cohort has {} features, model expects {}",
            test.n_features(),
            model.n_features()
        )));
    }
    let outcomes: Vec<std::result::Result<ExplainedSample, FailedSample>> = (0..test.len())
        .into_par_iter()
        .map(|i| {
            let sample_id = test.row_ids()[i];
            let x = test.row(i);
            let per_sample = ExplainOptions {
                seed: rng::child_seed(opts.seed, sample_id as u64),
                ..*opts
            };
            let yhat = (model.score_unchecked(x) >= model.threshold()) as u8;
            match explain(model, x, bg, &per_sample) {
                Ok(mut attribution) => {
                    attribution.sample_id = Some(sample_id);
                    Ok(ExplainedSample {
                        sample_id,
                        x: x.to_vec(),
                        attribution,
                        yhat,
                    })
                }
                Err(e) => Err(FailedSample {
                    sample_id,
                    message: e.to_string(),
                }),
            }
        })
        .collect();
    let mut part = PartitionAB {
        feature_names: test.feature_names(),
        a: Vec::new(),
        b: Vec::new(),
        failed: Vec::new(),
    };
    for o in outcomes {
        match o {
            Ok(s) if s.yhat == 1 => part.b.push(s),
            Ok(s) => part.a.push(s),
            Err(f) => part.failed.push(f),
        }
    }
    Ok(part)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BeeswarmRow {
    pub feature: String,
    /// Position of the feature in the mean-|shap| ordering, 0 first.
    pub order: usize,
    pub sample_id: usize,
    pub shap: f64,
    /// Standardized value as seen by the model.
    pub value: f64,
    /// Raw-unit value when scaler statistics cover the feature.
    pub raw_value: Option<f64>,
}

/// Feature indices by descending mean |phi|, ties by index.
pub fn feature_order(partition: &PartitionAB) -> Vec<usize> {
    let samples = partition.samples();
    let d = partition.feature_names.len();
    let n = samples.len().max(1) as f64;
    let mean_abs: Vec<f64> = (0..d)
        .map(|j| samples.iter().map(|s| s.attribution.phi[j].abs()).sum::<f64>() / n)
        .collect();
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| mean_abs[b].total_cmp(&mean_abs[a]).then(a.cmp(&b)));
    order
}

pub fn summary_data(partition: &PartitionAB, scaler: Option<&ScalerStats>) -> Result<Vec<BeeswarmRow>> {
    let samples = partition.samples();
    if samples.is_empty() {
        return Err(Error::EmptyInput("partition holds no explained samples".into()));
    }
    let mut rows = Vec::with_capacity(samples.len() * partition.feature_names.len());
    for (order, j) in feature_order(partition).into_iter().enumerate() {
        let name = &partition.feature_names[j];
        let stats = scaler.and_then(|s| s.get(name));
        for s in &samples {
            let value = s.x[j];
            rows.push(BeeswarmRow {
                feature: name.clone(),
                order,
                sample_id: s.sample_id,
                shap: s.attribution.phi[j],
                value,
                raw_value: stats.map(|st| if st.std > 0.0 { value * st.std + st.mean } else { value + st.mean }),
            });
        }
    }
    Ok(rows)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DependenceRow {
    pub sample_id: usize,
    pub value: f64,
    pub shap: f64,
    pub interaction_value: f64,
}

pub fn dependence_data(partition: &PartitionAB, feature: &str, interaction: &str) -> Result<Vec<DependenceRow>> {
    let j = partition.feature_index(feature)?;
    let k = partition.feature_index(interaction)?;
    Ok(partition
        .samples()
        .into_iter()
        .map(|s| DependenceRow {
            sample_id: s.sample_id,
            value: s.x[j],
            shap: s.attribution.phi[j],
            interaction_value: s.x[k],
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Contribution {
    pub feature: String,
    pub value: f64,
    pub phi: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForcePlot {
    pub sample_id: Option<usize>,
    pub base_value: f64,
    pub score: f64,
    /// By descending |phi|, ties by feature position.
    pub contributions: Vec<Contribution>,
    pub positive_sum: f64,
    pub negative_sum: f64,
    pub mode: Mode,
    pub adjusted: bool,
}

pub fn force_data(x: &[f64], attribution: &Attribution, feature_names: &[String]) -> Result<ForcePlot> {
    if x.len() != attribution.phi.len() || feature_names.len() != x.len() {
        return Err(Error::Contract("sample, attribution and feature names differ in length".into()));
    }
    let phi = &attribution.phi;
    let mut order: Vec<usize> = (0..phi.len()).collect();
    order.sort_by(|&a, &b| phi[b].abs().total_cmp(&phi[a].abs()).then(a.cmp(&b)));
    Ok(ForcePlot {
        sample_id: attribution.sample_id,
        base_value: attribution.base_value,
        score: attribution.score,
        contributions: order
            .into_iter()
            .map(|j| Contribution {
                feature: feature_names[j].clone(),
                value: x[j],
                phi: phi[j],
            })
            .collect(),
        positive_sum: phi.iter().filter(|v| **v > 0.0).sum(),
        negative_sum: phi.iter().filter(|v| **v < 0.0).sum(),
        mode: attribution.mode,
        adjusted: attribution.adjusted,
    })
}

pub fn force_data_for(sample: &ExplainedSample, feature_names: &[String]) -> Result<ForcePlot> {
    force_data(&sample.x, &sample.attribution, feature_names)
}

#[cfg(test)]
mod tests {
    use super::*;

    struct Linear {
        w: Vec<f64>,
        b: f64,
    }

    impl Scorer for Linear {
        fn n_features(&self) -> usize {
            self.w.len()
        }
        fn score_unchecked(&self, x: &[f64]) -> f64 {
            self.b + self.w.iter().zip(x).map(|(w, v)| w * v).sum::<f64>()
        }
    }

    #[test]
    fn weights_sum_to_one_over_subsets() {
        for m in 1..10usize {
            let w = shapley_weights(m);
            // sum over s of C(m-1, s) * w[s] == 1
            let mut binom = 1.0;
            let mut total = 0.0;
            for s in 0..m {
                if s > 0 {
                    binom = binom * (m - s) as f64 / s as f64;
                }
                total += binom * w[s];
            }
            assert!((total - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn coalition_endpoints_and_hybrid() {
        let model = Linear { w: vec![2.0, -1.0], b: 0.5 };
        let bg = BackgroundSet::new(vec![vec![10.0, 20.0]]).unwrap();
        let x = [1.0, 3.0];
        assert_eq!(coalition_value(&model, &x, &[0, 1], &bg).unwrap(), model.score_unchecked(&x));
        assert_eq!(coalition_value(&model, &x, &[], &bg).unwrap(), 0.5 + 20.0 - 20.0);
        assert_eq!(coalition_value(&model, &x, &[0], &bg).unwrap(), 2.0 * 1.0 - 20.0 + 0.5);
    }

    #[test]
    fn linear_closed_form() {
        let model = Linear { w: vec![1.5, -2.0, 0.25], b: 1.0 };
        let bg = BackgroundSet::new(vec![vec![0.0, 1.0, 2.0], vec![2.0, -1.0, 4.0], vec![1.0, 3.0, 0.0]]).unwrap();
        let mu = bg.mean();
        let x = [3.0, 0.5, -1.0];
        let a = shapley_exact(&model, &x, &[0, 1, 2], &bg).unwrap();
        for j in 0..3 {
            assert!((a.phi[j] - model.w[j] * (x[j] - mu[j])).abs() < 1e-12);
        }
        assert!(a.residual().abs() < 1e-12);
    }

    #[test]
    fn over_cap_is_reported() {
        let model = Linear { w: vec![1.0; 16], b: 0.0 };
        let bg = BackgroundSet::new(vec![vec![0.0; 16]]).unwrap();
        let all: Vec<usize> = (0..16).collect();
        let err = shapley_exact(&model, &[1.0; 16], &all, &bg).unwrap_err();
        assert!(matches!(err, Error::OverExactCap { features: 16, cap: 15 }));
        let a = explain(&model, &[1.0; 16], &bg, &ExplainOptions { permutations: 20, ..Default::default() }).unwrap();
        assert_eq!(a.mode, Mode::Sampled);
        assert!(a.residual().abs() < 1e-9);
    }

    #[test]
    fn background_sample_is_seeded_and_bounded() {
        let rows: Vec<Vec<f64>> = (0..50).map(|i| vec![i as f64]).collect();
        let a = BackgroundSet::sample(&rows, 10, 4).unwrap();
        assert_eq!(a.len(), 10);
        assert_eq!(a, BackgroundSet::sample(&rows, 10, 4).unwrap());
        assert_eq!(BackgroundSet::sample(&rows, 100, 4).unwrap().len(), 50);
    }

    #[test]
    fn force_groups_reconcile() {
        let model = Linear { w: vec![1.0, -3.0, 0.5], b: 0.0 };
        let bg = BackgroundSet::new(vec![vec![0.0, 0.0, 0.0]]).unwrap();
        let x = [1.0, 1.0, 1.0];
        let a = shapley_exact(&model, &x, &[0, 1, 2], &bg).unwrap();
        let names: Vec<String> = ["a", "b", "c"].iter().map(|s| s.to_string()).collect();
        let f = force_data(&x, &a, &names).unwrap();
        assert_eq!(f.contributions[0].feature, "b");
        assert!((f.positive_sum + f.negative_sum - (f.score - f.base_value)).abs() < 1e-12);
    }
}
