use itertools::Itertools;
use mafus_core::data::{split, Cohort, Column, ColumnKind, FeatureSchema};
use mafus_core::explain::{
    self, coalition_value, partition_run, shapley_exact, shapley_sampled, BackgroundSet, ExplainOptions, Mode,
};
use mafus_core::learners::{fit, Algorithm, ModelConfig, ParamValue, Scorer, TrainedModel};
use mafus_core::rng;
use proptest::prelude::*;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

fn cohort(n: usize, d: usize, seed: u64) -> Cohort {
    let mut rng = rng::seeded(seed);
    let mut rows = Vec::new();
    let mut labels = Vec::new();
    for _ in 0..n {
        let y = rng.random_bool(0.3) as u8;
        let row: Vec<f64> = (0..d)
            .map(|j| {
                let z: f64 = StandardNormal.sample(&mut rng);
                z + if j < 3 { 1.5 * y as f64 } else { 0.0 }
            })
            .collect();
        rows.push(row);
        labels.push(y);
    }
    let mut cols: Vec<Column> = (0..d).map(|j| Column::new(format!("x{j}"), ColumnKind::Continuous)).collect();
    cols.push(Column::new("Status", ColumnKind::Label));
    Cohort::new(FeatureSchema::new(cols).unwrap(), rows, labels, (0..n).collect()).unwrap()
}

fn families() -> Vec<ModelConfig> {
    vec![
        ModelConfig::new(Algorithm::Svm, 1),
        ModelConfig::new(Algorithm::Svm, 1).with("kernel", ParamValue::from("linear")),
        ModelConfig::new(Algorithm::Rf, 1).with("n_estimators", ParamValue::Int(25)),
        ModelConfig::new(Algorithm::Xgb, 1).with("n_estimators", ParamValue::Int(25)),
        ModelConfig::new(Algorithm::Lgbm, 1).with("n_estimators", ParamValue::Int(25)),
        ModelConfig::new(Algorithm::Mlp, 1)
            .with("hidden_layer_sizes", ParamValue::Ints(vec![8, 8, 8]))
            .with("solver", ParamValue::from("lbfgs"))
            .with("max_iter", ParamValue::Int(60)),
    ]
}

/// Average marginal contribution over all |S|! orderings, with coalition
/// values taken from direct model calls.
fn permutation_oracle<M: Scorer>(model: &M, x: &[f64], features: &[usize], bg: &BackgroundSet) -> Vec<f64> {
    let value = |present: &[usize]| -> f64 {
        let mut total = 0.0;
        for b in bg.rows() {
            let z: Vec<f64> = (0..x.len())
                .map(|j| if !features.contains(&j) || present.contains(&j) { x[j] } else { b[j] })
                .collect();
            total += model.score_unchecked(&z);
        }
        total / bg.len() as f64
    };
    let m = features.len();
    let mut phi = vec![0.0; x.len()];
    let mut count = 0.0;
    for order in features.iter().copied().permutations(m) {
        let mut present = Vec::new();
        let mut prev = value(&present);
        for f in order {
            present.push(f);
            let v = value(&present);
            phi[f] += v - prev;
            prev = v;
        }
        count += 1.0;
    }
    phi.iter().map(|p| p / count).collect()
}

#[test]
fn exact_matches_permutation_oracle_for_every_family() {
    let c = cohort(240, 5, 5);
    let bg = BackgroundSet::sample(c.rows(), 20, 9).unwrap();
    let features: Vec<usize> = (0..5).collect();
    for config in families() {
        let model = fit(&config, &c).unwrap();
        for i in [0, 7, 19] {
            let x = c.row(i);
            let a = shapley_exact(&model, x, &features, &bg).unwrap();
            let oracle = permutation_oracle(&model, x, &features, &bg);
            for j in 0..5 {
                assert!(
                    (a.phi[j] - oracle[j]).abs() < 1e-9,
                    "{} sample {i} feature {j}: {} vs {}",
                    config.algorithm,
                    a.phi[j],
                    oracle[j]
                );
            }
        }
    }
}

#[test]
fn subset_attribution_keeps_other_features_at_the_sample() {
    let c = cohort(200, 6, 2);
    let model = fit(&ModelConfig::new(Algorithm::Xgb, 1), &c).unwrap();
    let bg = BackgroundSet::sample(c.rows(), 15, 3).unwrap();
    let features = [1, 3, 4];
    let x = c.row(4);
    let a = shapley_exact(&model, x, &features, &bg).unwrap();
    let oracle = permutation_oracle(&model, x, &features, &bg);
    for j in 0..6 {
        assert!((a.phi[j] - oracle[j]).abs() < 1e-9);
    }
    assert_eq!(a.phi[0], 0.0);
    let full = coalition_value(&model, x, &(0..6).collect::<Vec<_>>(), &bg).unwrap();
    assert!((full - model.score(x).unwrap()).abs() < 1e-12);
}

struct Linear {
    w: Vec<f64>,
    b: f64,
}

impl Scorer for Linear {
    fn n_features(&self) -> usize {
        self.w.len()
    }
    fn score_unchecked(&self, x: &[f64]) -> f64 {
        self.w.iter().zip(x).map(|(w, v)| w * v).sum::<f64>() + self.b
    }
}

#[test]
fn linear_scorer_closed_form() {
    let mut rng = rng::seeded(4);
    let d = 7;
    let model = Linear {
        w: (0..d).map(|_| rng.random_range(-3.0..3.0)).collect(),
        b: 0.4,
    };
    let rows: Vec<Vec<f64>> = (0..30).map(|_| (0..d).map(|_| rng.random_range(-2.0..2.0)).collect()).collect();
    let bg = BackgroundSet::new(rows).unwrap();
    let mu = bg.mean();
    let x: Vec<f64> = (0..d).map(|_| rng.random_range(-2.0..2.0)).collect();
    let a = shapley_exact(&model, &x, &(0..d).collect::<Vec<_>>(), &bg).unwrap();
    for j in 0..d {
        assert!((a.phi[j] - model.w[j] * (x[j] - mu[j])).abs() < 1e-9);
    }
}

#[test]
fn linear_svm_closed_form() {
    let c = cohort(150, 4, 8);
    let model = fit(&ModelConfig::new(Algorithm::Svm, 1).with("kernel", ParamValue::from("linear")), &c).unwrap();
    let mafus_core::learners::ModelKind::Svm(svm) = &model.model else {
        panic!("expected an svm");
    };
    let mut w = vec![0.0; 4];
    for (sv, coef) in svm.support_vectors.iter().zip(&svm.dual_coef) {
        for j in 0..4 {
            w[j] += coef * sv[j];
        }
    }
    let bg = BackgroundSet::sample(c.rows(), 25, 1).unwrap();
    let mu = bg.mean();
    let x = c.row(3);
    let a = shapley_exact(&model, x, &[0, 1, 2, 3], &bg).unwrap();
    for j in 0..4 {
        assert!((a.phi[j] - w[j] * (x[j] - mu[j])).abs() < 1e-9);
    }
}

#[test]
fn feature_without_splits_gets_zero() {
    let mut c = cohort(200, 5, 6);
    // feature 2 is constant in training, so no tree can split on it
    let rows: Vec<Vec<f64>> = c
        .rows()
        .iter()
        .map(|r| {
            let mut r = r.clone();
            r[2] = 0.25;
            r
        })
        .collect();
    c = Cohort::new(c.schema().clone(), rows, c.labels().to_vec(), c.row_ids().to_vec()).unwrap();
    let probe = cohort(60, 5, 7);
    let bg = BackgroundSet::sample(probe.rows(), 20, 2).unwrap();
    for alg in [Algorithm::Rf, Algorithm::Xgb, Algorithm::Lgbm] {
        let model = fit(&ModelConfig::new(alg, 1).with("n_estimators", ParamValue::Int(30)), &c).unwrap();
        assert_eq!(model.split_counts().unwrap()[2], 0);
        for i in 0..5 {
            let a = shapley_exact(&model, probe.row(i), &[0, 1, 2, 3, 4], &bg).unwrap();
            assert!(a.phi[2].abs() < 1e-9, "{alg}: {}", a.phi[2]);
        }
    }
}

struct Symmetric;

impl Scorer for Symmetric {
    fn n_features(&self) -> usize {
        4
    }
    fn score_unchecked(&self, x: &[f64]) -> f64 {
        (x[0] * x[1] + (x[0] + x[1]).sin() + 0.3 * x[2]).tanh() + 0.1 * x[3]
    }
}

#[test]
fn symmetric_features_share_credit() {
    let mut rng = rng::seeded(12);
    let rows: Vec<Vec<f64>> = (0..25)
        .map(|_| {
            let s: f64 = rng.random_range(-1.0..1.0);
            vec![s, s, rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)]
        })
        .collect();
    let bg = BackgroundSet::new(rows).unwrap();
    for v in [-0.7, 0.2, 1.3] {
        let x = [v, v, 0.5, -0.2];
        let a = shapley_exact(&Symmetric, &x, &[0, 1, 2, 3], &bg).unwrap();
        assert!((a.phi[0] - a.phi[1]).abs() < 1e-9);
    }
}

#[test]
fn local_accuracy_over_312_test_samples() {
    let c = cohort(1561, 6, 21);
    let pair = split(&c, 0.8, 1, false).unwrap();
    assert_eq!(pair.test.len(), 312);
    let model = fit(&ModelConfig::new(Algorithm::Svm, 1), &pair.train).unwrap();
    let bg = BackgroundSet::sample(pair.train.rows(), 30, 4).unwrap();
    let part = partition_run(&model, &pair.test, &bg, &ExplainOptions::default()).unwrap();
    assert_eq!(part.a.len() + part.b.len(), 312);
    assert!(part.failed.is_empty());
    let worst = part
        .samples()
        .iter()
        .map(|s| s.attribution.residual().abs())
        .fold(0.0, f64::max);
    assert!(worst < 1e-6, "{worst}");
    assert!(part.b.iter().all(|s| s.yhat == 1));
    assert!(part.a.iter().all(|s| s.yhat == 0));
    assert!(part.samples().iter().all(|s| s.attribution.mode == Mode::Exact));
}

#[test]
fn sampled_mode_is_seeded_and_locally_accurate() {
    let c = cohort(200, 5, 31);
    let model: TrainedModel = fit(&ModelConfig::new(Algorithm::Lgbm, 1), &c).unwrap();
    let bg = BackgroundSet::sample(c.rows(), 20, 1).unwrap();
    let f: Vec<usize> = (0..5).collect();
    let x = c.row(2);
    let a = shapley_sampled(&model, x, &f, &bg, 400, 9).unwrap();
    assert_eq!(a, shapley_sampled(&model, x, &f, &bg, 400, 9).unwrap());
    assert!(a.residual().abs() < 1e-9);
    let exact = shapley_exact(&model, x, &f, &bg).unwrap();
    for j in 0..5 {
        assert!((a.phi[j] - exact.phi[j]).abs() < 0.05, "{} vs {}", a.phi[j], exact.phi[j]);
    }
    // above the cap the generic entry point switches to sampling
    let opts = ExplainOptions {
        exact_cap: 3,
        permutations: 50,
        seed: 2,
    };
    let s = explain::explain(&model, x, &bg, &opts).unwrap();
    assert_eq!(s.mode, Mode::Sampled);
    assert_eq!(s.permutations, Some(50));
}

struct Quadratic {
    a: Vec<Vec<f64>>,
    b: Vec<f64>,
}

impl Scorer for Quadratic {
    fn n_features(&self) -> usize {
        self.b.len()
    }
    fn score_unchecked(&self, x: &[f64]) -> f64 {
        let mut s = 0.0;
        for i in 0..x.len() {
            s += self.b[i] * x[i];
            for j in 0..x.len() {
                s += self.a[i][j] * x[i] * x[j];
            }
        }
        s
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn exact_is_efficient_and_matches_oracle(
        seed in any::<u64>(),
        d in 2usize..6,
    ) {
        let mut rng = rng::seeded(seed);
        let model = Quadratic {
            a: (0..d).map(|_| (0..d).map(|_| rng.random_range(-1.0..1.0)).collect()).collect(),
            b: (0..d).map(|_| rng.random_range(-1.0..1.0)).collect(),
        };
        let rows: Vec<Vec<f64>> = (0..8).map(|_| (0..d).map(|_| rng.random_range(-2.0..2.0)).collect()).collect();
        let bg = BackgroundSet::new(rows).unwrap();
        let x: Vec<f64> = (0..d).map(|_| rng.random_range(-2.0..2.0)).collect();
        let f: Vec<usize> = (0..d).collect();
        let a = shapley_exact(&model, &x, &f, &bg).unwrap();
        prop_assert!(a.residual().abs() < 1e-9);
        let oracle = permutation_oracle(&model, &x, &f, &bg);
        for j in 0..d {
            prop_assert!((a.phi[j] - oracle[j]).abs() < 1e-9);
        }
    }
}
