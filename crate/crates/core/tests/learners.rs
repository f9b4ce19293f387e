use mafus_core::learners::mlp::{Activation, Batch, Network};
use mafus_core::learners::{fit_rows, Algorithm, ClassWeighting, ModelConfig, ModelKind, ParamValue};
use mafus_core::rng;
use proptest::prelude::*;
use rand::Rng;

fn random_rows(n: usize, d: usize, seed: u64) -> (Vec<Vec<f64>>, Vec<u8>) {
    let mut rng = rng::seeded(seed);
    let rows: Vec<Vec<f64>> = (0..n).map(|_| (0..d).map(|_| rng.random_range(-2.0..2.0)).collect()).collect();
    let labels = rows
        .iter()
        .map(|r| (r[0] - r[1] * r[2] + rng.random_range(-0.8..0.8) > 0.3) as u8)
        .collect();
    (rows, labels)
}

fn gradient_check(activation: Activation, seed: u64) -> f64 {
    let net = Network::init(vec![4, 6, 5, 3, 1], activation, seed);
    let (rows, labels) = random_rows(12, 4, seed + 100);
    let batch = Batch {
        rows: rows.iter().map(|r| r.as_slice()).collect(),
        labels: labels.iter().map(|&l| l as f64).collect(),
        weights: (0..12).map(|i| 0.5 + (i % 3) as f64 * 0.5).collect(),
    };
    let alpha = 0.01;
    let (_, grad) = net.loss_and_grad(&net.params, &batch, alpha);
    let h = 1e-5;
    let mut num = 0.0;
    let mut den = 0.0;
    let mut p = net.params.clone();
    for i in 0..p.len() {
        let orig = p[i];
        p[i] = orig + h;
        let up = net.loss_and_grad(&p, &batch, alpha).0;
        p[i] = orig - h;
        let down = net.loss_and_grad(&p, &batch, alpha).0;
        p[i] = orig;
        let fd = (up - down) / (2.0 * h);
        num += (grad[i] - fd).powi(2);
        den += (grad[i].abs() + fd.abs()).powi(2);
    }
    num.sqrt() / den.sqrt()
}

#[test]
fn mlp_backprop_matches_finite_differences() {
    for seed in 1..4 {
        let tanh = gradient_check(Activation::Tanh, seed);
        assert!(tanh < 1e-4, "tanh seed {seed}: {tanh}");
        let relu = gradient_check(Activation::Relu, seed);
        assert!(relu < 1e-4, "relu seed {seed}: {relu}");
    }
}

fn loss_history(alg: Algorithm, seed: u64) -> Vec<f64> {
    let (rows, labels) = random_rows(150, 5, seed);
    let config = ModelConfig::new(alg, seed)
        .with("n_estimators", ParamValue::Int(40))
        .with("learning_rate", ParamValue::Float(0.5));
    let model = fit_rows(&config, &rows, &labels).unwrap();
    match model.model {
        ModelKind::Boosted(b) => b.loss_history,
        other => panic!("expected a boosted model, got {other:?}"),
    }
}

#[test]
fn boosting_loss_never_increases() {
    for alg in [Algorithm::Xgb, Algorithm::Lgbm] {
        for seed in 1..=10 {
            let h = loss_history(alg, seed);
            assert_eq!(h.len(), 41);
            for w in h.windows(2) {
                assert!(w[1] <= w[0] + 1e-9, "{alg} seed {seed}: {} -> {}", w[0], w[1]);
            }
        }
    }
}

#[test]
fn fits_are_deterministic_in_seed() {
    let (rows, labels) = random_rows(120, 4, 3);
    for alg in Algorithm::ALL {
        let mut config = ModelConfig::new(alg, 7);
        if alg == Algorithm::Mlp {
            config = config
                .with("hidden_layer_sizes", ParamValue::Ints(vec![8, 8, 8]))
                .with("max_iter", ParamValue::Int(30));
        }
        let a = fit_rows(&config, &rows, &labels).unwrap();
        let b = fit_rows(&config, &rows, &labels).unwrap();
        assert_eq!(a, b, "{alg}");
    }
}

#[test]
fn balanced_weighting_raises_minority_recall() {
    let mut rng = rng::seeded(5);
    let rows: Vec<Vec<f64>> = (0..300).map(|_| vec![rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)]).collect();
    let labels: Vec<u8> = rows.iter().map(|r| (r[0] + 0.3 * r[1] > 0.7) as u8).collect();
    let recall = |w: ClassWeighting| {
        let config = ModelConfig {
            class_weighting: w,
            ..ModelConfig::new(Algorithm::Svm, 1).with("kernel", ParamValue::from("linear")).with("C", ParamValue::Float(0.05))
        };
        let m = fit_rows(&config, &rows, &labels).unwrap();
        let hits = (0..rows.len()).filter(|&i| labels[i] == 1 && m.predict(&rows[i]).unwrap() == 1).count();
        hits as f64 / labels.iter().filter(|&&l| l == 1).count() as f64
    };
    assert!(recall(ClassWeighting::Balanced) >= recall(ClassWeighting::None));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn scores_are_probabilities_except_svm_margins(seed in 0u64..1000, alg_i in 0usize..4) {
        let alg = [Algorithm::Rf, Algorithm::Xgb, Algorithm::Lgbm, Algorithm::Svm][alg_i];
        let (rows, labels) = random_rows(60, 3, seed);
        prop_assume!(labels.contains(&0) && labels.contains(&1));
        let config = match alg {
            Algorithm::Svm => ModelConfig::new(alg, seed),
            _ => ModelConfig::new(alg, seed).with("n_estimators", ParamValue::Int(10)),
        };
        let m = fit_rows(&config, &rows, &labels).unwrap();
        for r in &rows {
            let s = m.score(r).unwrap();
            prop_assert!(s.is_finite());
            if alg != Algorithm::Svm {
                prop_assert!((0.0..=1.0).contains(&s));
            }
            prop_assert_eq!(m.predict(r).unwrap(), (s >= m.threshold()) as u8);
        }
    }
}
