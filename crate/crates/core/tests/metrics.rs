use mafus_core::metrics::{self, auc_with, roc_points, trapezoid_area, EvalReport, TieRule};
use proptest::prelude::*;

struct Counts {
    tp: u64,
    tn: u64,
    fp: u64,
    fn_: u64,
}

fn count(labels: &[u8], preds: &[u8]) -> Counts {
    let mut c = Counts { tp: 0, tn: 0, fp: 0, fn_: 0 };
    for i in 0..labels.len() {
        match (labels[i], preds[i]) {
            (1, 1) => c.tp += 1,
            (0, 0) => c.tn += 1,
            (0, 1) => c.fp += 1,
            _ => c.fn_ += 1,
        }
    }
    c
}

fn pair_auc(scores: &[f64], labels: &[u8], half: bool) -> f64 {
    let mut num = 0.0;
    let mut pairs = 0.0;
    for i in 0..labels.len() {
        for j in 0..labels.len() {
            if labels[i] == 0 && labels[j] == 1 {
                pairs += 1.0;
                if scores[i] < scores[j] {
                    num += 1.0;
                } else if scores[i] == scores[j] && half {
                    num += 0.5;
                }
            }
        }
    }
    num / pairs
}

fn labelled(max: usize) -> impl Strategy<Value = (Vec<u8>, Vec<u8>)> {
    (1..=max).prop_flat_map(|n| (prop::collection::vec(0u8..2, n), prop::collection::vec(0u8..2, n)))
}

fn scored(max: usize) -> impl Strategy<Value = (Vec<f64>, Vec<u8>)> {
    (2..=max)
        .prop_flat_map(|n| {
            // coarse grid of scores so ties are common
            (prop::collection::vec((0u32..20).prop_map(|v| v as f64 / 4.0), n), prop::collection::vec(0u8..2, n))
        })
        .prop_filter("both classes", |(_, l)| l.contains(&0) && l.contains(&1))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn counting_metrics_match_oracle((labels, preds) in labelled(200)) {
        let c = count(&labels, &preds);
        let cm = metrics::confusion(&labels, &preds, 1).unwrap();
        prop_assert_eq!((cm.tp, cm.tn, cm.fp, cm.fn_), (c.tp, c.tn, c.fp, c.fn_));
        let n = labels.len() as f64;
        prop_assert_eq!(metrics::accuracy(&cm).unwrap(), (c.tp + c.tn) as f64 / n);
        let ratio = |a: u64, b: u64| if b == 0 { 0.0 } else { a as f64 / b as f64 };
        prop_assert_eq!(metrics::precision(&cm).value, ratio(c.tp, c.tp + c.fp));
        prop_assert_eq!(metrics::recall(&cm).value, ratio(c.tp, c.tp + c.fn_));
        prop_assert_eq!(metrics::f1(&cm).value, ratio(2 * c.tp, 2 * c.tp + c.fp + c.fn_));
        prop_assert_eq!(metrics::precision(&cm).degenerate, c.tp + c.fp == 0);
        prop_assert_eq!(metrics::recall(&cm).degenerate, c.tp + c.fn_ == 0);
    }

    #[test]
    fn auc_matches_pair_counting((scores, labels) in scored(200)) {
        prop_assert_eq!(metrics::auc(&scores, &labels).unwrap(), pair_auc(&scores, &labels, true));
        prop_assert_eq!(auc_with(&scores, &labels, TieRule::Strict).unwrap(), pair_auc(&scores, &labels, false));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn roc_area_equals_auc((scores, labels) in scored(200)) {
        let pts = roc_points(&scores, &labels).unwrap();
        prop_assert_eq!(pts[0], (0.0, 0.0));
        prop_assert_eq!(*pts.last().unwrap(), (1.0, 1.0));
        for w in pts.windows(2) {
            prop_assert!(w[1].0 >= w[0].0 && w[1].1 >= w[0].1);
        }
        let a = metrics::auc(&scores, &labels).unwrap();
        prop_assert!((trapezoid_area(&pts) - a).abs() < 1e-12);
    }

    #[test]
    fn per_class_rows_are_mirror_images((labels, preds) in labelled(100)) {
        let scores: Vec<f64> = preds.iter().map(|&p| p as f64).collect();
        let r = EvalReport::evaluate(&labels, &preds, &scores).unwrap();
        let flip = |v: &[u8]| v.iter().map(|x| 1 - x).collect::<Vec<u8>>();
        let mirrored = metrics::confusion(&flip(&labels), &flip(&preds), 1).unwrap();
        prop_assert_eq!(metrics::f1(&mirrored), r.no.f1);
        prop_assert_eq!(r.class1_errors(), r.confusion.fp + r.confusion.fn_);
    }
}

#[test]
fn report_document_has_table_shape() {
    let r = EvalReport::evaluate(&[0, 0, 1, 1], &[0, 1, 1, 1], &[0.1, 0.6, 0.7, 0.9]).unwrap();
    let v = serde_json::to_value(&r).unwrap();
    for class in ["no", "yes"] {
        for m in ["precision", "recall", "f1"] {
            assert!(v[class][m]["value"].is_number(), "{class}.{m}");
        }
    }
    assert_eq!(v["accuracy"], 0.75);
    assert_eq!(v["auc"], 1.0);
    assert_eq!(v["confusion"]["fn"], 0);
}

#[test]
fn auc_needs_both_classes() {
    assert!(metrics::auc(&[0.1, 0.2], &[1, 1]).is_err());
    let r = EvalReport::evaluate(&[1, 1], &[1, 0], &[0.9, 0.1]).unwrap();
    assert_eq!(r.auc, None);
}
