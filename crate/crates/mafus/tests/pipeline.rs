mod common;

use mafus::pipeline::{explain_csv, run_pipeline, Manifest, PipelineError, Stage};
use mafus::synth::{gen_synthetic, SynthSpec};
use mafus_core::artifact::{content_hash, ModelArtifact};
use mafus_core::learners::Algorithm;

fn spec(n: usize) -> SynthSpec {
    SynthSpec {
        n,
        ..Default::default()
    }
}

fn manifest(dir: &std::path::Path) -> Manifest {
    serde_json::from_slice(&std::fs::read(dir.join("manifest.json")).unwrap()).unwrap()
}

#[test]
fn identical_config_gives_byte_identical_outputs() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = common::config(tmp.path(), spec(200), &Algorithm::ALL);
    let a = run_pipeline(&cfg).unwrap();
    let first = tmp.path().join("first");
    std::fs::rename(&a.output_dir, &first).unwrap();
    let b = run_pipeline(&cfg).unwrap();
    assert_eq!(a.artifact_hash, b.artifact_hash);
    let (ta, tb) = (common::tree(&first), common::tree(&b.output_dir));
    assert_eq!(ta.keys().collect::<Vec<_>>(), tb.keys().collect::<Vec<_>>());
    for (k, v) in &ta {
        assert!(v == &tb[k], "{k} differs");
    }
    assert!(!tmp.path().join(".out.staging").exists());

    let m = manifest(&b.output_dir);
    assert_eq!(m.artifact_hash, a.artifact_hash);
    for (file, hash) in &m.files {
        assert_eq!(&content_hash(&ta[file]), hash, "{file}");
    }
    assert_eq!(content_hash(&ta["model.json"]), a.artifact_hash);
}

#[test]
fn default_and_faithful_stage_orders() {
    let tmp = tempfile::tempdir().unwrap();
    let mut cfg = common::config(tmp.path(), spec(200), &[Algorithm::Svm]);
    let out = run_pipeline(&cfg).unwrap();
    let order: Vec<Stage> = manifest(&out.output_dir).stages.iter().map(|s| s.stage).collect();
    use Stage::*;
    assert_eq!(
        order,
        [Load, Clean, Encode, Split, Standardize, Select, Tune, Fit, Evaluate, Compare, Explain, Persist]
    );
    assert_eq!(out.report.results.len(), 1);
    assert_eq!(out.report.chosen, Algorithm::Svm);
    assert!(!out.output_dir.join("cv/rf.json").exists());

    cfg.paper_faithful = true;
    let out = run_pipeline(&cfg).unwrap();
    let m = manifest(&out.output_dir);
    assert!(m.paper_faithful);
    let order: Vec<Stage> = m.stages.iter().map(|s| s.stage).collect();
    assert_eq!(&order[3..6], &[Standardize, Select, Split]);
    assert!(m.stages.iter().find(|s| s.stage == Split).unwrap().seed.is_some());
}

#[test]
fn partition_covers_the_test_set() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = common::config(tmp.path(), spec(300), &[Algorithm::Svm, Algorithm::Rf]);
    let out = run_pipeline(&cfg).unwrap();
    assert_eq!(out.summary.test_rows, 60);
    assert_eq!(out.partition.len() + out.partition.failed.len(), 60);
    assert!(out.partition.a.iter().all(|s| s.yhat == 0));
    assert!(out.partition.b.iter().all(|s| s.yhat == 1));
    assert!(out.summary.selected_features.contains(&"Gender".to_string()));
    for s in out.partition.a.iter().chain(&out.partition.b) {
        let total: f64 = s.attribution.phi.iter().sum::<f64>() + s.attribution.base_value;
        assert!((total - s.attribution.score).abs() < 1e-6);
    }
}

#[test]
fn missing_rows_are_dropped_before_the_split() {
    let tmp = tempfile::tempdir().unwrap();
    let s = SynthSpec {
        n: 1674,
        missing_rows: 113,
        ..Default::default()
    };
    let mut cfg = common::config(tmp.path(), s, &[Algorithm::Svm]);
    cfg.explain.background_size = 5;
    let out = run_pipeline(&cfg).unwrap();
    assert_eq!(out.summary.loaded_rows, 1674);
    assert_eq!(out.summary.clean_rows, 1561);
    assert_eq!((out.summary.train_rows, out.summary.test_rows), (1249, 312));
}

#[test]
fn plot_tables() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = common::config(tmp.path(), spec(200), &[Algorithm::Svm, Algorithm::Xgb]);
    let out = run_pipeline(&cfg).unwrap();
    let plots = out.output_dir.join("plots");
    let read = |name: &str| std::fs::read_to_string(plots.join(name)).unwrap();

    for alg in ["svm", "xgb"] {
        let roc = read(&format!("roc_{alg}.csv"));
        let lines: Vec<&str> = roc.lines().collect();
        assert_eq!(lines[0], "fpr,tpr");
        let point = |l: &str| -> Vec<f64> { l.split(',').map(|v| v.parse().unwrap()).collect() };
        assert_eq!(point(lines[1]), [0.0, 0.0]);
        assert_eq!(point(lines.last().unwrap()), [1.0, 1.0]);
        let conf = read(&format!("confusion_{alg}.csv"));
        assert_eq!(conf.lines().count(), 3);
    }

    let d = out.summary.selected_features.len();
    assert_eq!(read("relevance_bar.csv").lines().count(), d + 1);
    let dependence = std::fs::read_dir(&plots)
        .unwrap()
        .filter(|e| e.as_ref().unwrap().file_name().to_string_lossy().starts_with("dependence_"))
        .count();
    assert_eq!(dependence, d - 1);
    let beeswarm = read("beeswarm.csv");
    assert_eq!(beeswarm.lines().count(), 1 + out.partition.len() * d);
    let force: serde_json::Value = serde_json::from_str(&read("force.json")).unwrap();
    assert!(force.get("a").is_some() && force.get("b").is_some());
}

#[test]
fn config_errors_exit_2_and_data_errors_exit_3() {
    let tmp = tempfile::tempdir().unwrap();
    let mut cfg = common::config(tmp.path(), spec(200), &[Algorithm::Svm]);
    cfg.split_ratio = 1.5;
    let e = run_pipeline(&cfg).unwrap_err();
    assert_eq!(e.exit_code(), 2, "{e}");

    let csv = tmp.path().join("bad.csv");
    std::fs::write(&csv, "Age,BMI\n50,25\n").unwrap();
    let mut cfg = common::config(tmp.path(), spec(200), &[Algorithm::Svm]);
    cfg.synthetic = None;
    cfg.input = Some(csv);
    let e = run_pipeline(&cfg).unwrap_err();
    assert!(matches!(e, PipelineError::Stage { stage: Stage::Load, .. }), "{e}");
    assert_eq!(e.exit_code(), 3);
    assert!(!cfg.output_dir.exists());

    let mut cfg = common::config(tmp.path(), spec(200), &[Algorithm::Svm]);
    cfg.relevance.forced = vec!["Smoke".into(), "Nope".into()];
    let e = run_pipeline(&cfg).unwrap_err();
    assert!(e.exit_code() == 2 || e.stage() == Some(Stage::Select), "{e}");
}

#[test]
fn csv_input_and_offline_explain() {
    let tmp = tempfile::tempdir().unwrap();
    let csv = tmp.path().join("cohort.csv");
    gen_synthetic(&spec(200)).unwrap().save_csv(&csv).unwrap();
    let mut cfg = common::config(tmp.path(), spec(200), &[Algorithm::Rf]);
    cfg.synthetic = None;
    cfg.input = Some(csv.clone());
    let out = run_pipeline(&cfg).unwrap();
    let (artifact, _) = ModelArtifact::load(out.output_dir.join("model.json")).unwrap();
    let part = explain_csv(&artifact, std::fs::File::open(&csv).unwrap()).unwrap();
    assert_eq!(part.len() + part.failed.len(), 200);
    let mut ids: Vec<usize> = part.a.iter().chain(&part.b).map(|s| s.sample_id).collect();
    ids.sort_unstable();
    assert_eq!(ids, (0..200).collect::<Vec<_>>());

    let e = explain_csv(&artifact, "Age\n50\n".as_bytes()).unwrap_err();
    assert_eq!(e.exit_code(), 3);
}
