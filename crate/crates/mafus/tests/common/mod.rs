#![allow(dead_code)]

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use mafus::pipeline::{ExplainConfig, PipelineConfig};
use mafus::synth::SynthSpec;
use mafus_core::learners::{Algorithm, ParamValue};
use mafus_core::tuning::{Axis, AxisType, HyperGrid};

/// One or two configurations per family, small enough for unit-scale runs.
pub fn tiny_grid(alg: Algorithm) -> HyperGrid {
    let int = |n: &str, v: i64| Axis::new(n, AxisType::Integer, vec![ParamValue::Int(v)]);
    let axes = match alg {
        Algorithm::Svm => vec![
            Axis::new("class_weight", AxisType::String, vec!["balanced".into()]),
            Axis::new("gamma", AxisType::Float, vec![ParamValue::Float(0.1), ParamValue::Float(0.02)]),
        ],
        Algorithm::Rf => vec![int("n_estimators", 20)],
        Algorithm::Xgb => vec![int("n_estimators", 20), int("max_depth", 3)],
        Algorithm::Lgbm => vec![int("n_estimators", 20), int("num_leaves", 8)],
        Algorithm::Mlp => vec![
            Axis::new("hidden_layer_sizes", AxisType::Integers, vec![ParamValue::Ints(vec![8, 8, 8])]),
            Axis::new("solver", AxisType::String, vec!["lbfgs".into()]),
            int("max_iter", 40),
        ],
    };
    HyperGrid::new(alg, axes).unwrap()
}

pub fn write_grids(dir: &Path) -> BTreeMap<String, PathBuf> {
    Algorithm::ALL
        .iter()
        .map(|&a| {
            let p = dir.join(format!("{a}.toml"));
            std::fs::write(&p, tiny_grid(a).to_toml_string()).unwrap();
            (a.to_string(), p)
        })
        .collect()
}

pub fn config(dir: &Path, spec: SynthSpec, algorithms: &[Algorithm]) -> PipelineConfig {
    PipelineConfig {
        synthetic: Some(spec),
        algorithms: algorithms.to_vec(),
        grids: write_grids(dir),
        explain: ExplainConfig {
            background_size: 20,
            ..Default::default()
        },
        output_dir: dir.join("out"),
        ..Default::default()
    }
}

/// Relative path -> bytes for every file below `root`.
pub fn tree(root: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in std::fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                let rel = p.strip_prefix(root).unwrap().to_string_lossy().replace('\\', "/");
                out.insert(rel, std::fs::read(&p).unwrap());
            }
        }
    }
    out
}

pub fn workspace_root() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..")
}
