//! Plot-data files derived from a finished run directory. Rendering is left
//! to external tools; everything here is CSV or JSON.
//!
//! | file | columns |
//! |---|---|
//! | `plots/relevance_bar.csv` | rank, feature, score, forced (selected features only) |
//! | `plots/relevance_excluded.csv` | rank, feature, score |
//! | `plots/roc_<alg>.csv` | fpr, tpr |
//! | `plots/confusion_<alg>.csv` | actual, predicted_no, predicted_yes |
//! | `plots/beeswarm.csv` | feature, order, sample_id, shap, value, raw_value |
//! | `plots/dependence_<f>_vs_<top>.csv` | sample_id, value, shap, interaction_value |
//! | `plots/force.json` | force plots of the first A and first B sample |

use std::path::Path;

use mafus_core::artifact::ModelArtifact;
use mafus_core::explain::{self, ForcePlot, PartitionAB};
use mafus_core::relevance::RelevanceReport;
use mafus_core::Error as CoreError;
use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::pipeline::{write_bytes, write_json, ModelEvaluation, PipelineError, Stage};

pub const MODEL_FILE: &str = "model.json";

fn fail(e: CoreError) -> PipelineError {
    PipelineError::Stage {
        stage: Stage::Persist,
        source: e,
    }
}

fn read_json<T: DeserializeOwned>(dir: &Path, rel: &str) -> Result<T, PipelineError> {
    let path = dir.join(rel);
    let bytes = std::fs::read(&path).map_err(|e| fail(CoreError::Io { path, source: e }))?;
    serde_json::from_slice(&bytes).map_err(|e| fail(e.into()))
}

fn csv_bytes<T: Serialize>(rows: impl IntoIterator<Item = T>) -> Result<Vec<u8>, PipelineError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r).map_err(|e| fail(e.into()))?;
    }
    w.into_inner().map_err(|e| fail(CoreError::Contract(e.to_string())))
}

/// File-name-safe form of a feature name.
pub fn file_stem(name: &str) -> String {
    name.chars()
        .map(|c| if c.is_ascii_alphanumeric() { c.to_ascii_lowercase() } else { '_' })
        .collect()
}

#[derive(Serialize)]
struct BarRow<'a> {
    rank: usize,
    feature: &'a str,
    score: f64,
    forced: bool,
}

#[derive(Serialize)]
struct ExcludedRow<'a> {
    rank: usize,
    feature: &'a str,
    score: f64,
}

#[derive(Serialize)]
struct ConfusionRow {
    actual: &'static str,
    predicted_no: u64,
    predicted_yes: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, serde::Deserialize)]
pub struct ForceFile {
    pub a: Option<ForcePlot>,
    pub b: Option<ForcePlot>,
}

/// Writes every plot file under `dir/plots` from the run artifacts in `dir`.
pub fn emit_plots(dir: &Path) -> Result<(), PipelineError> {
    let relevance: RelevanceReport = read_json(dir, "relevance.json")?;
    let partition: PartitionAB = read_json(dir, "partition.json")?;
    let artifact: ModelArtifact = read_json(dir, MODEL_FILE)?;

    let bar = relevance
        .ranking
        .iter()
        .enumerate()
        .filter(|(_, f)| relevance.selected.contains(f))
        .map(|(i, f)| BarRow {
            rank: i + 1,
            feature: f,
            score: relevance.score(f).unwrap_or(0.0),
            forced: relevance.forced.contains(f),
        });
    write_bytes(dir, "plots/relevance_bar.csv", &csv_bytes(bar)?)?;
    let excluded = relevance
        .ranking
        .iter()
        .enumerate()
        .filter(|(_, f)| !relevance.selected.contains(f))
        .map(|(i, f)| ExcludedRow {
            rank: i + 1,
            feature: f,
            score: relevance.score(f).unwrap_or(0.0),
        });
    write_bytes(dir, "plots/relevance_excluded.csv", &csv_bytes(excluded)?)?;

    let eval_dir = dir.join("eval");
    let mut evals: Vec<_> = std::fs::read_dir(&eval_dir)
        .map_err(|e| {
            fail(CoreError::Io {
                path: eval_dir.clone(),
                source: e,
            })
        })?
        .filter_map(|e| e.ok().map(|e| e.file_name().to_string_lossy().into_owned()))
        .filter(|n| n.ends_with(".json"))
        .collect();
    evals.sort();
    if evals.is_empty() {
        return Err(fail(CoreError::EmptyInput("no evaluation reports in eval/".into())));
    }
    for name in evals {
        let e: ModelEvaluation = read_json(dir, &format!("eval/{name}"))?;
        let alg = e.algorithm;
        let roc = e.roc.iter().map(|&(fpr, tpr)| [fpr, tpr]);
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["fpr", "tpr"]).map_err(|e| fail(e.into()))?;
        for r in roc {
            w.serialize(r).map_err(|e| fail(e.into()))?;
        }
        let bytes = w.into_inner().map_err(|e| fail(CoreError::Contract(e.to_string())))?;
        write_bytes(dir, &format!("plots/roc_{alg}.csv"), &bytes)?;
        let cm = e.report.confusion;
        let rows = [
            ConfusionRow {
                actual: "no",
                predicted_no: cm.tn,
                predicted_yes: cm.fp,
            },
            ConfusionRow {
                actual: "yes",
                predicted_no: cm.fn_,
                predicted_yes: cm.tp,
            },
        ];
        write_bytes(dir, &format!("plots/confusion_{alg}.csv"), &csv_bytes(rows)?)?;
    }

    let beeswarm = explain::summary_data(&partition, Some(&artifact.scaler)).map_err(fail)?;
    write_bytes(dir, "plots/beeswarm.csv", &csv_bytes(&beeswarm)?)?;

    let order = explain::feature_order(&partition);
    if let Some(&top) = order.first() {
        let top_name = &partition.feature_names[top];
        for &j in &order[1..] {
            let f = &partition.feature_names[j];
            let rows = explain::dependence_data(&partition, f, top_name).map_err(fail)?;
            let rel = format!("plots/dependence_{}_vs_{}.csv", file_stem(f), file_stem(top_name));
            write_bytes(dir, &rel, &csv_bytes(&rows)?)?;
        }
    }

    let names = &partition.feature_names;
    let force = ForceFile {
        a: partition.a.first().map(|s| explain::force_data_for(s, names)).transpose().map_err(fail)?,
        b: partition.b.first().map(|s| explain::force_data_for(s, names)).transpose().map_err(fail)?,
    };
    write_json(dir, "plots/force.json", &force)
}
