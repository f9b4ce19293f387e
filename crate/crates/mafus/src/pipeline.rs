//! End-to-end experiment: clean, encode, standardize, select, split, tune,
//! fit, evaluate, compare, explain, persist.
//!
//! The default order splits before fitting the scaler and the relevance
//! booster so neither sees the test partition. `paper_faithful = true`
//! standardizes and selects on the full cleaned cohort first, then splits.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};

use mafus_core::artifact::{content_hash, ModelArtifact, FORMAT_VERSION};
use mafus_core::data::{self, Cohort, FeatureSchema, ScalerStats};
use mafus_core::explain::{self, BackgroundSet, ExplainOptions, PartitionAB};
use mafus_core::learners::{self, Algorithm, ModelConfig, ParamValue, TrainedModel};
use mafus_core::metrics::{self, EvalReport};
use mafus_core::relevance::{self, Importance, RelevanceReport};
use mafus_core::rng::stage_seed;
use mafus_core::tuning::{self, CVResult, HyperGrid};
use mafus_core::Error as CoreError;
use serde::{Deserialize, Serialize};

use crate::plots;
use crate::synth::{gen_synthetic, SynthSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    Load,
    Clean,
    Encode,
    Split,
    Standardize,
    Select,
    Tune,
    Fit,
    Evaluate,
    Compare,
    Explain,
    Persist,
}

impl Stage {
    pub fn as_str(self) -> &'static str {
        match self {
            Stage::Load => "load",
            Stage::Clean => "clean",
            Stage::Encode => "encode",
            Stage::Split => "split",
            Stage::Standardize => "standardize",
            Stage::Select => "select",
            Stage::Tune => "tune",
            Stage::Fit => "fit",
            Stage::Evaluate => "evaluate",
            Stage::Compare => "compare",
            Stage::Explain => "explain",
            Stage::Persist => "persist",
        }
    }

    /// Process exit code for a failure in this stage.
    pub fn exit_code(self) -> i32 {
        match self {
            Stage::Load | Stage::Clean | Stage::Encode | Stage::Split | Stage::Standardize | Stage::Select => 3,
            Stage::Tune | Stage::Fit | Stage::Evaluate | Stage::Compare => 4,
            Stage::Explain => 5,
            Stage::Persist => 1,
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    #[error("config error: {0}")]
    Config(String),
    #[error("{stage} stage failed: {source}")]
    Stage {
        stage: Stage,
        #[source]
        source: CoreError,
    },
}

impl PipelineError {
    pub fn exit_code(&self) -> i32 {
        match self {
            PipelineError::Config(_) => 2,
            PipelineError::Stage { stage, .. } => stage.exit_code(),
        }
    }

    pub fn stage(&self) -> Option<Stage> {
        match self {
            PipelineError::Config(_) => None,
            PipelineError::Stage { stage, .. } => Some(*stage),
        }
    }
}

trait StageExt<T> {
    fn at(self, stage: Stage) -> Result<T, PipelineError>;
}

impl<T> StageExt<T> for mafus_core::Result<T> {
    fn at(self, stage: Stage) -> Result<T, PipelineError> {
        self.map_err(|source| PipelineError::Stage { stage, source })
    }
}

fn io_err(stage: Stage, path: &Path, e: std::io::Error) -> PipelineError {
    PipelineError::Stage {
        stage,
        source: CoreError::Io {
            path: path.to_path_buf(),
            source: e,
        },
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RelevanceConfig {
    pub threshold: f64,
    pub forced: Vec<String>,
    pub importance: Importance,
    /// Booster hyperparameters; the default booster when absent.
    pub booster: Option<BTreeMap<String, ParamValue>>,
}

impl Default for RelevanceConfig {
    fn default() -> Self {
        RelevanceConfig {
            threshold: relevance::DEFAULT_THRESHOLD,
            forced: vec!["Gender".to_string()],
            importance: Importance::Splits,
            booster: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExplainConfig {
    pub background_size: usize,
    pub exact_cap: usize,
    pub permutations: usize,
}

impl Default for ExplainConfig {
    fn default() -> Self {
        ExplainConfig {
            background_size: explain::DEFAULT_BACKGROUND,
            exact_cap: explain::EXACT_CAP,
            permutations: explain::DEFAULT_PERMUTATIONS,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub seed: u64,
    /// CSV cohort; mutually exclusive with `synthetic`.
    pub input: Option<PathBuf>,
    pub synthetic: Option<SynthSpec>,
    /// Schema file; the 25-column default when absent.
    pub schema: Option<PathBuf>,
    pub split_ratio: f64,
    pub stratified: bool,
    pub paper_faithful: bool,
    pub cv_folds: usize,
    pub algorithms: Vec<Algorithm>,
    /// Grid file per algorithm name; the shipped grid when absent.
    pub grids: BTreeMap<String, PathBuf>,
    pub relevance: RelevanceConfig,
    pub explain: ExplainConfig,
    pub output_dir: PathBuf,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            seed: 1,
            input: None,
            synthetic: None,
            schema: None,
            split_ratio: 0.8,
            stratified: false,
            paper_faithful: false,
            cv_folds: 5,
            algorithms: Algorithm::ALL.to_vec(),
            grids: BTreeMap::new(),
            relevance: RelevanceConfig::default(),
            explain: ExplainConfig::default(),
            output_dir: PathBuf::from("mafus-out"),
        }
    }
}

impl PipelineConfig {
    pub fn from_toml_str(text: &str) -> Result<Self, PipelineError> {
        toml::from_str(text).map_err(|e| PipelineError::Config(e.to_string()))
    }

    /// Reads a config file; relative paths inside it resolve against the
    /// file's directory.
    pub fn load(path: impl AsRef<Path>) -> Result<Self, PipelineError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| PipelineError::Config(format!("{}: {e}", path.display())))?;
        let mut cfg = Self::from_toml_str(&text)?;
        let base = path.parent().unwrap_or(Path::new(""));
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        cfg.input.as_mut().map(fix);
        cfg.schema.as_mut().map(fix);
        cfg.grids.values_mut().for_each(fix);
        fix(&mut cfg.output_dir);
        Ok(cfg)
    }

    pub fn schema(&self) -> Result<FeatureSchema, PipelineError> {
        match &self.schema {
            Some(p) => FeatureSchema::load(p).map_err(|e| PipelineError::Config(e.to_string())),
            None => Ok(FeatureSchema::cohort_default()),
        }
    }

    pub fn grid(&self, algorithm: Algorithm) -> Result<HyperGrid, PipelineError> {
        let Some(path) = self.grids.get(algorithm.as_str()) else {
            return Ok(HyperGrid::full(algorithm));
        };
        let g = HyperGrid::load(path).map_err(|e| PipelineError::Config(format!("{}: {e}", path.display())))?;
        if g.algorithm != algorithm {
            return Err(PipelineError::Config(format!(
                "{} holds a {} grid, expected {algorithm}",
                path.display(),
                g.algorithm
            )));
        }
        Ok(g)
    }

    pub fn booster(&self) -> ModelConfig {
        let seed = stage_seed(self.seed, "relevance");
        match &self.relevance.booster {
            Some(params) => ModelConfig {
                params: params.clone(),
                ..ModelConfig::new(Algorithm::Xgb, seed)
            },
            None => relevance::default_booster(seed),
        }
    }

    /// Checks every field and referenced file before any work starts.
    pub fn validate(&self) -> Result<(), PipelineError> {
        let bad = |m: String| Err(PipelineError::Config(m));
        match (&self.input, &self.synthetic) {
            (Some(_), Some(_)) => return bad("give either `input` or `[synthetic]`, not both".into()),
            (None, None) => return bad("no cohort: set `input` or `[synthetic]`".into()),
            (Some(p), None) if !p.is_file() => return bad(format!("input {} does not exist", p.display())),
            _ => {}
        }
        if !(self.split_ratio > 0.0 && self.split_ratio < 1.0) {
            return bad(format!("split_ratio {} must lie in (0, 1)", self.split_ratio));
        }
        if self.cv_folds < 2 {
            return bad("cv_folds must be at least 2".into());
        }
        if self.algorithms.is_empty() {
            return bad("no algorithms selected".into());
        }
        for (i, a) in self.algorithms.iter().enumerate() {
            if self.algorithms[..i].contains(a) {
                return bad(format!("algorithm {a} listed twice"));
            }
        }
        for name in self.grids.keys() {
            name.parse::<Algorithm>().map_err(|e| PipelineError::Config(e.to_string()))?;
        }
        if self.explain.background_size == 0 || self.explain.permutations == 0 {
            return bad("background_size and permutations must be positive".into());
        }
        let schema = self.schema()?;
        for f in &self.relevance.forced {
            if schema.feature_index(f).is_none() {
                return bad(format!("forced feature `{f}` is not in the schema"));
            }
        }
        self.booster()
            .validate(schema.n_features())
            .map_err(|e| PipelineError::Config(format!("relevance booster: {e}")))?;
        for &a in &self.algorithms {
            let grid = self.grid(a)?;
            for c in grid.configs(self.seed).map_err(|e| PipelineError::Config(e.to_string()))? {
                c.validate(1).map_err(|e| PipelineError::Config(e.to_string()))?;
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlgorithmResult {
    pub algorithm: Algorithm,
    pub best_config: ModelConfig,
    pub best_cv_f1: f64,
    pub grid_size: usize,
    pub test: EvalReport,
    pub class1_errors: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub results: Vec<AlgorithmResult>,
    pub chosen: Algorithm,
    pub rationale: String,
}

/// Index of the result with the fewest class-1 misclassifications; ties go
/// to the higher class-1 F1, then the higher AUC, then the earlier entry.
pub fn choose_model(results: &[AlgorithmResult]) -> Option<usize> {
    let auc = |r: &AlgorithmResult| r.test.auc.unwrap_or(f64::NEG_INFINITY);
    (0..results.len()).min_by(|&a, &b| {
        let (ra, rb) = (&results[a], &results[b]);
        ra.class1_errors
            .cmp(&rb.class1_errors)
            .then(rb.test.yes.f1.value.total_cmp(&ra.test.yes.f1.value))
            .then(auc(rb).total_cmp(&auc(ra)))
            .then(a.cmp(&b))
    })
}

impl ComparisonReport {
    pub fn new(results: Vec<AlgorithmResult>) -> Option<Self> {
        let i = choose_model(&results)?;
        let c = &results[i];
        let rationale = format!(
            "{} has the fewest class-1 misclassifications ({} = {} FN + {} FP; F1 {:.4}, AUC {})",
            c.algorithm,
            c.class1_errors,
            c.test.confusion.fn_,
            c.test.confusion.fp,
            c.test.yes.f1.value,
            c.test.auc.map_or("n/a".to_string(), |a| format!("{a:.4}")),
        );
        Some(ComparisonReport {
            chosen: c.algorithm,
            results,
            rationale,
        })
    }

    pub fn chosen_result(&self) -> &AlgorithmResult {
        self.results
            .iter()
            .find(|r| r.algorithm == self.chosen)
            .expect("chosen algorithm is among the results")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CohortSummary {
    pub loaded_rows: usize,
    pub clean_rows: usize,
    pub dropped_rows: usize,
    pub class_counts: [usize; 2],
    pub train_rows: usize,
    pub test_rows: usize,
    pub candidate_features: Vec<String>,
    pub selected_features: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelEvaluation {
    pub algorithm: Algorithm,
    pub config: ModelConfig,
    pub report: EvalReport,
    pub roc: Vec<(f64, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    pub stage: Stage,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub master_seed: u64,
    pub paper_faithful: bool,
    pub stages: Vec<StageRecord>,
    /// Relative path → hex SHA-256 of every file written by the run.
    pub files: BTreeMap<String, String>,
    pub artifact_hash: String,
}

#[derive(Debug)]
pub struct RunOutput {
    pub report: ComparisonReport,
    pub partition: PartitionAB,
    pub summary: CohortSummary,
    pub artifact_hash: String,
    pub output_dir: PathBuf,
}

struct Run<'a> {
    cfg: &'a PipelineConfig,
    stages: Vec<StageRecord>,
}

impl Run<'_> {
    fn enter(&mut self, stage: Stage, seed: Option<u64>) {
        self.stages.push(StageRecord { stage, seed });
    }
}

fn scaler_for(stats: &ScalerStats, features: &[String]) -> ScalerStats {
    ScalerStats {
        features: stats
            .features
            .iter()
            .filter(|f| features.contains(&f.name))
            .cloned()
            .collect(),
    }
}

/// Executes the whole experiment and leaves its outputs in
/// `config.output_dir`. Outputs are first written to a sibling staging
/// directory that replaces the target only on success.
pub fn run_pipeline(cfg: &PipelineConfig) -> Result<RunOutput, PipelineError> {
    cfg.validate()?;
    let out = cfg.output_dir.clone();
    let name = out
        .file_name()
        .ok_or_else(|| PipelineError::Config(format!("output_dir {} has no name", out.display())))?;
    let staging = out.with_file_name(format!(".{}.staging", name.to_string_lossy()));
    if staging.exists() {
        std::fs::remove_dir_all(&staging).map_err(|e| io_err(Stage::Persist, &staging, e))?;
    }
    std::fs::create_dir_all(&staging).map_err(|e| io_err(Stage::Persist, &staging, e))?;

    match execute(cfg, &staging) {
        Ok(mut res) => {
            if out.exists() {
                std::fs::remove_dir_all(&out).map_err(|e| io_err(Stage::Persist, &out, e))?;
            }
            std::fs::rename(&staging, &out).map_err(|e| io_err(Stage::Persist, &out, e))?;
            res.output_dir = out;
            Ok(res)
        }
        Err(e) => {
            let _ = std::fs::remove_dir_all(&staging);
            Err(e)
        }
    }
}

fn execute(cfg: &PipelineConfig, dir: &Path) -> Result<RunOutput, PipelineError> {
    let mut run = Run {
        cfg,
        stages: Vec::new(),
    };
    let seed = cfg.seed;

    run.enter(Stage::Load, None);
    let raw = match (&cfg.input, &cfg.synthetic) {
        (Some(path), _) => data::load_csv(path, &cfg.schema()?).at(Stage::Load)?,
        (None, Some(spec)) => gen_synthetic(spec).at(Stage::Load)?,
        (None, None) => unreachable!("validated"),
    };
    run.enter(Stage::Clean, None);
    let clean = data::drop_incomplete(&raw).at(Stage::Clean)?;
    run.enter(Stage::Encode, None);
    let encoded = data::encode_categoricals(&clean);

    let split_seed = stage_seed(seed, "split");
    let booster = cfg.booster();
    let (train, test, scaler, relevance) = if cfg.paper_faithful {
        run.enter(Stage::Standardize, None);
        let scaler = data::fit_scaler(&encoded).at(Stage::Standardize)?;
        let scaled = data::apply_scaler(&encoded, &scaler).at(Stage::Standardize)?;
        run.enter(Stage::Select, Some(booster.seed));
        let rel = select(cfg, &scaled, &booster)?;
        let reduced = scaled.select(&rel.selected).at(Stage::Select)?;
        run.enter(Stage::Split, Some(split_seed));
        let pair = data::split(&reduced, cfg.split_ratio, split_seed, cfg.stratified).at(Stage::Split)?;
        (pair.train, pair.test, scaler, rel)
    } else {
        run.enter(Stage::Split, Some(split_seed));
        let pair = data::split(&encoded, cfg.split_ratio, split_seed, cfg.stratified).at(Stage::Split)?;
        run.enter(Stage::Standardize, None);
        let scaler = data::fit_scaler(&pair.train).at(Stage::Standardize)?;
        let train = data::apply_scaler(&pair.train, &scaler).at(Stage::Standardize)?;
        let test = data::apply_scaler(&pair.test, &scaler).at(Stage::Standardize)?;
        run.enter(Stage::Select, Some(booster.seed));
        let rel = select(cfg, &train, &booster)?;
        (
            train.select(&rel.selected).at(Stage::Select)?,
            test.select(&rel.selected).at(Stage::Select)?,
            scaler,
            rel,
        )
    };
    let selected = relevance.selected.clone();
    let scaler = scaler_for(&scaler, &selected);

    let cv_seed = stage_seed(seed, "cv");
    run.enter(Stage::Tune, Some(cv_seed));
    let mut searches = Vec::new();
    for &alg in &cfg.algorithms {
        let grid = cfg.grid(alg)?;
        let gs = tuning::grid_search(&grid, &train, cfg.cv_folds, cv_seed).at(Stage::Tune)?;
        searches.push((alg, grid.len(), gs));
    }

    run.enter(Stage::Fit, None);
    let mut models: Vec<TrainedModel> = Vec::new();
    for (_, _, gs) in &searches {
        models.push(learners::fit(&gs.best, &train).at(Stage::Fit)?);
    }

    run.enter(Stage::Evaluate, None);
    let mut evaluations = Vec::new();
    let mut results = Vec::new();
    for ((alg, size, gs), model) in searches.iter().zip(&models) {
        let scores = model.scores(test.rows()).at(Stage::Evaluate)?;
        let preds = model.predictions(test.rows()).at(Stage::Evaluate)?;
        let report = EvalReport::evaluate(test.labels(), &preds, &scores).at(Stage::Evaluate)?;
        let roc = metrics::roc_points(&scores, test.labels()).unwrap_or_default();
        results.push(AlgorithmResult {
            algorithm: *alg,
            best_config: gs.best.clone(),
            best_cv_f1: gs.results[0].mean_f1,
            grid_size: *size,
            class1_errors: report.class1_errors(),
            test: report.clone(),
        });
        evaluations.push(ModelEvaluation {
            algorithm: *alg,
            config: gs.best.clone(),
            report,
            roc,
        });
    }

    run.enter(Stage::Compare, None);
    let report = ComparisonReport::new(results).expect("at least one algorithm");
    let chosen = cfg
        .algorithms
        .iter()
        .position(|a| *a == report.chosen)
        .expect("chosen is configured");
    let model = &models[chosen];

    let bg_seed = stage_seed(seed, "background");
    let explain_seed = stage_seed(seed, "explain");
    run.enter(Stage::Explain, Some(explain_seed));
    let bg = BackgroundSet::sample(train.rows(), cfg.explain.background_size, bg_seed).at(Stage::Explain)?;
    let opts = ExplainOptions {
        exact_cap: cfg.explain.exact_cap,
        permutations: cfg.explain.permutations,
        seed: explain_seed,
    };
    let partition = explain::partition_run(model, &test, &bg, &opts).at(Stage::Explain)?;
    if let Some(f) = partition.failed.first() {
        return Err(PipelineError::Stage {
            stage: Stage::Explain,
            source: CoreError::Contract(format!(
                "{} samples failed to explain; first: sample {}: {}",
                partition.failed.len(),
                f.sample_id,
                f.message
            )),
        });
    }

    run.enter(Stage::Persist, None);
    let summary = CohortSummary {
        loaded_rows: raw.len(),
        clean_rows: clean.len(),
        dropped_rows: raw.len() - clean.len(),
        class_counts: clean.class_counts(),
        train_rows: train.len(),
        test_rows: test.len(),
        candidate_features: encoded.feature_names(),
        selected_features: selected.clone(),
    };
    let artifact = ModelArtifact {
        format_version: FORMAT_VERSION,
        algorithm: report.chosen,
        config: model.config.clone(),
        master_seed: seed,
        selected_features: selected,
        schema: train.schema().clone(),
        scaler: scaler.clone(),
        model: model.clone(),
        background: bg,
        explain: opts,
        partition: Some(partition.clone()),
    };
    let all_cv: Vec<(Algorithm, &[CVResult])> =
        searches.iter().map(|(a, _, gs)| (*a, gs.results.as_slice())).collect();
    let artifact_hash = persist(dir, &run, &summary, &scaler, &relevance, &all_cv, &evaluations, &report, &partition, &artifact)?;

    Ok(RunOutput {
        report,
        partition,
        summary,
        artifact_hash,
        output_dir: dir.to_path_buf(),
    })
}

fn select(cfg: &PipelineConfig, cohort: &Cohort, booster: &ModelConfig) -> Result<RelevanceReport, PipelineError> {
    relevance::relevance_scores(cohort, booster, cfg.relevance.importance)
        .and_then(|r| r.with_selection(cfg.relevance.threshold, &cfg.relevance.forced))
        .at(Stage::Select)
}

pub(crate) fn write_json<T: Serialize>(dir: &Path, rel: &str, value: &T) -> Result<(), PipelineError> {
    let mut bytes = serde_json::to_vec_pretty(value).expect("value serializes");
    bytes.push(b'\n');
    write_bytes(dir, rel, &bytes)
}

pub(crate) fn write_bytes(dir: &Path, rel: &str, bytes: &[u8]) -> Result<(), PipelineError> {
    let path = dir.join(rel);
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(|e| io_err(Stage::Persist, parent, e))?;
    }
    std::fs::write(&path, bytes).map_err(|e| io_err(Stage::Persist, &path, e))
}

#[allow(clippy::too_many_arguments)]
fn persist(
    dir: &Path,
    run: &Run,
    summary: &CohortSummary,
    scaler: &ScalerStats,
    relevance: &RelevanceReport,
    cv: &[(Algorithm, &[CVResult])],
    evaluations: &[ModelEvaluation],
    report: &ComparisonReport,
    partition: &PartitionAB,
    artifact: &ModelArtifact,
) -> Result<String, PipelineError> {
    write_json(dir, "summary.json", summary)?;
    write_json(dir, "config.json", run.cfg)?;
    write_json(dir, "scaler.json", scaler)?;
    write_json(dir, "relevance.json", relevance)?;
    for (alg, results) in cv {
        write_json(dir, &format!("cv/{alg}.json"), results)?;
    }
    for e in evaluations {
        write_json(dir, &format!("eval/{}.json", e.algorithm), e)?;
    }
    write_json(dir, "comparison.json", report)?;
    write_json(dir, "partition.json", partition)?;
    let artifact_bytes = artifact.to_json_bytes();
    write_bytes(dir, plots::MODEL_FILE, &artifact_bytes)?;
    plots::emit_plots(dir).map_err(|e| match e {
        PipelineError::Stage { source, .. } => PipelineError::Stage {
            stage: Stage::Persist,
            source,
        },
        other => other,
    })?;

    let mut files = BTreeMap::new();
    collect_hashes(dir, dir, &mut files)?;
    let manifest = Manifest {
        master_seed: run.cfg.seed,
        paper_faithful: run.cfg.paper_faithful,
        stages: run.stages.clone(),
        files,
        artifact_hash: content_hash(&artifact_bytes),
    };
    write_json(dir, "manifest.json", &manifest)?;
    Ok(manifest.artifact_hash)
}

fn collect_hashes(root: &Path, dir: &Path, out: &mut BTreeMap<String, String>) -> Result<(), PipelineError> {
    let mut entries: Vec<_> = std::fs::read_dir(dir)
        .map_err(|e| io_err(Stage::Persist, dir, e))?
        .collect::<Result<_, _>>()
        .map_err(|e| io_err(Stage::Persist, dir, e))?;
    entries.sort_by_key(|e| e.file_name());
    for e in entries {
        let path = e.path();
        if path.is_dir() {
            collect_hashes(root, &path, out)?;
        } else {
            let bytes = std::fs::read(&path).map_err(|e| io_err(Stage::Persist, &path, e))?;
            let rel = path.strip_prefix(root).expect("under root");
            let key = rel.components().map(|c| c.as_os_str().to_string_lossy()).collect::<Vec<_>>().join("/");
            out.insert(key, content_hash(&bytes));
        }
    }
    Ok(())
}

/// Explains every row of a raw-unit CSV against a saved artifact. The CSV
/// needs a header naming at least the selected features; other columns are
/// ignored. Row ids are 0-based data-row positions.
pub fn explain_csv<R: std::io::Read>(artifact: &ModelArtifact, reader: R) -> Result<PartitionAB, PipelineError> {
    let load = |m: String| PipelineError::Stage {
        stage: Stage::Load,
        source: CoreError::Schema(m),
    };
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers().map_err(|e| PipelineError::Stage {
        stage: Stage::Load,
        source: e.into(),
    })?;
    let cols: Vec<usize> = artifact
        .selected_features
        .iter()
        .map(|f| {
            headers
                .iter()
                .position(|h| h == f)
                .ok_or_else(|| load(format!("input lacks model feature `{f}`")))
        })
        .collect::<Result<_, _>>()?;
    let mut rows = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| PipelineError::Stage {
            stage: Stage::Load,
            source: e.into(),
        })?;
        let mut row = Vec::with_capacity(cols.len());
        for (f, &c) in artifact.selected_features.iter().zip(&cols) {
            let cell = rec.get(c).unwrap_or("");
            let v = match cell.parse::<f64>() {
                Ok(v) => v,
                Err(_) => artifact.level_code(f, cell).ok_or_else(|| PipelineError::Stage {
                    stage: Stage::Load,
                    source: CoreError::Parse {
                        row: i,
                        column: f.clone(),
                        message: format!("{cell:?} is neither a number nor a declared level"),
                    },
                })?,
            };
            row.push(v);
        }
        rows.push(artifact.model_row(&row).at(Stage::Encode)?);
    }
    let n = rows.len();
    let cohort = Cohort::new(artifact.schema.clone(), rows, vec![0; n], (0..n).collect()).at(Stage::Load)?;
    explain::partition_run(&artifact.model, &cohort, &artifact.background, &artifact.explain).at(Stage::Explain)
}
