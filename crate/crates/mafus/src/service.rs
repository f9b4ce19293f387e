//! HTTP front end over one frozen model artifact.
//!
//! Bodies are JSON. A patient record is an object mapping each selected
//! feature to a raw-unit number; categorical features also accept their
//! level name as a string. Every response carries the artifact hash in the
//! body and in the `x-artifact-hash` header.

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::State;
use axum::http::{HeaderValue, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use mafus_core::artifact::ModelArtifact;
use mafus_core::data::{Column, ScalerStats};
use mafus_core::explain::{self, Attribution, BeeswarmRow, ExplainOptions, ForcePlot};
use mafus_core::learners::{Algorithm, ModelConfig};
use mafus_core::Error as CoreError;
use serde::{Deserialize, Serialize};
use serde_json::Value;

pub const HASH_HEADER: &str = "x-artifact-hash";

pub const LABEL_NO: &str = "Mortality (No)";
pub const LABEL_YES: &str = "Mortality (Yes)";

#[derive(Debug)]
pub struct LoadedModel {
    pub artifact: ModelArtifact,
    pub hash: String,
}

#[derive(Debug, Clone, Default)]
pub struct AppState {
    model: Option<Arc<LoadedModel>>,
}

impl AppState {
    /// A service with no artifact; every model endpoint answers 503.
    pub fn empty() -> Self {
        AppState { model: None }
    }

    pub fn new(artifact: ModelArtifact, hash: String) -> Self {
        AppState {
            model: Some(Arc::new(LoadedModel { artifact, hash })),
        }
    }

    pub fn load(path: impl AsRef<Path>) -> mafus_core::Result<Self> {
        let (artifact, hash) = ModelArtifact::load(path)?;
        Ok(Self::new(artifact, hash))
    }

    pub fn hash(&self) -> Option<&str> {
        self.model.as_deref().map(|m| m.hash.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelInfo {
    pub algorithm: Algorithm,
    pub training_seed: u64,
    pub master_seed: u64,
    pub artifact_hash: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionResponse {
    pub yhat: u8,
    pub score: f64,
    pub label: String,
    pub model: ModelInfo,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExplanationResponse {
    #[serde(flatten)]
    pub prediction: PredictionResponse,
    pub feature_names: Vec<String>,
    pub attribution: Attribution,
    pub force: ForcePlot,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelMeta {
    pub algorithm: Algorithm,
    pub config: ModelConfig,
    pub training_seed: u64,
    pub master_seed: u64,
    pub selected_features: Vec<String>,
    /// Selected feature columns with their kinds and level names.
    pub columns: Vec<Column>,
    pub scaler: ScalerStats,
    pub threshold: f64,
    pub explain: ExplainOptions,
    pub background_size: usize,
    pub has_summary: bool,
    pub artifact_hash: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryResponse {
    /// Feature names by descending mean |shap|.
    pub feature_order: Vec<String>,
    pub samples: usize,
    pub rows: Vec<BeeswarmRow>,
    pub artifact_hash: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub error: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub artifact_hash: Option<String>,
}

#[derive(Debug)]
pub struct ApiError {
    pub status: StatusCode,
    pub message: String,
}

impl ApiError {
    fn new(status: StatusCode, message: impl Into<String>) -> Self {
        ApiError {
            status,
            message: message.into(),
        }
    }

    fn bad_request(message: impl Into<String>) -> Self {
        Self::new(StatusCode::BAD_REQUEST, message)
    }

    fn non_finite(feature: &str) -> Self {
        Self::new(StatusCode::UNPROCESSABLE_ENTITY, format!("`{feature}` is not a finite number"))
    }
}

impl From<CoreError> for ApiError {
    fn from(e: CoreError) -> Self {
        let status = match e {
            CoreError::Schema(_) => StatusCode::BAD_REQUEST,
            CoreError::Contract(_) => StatusCode::UNPROCESSABLE_ENTITY,
            _ => StatusCode::INTERNAL_SERVER_ERROR,
        };
        ApiError::new(status, e.to_string())
    }
}

fn with_hash(mut resp: Response, hash: Option<&str>) -> Response {
    if let Some(v) = hash.and_then(|h| HeaderValue::from_str(h).ok()) {
        resp.headers_mut().insert(HASH_HEADER, v);
    }
    resp
}

fn reply<T: Serialize>(state: &AppState, result: Result<T, ApiError>) -> Response {
    let hash = state.hash();
    let resp = match result {
        Ok(body) => Json(body).into_response(),
        Err(e) => (
            e.status,
            Json(ErrorBody {
                error: e.message,
                artifact_hash: hash.map(str::to_string),
            }),
        )
            .into_response(),
    };
    with_hash(resp, hash)
}

fn loaded(state: &AppState) -> Result<Arc<LoadedModel>, ApiError> {
    state
        .model
        .clone()
        .ok_or_else(|| ApiError::new(StatusCode::SERVICE_UNAVAILABLE, "no model artifact is loaded"))
}

fn parse_json(body: &[u8]) -> Result<Value, ApiError> {
    serde_json::from_slice(body).map_err(|e| ApiError::bad_request(format!("malformed JSON: {e}")))
}

const NON_FINITE_WORDS: [&str; 6] = ["nan", "inf", "+inf", "-inf", "infinity", "-infinity"];

/// Raw-unit record from a JSON object; level names become category codes.
pub fn patient_values(artifact: &ModelArtifact, value: &Value) -> Result<BTreeMap<String, f64>, ApiError> {
    let obj = value
        .as_object()
        .ok_or_else(|| ApiError::bad_request("patient input must be a JSON object"))?;
    let mut out = BTreeMap::new();
    for (k, v) in obj {
        out.insert(k.clone(), feature_value(artifact, k, v)?);
    }
    Ok(out)
}

fn feature_value(artifact: &ModelArtifact, feature: &str, v: &Value) -> Result<f64, ApiError> {
    match v {
        Value::Number(n) => {
            let x = n
                .as_f64()
                .ok_or_else(|| ApiError::bad_request(format!("`{feature}` is not representable")))?;
            if x.is_finite() {
                Ok(x)
            } else {
                Err(ApiError::non_finite(feature))
            }
        }
        Value::String(s) => {
            if let Some(code) = artifact.level_code(feature, s) {
                Ok(code)
            } else if NON_FINITE_WORDS.contains(&s.trim().to_ascii_lowercase().as_str()) {
                Err(ApiError::non_finite(feature))
            } else {
                Err(ApiError::bad_request(format!("`{feature}` = {s:?} is not a number or declared level")))
            }
        }
        _ => Err(ApiError::bad_request(format!("`{feature}` must be a number"))),
    }
}

fn info(m: &LoadedModel) -> ModelInfo {
    ModelInfo {
        algorithm: m.artifact.algorithm,
        training_seed: m.artifact.config.seed,
        master_seed: m.artifact.master_seed,
        artifact_hash: m.hash.clone(),
    }
}

pub fn predict_input(m: &LoadedModel, raw: &BTreeMap<String, f64>) -> Result<PredictionResponse, ApiError> {
    let x = m.artifact.model_input(raw)?;
    prediction(m, &x)
}

fn prediction(m: &LoadedModel, x: &[f64]) -> Result<PredictionResponse, ApiError> {
    let model = &m.artifact.model;
    let score = model.score(x)?;
    let yhat = model.predict(x)?;
    Ok(PredictionResponse {
        yhat,
        score,
        label: if yhat == 1 { LABEL_YES } else { LABEL_NO }.to_string(),
        model: info(m),
    })
}

pub fn explain_input(m: &LoadedModel, raw: &BTreeMap<String, f64>) -> Result<ExplanationResponse, ApiError> {
    let a = &m.artifact;
    let x = a.model_input(raw)?;
    let prediction = prediction(m, &x)?;
    let attribution = explain::explain(&a.model, &x, &a.background, &a.explain)?;
    let force = explain::force_data(&x, &attribution, &a.selected_features)?;
    Ok(ExplanationResponse {
        prediction,
        feature_names: a.selected_features.clone(),
        attribution,
        force,
    })
}

fn whatif(m: &LoadedModel, body: &Value) -> Result<Vec<ExplanationResponse>, ApiError> {
    let obj = body
        .as_object()
        .ok_or_else(|| ApiError::bad_request("what-if body must be an object with `base` and `deltas`"))?;
    if let Some(k) = obj.keys().find(|k| *k != "base" && *k != "deltas") {
        return Err(ApiError::bad_request(format!("unexpected field `{k}`")));
    }
    let base = patient_values(
        &m.artifact,
        obj.get("base").ok_or_else(|| ApiError::bad_request("missing `base`"))?,
    )?;
    let deltas = obj
        .get("deltas")
        .and_then(Value::as_array)
        .ok_or_else(|| ApiError::bad_request("`deltas` must be a list"))?;
    let mut subs = Vec::with_capacity(deltas.len());
    for d in deltas {
        let feature = d
            .get("feature")
            .and_then(Value::as_str)
            .ok_or_else(|| ApiError::bad_request("each delta needs a string `feature`"))?;
        if !m.artifact.selected_features.iter().any(|f| f == feature) {
            return Err(ApiError::bad_request(format!("`{feature}` is not a model feature")));
        }
        let value = d
            .get("value")
            .ok_or_else(|| ApiError::bad_request(format!("delta on `{feature}` has no `value`")))?;
        subs.push((feature.to_string(), feature_value(&m.artifact, feature, value)?));
    }
    // the base must be valid on its own even when no delta touches a bad field
    m.artifact.model_input(&base)?;
    subs.into_iter()
        .map(|(f, v)| {
            let mut rec = base.clone();
            rec.insert(f, v);
            explain_input(m, &rec)
        })
        .collect()
}

async fn healthz() -> impl IntoResponse {
    Json(serde_json::json!({ "status": "ok" }))
}

async fn meta(State(state): State<AppState>) -> Response {
    let r = loaded(&state).map(|m| {
        let a = &m.artifact;
        ModelMeta {
            algorithm: a.algorithm,
            config: a.config.clone(),
            training_seed: a.config.seed,
            master_seed: a.master_seed,
            selected_features: a.selected_features.clone(),
            columns: a.schema.features().cloned().collect(),
            scaler: a.scaler.clone(),
            threshold: a.model.threshold(),
            explain: a.explain,
            background_size: a.background.len(),
            has_summary: a.partition.is_some(),
            artifact_hash: m.hash.clone(),
        }
    });
    reply(&state, r)
}

async fn summary(State(state): State<AppState>) -> Response {
    let r = loaded(&state).and_then(|m| {
        let a = &m.artifact;
        let part = a
            .partition
            .as_ref()
            .ok_or_else(|| ApiError::new(StatusCode::NOT_FOUND, "the artifact stores no explained partition"))?;
        let rows = explain::summary_data(part, Some(&a.scaler))?;
        Ok(SummaryResponse {
            feature_order: explain::feature_order(part)
                .into_iter()
                .map(|j| part.feature_names[j].clone())
                .collect(),
            samples: part.len(),
            rows,
            artifact_hash: m.hash.clone(),
        })
    });
    reply(&state, r)
}

async fn run_blocking<T, F>(state: &AppState, f: F) -> Response
where
    T: Serialize + Send + 'static,
    F: FnOnce(&LoadedModel) -> Result<T, ApiError> + Send + 'static,
{
    let m = match loaded(state) {
        Ok(m) => m,
        Err(e) => return reply::<()>(state, Err(e)),
    };
    let r = tokio::task::spawn_blocking(move || f(&m))
        .await
        .unwrap_or_else(|e| Err(ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, e.to_string())));
    reply(state, r)
}

async fn predict(State(state): State<AppState>, body: Bytes) -> Response {
    run_blocking(&state, move |m| {
        let raw = patient_values(&m.artifact, &parse_json(&body)?)?;
        predict_input(m, &raw)
    })
    .await
}

async fn explain_handler(State(state): State<AppState>, body: Bytes) -> Response {
    run_blocking(&state, move |m| {
        let raw = patient_values(&m.artifact, &parse_json(&body)?)?;
        explain_input(m, &raw)
    })
    .await
}

async fn whatif_handler(State(state): State<AppState>, body: Bytes) -> Response {
    run_blocking(&state, move |m| whatif(m, &parse_json(&body)?)).await
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/healthz", get(healthz))
        .route("/model/meta", get(meta))
        .route("/summary", get(summary))
        .route("/predict", post(predict))
        .route("/explain", post(explain_handler))
        .route("/whatif", post(whatif_handler))
        .with_state(state)
}

/// Serves until ctrl-c.
pub async fn serve(state: AppState, addr: std::net::SocketAddr) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    axum::serve(listener, router(state))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}
