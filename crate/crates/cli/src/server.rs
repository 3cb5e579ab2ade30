//! Read-only HTTP JSON service over a loaded artifact.
//!
//! `POST /v1/predict`, `GET /v1/model`, `GET /v1/health`,
//! `GET /v1/scenarios`; any other path is served from the static asset
//! directory when one is configured.

use std::path::PathBuf;
use std::sync::Arc;

use axum::extract::rejection::JsonRejection;
use axum::extract::State;
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use mddbayes::eval::default_scenarios;
use mddbayes::inference::{predict, Target};
use mddbayes::params::ModelParams;
use mddbayes::types::ModelShape;
use serde_json::{json, Value};
use tokio::sync::Semaphore;
use tower_http::services::ServeDir;

use crate::artifact::ModelArtifact;
use crate::wire::{parse_evidence, parse_targets, PredictionOut};
use crate::DataError;

/// An artifact with its draws decoded once.
#[derive(Debug)]
pub struct LoadedModel {
    pub artifact: ModelArtifact,
    pub draws: Vec<ModelParams>,
    pub shape: ModelShape,
}

impl LoadedModel {
    pub fn new(artifact: ModelArtifact) -> Result<Self, DataError> {
        let draws = artifact.params()?;
        let shape = artifact.shape()?;
        Ok(LoadedModel { artifact, draws, shape })
    }

    /// Evaluates a `{evidence, targets?}` request body.
    pub fn predict_request(&self, body: &Value) -> Result<PredictionOut, ApiError> {
        let obj = body
            .as_object()
            .ok_or_else(|| ApiError::bad_request("request body must be an object"))?;
        if let Some(k) = obj.keys().find(|k| *k != "evidence" && *k != "targets") {
            return Err(ApiError::bad_request(format!("{k}: unknown request key")));
        }
        let pipeline = &self.artifact.content.pipeline;
        let ev = parse_evidence(obj.get("evidence").unwrap_or(&Value::Null), pipeline).map_err(ApiError::from_data)?;
        let targets = parse_targets(obj.get("targets"), &self.shape, &ev).map_err(ApiError::from_data)?;
        let r = predict(&self.draws, &ev, &targets).map_err(ApiError::from_model)?;
        Ok(PredictionOut::new(&self.artifact.sha256, &ev, &r))
    }

    /// Artifact metadata; never training records.
    pub fn metadata(&self) -> Value {
        let c = &self.artifact.content;
        json!({
            "schema_version": self.artifact.schema_version,
            "sha256": self.artifact.sha256,
            "n_draws": self.artifact.n_draws(),
            "chains": c.draws.len(),
            "n_symptoms": self.shape.n_symptoms,
            "n_measures": self.shape.n_measures,
            "encodings": c.encodings,
            "dag": c.dag,
            "feature_sets": c.pipeline.layout.sets,
            "symptom_thresholds": c.pipeline.binarizer.thresholds,
            "fit_config": c.fit_config,
            "training": c.training,
            "diagnostics": {
                "max_rhat": c.diagnostics.max_rhat,
                "min_ess_bulk": c.diagnostics.min_ess_bulk,
                "divergences": c.diagnostics.divergences,
            },
            "parameter_names": c.parameter_names,
        })
    }

    /// The default scenario grid as evidence templates.
    pub fn scenarios(&self) -> Value {
        let layout = &self.artifact.content.pipeline.layout;
        let list: Vec<Value> = default_scenarios(layout, self.shape.n_symptoms)
            .iter()
            .map(|s| {
                let measures: Vec<String> = s
                    .activities
                    .iter()
                    .flat_map(|a| layout.measures_of_activity(a))
                    .map(|m| format!("m{m}"))
                    .collect();
                json!({
                    "name": s.name,
                    "confounds": s.confounds,
                    "activities": s.activities,
                    "measures": measures,
                    "symptoms": s.symptoms.iter().map(|&k| Target::Symptom(k).name()).collect::<Vec<_>>(),
                    "targets": s.targets(&self.shape),
                })
            })
            .collect();
        json!({ "scenarios": list })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ApiError {
    pub status: StatusCode,
    pub message: String,
}

impl ApiError {
    pub fn bad_request(m: impl Into<String>) -> Self {
        ApiError {
            status: StatusCode::BAD_REQUEST,
            message: m.into(),
        }
    }

    fn from_model(e: mddbayes::Error) -> Self {
        let status = match e {
            mddbayes::Error::EvidenceTargetOverlap(_) | mddbayes::Error::EmptyQuery => StatusCode::UNPROCESSABLE_ENTITY,
            mddbayes::Error::Numerical(_) | mddbayes::Error::Sampler(_) => StatusCode::INTERNAL_SERVER_ERROR,
            _ => StatusCode::BAD_REQUEST,
        };
        ApiError {
            status,
            message: e.to_string(),
        }
    }

    fn from_data(e: DataError) -> Self {
        match e {
            DataError::Model(m) => Self::from_model(m),
            other => Self::bad_request(other.to_string()),
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(json!({ "error": self.message }))).into_response()
    }
}

#[derive(Clone)]
pub struct AppState {
    pub model: Option<Arc<LoadedModel>>,
    /// Bounds concurrent enumeration jobs.
    pub workers: Arc<Semaphore>,
}

impl AppState {
    pub fn new(model: Option<LoadedModel>, workers: usize) -> Self {
        AppState {
            model: model.map(Arc::new),
            workers: Arc::new(Semaphore::new(workers.max(1))),
        }
    }

    fn model(&self) -> Result<Arc<LoadedModel>, ApiError> {
        self.model.clone().ok_or(ApiError {
            status: StatusCode::SERVICE_UNAVAILABLE,
            message: "no model artifact loaded".into(),
        })
    }
}

async fn health() -> Json<Value> {
    Json(json!({ "status": "ok" }))
}

async fn model_info(State(st): State<AppState>) -> Result<Json<Value>, ApiError> {
    Ok(Json(st.model()?.metadata()))
}

async fn scenarios(State(st): State<AppState>) -> Result<Json<Value>, ApiError> {
    Ok(Json(st.model()?.scenarios()))
}

async fn predict_handler(
    State(st): State<AppState>,
    body: Result<Json<Value>, JsonRejection>,
) -> Result<Json<PredictionOut>, ApiError> {
    let model = st.model()?;
    let Json(body) = body.map_err(|e| ApiError::bad_request(e.body_text()))?;
    let _permit = st.workers.clone().acquire_owned().await.map_err(|_| ApiError {
        status: StatusCode::SERVICE_UNAVAILABLE,
        message: "worker pool closed".into(),
    })?;
    let out = tokio::task::spawn_blocking(move || model.predict_request(&body))
        .await
        .map_err(|e| ApiError {
            status: StatusCode::INTERNAL_SERVER_ERROR,
            message: e.to_string(),
        })??;
    Ok(Json(out))
}

/// Routes of the service; static assets under `assets` when given.
pub fn router(state: AppState, assets: Option<PathBuf>) -> Router {
    let api = Router::new()
        .route("/v1/health", get(health))
        .route("/v1/model", get(model_info))
        .route("/v1/scenarios", get(scenarios))
        .route("/v1/predict", post(predict_handler))
        .with_state(state);
    match assets {
        Some(dir) => api.fallback_service(ServeDir::new(dir)),
        None => api,
    }
}

impl std::fmt::Display for ApiError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{} ({})", self.message, self.status)
    }
}

impl std::error::Error for ApiError {}
