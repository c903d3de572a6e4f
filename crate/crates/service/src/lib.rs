//! HTTP JSON API over a fitted model.
//!
//! | route             | purpose                                          |
//! |-------------------|--------------------------------------------------|
//! | `GET /health`     | liveness and the loaded model's digest           |
//! | `GET /model`      | treatments, covariate schema and fit metadata    |
//! | `POST /hierarchy` | personalized hierarchy for one profile           |
//! | `POST /compare`   | hierarchies for two profiles and position deltas |
//!
//! Errors are `{"error": {"code", "message", "field"?}}` with status 400 for
//! malformed requests, 422 for out-of-range values and 404 for unknown routes.

use std::future::Future;
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::State;
use axum::http::{HeaderValue, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde_json::{json, Map, Value};
use tokio::net::TcpListener;
use tower_http::cors::{Any, CorsLayer};

use rankforge_core::persist::{profile_from_value, report_to_value, ModelArtifact};
use rankforge_core::ranking::DEFAULT_CREDIBLE_LEVEL;
use rankforge_core::{Error, ErrorClass, Execution, FittedModel, HierarchyReport, RankRequest, TreatmentId};

pub const DEFAULT_SAMPLES: usize = 100_000;
pub const MAX_SAMPLES: usize = 1_000_000;

#[derive(Debug, Clone)]
pub struct ServiceConfig {
    /// Allowed CORS origins; `*` allows any. Empty disables CORS headers.
    pub cors_origins: Vec<String>,
    pub default_samples: usize,
    pub max_samples: usize,
    pub execution: Execution,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        ServiceConfig {
            cors_origins: Vec::new(),
            default_samples: DEFAULT_SAMPLES,
            max_samples: MAX_SAMPLES,
            execution: Execution::default(),
        }
    }
}

pub struct AppState {
    model: FittedModel,
    artifact: ModelArtifact,
    digest: String,
    config: ServiceConfig,
}

impl AppState {
    pub fn new(artifact: ModelArtifact, config: ServiceConfig) -> rankforge_core::Result<Self> {
        let model = artifact.to_model()?;
        let digest = artifact.digest()?;
        Ok(AppState { model, artifact, digest, config })
    }

    pub fn digest(&self) -> &str {
        &self.digest
    }
}

pub fn router(state: Arc<AppState>) -> Router {
    let cors = cors_layer(&state.config.cors_origins);
    let router = Router::new()
        .route("/health", get(health))
        .route("/model", get(model_info))
        .route("/hierarchy", post(hierarchy))
        .route("/compare", post(compare))
        .fallback(not_found)
        .with_state(state);
    match cors {
        Some(layer) => router.layer(layer),
        None => router,
    }
}

fn cors_layer(origins: &[String]) -> Option<CorsLayer> {
    if origins.is_empty() {
        return None;
    }
    let layer = CorsLayer::new().allow_methods(Any).allow_headers(Any);
    if origins.iter().any(|o| o == "*") {
        return Some(layer.allow_origin(Any));
    }
    let parsed: Vec<HeaderValue> = origins
        .iter()
        .filter_map(|o| match HeaderValue::from_str(o) {
            Ok(v) => Some(v),
            Err(_) => {
                log::warn!("ignoring invalid CORS origin {o:?}");
                None
            }
        })
        .collect();
    Some(layer.allow_origin(parsed))
}

/// Serves until `shutdown` resolves, then drains in-flight requests.
pub async fn serve<F>(listener: TcpListener, state: Arc<AppState>, shutdown: F) -> std::io::Result<()>
where
    F: Future<Output = ()> + Send + 'static,
{
    if let Ok(addr) = listener.local_addr() {
        log::info!("listening on http://{addr} (model {})", state.digest);
    }
    axum::serve(listener, router(state))
        .with_graceful_shutdown(shutdown)
        .await
}

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    code: &'static str,
    message: String,
    field: Option<String>,
}

impl ApiError {
    fn new(status: StatusCode, code: &'static str, message: impl Into<String>) -> Self {
        ApiError { status, code, message: message.into(), field: None }
    }

    fn bad_request(code: &'static str, message: impl Into<String>) -> Self {
        ApiError::new(StatusCode::BAD_REQUEST, code, message)
    }

    fn field(mut self, field: impl Into<String>) -> Self {
        self.field = Some(field.into());
        self
    }

    /// Maps an engine error raised while handling the part of the request
    /// at `prefix` (e.g. `profile_a`).
    fn from_engine(err: Error, prefix: &str) -> Self {
        let message = err.to_string();
        match err {
            Error::Profile { covariate, .. } => {
                ApiError::bad_request("invalid_profile", message).field(format!("{prefix}.{covariate}"))
            }
            Error::Format(_) => ApiError::bad_request("invalid_profile", message).field(prefix),
            Error::UnknownTreatment(_) => ApiError::bad_request("unknown_treatment", message).field("comparator"),
            e if e.class() == ErrorClass::Numeric => {
                ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "numeric_failure", message)
            }
            _ => ApiError::bad_request("invalid_request", message),
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let mut error = Map::new();
        error.insert("code".into(), json!(self.code));
        error.insert("message".into(), json!(self.message));
        if let Some(field) = self.field {
            error.insert("field".into(), json!(field));
        }
        (self.status, Json(json!({ "error": error }))).into_response()
    }
}

type ApiResult<T> = Result<T, ApiError>;

async fn health(State(state): State<Arc<AppState>>) -> Json<Value> {
    Json(json!({ "status": "ok", "model_digest": state.digest }))
}

async fn model_info(State(state): State<Arc<AppState>>) -> Json<Value> {
    let a = &state.artifact;
    let layout = state.model.layout();
    Json(json!({
        "model_digest": state.digest,
        "format_version": a.format_version,
        "treatments": a.treatments,
        "reference": a.treatments.label(TreatmentId::REFERENCE),
        "covariates": a.covariates,
        "direction": a.direction,
        "parameters": (0..layout.len()).map(|c| json!({
            "name": layout.parameter_name(c),
            "mean": state.model.posterior.mean()[c],
            "sd": state.model.posterior.sd(c),
        })).collect::<Vec<_>>(),
        "studies": a.stage1.iter().map(|s| json!({
            "study": s.study,
            "reference": s.reference,
            "contrasts": s.contrasts,
            "n_records": s.n_records,
        })).collect::<Vec<_>>(),
        "provenance": {
            "created_at": a.provenance.created_at,
            "dataset_digest": a.provenance.dataset_digest,
            "engine_version": a.provenance.engine_version,
        },
        "limits": {
            "default_samples": state.config.default_samples,
            "max_samples": state.config.max_samples,
        },
    }))
}

async fn not_found() -> ApiError {
    ApiError::new(StatusCode::NOT_FOUND, "not_found", "no such route")
}

const OPTION_FIELDS: [&str; 4] = ["n_samples", "seed", "comparator", "credible_level"];

fn parse_body(body: &Bytes) -> ApiResult<Map<String, Value>> {
    match serde_json::from_slice::<Value>(body) {
        Ok(Value::Object(map)) => Ok(map),
        Ok(_) => Err(ApiError::bad_request("invalid_request", "request body must be a JSON object")),
        Err(e) => Err(ApiError::bad_request("invalid_json", format!("request body is not valid JSON: {e}"))),
    }
}

/// Sampling options shared by both POST routes.
fn parse_options(state: &AppState, body: &Map<String, Value>, profile_fields: &[&str]) -> ApiResult<RankRequest> {
    if let Some(key) = body
        .keys()
        .find(|k| !OPTION_FIELDS.contains(&k.as_str()) && !profile_fields.contains(&k.as_str()))
    {
        return Err(ApiError::bad_request("invalid_request", format!("unknown field `{key}`")).field(key.clone()));
    }
    let config = &state.config;
    let type_error = |field: &str, expected: &str| {
        ApiError::bad_request("invalid_request", format!("`{field}` must be {expected}")).field(field)
    };

    let n_samples = match body.get("n_samples") {
        None | Some(Value::Null) => config.default_samples,
        Some(v) => {
            let n = v.as_f64().filter(|x| x.fract() == 0.0).ok_or_else(|| type_error("n_samples", "an integer"))?;
            if n < 1.0 || n > config.max_samples as f64 {
                return Err(ApiError::new(
                    StatusCode::UNPROCESSABLE_ENTITY,
                    "n_samples_out_of_range",
                    format!("n_samples must be between 1 and {}, got {n}", config.max_samples),
                )
                .field("n_samples"));
            }
            n as usize
        }
    };
    let seed = match body.get("seed") {
        None | Some(Value::Null) => fresh_seed(),
        Some(v) => v.as_u64().ok_or_else(|| type_error("seed", "a non-negative integer"))?,
    };
    let comparator = match body.get("comparator") {
        None | Some(Value::Null) => TreatmentId::REFERENCE,
        Some(Value::String(label)) => state.model.treatment(label).map_err(|e| ApiError::from_engine(e, ""))?,
        Some(_) => return Err(type_error("comparator", "a treatment label")),
    };
    let credible_level = match body.get("credible_level") {
        None | Some(Value::Null) => DEFAULT_CREDIBLE_LEVEL,
        Some(v) => {
            let level = v.as_f64().ok_or_else(|| type_error("credible_level", "a number"))?;
            if !(level > 0.0 && level < 1.0) {
                return Err(ApiError::new(
                    StatusCode::UNPROCESSABLE_ENTITY,
                    "credible_level_out_of_range",
                    format!("credible_level must lie strictly between 0 and 1, got {level}"),
                )
                .field("credible_level"));
            }
            level
        }
    };
    Ok(RankRequest { n_samples, seed, comparator, credible_level, execution: config.execution })
}

/// Seeds stay below 2^53 so that JavaScript clients can echo them exactly.
fn fresh_seed() -> u64 {
    rand::random::<u64>() >> 11
}

fn parse_profile(state: &AppState, body: &Map<String, Value>, field: &str) -> ApiResult<rankforge_core::CovariateProfile> {
    let value = body
        .get(field)
        .ok_or_else(|| ApiError::bad_request("invalid_request", format!("missing field `{field}`")).field(field))?;
    profile_from_value(value, &state.model.network.schema).map_err(|e| ApiError::from_engine(e, field))
}

fn with_digest(mut report: Value, digest: &str) -> Value {
    report["model_digest"] = json!(digest);
    report
}

async fn run_blocking<T, F>(f: F) -> ApiResult<T>
where
    F: FnOnce() -> ApiResult<T> + Send + 'static,
    T: Send + 'static,
{
    tokio::task::spawn_blocking(f).await.map_err(|e| {
        log::error!("ranking task failed: {e}");
        ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", "ranking task failed")
    })?
}

async fn hierarchy(State(state): State<Arc<AppState>>, body: Bytes) -> ApiResult<Json<Value>> {
    let body = parse_body(&body)?;
    let options = parse_options(&state, &body, &["profile"])?;
    let profile = parse_profile(&state, &body, "profile")?;
    log::info!("hierarchy n_samples={} seed={}", options.n_samples, options.seed);
    let st = state.clone();
    let report = run_blocking(move || {
        st.model.hierarchy(&profile, &options).map_err(|e| ApiError::from_engine(e, "profile"))
    })
    .await?;
    Ok(Json(with_digest(report_to_value(&report), &state.digest)))
}

async fn compare(State(state): State<Arc<AppState>>, body: Bytes) -> ApiResult<Json<Value>> {
    let body = parse_body(&body)?;
    let options = parse_options(&state, &body, &["profile_a", "profile_b"])?;
    let a = parse_profile(&state, &body, "profile_a")?;
    let b = parse_profile(&state, &body, "profile_b")?;
    log::info!("compare n_samples={} seed={}", options.n_samples, options.seed);
    let st = state.clone();
    let (ra, rb) = run_blocking(move || {
        let ra = st.model.hierarchy(&a, &options).map_err(|e| ApiError::from_engine(e, "profile_a"))?;
        let rb = st.model.hierarchy(&b, &options).map_err(|e| ApiError::from_engine(e, "profile_b"))?;
        Ok((ra, rb))
    })
    .await?;
    Ok(Json(json!({
        "report_a": report_to_value(&ra),
        "report_b": report_to_value(&rb),
        "rank_deltas": rank_deltas(&ra, &rb),
        "model_digest": state.digest,
    })))
}

/// Per treatment, in network order. `delta` is position under B minus
/// position under A, so a negative delta means B ranks it higher.
pub fn rank_deltas(a: &HierarchyReport, b: &HierarchyReport) -> Value {
    Value::Array(
        a.treatments
            .iter()
            .zip(&b.treatments)
            .map(|(ta, tb)| {
                json!({
                    "label": ta.label,
                    "position_a": ta.position,
                    "position_b": tb.position,
                    "delta": tb.position as i64 - ta.position as i64,
                    "sucra_a": ta.sucra,
                    "sucra_b": tb.sucra,
                })
            })
            .collect(),
    )
}
