use std::sync::Arc;

use axum::body::Body;
use axum::http::{Method, Request, StatusCode};
use http_body_util::BodyExt;
use serde_json::{json, Value};
use tower::ServiceExt;

use rankforge_core::model::{fit_model, FitOptions};
use rankforge_core::persist::ModelArtifact;
use rankforge_core::synth::Scenario;
use rankforge_service::{router, AppState, ServiceConfig};

fn state(config: ServiceConfig) -> Arc<AppState> {
    let data = Scenario::sign_flip().simulate(1);
    let (model, _) = fit_model(&data, &FitOptions::default()).unwrap();
    let artifact = ModelArtifact::from_model(&model, "11".repeat(32), "2026-01-01T00:00:00Z".into());
    Arc::new(AppState::new(artifact, config).unwrap())
}

async fn call(state: &Arc<AppState>, method: Method, uri: &str, body: Option<Value>) -> (StatusCode, Value) {
    let request = Request::builder().method(method).uri(uri).header("content-type", "application/json");
    let request = match body {
        Some(b) => request.body(Body::from(b.to_string())).unwrap(),
        None => request.body(Body::empty()).unwrap(),
    };
    let response = router(state.clone()).oneshot(request).await.unwrap();
    let status = response.status();
    let bytes = response.into_body().collect().await.unwrap().to_bytes();
    let value = if bytes.is_empty() { Value::Null } else { serde_json::from_slice(&bytes).unwrap() };
    (status, value)
}

#[tokio::test]
async fn health_reports_digest() {
    let s = state(ServiceConfig::default());
    let (status, body) = call(&s, Method::GET, "/health", None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(body["status"], "ok");
    assert_eq!(body["model_digest"], s.digest());
}

#[tokio::test]
async fn model_describes_schema() {
    let s = state(ServiceConfig::default());
    let (status, body) = call(&s, Method::GET, "/model", None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(body["treatments"], json!(["Control", "Drug A", "Drug B"]));
    assert_eq!(body["covariates"][0]["name"], "biomarker");
    assert_eq!(body["parameters"].as_array().unwrap().len(), 4);
}

#[tokio::test]
async fn hierarchy_is_deterministic_for_a_seed() {
    let s = state(ServiceConfig::default());
    let req = json!({"profile": {"biomarker": 0}, "n_samples": 5000, "seed": 42});
    let (status, a) = call(&s, Method::POST, "/hierarchy", Some(req.clone())).await;
    assert_eq!(status, StatusCode::OK, "{a}");
    let (_, b) = call(&s, Method::POST, "/hierarchy", Some(req)).await;
    assert_eq!(a, b);
    assert_eq!(a["hierarchy"][0], "Drug A");
    assert_eq!(a["metadata"]["seed"], 42);
    assert_eq!(a["metadata"]["n_samples"], 5000);
    assert_eq!(a["model_digest"], s.digest());
}

#[tokio::test]
async fn omitted_seed_is_generated_and_echoed() {
    let s = state(ServiceConfig::default());
    let (status, body) = call(&s, Method::POST, "/hierarchy", Some(json!({"profile": {"biomarker": true}, "n_samples": 100}))).await;
    assert_eq!(status, StatusCode::OK);
    let seed = body["metadata"]["seed"].as_u64().unwrap();
    assert!(seed < 1 << 53);
    let (_, again) = call(&s, Method::POST, "/hierarchy", Some(json!({"profile": {"biomarker": true}, "n_samples": 100, "seed": seed}))).await;
    assert_eq!(again["treatments"], body["treatments"]);
}

#[tokio::test]
async fn compare_reports_position_deltas() {
    let s = state(ServiceConfig::default());
    let req = json!({"profile_a": {"biomarker": 0}, "profile_b": {"biomarker": 1}, "n_samples": 5000, "seed": 1});
    let (status, body) = call(&s, Method::POST, "/compare", Some(req)).await;
    assert_eq!(status, StatusCode::OK, "{body}");
    assert_eq!(body["report_a"]["hierarchy"][0], "Drug A");
    assert_eq!(body["report_b"]["hierarchy"][0], "Drug B");
    for d in body["rank_deltas"].as_array().unwrap() {
        let (a, b) = (d["position_a"].as_i64().unwrap(), d["position_b"].as_i64().unwrap());
        assert_eq!(d["delta"].as_i64().unwrap(), b - a);
    }
}

#[tokio::test]
async fn profile_errors_name_the_field() {
    let s = state(ServiceConfig::default());
    let cases = [
        (json!({"profile": {"biomarker": 2}}), "profile.biomarker"),
        (json!({"profile": {"biomarker": 0, "age": 3}}), "profile.age"),
        (json!({"profile": {}}), "profile.biomarker"),
        (json!({"n_samples": 10}), "profile"),
        (json!({"profile": {"biomarker": 0}, "comparator": "Nope"}), "comparator"),
        (json!({"profile": {"biomarker": 0}, "seed": -1}), "seed"),
        (json!({"profile": {"biomarker": 0}, "extra": 1}), "extra"),
    ];
    for (req, field) in cases {
        let (status, body) = call(&s, Method::POST, "/hierarchy", Some(req.clone())).await;
        assert_eq!(status, StatusCode::BAD_REQUEST, "{req}");
        assert_eq!(body["error"]["field"], field, "{req} -> {body}");
    }
    let (status, body) = call(&s, Method::POST, "/compare", Some(json!({"profile_a": {"biomarker": 0}, "profile_b": {"biomarker": "x"}}))).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert_eq!(body["error"]["field"], "profile_b.biomarker");
}

#[tokio::test]
async fn sample_count_limits() {
    let s = state(ServiceConfig::default());
    for n in [json!(0), json!(1_000_001)] {
        let (status, body) = call(&s, Method::POST, "/hierarchy", Some(json!({"profile": {"biomarker": 0}, "n_samples": n}))).await;
        assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
        assert_eq!(body["error"]["code"], "n_samples_out_of_range");
        assert_eq!(body["error"]["field"], "n_samples");
    }
}

#[tokio::test]
async fn malformed_json_and_unknown_routes() {
    let s = state(ServiceConfig::default());
    let request = Request::builder().method(Method::POST).uri("/hierarchy").body(Body::from("{not json")).unwrap();
    let response = router(s.clone()).oneshot(request).await.unwrap();
    assert_eq!(response.status(), StatusCode::BAD_REQUEST);
    let (status, body) = call(&s, Method::GET, "/nope", None).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    assert_eq!(body["error"]["code"], "not_found");
}

#[tokio::test]
async fn cors_headers_follow_configuration() {
    let s = state(ServiceConfig { cors_origins: vec!["http://localhost:5173".into()], ..ServiceConfig::default() });
    let request = Request::builder()
        .uri("/health")
        .header("origin", "http://localhost:5173")
        .body(Body::empty())
        .unwrap();
    let response = router(s).oneshot(request).await.unwrap();
    assert_eq!(response.headers()["access-control-allow-origin"], "http://localhost:5173");

    let s = state(ServiceConfig::default());
    let request = Request::builder().uri("/health").header("origin", "http://x").body(Body::empty()).unwrap();
    let response = router(s).oneshot(request).await.unwrap();
    assert!(response.headers().get("access-control-allow-origin").is_none());
}

#[tokio::test]
async fn serve_shuts_down_gracefully() {
    let s = state(ServiceConfig::default());
    let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
    let (tx, rx) = tokio::sync::oneshot::channel::<()>();
    let handle = tokio::spawn(rankforge_service::serve(listener, s, async {
        rx.await.ok();
    }));
    tx.send(()).unwrap();
    handle.await.unwrap().unwrap();
}
