use std::sync::OnceLock;

use axum::body::Body;
use axum::http::{Request, StatusCode};
use axum::Router;
use serde_json::{json, Value};
use tower::ServiceExt;

use cdss_core::features::{generate_synthetic_cohort, generate_synthetic_study, write_study_dir, CohortConfig};
use cdss_core::models::{train_cohort, CohortParams, Registry, SplitPolicy};
use cdss_service::api::{router, AppState};
use cdss_service::config::Config;
use cdss_service::gateway::Gateway;
use cdss_service::jobs::RegistryHandle;
use cdss_service::{build_state, build_state_with};

fn registry() -> Registry {
    static REG: OnceLock<Registry> = OnceLock::new();
    REG.get_or_init(|| {
        let cfg = CohortConfig { n_participants: 2, ..CohortConfig::default() };
        train_cohort(&generate_synthetic_cohort(&cfg).unwrap(), &SplitPolicy::default(), &CohortParams::default(), 7)
    })
    .clone()
}

struct Fixture {
    app: Router,
    state: AppState,
    dir: tempfile::TempDir,
}

fn fixture_with(edit: impl FnOnce(&mut Config)) -> Fixture {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = Config::default();
    cfg.chat.log_path = dir.path().join("chat.jsonl");
    edit(&mut cfg);
    let state = build_state_with(&cfg, RegistryHandle::new(registry()), Gateway::mock()).unwrap();
    Fixture { app: router(state.clone()), state, dir }
}

fn fixture() -> Fixture {
    fixture_with(|_| {})
}

async fn call(app: &Router, method: &str, uri: &str, body: Option<Value>) -> (StatusCode, Value) {
    let req = Request::builder().method(method).uri(uri);
    let req = match body {
        Some(b) => req.header("content-type", "application/json").body(Body::from(b.to_string())).unwrap(),
        None => req.body(Body::empty()).unwrap(),
    };
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    let bytes = axum::body::to_bytes(resp.into_body(), usize::MAX).await.unwrap();
    let value = if bytes.is_empty() { Value::Null } else { serde_json::from_slice(&bytes).unwrap() };
    (status, value)
}

fn assert_error(resp: &(StatusCode, Value), status: StatusCode, code: &str) {
    assert_eq!(resp.0, status, "{}", resp.1);
    assert_eq!(resp.1["code"], code, "{}", resp.1);
    assert_eq!(resp.1["status"], status.as_u16());
    assert!(resp.1["message"].as_str().is_some_and(|m| !m.is_empty()));
}

async fn new_session(app: &Router) -> String {
    let (status, body) = call(app, "POST", "/sessions", Some(json!({"email": "a@b.org", "participant_id": "P001"}))).await;
    assert_eq!(status, StatusCode::CREATED, "{body}");
    body["session_id"].as_str().unwrap().to_string()
}

#[tokio::test]
async fn healthz_is_ok() {
    let f = fixture();
    assert_eq!(call(&f.app, "GET", "/healthz", None).await, (StatusCode::OK, json!({"status": "ok"})));
}

#[tokio::test]
async fn predefined_queries_follow_config() {
    let f = fixture();
    let (_, body) = call(&f.app, "GET", "/queries", None).await;
    assert_eq!(body["queries"].as_array().unwrap().len(), 4);
    assert_eq!(body["queries"][0], "Explain the latest prediction");

    let f = fixture_with(|c| c.chat.predefined_queries = vec!["first".into(), "second".into()]);
    assert_eq!(call(&f.app, "GET", "/queries", None).await.1, json!({"queries": ["first", "second"]}));

    let f = fixture_with(|c| c.chat.predefined_queries = vec![]);
    assert_eq!(call(&f.app, "GET", "/queries", None).await.1, json!({"queries": []}));
}

#[tokio::test]
async fn sessions_are_fresh_and_distinct() {
    let f = fixture();
    let a = new_session(&f.app).await;
    let b = new_session(&f.app).await;
    assert_ne!(a, b);
    let (status, body) = call(&f.app, "GET", &format!("/sessions/{a}/history"), None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(body["messages"], json!([]));
}

#[tokio::test]
async fn participants_are_listed() {
    let f = fixture();
    let (status, body) = call(&f.app, "GET", "/participants", None).await;
    assert_eq!(status, StatusCode::OK);
    let ids: Vec<&str> = body.as_array().unwrap().iter().map(|p| p["participant_id"].as_str().unwrap()).collect();
    assert_eq!(ids, ["P001", "P002"]);
}

#[tokio::test]
async fn error_codes_round_trip() {
    let f = fixture();
    let sid = new_session(&f.app).await;

    let r = call(&f.app, "POST", "/sessions", Some(json!({"email": "a@b.org", "participant_id": "P999"}))).await;
    assert_error(&r, StatusCode::NOT_FOUND, "unknown_participant");
    let r = call(&f.app, "GET", "/sessions/nope/history", None).await;
    assert_error(&r, StatusCode::NOT_FOUND, "session_not_found");
    let r = call(&f.app, "POST", "/sessions/nope/messages", Some(json!({"text": "hi"}))).await;
    assert_error(&r, StatusCode::NOT_FOUND, "session_not_found");
    let r = call(&f.app, "POST", "/sessions/nope/emotions", Some(json!({"distribution": {"neutral": 1.0}}))).await;
    assert_error(&r, StatusCode::NOT_FOUND, "session_not_found");
    let r = call(&f.app, "GET", "/jobs/nope", None).await;
    assert_error(&r, StatusCode::NOT_FOUND, "job_not_found");
    let r = call(&f.app, "GET", "/no/such/route", None).await;
    assert_error(&r, StatusCode::NOT_FOUND, "not_found");

    let frame = json!({"timestamp": 1.0, "distribution": {"anger": 0.5, "neutral": 0.3}});
    let r = call(&f.app, "POST", &format!("/sessions/{sid}/emotions"), Some(frame)).await;
    assert_error(&r, StatusCode::UNPROCESSABLE_ENTITY, "invalid_distribution");

    let r = call(&f.app, "POST", "/sessions", Some(json!({"email": "a@b.org"}))).await;
    assert_error(&r, StatusCode::BAD_REQUEST, "invalid_request");
    let r = call(&f.app, "POST", &format!("/sessions/{sid}/messages"), Some(json!({"text": "  "}))).await;
    assert_error(&r, StatusCode::BAD_REQUEST, "invalid_request");
    let r = call(&f.app, "GET", "/participants/P001/explanations/lime", None).await;
    assert_error(&r, StatusCode::BAD_REQUEST, "invalid_request");
    let r = call(&f.app, "GET", "/participants/P001/explanations/shap?instance=abc", None).await;
    assert_error(&r, StatusCode::BAD_REQUEST, "invalid_request");
    let r = call(&f.app, "GET", "/participants/P999/explanations/shap", None).await;
    assert_error(&r, StatusCode::NOT_FOUND, "unknown_participant");
    let r = call(&f.app, "GET", "/participants/P001/explanations/shap?instance=100000", None).await;
    assert_error(&r, StatusCode::UNPROCESSABLE_ENTITY, "instance_out_of_range");
    let r = call(&f.app, "POST", &format!("/sessions/{sid}/messages"), Some(json!({"text": "hi", "artifacts": ["shap"], "instance": 100000}))).await;
    assert_error(&r, StatusCode::UNPROCESSABLE_ENTITY, "instance_out_of_range");

    let r = call(&f.app, "POST", "/eval/compare", Some(json!({"csv": "participant,question_id,condition,score\np1,q1,optimized,11\n"}))).await;
    assert_error(&r, StatusCode::UNPROCESSABLE_ENTITY, "invalid_survey");
    let rows = json!({"rows": [{"participant": "p1", "question_id": "q1", "condition": "other", "score": 5.0}]});
    let r = call(&f.app, "POST", "/eval/compare", Some(rows)).await;
    assert_error(&r, StatusCode::UNPROCESSABLE_ENTITY, "invalid_survey");
}

#[tokio::test]
async fn explanation_unavailable_maps_to_422() {
    let mut reg = registry();
    let entry = reg.participants.get_mut("P001").unwrap();
    entry.data.rows.truncate(5);
    entry.data.labels.truncate(5);
    entry.n_train = 5;
    let dir = tempfile::tempdir().unwrap();
    let cfg = Config { chat: cdss_service::config::ChatConfig { log_path: dir.path().join("c.jsonl"), ..Default::default() }, ..Config::default() };
    let app = router(build_state_with(&cfg, RegistryHandle::new(reg), Gateway::mock()).unwrap());
    let r = call(&app, "GET", "/participants/P001/explanations/causal", None).await;
    assert_error(&r, StatusCode::UNPROCESSABLE_ENTITY, "explanation_unavailable");
}

#[tokio::test]
async fn every_explanation_kind_renders() {
    let f = fixture();
    for kind in ["shap", "rules", "cf", "counterfactual", "causal"] {
        let (status, body) = call(&f.app, "GET", &format!("/participants/P001/explanations/{kind}?instance=3"), None).await;
        assert_eq!(status, StatusCode::OK, "{kind}: {body}");
        assert_eq!(body["instance"], 3);
        assert!(body["img64"].as_str().unwrap().len() > 100);
        assert!(body["chart"]["kind"].is_string());
    }
}

#[tokio::test]
async fn frames_are_acknowledged() {
    let f = fixture();
    let sid = new_session(&f.app).await;
    let frame = json!({"timestamp": 10.0, "distribution": {"anger": 0.9, "neutral": 0.1}});
    let (status, body) = call(&f.app, "POST", &format!("/sessions/{sid}/emotions"), Some(frame)).await;
    assert_eq!(status, StatusCode::ACCEPTED);
    assert_eq!(body["emotion"], "anger");
    assert_eq!(body["buffered"], 1);
}

#[tokio::test]
async fn training_jobs_report_and_swap() {
    let f = fixture();
    let cohort = f.dir.path().join("cohort");
    write_study_dir(&generate_synthetic_study(&CohortConfig { n_participants: 3, ..CohortConfig::default() }), &cohort).unwrap();

    let (status, body) = call(&f.app, "POST", "/train", Some(json!({"cohort_path": "/nonexistent"}))).await;
    assert_eq!(status, StatusCode::ACCEPTED);
    let failed = body["job_id"].as_str().unwrap().to_string();
    let (_, body) = call(&f.app, "POST", "/train", Some(json!({"cohort_path": cohort}))).await;
    let ok = body["job_id"].as_str().unwrap().to_string();

    let job = f.state.jobs.wait(&failed).await.unwrap();
    assert_eq!(job.status, cdss_service::jobs::JobStatus::Failed);
    f.state.jobs.wait(&ok).await.unwrap();
    let (status, body) = call(&f.app, "GET", &format!("/jobs/{ok}"), None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(body["status"], "done", "{body}");
    assert!(body["summary"]["mean_accuracy"].as_f64().unwrap() >= 0.85, "{body}");
    let (_, body) = call(&f.app, "GET", &format!("/jobs/{failed}"), None).await;
    assert_eq!(body["status"], "failed");
    assert!(body["error"].as_str().unwrap().contains("/nonexistent"));

    let (_, body) = call(&f.app, "GET", "/participants", None).await;
    assert_eq!(body.as_array().unwrap().len(), 3);
}

#[tokio::test]
async fn compare_endpoint_reports_tests() {
    let f = fixture();
    let mut csv = String::from("participant;question_id;condition;score\n");
    for (i, (a, b)) in [(2, 1), (4, 2), (6, 3), (8, 4)].iter().enumerate() {
        csv.push_str(&format!("p{i};q1;optimized;{a}\np{i};q1;basic;{b}\n"));
    }
    let (status, body) = call(&f.app, "POST", "/eval/compare", Some(json!({ "csv": csv }))).await;
    assert_eq!(status, StatusCode::OK, "{body}");
    let t = body["results"][0]["ttest"]["t"].as_f64().unwrap();
    assert!((t - 3.872983346207417).abs() < 1e-9);
    assert_eq!(body["results"][0]["ttest"]["stars"], "*");
}

#[tokio::test]
async fn startup_fails_on_unreadable_registry() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = Config::default();
    cfg.chat.log_path = dir.path().join("chat.jsonl");
    cfg.registry.path = Some(dir.path().join("missing.json"));
    assert!(matches!(build_state(&cfg), Err(cdss_service::StartupError::Registry { .. })));

    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, "{not json").unwrap();
    cfg.registry.path = Some(bad);
    assert!(build_state(&cfg).is_err());

    let good = dir.path().join("good.json");
    registry().save(&good).unwrap();
    cfg.registry.path = Some(good);
    assert_eq!(build_state(&cfg).unwrap().registry.snapshot().participants.len(), 2);
}
