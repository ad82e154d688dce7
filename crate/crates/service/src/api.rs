//! HTTP routes. Every error leaves as `{status, code, message}` JSON.
//!
//! | code                      | status | raised by                                          |
//! |---------------------------|--------|----------------------------------------------------|
//! | `invalid_request`         | 400    | malformed JSON, unknown explanation kind, bad query |
//! | `unknown_participant`     | 404    | participant missing from the registry              |
//! | `session_not_found`       | 404    | unknown session id                                 |
//! | `job_not_found`           | 404    | unknown training job id                            |
//! | `not_found`               | 404    | unknown route                                      |
//! | `invalid_distribution`    | 422    | emotion frame that is not a distribution           |
//! | `instance_out_of_range`   | 422    | explanation row index past the participant's data  |
//! | `explanation_unavailable` | 422    | explanation procedure rejected the model or data   |
//! | `invalid_survey`          | 422    | survey rows that do not parse or validate          |
//! | `internal`                | 500    | log write failure or a failed background task      |

use std::sync::Arc;

use axum::extract::rejection::{JsonRejection, QueryRejection};
use axum::extract::{FromRequest, Path, Query, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::Router;
use serde::{Deserialize, Serialize};
use serde_json::json;
use tower_http::cors::CorsLayer;
use tower_http::trace::TraceLayer;

use cdss_core::affect::{AffectError, Emotion, EmotionObservation};
use cdss_core::stats::{compare_report, read_survey, validate_row, CompareReport, StatsError, SurveyRow};
use cdss_core::xai::{explain, ExplainKind, ExplainOptions, Explanation, XaiError};

use crate::chat::{ChatError, ChatMessage, ChatService, PostMessage};
use crate::jobs::{now_s, Job, JobQueue, RegistryHandle, TrainRequest};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ApiError {
    pub status: u16,
    pub code: String,
    pub message: String,
}

impl ApiError {
    pub fn new(status: StatusCode, code: &str, message: impl Into<String>) -> Self {
        Self { status: status.as_u16(), code: code.into(), message: message.into() }
    }

    pub fn invalid_request(message: impl Into<String>) -> Self {
        Self::new(StatusCode::BAD_REQUEST, "invalid_request", message)
    }

    fn internal(message: impl Into<String>) -> Self {
        Self::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", message)
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let status = StatusCode::from_u16(self.status).unwrap_or(StatusCode::INTERNAL_SERVER_ERROR);
        (status, axum::Json(self)).into_response()
    }
}

impl From<XaiError> for ApiError {
    fn from(e: XaiError) -> Self {
        match e {
            XaiError::InstanceOutOfRange { .. } => Self::new(StatusCode::UNPROCESSABLE_ENTITY, "instance_out_of_range", e.to_string()),
            _ => Self::new(StatusCode::UNPROCESSABLE_ENTITY, "explanation_unavailable", e.to_string()),
        }
    }
}

impl From<AffectError> for ApiError {
    fn from(e: AffectError) -> Self {
        match e {
            AffectError::InvalidDistribution(_) => Self::new(StatusCode::UNPROCESSABLE_ENTITY, "invalid_distribution", e.to_string()),
            _ => Self::invalid_request(e.to_string()),
        }
    }
}

impl From<ChatError> for ApiError {
    fn from(e: ChatError) -> Self {
        match e {
            ChatError::UnknownParticipant(_) => Self::new(StatusCode::NOT_FOUND, "unknown_participant", e.to_string()),
            ChatError::SessionNotFound(_) => Self::new(StatusCode::NOT_FOUND, "session_not_found", e.to_string()),
            ChatError::InvalidRequest(m) => Self::invalid_request(m),
            ChatError::Affect(a) => a.into(),
            ChatError::Xai(x) => x.into(),
            ChatError::Log { .. } | ChatError::CorruptLog { .. } | ChatError::Task(_) => Self::internal(e.to_string()),
        }
    }
}

impl From<StatsError> for ApiError {
    fn from(e: StatsError) -> Self {
        Self::new(StatusCode::UNPROCESSABLE_ENTITY, "invalid_survey", e.to_string())
    }
}

impl From<JsonRejection> for ApiError {
    fn from(r: JsonRejection) -> Self {
        Self::invalid_request(r.body_text())
    }
}

impl From<QueryRejection> for ApiError {
    fn from(r: QueryRejection) -> Self {
        Self::invalid_request(r.body_text())
    }
}

/// `axum::Json` whose rejections become `invalid_request`.
#[derive(Debug, Clone, Copy, Default, FromRequest)]
#[from_request(via(axum::Json), rejection(ApiError))]
pub struct Json<T>(pub T);

impl<T: Serialize> IntoResponse for Json<T> {
    fn into_response(self) -> Response {
        axum::Json(self.0).into_response()
    }
}

type ApiResult<T> = Result<T, ApiError>;

#[derive(Clone)]
pub struct AppState {
    pub chat: Arc<ChatService>,
    pub jobs: JobQueue,
    pub registry: RegistryHandle,
    pub explain_opts: Arc<ExplainOptions>,
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/healthz", get(healthz))
        .route("/queries", get(queries))
        .route("/participants", get(participants))
        .route("/participants/{id}/explanations/{kind}", get(explanation))
        .route("/sessions", post(create_session))
        .route("/sessions/{id}/messages", post(post_message))
        .route("/sessions/{id}/emotions", post(post_emotion))
        .route("/sessions/{id}/history", get(history))
        .route("/train", post(train))
        .route("/jobs/{id}", get(job))
        .route("/eval/compare", post(eval_compare))
        .fallback(|| async { ApiError::new(StatusCode::NOT_FOUND, "not_found", "no such route") })
        .layer(CorsLayer::permissive())
        .layer(TraceLayer::new_for_http())
        .with_state(state)
}

async fn healthz() -> Json<serde_json::Value> {
    Json(json!({"status": "ok"}))
}

async fn queries(State(s): State<AppState>) -> Json<serde_json::Value> {
    Json(json!({"queries": s.chat.predefined_queries()}))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParticipantSummary {
    pub participant_id: String,
    pub model_kind: String,
    pub accuracy: f64,
    pub n_rows: usize,
    pub n_train: usize,
    pub features: Vec<String>,
}

async fn participants(State(s): State<AppState>) -> Json<Vec<ParticipantSummary>> {
    let reg = s.registry.snapshot();
    Json(
        reg.participants
            .values()
            .map(|e| ParticipantSummary {
                participant_id: e.participant_id.clone(),
                model_kind: e.model.kind().into(),
                accuracy: e.metrics.accuracy,
                n_rows: e.data.rows.len(),
                n_train: e.n_train,
                features: e.data.feature_names.clone(),
            })
            .collect(),
    )
}

#[derive(Debug, Deserialize)]
struct InstanceQuery {
    instance: Option<usize>,
}

async fn explanation(
    State(s): State<AppState>,
    Path((id, kind)): Path<(String, String)>,
    query: Result<Query<InstanceQuery>, QueryRejection>,
) -> ApiResult<Json<Explanation>> {
    let Query(q) = query?;
    let kind: ExplainKind = kind.parse().map_err(ApiError::invalid_request)?;
    let reg = s.registry.snapshot();
    let entry = reg.get(&id).ok_or_else(|| ChatError::UnknownParticipant(id.clone()))?;
    let instance = q.instance.unwrap_or(entry.data.rows.len().saturating_sub(1));
    let opts = s.explain_opts.clone();
    let out = tokio::task::spawn_blocking(move || {
        let entry = reg.get(&id).expect("participant checked above");
        explain(entry, kind, instance, &opts)
    })
    .await
    .map_err(|e| ApiError::internal(e.to_string()))??;
    Ok(Json(out))
}

#[derive(Debug, Deserialize)]
struct CreateSession {
    email: String,
    participant_id: String,
}

async fn create_session(State(s): State<AppState>, Json(req): Json<CreateSession>) -> ApiResult<(StatusCode, Json<serde_json::Value>)> {
    let info = s.chat.create_session(&req.email, &req.participant_id)?;
    Ok((StatusCode::CREATED, Json(json!({"session_id": info.id, "session": info}))))
}

async fn post_message(State(s): State<AppState>, Path(id): Path<String>, Json(req): Json<PostMessage>) -> ApiResult<Json<crate::chat::Reply>> {
    Ok(Json(s.chat.post_message(&id, req).await?))
}

#[derive(Debug, Deserialize)]
struct EmotionFrame {
    /// Seconds; defaults to the time of arrival.
    timestamp: Option<f64>,
    distribution: std::collections::BTreeMap<Emotion, f64>,
}

async fn post_emotion(
    State(s): State<AppState>,
    Path(id): Path<String>,
    Json(req): Json<EmotionFrame>,
) -> ApiResult<(StatusCode, Json<crate::chat::FrameAck>)> {
    let obs = EmotionObservation { session_id: id.clone(), timestamp: req.timestamp.unwrap_or_else(now_s), distribution: req.distribution };
    Ok((StatusCode::ACCEPTED, Json(s.chat.post_frame(&id, &obs)?)))
}

#[derive(Debug, Serialize)]
struct History {
    session_id: String,
    messages: Vec<ChatMessage>,
}

async fn history(State(s): State<AppState>, Path(id): Path<String>) -> ApiResult<Json<History>> {
    let messages = s.chat.get_history(&id).await?;
    Ok(Json(History { session_id: id, messages }))
}

async fn train(State(s): State<AppState>, Json(req): Json<TrainRequest>) -> (StatusCode, Json<serde_json::Value>) {
    let id = s.jobs.submit(req);
    (StatusCode::ACCEPTED, Json(json!({"job_id": id})))
}

async fn job(State(s): State<AppState>, Path(id): Path<String>) -> ApiResult<Json<Job>> {
    s.jobs.get(&id).map(Json).ok_or_else(|| ApiError::new(StatusCode::NOT_FOUND, "job_not_found", format!("job {id} not found")))
}

/// Either parsed rows or the survey file's text.
#[derive(Debug, Deserialize)]
#[serde(untagged)]
pub enum CompareInput {
    Rows { rows: Vec<SurveyRow> },
    Csv { csv: String },
}

async fn eval_compare(Json(input): Json<CompareInput>) -> ApiResult<Json<CompareReport>> {
    let rows = match input {
        CompareInput::Rows { rows } => {
            for (i, r) in rows.iter().enumerate() {
                validate_row(i + 1, r)?;
            }
            rows
        }
        CompareInput::Csv { csv } => read_survey(csv.as_bytes())?,
    };
    Ok(Json(compare_report(&rows)))
}
