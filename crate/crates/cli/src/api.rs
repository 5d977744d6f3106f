//! HTTP routes over the study, storage and analytics operations. Handlers
//! only translate between JSON and core calls.

use std::net::SocketAddr;
use std::sync::Arc;

use anyhow::Context;
use axum::extract::{FromRequestParts, Path, Query, State};
use axum::http::request::Parts;
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use chrono::Utc;
use ladderforge_core::analytics::{Aggregation, AgreementMatrix, AnalyticsError, AnalyticsSnapshot};
use ladderforge_core::model::{AnnotatorId, FeedbackLevel, ProblemId, SubmissionId};
use ladderforge_core::storage::{Session, StorageError, Store};
use ladderforge_core::study::{
    Annotator, CalibrationOutcome, CalibrationQuestion, EligibilityQuestion, Metric, NextItem, Phase, Rating,
    RatingInput, Role, Study, StudyError, StudyState,
};
use ladderforge_core::validator::ValidationFlag;
use serde::{Deserialize, Serialize};
use tokio::net::TcpListener;

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    message: String,
}

impl ApiError {
    fn new(status: StatusCode, message: impl Into<String>) -> Self {
        Self {
            status,
            message: message.into(),
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(serde_json::json!({ "error": self.message }))).into_response()
    }
}

impl From<StudyError> for ApiError {
    fn from(e: StudyError) -> Self {
        let status = match &e {
            StudyError::State(_) => StatusCode::CONFLICT,
            StudyError::Input(_) => StatusCode::BAD_REQUEST,
            StudyError::NotFound(_) => StatusCode::NOT_FOUND,
            StudyError::Storage(_) => StatusCode::INTERNAL_SERVER_ERROR,
        };
        Self::new(status, e.to_string())
    }
}

impl From<StorageError> for ApiError {
    fn from(e: StorageError) -> Self {
        Self::new(StatusCode::INTERNAL_SERVER_ERROR, e.to_string())
    }
}

impl From<AnalyticsError> for ApiError {
    fn from(e: AnalyticsError) -> Self {
        Self::new(StatusCode::CONFLICT, e.to_string())
    }
}

type ApiResult<T> = Result<Json<T>, ApiError>;

#[derive(Clone)]
pub struct AppState {
    store: Store,
    study: Option<Arc<Study>>,
}

impl AppState {
    /// Study routes answer 409 until a study definition is saved and the
    /// service restarted.
    pub fn new(store: Store) -> Result<Self, StudyError> {
        let study = match store.study_definition()? {
            Some(def) => Some(Arc::new(Study::new(store.clone(), def)?)),
            None => None,
        };
        Ok(Self { store, study })
    }

    fn study(&self) -> Result<Arc<Study>, ApiError> {
        self.study
            .clone()
            .ok_or_else(|| ApiError::new(StatusCode::CONFLICT, "no study definition; run `study-init`"))
    }
}

/// Runs blocking store work off the async workers.
async fn blocking<T: Send + 'static>(f: impl FnOnce() -> Result<T, ApiError> + Send + 'static) -> Result<T, ApiError> {
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()))?
}

/// The annotator behind an `Authorization: Bearer <token>` header.
pub struct Caller(pub AnnotatorId);

impl FromRequestParts<AppState> for Caller {
    type Rejection = ApiError;

    async fn from_request_parts(parts: &mut Parts, state: &AppState) -> Result<Self, Self::Rejection> {
        let unauthorized = || ApiError::new(StatusCode::UNAUTHORIZED, "missing or unknown bearer token");
        let token = parts
            .headers
            .get(header::AUTHORIZATION)
            .and_then(|v| v.to_str().ok())
            .and_then(|v| v.strip_prefix("Bearer "))
            .map(|t| t.trim().to_string())
            .ok_or_else(unauthorized)?;
        let store = state.store.clone();
        let session = blocking(move || Ok(store.session(&token)?)).await?;
        session.map(|s| Caller(s.annotator_id)).ok_or_else(unauthorized)
    }
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/api/annotators", post(create_annotator))
        .route("/api/study/state", get(study_state))
        .route("/api/study/eligibility", post(eligibility))
        .route("/api/study/calibration", post(calibration))
        .route("/api/study/next", get(next_item))
        .route("/api/study/ratings", post(rate))
        .route("/api/ladders/{submission_id}", get(reveal_ladder))
        .route("/api/analytics/agreement", get(agreement))
        .route("/api/analytics/fig1", get(fig1))
        .route("/api/analytics/fig2", get(fig2))
        .with_state(state)
}

/// Serves until `shutdown` resolves, letting in-flight requests finish.
pub async fn serve(
    listener: TcpListener,
    state: AppState,
    shutdown: impl std::future::Future<Output = ()> + Send + 'static,
) -> std::io::Result<()> {
    axum::serve(listener, router(state))
        .with_graceful_shutdown(shutdown)
        .await
}

pub fn serve_blocking(store: Store, addr: SocketAddr) -> anyhow::Result<u8> {
    let state = AppState::new(store)?;
    let rt = tokio::runtime::Runtime::new()?;
    rt.block_on(async move {
        let listener = TcpListener::bind(addr)
            .await
            .with_context(|| format!("cannot listen on {addr}"))?;
        // Handlers go in before the announcement so an early signal is not fatal.
        let shutdown = shutdown_signal()?;
        eprintln!("listening on http://{}", listener.local_addr()?);
        serve(listener, state, shutdown).await?;
        eprintln!("shut down");
        Ok(0)
    })
}

fn shutdown_signal() -> std::io::Result<impl std::future::Future<Output = ()>> {
    #[cfg(unix)]
    let mut term = tokio::signal::unix::signal(tokio::signal::unix::SignalKind::terminate())?;
    let ctrl_c = tokio::signal::ctrl_c();
    Ok(async move {
        #[cfg(unix)]
        tokio::select! {
            _ = ctrl_c => {},
            _ = term.recv() => {},
        }
        #[cfg(not(unix))]
        let _ = ctrl_c.await;
    })
}

#[derive(Debug, Deserialize)]
#[serde(rename_all = "camelCase")]
struct NewAnnotator {
    #[serde(default)]
    annotator_id: Option<String>,
    display_name: String,
    role: Role,
}

#[derive(Debug, Serialize)]
#[serde(rename_all = "camelCase")]
struct CreatedAnnotator {
    annotator: Annotator,
    token: String,
}

async fn create_annotator(
    State(state): State<AppState>,
    Json(body): Json<NewAnnotator>,
) -> Result<(StatusCode, Json<CreatedAnnotator>), ApiError> {
    let study = state.study()?;
    let raw = body
        .annotator_id
        .unwrap_or_else(|| format!("ann-{}", &uuid::Uuid::new_v4().simple().to_string()[..12]));
    let id = AnnotatorId::new(raw).map_err(|e| ApiError::new(StatusCode::BAD_REQUEST, e.to_string()))?;
    let created = blocking(move || {
        let annotator = study.register(id, &body.display_name, body.role)?;
        let session = Session {
            token: uuid::Uuid::new_v4().simple().to_string(),
            annotator_id: annotator.id.clone(),
            issued_at: Utc::now(),
        };
        study.store().save_session(&session)?;
        Ok(CreatedAnnotator {
            annotator,
            token: session.token,
        })
    })
    .await?;
    Ok((StatusCode::CREATED, Json(created)))
}

/// The caller's progress, plus the questions of their current phase.
#[derive(Debug, Serialize)]
#[serde(rename_all = "camelCase")]
struct StateView {
    annotator: Annotator,
    total_items: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    eligibility: Option<EligibilityQuestion>,
    #[serde(skip_serializing_if = "Option::is_none")]
    calibration: Option<Vec<CalibrationQuestion>>,
}

async fn study_state(State(state): State<AppState>, Caller(id): Caller) -> ApiResult<StateView> {
    let study = state.study()?;
    blocking(move || {
        let annotator = study.annotator(&id)?;
        let def = study.definition();
        let phase = annotator.state.phase;
        Ok(Json(StateView {
            total_items: study.items().len(),
            eligibility: (phase == Phase::Eligibility).then(|| def.eligibility_question()),
            calibration: (phase == Phase::Calibration).then(|| def.calibration_questions()),
            annotator,
        }))
    })
    .await
}

#[derive(Debug, Deserialize)]
#[serde(rename_all = "camelCase")]
struct EligibilityAnswers {
    predicted_outputs: Vec<String>,
}

#[derive(Debug, Serialize)]
struct StateReply {
    state: StudyState,
}

async fn eligibility(
    State(state): State<AppState>,
    Caller(id): Caller,
    Json(body): Json<EligibilityAnswers>,
) -> ApiResult<StateReply> {
    let study = state.study()?;
    blocking(move || {
        let state = study.submit_eligibility(&id, &body.predicted_outputs)?;
        Ok(Json(StateReply { state }))
    })
    .await
}

#[derive(Debug, Deserialize)]
struct CalibrationAnswers {
    answers: Vec<usize>,
}

async fn calibration(
    State(state): State<AppState>,
    Caller(id): Caller,
    Json(body): Json<CalibrationAnswers>,
) -> ApiResult<CalibrationOutcome> {
    let study = state.study()?;
    blocking(move || Ok(Json(study.submit_calibration(&id, &body.answers)?))).await
}

async fn next_item(State(state): State<AppState>, Caller(id): Caller) -> ApiResult<NextItem> {
    let study = state.study()?;
    blocking(move || Ok(Json(study.next_evaluation_item(&id)?))).await
}

async fn rate(State(state): State<AppState>, Caller(id): Caller, Json(body): Json<RatingInput>) -> ApiResult<Rating> {
    let study = state.study()?;
    blocking(move || Ok(Json(study.submit_rating(&id, &body)?))).await
}

#[derive(Debug, Deserialize)]
#[serde(rename_all = "camelCase")]
struct RevealQuery {
    max_level: Option<u8>,
}

#[derive(Debug, Serialize)]
struct RevealedLevel {
    level: FeedbackLevel,
    text: String,
}

/// Levels `0..=maxLevel` of a ladder. Flags about hidden levels are left
/// out too, since their details may quote hidden text.
#[derive(Debug, Serialize)]
#[serde(rename_all = "camelCase")]
struct RevealedLadder {
    submission_id: SubmissionId,
    problem_id: ProblemId,
    max_level: FeedbackLevel,
    levels: Vec<RevealedLevel>,
    flags: Vec<ValidationFlag>,
}

async fn reveal_ladder(
    State(state): State<AppState>,
    Path(raw): Path<String>,
    Query(q): Query<RevealQuery>,
) -> ApiResult<RevealedLadder> {
    let max = match q.max_level {
        None => FeedbackLevel::L4,
        Some(k) => FeedbackLevel::from_index(k)
            .ok_or_else(|| ApiError::new(StatusCode::BAD_REQUEST, "maxLevel must be between 0 and 4"))?,
    };
    let not_found = || ApiError::new(StatusCode::NOT_FOUND, format!("no ladder for {raw}"));
    let id = SubmissionId::new(raw.as_str()).map_err(|_| not_found())?;
    let store = state.store.clone();
    let (ladder, report) = blocking(move || Ok((store.ladder(&id)?, store.validation(&id)?))).await?;
    let ladder = ladder.ok_or_else(not_found)?;
    Ok(Json(RevealedLadder {
        levels: ladder
            .levels
            .up_to(max)
            .map(|(level, text)| RevealedLevel {
                level,
                text: text.to_string(),
            })
            .collect(),
        flags: report
            .map(|r| {
                r.flags
                    .into_iter()
                    .filter(|f| f.level.is_none_or(|l| l <= max))
                    .collect()
            })
            .unwrap_or_default(),
        submission_id: ladder.submission_id,
        problem_id: ladder.problem_id,
        max_level: max,
    }))
}

async fn snapshot(state: &AppState) -> Result<AnalyticsSnapshot, ApiError> {
    let store = state.store.clone();
    blocking(move || Ok(AnalyticsSnapshot::load(&store)?)).await
}

async fn agreement(State(state): State<AppState>) -> ApiResult<AgreementMatrix<f64>> {
    Ok(Json(snapshot(&state).await?.agreement::<f64>()?))
}

#[derive(Debug, Deserialize)]
struct MetricQuery {
    metric: String,
}

fn parse_metric(q: &MetricQuery) -> Result<Metric, ApiError> {
    q.metric
        .parse()
        .map_err(|e: String| ApiError::new(StatusCode::BAD_REQUEST, e))
}

async fn fig1(State(state): State<AppState>, Query(q): Query<MetricQuery>) -> ApiResult<Aggregation<f64>> {
    let metric = parse_metric(&q)?;
    Ok(Json(snapshot(&state).await?.question_level::<f64>(metric)))
}

async fn fig2(State(state): State<AppState>, Query(q): Query<MetricQuery>) -> ApiResult<Aggregation<f64>> {
    let metric = parse_metric(&q)?;
    Ok(Json(snapshot(&state).await?.bucket_level::<f64>(metric)))
}
