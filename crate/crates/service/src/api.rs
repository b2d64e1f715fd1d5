//! JSON-over-HTTP front end for a [`Project`].

use std::sync::Arc;

use axum::extract::{Path, Query, State};
use axum::http::{HeaderMap, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post, put};
use axum::{Json, Router};
use clean_core::activity::InteractionEvent;
use clean_core::Mention;
use serde::{Deserialize, Serialize};

use crate::store::{LexiconGroup, NoteListing, NoteStatus, NoteView, Project, SaveOutcome, StoreError};

/// Header carrying the reviewer name.
pub const USER_HEADER: &str = "x-user";
const DEFAULT_USER: &str = "anonymous";

type Shared = Arc<Project>;

#[derive(Debug, Serialize)]
struct ErrorBody {
    error: String,
}

pub struct ApiError(StoreError);

impl From<StoreError> for ApiError {
    fn from(e: StoreError) -> Self {
        ApiError(e)
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let code = match &self.0 {
            StoreError::UnknownNote(_) => StatusCode::NOT_FOUND,
            StoreError::ConflictingRevision { .. } => StatusCode::CONFLICT,
            StoreError::InvalidMention { .. }
            | StoreError::NotComplete(_)
            | StoreError::InvalidUser(_)
            | StoreError::Events(_) => StatusCode::BAD_REQUEST,
            _ => StatusCode::INTERNAL_SERVER_ERROR,
        };
        if code == StatusCode::INTERNAL_SERVER_ERROR {
            log::error!("{}", self.0);
        }
        (code, Json(ErrorBody { error: self.0.to_string() })).into_response()
    }
}

#[derive(Debug, Deserialize)]
struct ListParams {
    q: Option<String>,
}

#[derive(Debug, Deserialize)]
struct LexiconParams {
    prefix: Option<String>,
}

#[derive(Debug, Deserialize)]
pub struct SaveRequest {
    pub mentions: Vec<Mention>,
    #[serde(default)]
    pub base_revision: Option<u64>,
    #[serde(default)]
    pub mark_complete: bool,
}

#[derive(Debug, Deserialize)]
pub struct EventBatch {
    pub events: Vec<InteractionEvent>,
}

#[derive(Debug, Serialize)]
struct Appended {
    appended: usize,
}

fn user(headers: &HeaderMap) -> String {
    headers
        .get(USER_HEADER)
        .and_then(|v| v.to_str().ok())
        .map(str::trim)
        .filter(|v| !v.is_empty())
        .unwrap_or(DEFAULT_USER)
        .to_string()
}

async fn list_notes(State(p): State<Shared>, Query(params): Query<ListParams>) -> Json<NoteListing> {
    Json(p.list_notes(params.q.as_deref()))
}

async fn get_note(State(p): State<Shared>, Path(id): Path<String>) -> Result<Json<NoteView>, ApiError> {
    Ok(Json(p.get_note(&id)?))
}

async fn save(
    State(p): State<Shared>,
    Path(id): Path<String>,
    headers: HeaderMap,
    Json(req): Json<SaveRequest>,
) -> Result<Json<SaveOutcome>, ApiError> {
    let user = user(&headers);
    let out = tokio::task::spawn_blocking(move || {
        p.save_annotations(&id, req.mentions, req.base_revision, req.mark_complete, &user)
    })
    .await
    .expect("save task panicked")?;
    Ok(Json(out))
}

async fn recheck(
    State(p): State<Shared>,
    Path(id): Path<String>,
    headers: HeaderMap,
) -> Result<Json<NoteStatus>, ApiError> {
    let user = user(&headers);
    let status = tokio::task::spawn_blocking(move || p.recheck(&id, &user)).await.expect("recheck task panicked")?;
    Ok(Json(status))
}

async fn log_events(State(p): State<Shared>, Json(batch): Json<EventBatch>) -> Result<Json<Appended>, ApiError> {
    let appended =
        tokio::task::spawn_blocking(move || p.log_events(&batch.events)).await.expect("event task panicked")?;
    Ok(Json(Appended { appended }))
}

async fn lexicon(State(p): State<Shared>, Query(params): Query<LexiconParams>) -> Json<Vec<LexiconGroup>> {
    Json(p.lexicon_groups(params.prefix.as_deref().unwrap_or("")))
}

pub fn router(project: Arc<Project>) -> Router {
    Router::new()
        .route("/api/notes", get(list_notes))
        .route("/api/notes/{id}", get(get_note))
        .route("/api/notes/{id}/annotations", put(save))
        .route("/api/notes/{id}/recheck", post(recheck))
        .route("/api/events", post(log_events))
        .route("/api/lexicon", get(lexicon))
        .with_state(project)
}
