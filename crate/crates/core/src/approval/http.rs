//! JSON API over persisted review sessions.
//!
//! | method | path | response |
//! |---|---|---|
//! | GET | `/sessions` | `[{session_id, label, pending_count, total}]` |
//! | GET | `/sessions/{id}/next` | next pending item, 404 when none |
//! | GET | `/sessions/{id}/items/{iid}/collage` | PNG bytes |
//! | POST | `/sessions/{id}/items/{iid}/decision` | updated item, 409 if decided |
//! | GET | `/sessions/{id}/export` | decision log as NDJSON |
//!
//! Decisions go through one mutex, so each session has a single writer and
//! the on-disk log stays linearizable.

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::Arc;

use axum::extract::{Path as UrlPath, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use tokio::sync::Mutex;

use super::{log, ApprovalItem, Decider, Decision, Session, SessionDir};
use crate::error::{Error, Result};

struct Entry {
    dir: SessionDir,
    session: Session,
}

#[derive(Default)]
pub struct ApprovalService {
    sessions: BTreeMap<String, Entry>,
}

pub type SharedService = Arc<Mutex<ApprovalService>>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionSummary {
    pub session_id: String,
    pub label: String,
    pub pending_count: usize,
    pub total: usize,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct DecisionBody {
    pub decision: Decision,
}

impl ApprovalService {
    /// Loads every `<root>/<label>/session.json`, replaying its decision log.
    pub fn load(root: &Path) -> Result<Self> {
        let mut service = ApprovalService::default();
        let entries = std::fs::read_dir(root).map_err(|e| Error::io(root, e))?;
        let mut dirs: Vec<_> = entries
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.join(SessionDir::PLAN).is_file())
            .collect();
        dirs.sort();
        for d in dirs {
            service.insert(SessionDir::new(d))?;
        }
        Ok(service)
    }

    pub fn insert(&mut self, dir: SessionDir) -> Result<()> {
        let session = dir.load()?;
        self.sessions
            .insert(session.session_id().to_string(), Entry { dir, session });
        Ok(())
    }

    pub fn summaries(&self) -> Vec<SessionSummary> {
        self.sessions
            .values()
            .map(|e| SessionSummary {
                session_id: e.session.session_id().to_string(),
                label: e.session.label().to_string(),
                pending_count: e.session.pending_count(),
                total: e.session.items().len(),
            })
            .collect()
    }

    pub fn session(&self, id: &str) -> Option<&Session> {
        self.sessions.get(id).map(|e| &e.session)
    }

    pub fn decide(&mut self, session_id: &str, item_id: &str, decision: Decision) -> Result<ApprovalItem> {
        let entry = self
            .sessions
            .get_mut(session_id)
            .ok_or_else(|| Error::UnknownItem(format!("session {session_id}")))?;
        entry.dir.decide(&mut entry.session, item_id, decision, Decider::Human)
    }

    fn collage(&self, session_id: &str, item_id: &str) -> Option<Vec<u8>> {
        let e = self.sessions.get(session_id)?;
        let item = e.session.find(item_id).ok()?;
        std::fs::read(e.dir.dir.join(&item.collage_ref)).ok()
    }
}

struct ApiError(StatusCode, String);

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.0, Json(serde_json::json!({ "error": self.1 }))).into_response()
    }
}

impl From<Error> for ApiError {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::AlreadyDecided(_) => StatusCode::CONFLICT,
            Error::UnknownItem(_) => StatusCode::NOT_FOUND,
            _ => StatusCode::INTERNAL_SERVER_ERROR,
        };
        ApiError(code, e.to_string())
    }
}

fn not_found(what: String) -> ApiError {
    ApiError(StatusCode::NOT_FOUND, what)
}

async fn list(State(svc): State<SharedService>) -> Json<Vec<SessionSummary>> {
    Json(svc.lock().await.summaries())
}

async fn next(State(svc): State<SharedService>, UrlPath(id): UrlPath<String>) -> Result<Json<ApprovalItem>, ApiError> {
    let svc = svc.lock().await;
    let s = svc
        .session(&id)
        .ok_or_else(|| not_found(format!("unknown session {id}")))?;
    s.next_pending()
        .cloned()
        .map(Json)
        .ok_or_else(|| not_found(format!("session {id} has no pending items")))
}

async fn collage(
    State(svc): State<SharedService>,
    UrlPath((id, iid)): UrlPath<(String, String)>,
) -> Result<Response, ApiError> {
    let bytes = svc
        .lock()
        .await
        .collage(&id, &iid)
        .ok_or_else(|| not_found(format!("no collage for {id}/{iid}")))?;
    Ok(([(header::CONTENT_TYPE, "image/png")], bytes).into_response())
}

async fn decide(
    State(svc): State<SharedService>,
    UrlPath((id, iid)): UrlPath<(String, String)>,
    Json(body): Json<DecisionBody>,
) -> Result<Json<ApprovalItem>, ApiError> {
    Ok(Json(svc.lock().await.decide(&id, &iid, body.decision)?))
}

async fn export(State(svc): State<SharedService>, UrlPath(id): UrlPath<String>) -> Result<Response, ApiError> {
    let svc = svc.lock().await;
    let s = svc
        .session(&id)
        .ok_or_else(|| not_found(format!("unknown session {id}")))?;
    let body = log::to_ndjson(s.log())?;
    Ok(([(header::CONTENT_TYPE, "application/x-ndjson")], body).into_response())
}

pub fn router(service: SharedService) -> Router {
    Router::new()
        .route("/sessions", get(list))
        .route("/sessions/{id}/next", get(next))
        .route("/sessions/{id}/items/{iid}/collage", get(collage))
        .route("/sessions/{id}/items/{iid}/decision", post(decide))
        .route("/sessions/{id}/export", get(export))
        .with_state(service)
}

pub fn shared(service: ApprovalService) -> SharedService {
    Arc::new(Mutex::new(service))
}
