//! HTTP coordination service for audit testers.
//!
//! Testers authenticate with a per-tester bearer token, fetch their open
//! assignments with the full creative, and post the platform's decision. An
//! operator token reads study progress. The service owns the ledger: every
//! write goes through one lock, so the hash chain stays linear no matter how
//! many requests arrive at once.
//!
//! | method | path                           | auth     |
//! |--------|--------------------------------|----------|
//! | GET    | `/api/health`                  | none     |
//! | GET    | `/api/assignments?limit=N`     | tester   |
//! | POST   | `/api/assignments/{id}/outcome`| tester   |
//! | GET    | `/api/progress`                | operator |
//!
//! Errors have the shape `{"error": {"code": "...", "message": "..."}}`.

use std::collections::HashMap;
use std::future::Future;
use std::path::PathBuf;
use std::sync::{Arc, RwLock};

use auditkit::allocation::{Assignment, Tester, MIN_TOKEN_HEX_LEN};
use auditkit::hash::sha256_hex;
use auditkit::ledger::{Ledger, LedgerError, OutcomeAck, OutcomeSubmission, ProgressSnapshot};
use auditkit::prompts::{Platform, PromptSpec, Targeting};
use axum::extract::rejection::{JsonRejection, QueryRejection};
use axum::extract::{Path, Query, State};
use axum::http::{header, HeaderMap, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use serde_json::json;
use thiserror::Error;
use tokio::net::TcpListener;

pub const DEFAULT_LIMIT: usize = 10;
pub const MAX_LIMIT: usize = 1000;
pub const DEFAULT_SNAPSHOT_EVERY: u64 = 256;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("tester `{0}` has no token")]
    MissingToken(String),
    #[error("token for `{0}` is shorter than {MIN_TOKEN_HEX_LEN} characters")]
    WeakToken(String),
    #[error("two sessions share a token")]
    DuplicateToken,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SessionToken {
    pub tester_id: String,
    pub secret: String,
    #[serde(default)]
    pub expires_at: Option<DateTime<Utc>>,
}

pub fn sessions_from_testers(
    testers: &[Tester],
    expires_at: Option<DateTime<Utc>>,
) -> Result<Vec<SessionToken>, ConfigError> {
    testers
        .iter()
        .map(|t| {
            let secret = t
                .auth_token
                .clone()
                .ok_or_else(|| ConfigError::MissingToken(t.tester_id.clone()))?;
            Ok(SessionToken {
                tester_id: t.tester_id.clone(),
                secret,
                expires_at,
            })
        })
        .collect()
}

#[derive(Debug, Clone)]
pub struct CoordinatorConfig {
    pub operator_token: String,
    pub sessions: Vec<SessionToken>,
    /// Directory served at `/` (the tester UI build), if any.
    pub static_dir: Option<PathBuf>,
    /// Write a ledger snapshot every this many entries; 0 disables.
    pub snapshot_every: u64,
}

#[derive(Debug, Clone)]
struct Session {
    tester_id: String,
    expires_at: Option<DateTime<Utc>>,
}

/// Shared service state.
#[derive(Debug)]
pub struct Coordinator {
    ledger: RwLock<Ledger>,
    sessions: HashMap<String, Session>,
    operator_digest: String,
    snapshot_every: u64,
    static_dir: Option<PathBuf>,
}

fn check_secret(owner: &str, secret: &str) -> Result<(), ConfigError> {
    if secret.len() < MIN_TOKEN_HEX_LEN {
        return Err(ConfigError::WeakToken(owner.to_string()));
    }
    Ok(())
}

impl Coordinator {
    pub fn new(ledger: Ledger, config: CoordinatorConfig) -> Result<Arc<Self>, ConfigError> {
        check_secret("operator", &config.operator_token)?;
        let operator_digest = sha256_hex(config.operator_token.as_bytes());
        let mut sessions = HashMap::new();
        for s in config.sessions {
            check_secret(&s.tester_id, &s.secret)?;
            let digest = sha256_hex(s.secret.as_bytes());
            if digest == operator_digest || sessions.contains_key(&digest) {
                return Err(ConfigError::DuplicateToken);
            }
            sessions.insert(
                digest,
                Session {
                    tester_id: s.tester_id,
                    expires_at: s.expires_at,
                },
            );
        }
        Ok(Arc::new(Coordinator {
            ledger: RwLock::new(ledger),
            sessions,
            operator_digest,
            snapshot_every: config.snapshot_every,
            static_dir: config.static_dir,
        }))
    }

    /// Runs `f` against the ledger under the read lock.
    pub fn with_ledger<T>(&self, f: impl FnOnce(&Ledger) -> T) -> T {
        f(&self.ledger.read().expect("ledger lock poisoned"))
    }

    fn tester(&self, headers: &HeaderMap) -> Result<String, ApiError> {
        let digest = bearer_digest(headers)?;
        if digest == self.operator_digest {
            return Err(ApiError::Forbidden(
                "operator token cannot act as a tester".into(),
            ));
        }
        let session = self
            .sessions
            .get(&digest)
            .ok_or_else(|| ApiError::Unauthorized("unknown token".into()))?;
        if session.expires_at.is_some_and(|t| t <= Utc::now()) {
            return Err(ApiError::Unauthorized("token expired".into()));
        }
        Ok(session.tester_id.clone())
    }

    fn operator(&self, headers: &HeaderMap) -> Result<(), ApiError> {
        let digest = bearer_digest(headers)?;
        if digest == self.operator_digest {
            Ok(())
        } else if self.sessions.contains_key(&digest) {
            Err(ApiError::Forbidden("operator credentials required".into()))
        } else {
            Err(ApiError::Unauthorized("unknown token".into()))
        }
    }
}

fn bearer_digest(headers: &HeaderMap) -> Result<String, ApiError> {
    let value = headers
        .get(header::AUTHORIZATION)
        .ok_or_else(|| ApiError::Unauthorized("missing bearer token".into()))?
        .to_str()
        .map_err(|_| ApiError::Unauthorized("malformed authorization header".into()))?;
    let token = value
        .strip_prefix("Bearer ")
        .map(str::trim)
        .filter(|t| !t.is_empty())
        .ok_or_else(|| ApiError::Unauthorized("expected `Bearer <token>`".into()))?;
    Ok(sha256_hex(token.as_bytes()))
}

#[derive(Debug, Error)]
pub enum ApiError {
    #[error("{0}")]
    BadRequest(String),
    #[error("{0}")]
    Unauthorized(String),
    #[error("{0}")]
    Forbidden(String),
    #[error("{0}")]
    NotFound(String),
    #[error("{0}")]
    Conflict(String),
    #[error("{0}")]
    Internal(String),
}

impl ApiError {
    fn parts(&self) -> (StatusCode, &'static str) {
        match self {
            ApiError::BadRequest(_) => (StatusCode::BAD_REQUEST, "invalid_request"),
            ApiError::Unauthorized(_) => (StatusCode::UNAUTHORIZED, "unauthorized"),
            ApiError::Forbidden(_) => (StatusCode::FORBIDDEN, "forbidden"),
            ApiError::NotFound(_) => (StatusCode::NOT_FOUND, "not_found"),
            ApiError::Conflict(_) => (StatusCode::CONFLICT, "conflict"),
            ApiError::Internal(_) => (StatusCode::INTERNAL_SERVER_ERROR, "internal"),
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let (status, code) = self.parts();
        let body = json!({ "error": { "code": code, "message": self.to_string() } });
        (status, Json(body)).into_response()
    }
}

impl From<LedgerError> for ApiError {
    fn from(e: LedgerError) -> Self {
        match e {
            LedgerError::UnknownAssignment(_) => ApiError::NotFound(e.to_string()),
            LedgerError::MissingNotes => ApiError::BadRequest(e.to_string()),
            LedgerError::Conflict { .. } | LedgerError::IllegalTransition { .. } => {
                ApiError::Conflict(e.to_string())
            }
            other => {
                tracing::error!(error = %other, "ledger write failed");
                ApiError::Internal("ledger write failed".into())
            }
        }
    }
}

/// What a tester needs to post the ad.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PostingInstructions {
    pub platform: Platform,
    pub targeting: Targeting,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub page_group: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub search_terms: Option<Vec<String>>,
    pub budget_per_day: u32,
    pub duration_hours: u32,
}

impl From<&PromptSpec> for PostingInstructions {
    fn from(p: &PromptSpec) -> Self {
        PostingInstructions {
            platform: p.creative.platform,
            targeting: p.creative.targeting.clone(),
            page_group: p.creative.page_group.clone(),
            search_terms: p.creative.search_terms.clone(),
            budget_per_day: p.budget_per_day,
            duration_hours: p.duration_hours,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AssignmentItem {
    pub assignment: Assignment,
    #[serde(default)]
    pub prompt: Option<PromptSpec>,
    #[serde(default)]
    pub instructions: Option<PostingInstructions>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AssignmentsResponse {
    pub tester_id: String,
    pub assignments: Vec<AssignmentItem>,
    pub study_complete: bool,
}

#[derive(Debug, Deserialize)]
pub struct LimitQuery {
    limit: Option<usize>,
}

async fn health(State(c): State<Arc<Coordinator>>) -> Json<serde_json::Value> {
    let seq = c.with_ledger(Ledger::head_seq);
    Json(json!({ "status": "ok", "seq": seq }))
}

async fn assignments(
    State(c): State<Arc<Coordinator>>,
    headers: HeaderMap,
    query: Result<Query<LimitQuery>, QueryRejection>,
) -> Result<Json<AssignmentsResponse>, ApiError> {
    let tester_id = c.tester(&headers)?;
    let Query(query) = query.map_err(|e| ApiError::BadRequest(e.body_text()))?;
    let limit = query.limit.unwrap_or(DEFAULT_LIMIT);
    if !(1..=MAX_LIMIT).contains(&limit) {
        return Err(ApiError::BadRequest(format!(
            "limit must be between 1 and {MAX_LIMIT}"
        )));
    }
    let response = c.with_ledger(|ledger| {
        let items = ledger
            .open_for_tester(&tester_id)
            .into_iter()
            .take(limit)
            .map(|s| AssignmentItem {
                assignment: s.current(),
                instructions: s.prompt.as_ref().map(PostingInstructions::from),
                prompt: s.prompt.clone(),
            })
            .collect();
        AssignmentsResponse {
            tester_id: tester_id.clone(),
            assignments: items,
            study_complete: ledger.progress().complete,
        }
    });
    Ok(Json(response))
}

async fn submit_outcome(
    State(c): State<Arc<Coordinator>>,
    headers: HeaderMap,
    Path(assignment_id): Path<String>,
    body: Result<Json<OutcomeSubmission>, JsonRejection>,
) -> Result<Json<OutcomeAck>, ApiError> {
    let tester_id = c.tester(&headers)?;
    let Json(body) = body.map_err(|e| ApiError::BadRequest(e.body_text()))?;
    let obs = body.into_observation(&assignment_id);
    let coordinator = Arc::clone(&c);
    let ack = tokio::task::spawn_blocking(move || {
        let mut ledger = coordinator.ledger.write().expect("ledger lock poisoned");
        let owner = ledger
            .assignment(&assignment_id)
            .map(|s| s.assignment.tester_id.clone())
            .ok_or_else(|| ApiError::NotFound(format!("unknown assignment `{assignment_id}`")))?;
        if owner != tester_id {
            return Err(ApiError::Forbidden(
                "assignment belongs to another tester".into(),
            ));
        }
        let ack = ledger.append_outcome(obs)?;
        let every = coordinator.snapshot_every;
        if !ack.duplicate && every > 0 && ledger.head_seq() % every == 0 {
            if let Err(e) = ledger.write_snapshot(Utc::now()) {
                tracing::warn!(error = %e, "snapshot write failed");
            }
        }
        Ok(ack)
    })
    .await
    .map_err(|e| ApiError::Internal(e.to_string()))??;
    tracing::info!(assignment = %ack.assignment_id, seq = ack.seq, duplicate = ack.duplicate, "outcome");
    Ok(Json(ack))
}

async fn progress(
    State(c): State<Arc<Coordinator>>,
    headers: HeaderMap,
) -> Result<Json<ProgressSnapshot>, ApiError> {
    c.operator(&headers)?;
    Ok(Json(c.with_ledger(Ledger::progress)))
}

async fn not_found() -> ApiError {
    ApiError::NotFound("no such endpoint".into())
}

pub fn router(coordinator: Arc<Coordinator>) -> Router {
    let api = Router::new()
        .route("/api/health", get(health))
        .route("/api/assignments", get(assignments))
        .route("/api/assignments/{id}/outcome", post(submit_outcome))
        .route("/api/progress", get(progress))
        .route("/api/{*rest}", get(not_found).post(not_found));
    let app = match &coordinator.static_dir {
        Some(dir) => api.fallback_service(tower_http::services::ServeDir::new(dir)),
        None => api.fallback(not_found),
    };
    app.with_state(coordinator)
}

/// Serves until `shutdown` resolves, then writes a final snapshot.
pub async fn serve(
    listener: TcpListener,
    coordinator: Arc<Coordinator>,
    shutdown: impl Future<Output = ()> + Send + 'static,
) -> std::io::Result<()> {
    tracing::info!(addr = ?listener.local_addr()?, "coordinator listening");
    axum::serve(listener, router(Arc::clone(&coordinator)))
        .with_graceful_shutdown(shutdown)
        .await?;
    coordinator
        .with_ledger(|l| l.write_snapshot(Utc::now()))
        .map_err(|e| std::io::Error::other(e.to_string()))?;
    Ok(())
}
