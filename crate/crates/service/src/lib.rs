//! HTTP session backend for questionnaire elicitation and Delphi rounds.
//!
//! One process hosts one study. Requests may run concurrently; mutations
//! take the session's write lock, apply to a copy, snapshot the copy to the
//! study file and only then replace the live state, so a failed request
//! leaves nothing behind.
//!
//! Experts authenticate with the opaque tokens listed in the study's panel;
//! round control uses the study's facilitator token. No response pairs an
//! expert id with anyone's votes or judgments.

use std::collections::{BTreeMap, BTreeSet};
use std::path::PathBuf;
use std::sync::Arc;

use axum::extract::State;
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use thiserror::Error;
use tokio::sync::RwLock;

use panelahp_core::delphi::{DelphiError, Feedback, PoolItem, RoundStatus};
use panelahp_core::group::JudgmentSet;
use panelahp_core::hierarchy::Hierarchy;
use panelahp_core::io::questionnaire::{ingest_questionnaire, QuestionnaireRow};
use panelahp_core::io::report::{emit_report, Report};
use panelahp_core::io::study::{save_study, Study, StudyError};
use panelahp_core::pipeline::{compute, filter_options};
use panelahp_core::priority::{assess, ConsistencyReport, RandomIndexTable};

#[derive(Debug, Error)]
pub enum ApiError {
    #[error("unknown or missing token")]
    Unauthorized,
    #[error("unknown node `{0}`")]
    UnknownNode(String),
    #[error("invalid submission")]
    Invalid(Vec<String>),
    #[error("{0}")]
    Conflict(String),
    #[error("{0}")]
    Unprocessable(String),
    #[error("{0}")]
    Internal(String),
}

#[derive(Serialize)]
struct ErrorBody {
    error: String,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    violations: Vec<String>,
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let status = match &self {
            ApiError::Unauthorized => StatusCode::UNAUTHORIZED,
            ApiError::UnknownNode(_) | ApiError::Invalid(_) | ApiError::Unprocessable(_) => {
                StatusCode::UNPROCESSABLE_ENTITY
            }
            ApiError::Conflict(_) => StatusCode::CONFLICT,
            ApiError::Internal(_) => StatusCode::INTERNAL_SERVER_ERROR,
        };
        let violations = match &self {
            ApiError::Invalid(v) => v.clone(),
            _ => Vec::new(),
        };
        (status, Json(ErrorBody { error: self.to_string(), violations })).into_response()
    }
}

impl From<DelphiError> for ApiError {
    fn from(e: DelphiError) -> Self {
        match e {
            DelphiError::PreviousRoundOpen(_)
            | DelphiError::MaxRoundsExceeded(_)
            | DelphiError::RoundClosed
            | DelphiError::NoVotes => ApiError::Conflict(e.to_string()),
            DelphiError::UnknownItem(_) => ApiError::Invalid(vec![e.to_string()]),
            other => ApiError::Unprocessable(other.to_string()),
        }
    }
}

#[derive(Debug)]
pub struct Session {
    pub id: String,
    pub study: Study,
    /// Snapshot target; `None` keeps the session in memory only.
    pub path: Option<PathBuf>,
    pub ri: RandomIndexTable,
    /// Strictly increases on every applied mutation.
    pub revision: u64,
}

impl Session {
    pub fn new(id: impl Into<String>, study: Study, path: Option<PathBuf>) -> Result<Self, StudyError> {
        let base = path.as_deref().and_then(|p| p.parent());
        let ri = study.ri_table(base)?;
        Ok(Self { id: id.into(), study, path, ri, revision: 0 })
    }

    fn commit(&mut self, study: Study) -> Result<u64, ApiError> {
        if let Some(path) = &self.path {
            save_study(path, &study).map_err(|e| ApiError::Internal(e.to_string()))?;
        }
        self.study = study;
        self.revision += 1;
        Ok(self.revision)
    }
}

pub type SharedSession = Arc<RwLock<Session>>;

pub fn router(session: Session) -> Router {
    let state: SharedSession = Arc::new(RwLock::new(session));
    Router::new()
        .route("/study", get(get_study))
        .route("/judgments", post(post_judgments))
        .route("/delphi/open", post(delphi_open))
        .route("/delphi/vote", post(delphi_vote))
        .route("/delphi/close", post(delphi_close))
        .route("/delphi/feedback", get(delphi_feedback))
        .route("/results", get(get_results))
        .with_state(state)
}

/// Serves until the listener fails or the task is cancelled.
pub async fn serve(listener: tokio::net::TcpListener, session: Session) -> std::io::Result<()> {
    tracing::info!(addr = ?listener.local_addr().ok(), "serving");
    axum::serve(listener, router(session)).await
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeView {
    pub node: String,
    pub children: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundView {
    pub round_number: usize,
    pub status: RoundStatus,
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyView {
    pub session: String,
    pub revision: u64,
    pub name: String,
    pub hierarchy: Hierarchy,
    pub nodes: Vec<NodeView>,
    pub item_pool: Vec<PoolItem>,
    pub round: Option<RoundView>,
    pub threshold: f64,
}

async fn get_study(State(s): State<SharedSession>) -> Json<StudyView> {
    let s = s.read().await;
    let h = &s.study.hierarchy;
    let nodes = h
        .judgment_nodes()
        .into_iter()
        .map(|n| NodeView { node: n.to_string(), children: h.children(n).unwrap_or_default().to_vec() })
        .collect();
    Json(StudyView {
        session: s.id.clone(),
        revision: s.revision,
        name: s.study.name.clone(),
        hierarchy: h.clone(),
        nodes,
        item_pool: s.study.pool.items().to_vec(),
        round: s.study.rounds.last().map(|r| RoundView {
            round_number: r.round_number,
            status: r.status,
            converged: r.converged,
        }),
        threshold: s.study.config.threshold,
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct JudgmentRequest {
    pub token: String,
    pub node: String,
    pub rows: Vec<QuestionnaireRow>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JudgmentResponse {
    pub revision: u64,
    pub node: String,
    pub weights: BTreeMap<String, f64>,
    pub consistency: ConsistencyReport,
}

async fn post_judgments(
    State(s): State<SharedSession>,
    Json(req): Json<JudgmentRequest>,
) -> Result<Json<JudgmentResponse>, ApiError> {
    let mut s = s.write().await;
    let expert = s.study.expert_for_token(&req.token).ok_or(ApiError::Unauthorized)?.to_string();
    let children = s
        .study
        .hierarchy
        .children(&req.node)
        .filter(|c| c.len() >= 2)
        .ok_or_else(|| ApiError::UnknownNode(req.node.clone()))?
        .to_vec();
    let matrix = ingest_questionnaire(&req.rows, &children).map_err(|e| ApiError::Invalid(vec![e.to_string()]))?;
    let report = matrix.validate(s.study.scale());
    if !report.is_empty() {
        return Err(ApiError::Invalid(report.violations.iter().map(ToString::to_string).collect()));
    }
    let (weights, consistency) = assess(&matrix, s.study.config.method, &s.ri, s.study.config.threshold)
        .map_err(|e| ApiError::Unprocessable(e.to_string()))?;

    let mut next = s.study.clone();
    let k = match next.judgments.iter().position(|j| j.respondent_id == expert) {
        Some(k) => k,
        None => {
            next.judgments.push(JudgmentSet::new(expert));
            next.judgments.len() - 1
        }
    };
    next.judgments[k].matrices.insert(req.node.clone(), matrix);
    next.judgments[k].submitted_at = Some(chrono::Utc::now());
    let revision = s.commit(next)?;
    Ok(Json(JudgmentResponse {
        revision,
        node: req.node,
        weights: weights.iter().map(|(l, w)| (l.to_string(), w)).collect(),
        consistency,
    }))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TokenRequest {
    pub token: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct VoteRequest {
    pub token: String,
    pub selection: BTreeSet<String>,
    #[serde(default)]
    pub comment: Option<String>,
}

/// What participants see of a round: relayed counts and comments only.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeedbackView {
    pub revision: u64,
    pub round_number: usize,
    pub status: RoundStatus,
    pub feedback: Feedback,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub retained: Option<BTreeSet<String>>,
    pub converged: bool,
}

fn facilitator(s: &Session, token: &str) -> Result<(), ApiError> {
    match &s.study.config.facilitator_token {
        Some(t) if t == token => Ok(()),
        _ => Err(ApiError::Unauthorized),
    }
}

fn feedback_view(s: &Session) -> Result<FeedbackView, ApiError> {
    let r = s
        .study
        .rounds
        .last()
        .ok_or_else(|| ApiError::Conflict("no round has been opened".into()))?;
    // An open round shows what was relayed into it; a closed one shows its
    // own tally.
    let feedback = match r.status {
        RoundStatus::Open => r.feedback.clone(),
        RoundStatus::Closed => r.summary(&s.study.pool),
    };
    Ok(FeedbackView {
        revision: s.revision,
        round_number: r.round_number,
        status: r.status,
        feedback,
        retained: r.retained.clone(),
        converged: r.converged,
    })
}

async fn delphi_open(
    State(s): State<SharedSession>,
    Json(req): Json<TokenRequest>,
) -> Result<Json<FeedbackView>, ApiError> {
    let mut s = s.write().await;
    facilitator(&s, &req.token)?;
    let mut d = s.study.delphi()?;
    d.open_round()?;
    let mut next = s.study.clone();
    next.store_delphi(&d);
    s.commit(next)?;
    Ok(Json(feedback_view(&s)?))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VoteResponse {
    pub revision: u64,
    pub round_number: usize,
}

async fn delphi_vote(
    State(s): State<SharedSession>,
    Json(req): Json<VoteRequest>,
) -> Result<Json<VoteResponse>, ApiError> {
    let mut s = s.write().await;
    let expert = s.study.expert_for_token(&req.token).ok_or(ApiError::Unauthorized)?.to_string();
    let mut d = s.study.delphi()?;
    d.record_vote(&expert, req.selection, req.comment)?;
    let round_number = d.current().map_or(0, |r| r.round_number);
    let mut next = s.study.clone();
    next.store_delphi(&d);
    let revision = s.commit(next)?;
    Ok(Json(VoteResponse { revision, round_number }))
}

async fn delphi_close(
    State(s): State<SharedSession>,
    Json(req): Json<TokenRequest>,
) -> Result<Json<FeedbackView>, ApiError> {
    let mut s = s.write().await;
    facilitator(&s, &req.token)?;
    let mut d = s.study.delphi()?;
    d.close_round()?;
    let mut next = s.study.clone();
    next.store_delphi(&d);
    s.commit(next)?;
    Ok(Json(feedback_view(&s)?))
}

async fn delphi_feedback(State(s): State<SharedSession>) -> Result<Json<FeedbackView>, ApiError> {
    let s = s.read().await;
    Ok(Json(feedback_view(&s)?))
}

async fn get_results(State(s): State<SharedSession>) -> Result<Json<Report>, ApiError> {
    let s = s.read().await;
    let results = compute(&s.study, &s.ri, filter_options(&s.study))
        .map_err(|e| ApiError::Unprocessable(e.to_string()))?;
    let mut report = emit_report(&results);
    // Counts stay; who failed screening is for the facilitator's CLI only.
    if let Some(screening) = &mut report.screening {
        screening.rejected.clear();
    }
    Ok(Json(report))
}
