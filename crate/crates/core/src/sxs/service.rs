//! HTTP service for side-by-side annotation.
//!
//! | method | path | body / reply |
//! |--------|------|--------------|
//! | GET  | `/api/assignment?rater=<id>[&task=<t>]` | [`AssignmentView`], or 204 when nothing is left |
//! | POST | `/api/response` | [`ResponseSubmission`] → stored [`SxSRecord`] (201); 409 on duplicate |
//! | GET  | `/api/progress` | [`Progress`] |
//! | GET  | `/api/report` | the report document, byte-identical to offline ingestion of the log |
//! | GET  | `/` | static assets, or a short built-in page |
//!
//! Errors are JSON objects `{"error": <kind>, "message": <text>}`.
//!
//! Every accepted response is appended to the log and flushed to disk before
//! the reply is sent. Restarting on an existing log resumes where it left off.

use std::collections::{BTreeMap, BTreeSet};
use std::fs::{File, OpenOptions};
use std::future::Future;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex, MutexGuard};

use axum::extract::{Query, State};
use axum::http::{header, StatusCode};
use axum::response::{Html, IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use tower_http::services::ServeDir;

use super::{
    check_record, ingest_sxs, parse_sxs_log, report_to_string, sxs_log_header, AnnotationPlan, Choice, Side,
    SxSRecord,
};
use crate::error::{Error, Result};

/// What a rater is shown for one assignment.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AssignmentView {
    pub assignment_id: String,
    pub pair_id: String,
    pub task: String,
    pub left_image_ref: String,
    pub right_image_ref: String,
    pub prompt_text: String,
}

/// Body of `POST /api/response`. `left_model` is filled from the plan when
/// omitted and must match it when given; `timestamp` defaults to the
/// server clock.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ResponseSubmission {
    pub pair_id: String,
    pub task: String,
    pub rater_id: String,
    pub choice: Choice,
    pub response_ms: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub left_model: Option<Side>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub timestamp: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskProgress {
    pub task: String,
    pub completed: usize,
    pub total: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Progress {
    pub total: usize,
    pub completed: usize,
    /// Handed out and not yet answered.
    pub in_flight: usize,
    pub remaining: usize,
    pub per_task: Vec<TaskProgress>,
}

struct Inner {
    plan: AnnotationPlan,
    log: File,
    records: Vec<SxSRecord>,
    seen: BTreeMap<(String, String), Vec<(String, Side)>>,
    /// Assignment index → rater holding it.
    claims: BTreeMap<usize, String>,
    completed: BTreeSet<usize>,
    /// (pair, task) → assignment indices.
    slots: BTreeMap<(String, String), Vec<usize>>,
}

impl Inner {
    fn rater_touched(&self, rater: &str, pair: &str, task: &str) -> bool {
        self.slots[&(pair.to_string(), task.to_string())]
            .iter()
            .any(|i| self.claims.get(i).is_some_and(|r| r == rater))
            || self
                .seen
                .get(&(pair.to_string(), task.to_string()))
                .is_some_and(|v| v.iter().any(|(r, _)| r == rater))
    }

    fn view(&self, idx: usize) -> AssignmentView {
        let a = &self.plan.assignments[idx];
        let media = self.plan.media_for(&a.pair_id);
        let (left, right) = match a.left_model {
            Side::A => (media.image_a_ref, media.image_b_ref),
            Side::B => (media.image_b_ref, media.image_a_ref),
        };
        AssignmentView {
            assignment_id: a.assignment_id.clone(),
            pair_id: a.pair_id.clone(),
            task: a.task.clone(),
            left_image_ref: left,
            right_image_ref: right,
            prompt_text: media.prompt_text,
        }
    }

    /// A free slot for `(pair, task)`, preferring the rater's own claim.
    fn slot_for(&self, rater: &str, pair: &str, task: &str, side: Option<Side>) -> Option<usize> {
        let candidates = self.slots.get(&(pair.to_string(), task.to_string()))?;
        let fits = |i: &&usize| side.is_none_or(|s| self.plan.assignments[**i].left_model == s);
        candidates
            .iter()
            .filter(fits)
            .find(|i| self.claims.get(i).is_some_and(|r| r == rater) && !self.completed.contains(i))
            .or_else(|| {
                candidates
                    .iter()
                    .filter(fits)
                    .find(|i| !self.claims.contains_key(i) && !self.completed.contains(i))
            })
            .copied()
    }

    fn accept(&mut self, idx: usize, rec: SxSRecord) {
        self.claims.remove(&idx);
        self.completed.insert(idx);
        self.seen
            .entry((rec.pair_id.clone(), rec.task.clone()))
            .or_default()
            .push((rec.rater_id.clone(), rec.left_model));
        self.records.push(rec);
    }
}

/// Shared handle to the annotation state; cheap to clone.
#[derive(Clone)]
pub struct AnnotationService {
    inner: Arc<Mutex<Inner>>,
}

impl AnnotationService {
    /// Open (or create) the response log at `log_path` and replay it.
    pub fn open(plan: AnnotationPlan, log_path: &Path) -> Result<Self> {
        plan.validate()?;
        let existing = match std::fs::read_to_string(log_path) {
            Ok(text) if !text.trim().is_empty() => parse_sxs_log(&text, &log_path.display().to_string())?,
            Ok(_) => Vec::new(),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Vec::new(),
            Err(e) => return Err(Error::io(log_path, e)),
        };
        let fresh = std::fs::metadata(log_path).map(|m| m.len() == 0).unwrap_or(true);
        let mut log = OpenOptions::new()
            .create(true)
            .append(true)
            .open(log_path)
            .map_err(|e| Error::io(log_path, e))?;
        if fresh {
            log.write_all(sxs_log_header().as_bytes())
                .and_then(|_| log.sync_data())
                .map_err(|e| Error::io(log_path, e))?;
        }
        let mut slots: BTreeMap<(String, String), Vec<usize>> = BTreeMap::new();
        for (i, a) in plan.assignments.iter().enumerate() {
            slots.entry((a.pair_id.clone(), a.task.clone())).or_default().push(i);
        }
        for v in slots.values_mut() {
            v.sort_by_key(|&i| plan.assignments[i].slot);
        }
        let mut inner = Inner {
            plan,
            log,
            records: Vec::new(),
            seen: BTreeMap::new(),
            claims: BTreeMap::new(),
            completed: BTreeSet::new(),
            slots,
        };
        for rec in existing {
            check_record(&inner.plan, &rec, &inner.seen)?;
            let idx = inner
                .slot_for(&rec.rater_id, &rec.pair_id, &rec.task, Some(rec.left_model))
                .ok_or_else(|| Error::UnknownAssignment(format!("{}/{}", rec.pair_id, rec.task)))?;
            inner.accept(idx, rec);
        }
        Ok(Self { inner: Arc::new(Mutex::new(inner)) })
    }

    fn lock(&self) -> MutexGuard<'_, Inner> {
        self.inner.lock().unwrap_or_else(|p| p.into_inner())
    }

    /// The rater's outstanding assignment, or the first free one in plan
    /// order whose (pair, task) the rater has not seen yet.
    pub fn next_assignment(&self, rater: &str, task: Option<&str>) -> Option<AssignmentView> {
        let mut g = self.lock();
        let task_ok = |t: &str| task.is_none_or(|want| want == t);
        let own = g
            .claims
            .iter()
            .find(|(i, r)| *r == rater && task_ok(&g.plan.assignments[**i].task))
            .map(|(i, _)| *i);
        let idx = own.or_else(|| {
            (0..g.plan.assignments.len()).find(|&i| {
                let a = &g.plan.assignments[i];
                task_ok(&a.task)
                    && !g.completed.contains(&i)
                    && !g.claims.contains_key(&i)
                    && !g.rater_touched(rater, &a.pair_id, &a.task)
            })
        })?;
        g.claims.insert(idx, rater.to_string());
        Some(g.view(idx))
    }

    /// Validate, durably append and record one response.
    pub fn submit(&self, sub: ResponseSubmission) -> Result<SxSRecord> {
        let mut g = self.lock();
        let key = (sub.pair_id.clone(), sub.task.clone());
        if !g.slots.contains_key(&key) {
            return Err(Error::UnknownAssignment(format!("{}/{}", sub.pair_id, sub.task)));
        }
        if g.seen.get(&key).is_some_and(|v| v.iter().any(|(r, _)| *r == sub.rater_id)) {
            return Err(Error::Duplicate { pair_id: sub.pair_id, task: sub.task, rater_id: sub.rater_id });
        }
        let idx = g
            .slot_for(&sub.rater_id, &sub.pair_id, &sub.task, None)
            .ok_or_else(|| Error::Conflict(format!("all slots for {}/{} are taken", sub.pair_id, sub.task)))?;
        let side = g.plan.assignments[idx].left_model;
        if sub.left_model.is_some_and(|s| s != side) {
            return Err(Error::invalid(format!("left_model does not match the plan for {}", g.plan.assignments[idx].assignment_id)));
        }
        let rec = SxSRecord {
            pair_id: sub.pair_id,
            task: sub.task,
            rater_id: sub.rater_id,
            choice: sub.choice,
            left_model: side,
            response_ms: sub.response_ms,
            timestamp: sub
                .timestamp
                .unwrap_or_else(|| chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Millis, true)),
        };
        check_record(&g.plan, &rec, &g.seen)?;
        let mut line = serde_json::to_string(&rec)?;
        line.push('\n');
        g.log
            .write_all(line.as_bytes())
            .and_then(|_| g.log.sync_data())
            .map_err(|e| Error::io("response log", e))?;
        g.accept(idx, rec.clone());
        Ok(rec)
    }

    pub fn progress(&self) -> Progress {
        let g = self.lock();
        let per_task = g
            .plan
            .tasks
            .iter()
            .map(|t| TaskProgress {
                task: t.clone(),
                completed: g.completed.iter().filter(|&&i| g.plan.assignments[i].task == *t).count(),
                total: g.plan.assignments.iter().filter(|a| a.task == *t).count(),
            })
            .collect();
        let total = g.plan.assignments.len();
        Progress {
            total,
            completed: g.completed.len(),
            in_flight: g.claims.len(),
            remaining: total - g.completed.len(),
            per_task,
        }
    }

    /// Accepted records, in arrival order.
    pub fn records(&self) -> Vec<SxSRecord> {
        self.lock().records.clone()
    }

    /// The report document, identical to `report_to_string(ingest_sxs(log))`.
    pub fn report(&self) -> Result<String> {
        let g = self.lock();
        report_to_string(&ingest_sxs(&g.records, &g.plan)?)
    }

    pub fn router(&self, static_dir: Option<PathBuf>) -> Router {
        let api = Router::new()
            .route("/api/assignment", get(get_assignment))
            .route("/api/response", post(post_response))
            .route("/api/progress", get(get_progress))
            .route("/api/report", get(get_report))
            .with_state(self.clone());
        match static_dir {
            Some(dir) => api.fallback_service(ServeDir::new(dir)),
            None => api.route("/", get(|| async { Html(INDEX_HTML) })),
        }
    }

    /// Serve on `listener` until `shutdown` resolves.
    pub async fn serve<F>(self, listener: tokio::net::TcpListener, static_dir: Option<PathBuf>, shutdown: F) -> Result<()>
    where
        F: Future<Output = ()> + Send + 'static,
    {
        let app = self.router(static_dir);
        axum::serve(listener, app)
            .with_graceful_shutdown(shutdown)
            .await
            .map_err(|e| Error::io("annotation service", e))
    }
}

const INDEX_HTML: &str = "<!doctype html><title>annotation service</title>\
<p>No UI bundle configured. API: <code>GET /api/assignment?rater=ID</code>, \
<code>POST /api/response</code>, <code>GET /api/progress</code>, <code>GET /api/report</code>.</p>\n";

struct ApiError(Error);

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let status = match &self.0 {
            Error::Duplicate { .. } | Error::Conflict(_) => StatusCode::CONFLICT,
            Error::UnknownAssignment(_) => StatusCode::NOT_FOUND,
            Error::Io { .. } => StatusCode::INTERNAL_SERVER_ERROR,
            _ => StatusCode::BAD_REQUEST,
        };
        if status == StatusCode::INTERNAL_SERVER_ERROR {
            log::error!("{}", self.0);
        }
        let body = serde_json::json!({ "error": self.0.kind(), "message": self.0.to_string() });
        (status, Json(body)).into_response()
    }
}

#[derive(Deserialize)]
struct AssignmentQuery {
    rater: String,
    task: Option<String>,
}

async fn get_assignment(State(svc): State<AnnotationService>, Query(q): Query<AssignmentQuery>) -> Response {
    if q.rater.trim().is_empty() {
        return ApiError(Error::invalid("rater must be nonempty")).into_response();
    }
    match svc.next_assignment(&q.rater, q.task.as_deref()) {
        Some(view) => Json(view).into_response(),
        None => StatusCode::NO_CONTENT.into_response(),
    }
}

async fn post_response(State(svc): State<AnnotationService>, Json(sub): Json<ResponseSubmission>) -> Response {
    match tokio::task::spawn_blocking(move || svc.submit(sub)).await {
        Ok(Ok(rec)) => (StatusCode::CREATED, Json(rec)).into_response(),
        Ok(Err(e)) => ApiError(e).into_response(),
        Err(e) => ApiError(Error::io("response writer", std::io::Error::other(e))).into_response(),
    }
}

async fn get_progress(State(svc): State<AnnotationService>) -> Json<Progress> {
    Json(svc.progress())
}

async fn get_report(State(svc): State<AnnotationService>) -> Response {
    match svc.report() {
        Ok(text) => ([(header::CONTENT_TYPE, "application/json")], text).into_response(),
        Err(e) => ApiError(e).into_response(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sxs::{build_annotation_plan, read_sxs_log, DisagreementPair};

    fn plan() -> AnnotationPlan {
        let pairs: Vec<_> = (0..2)
            .map(|i| DisagreementPair {
                pair_id: format!("pair:p{i}"),
                prompt_id: format!("p{i}"),
                item_a: format!("a{i}"),
                item_b: format!("b{i}"),
                score_gap: 1.0,
            })
            .collect();
        build_annotation_plan(&pairs, &["aggregate".into(), "bright".into()], 2, 3).unwrap()
    }

    fn answer(view: &AssignmentView, rater: &str, choice: Choice) -> ResponseSubmission {
        ResponseSubmission {
            pair_id: view.pair_id.clone(),
            task: view.task.clone(),
            rater_id: rater.into(),
            choice,
            response_ms: 1000,
            left_model: None,
            timestamp: Some("2024-01-01T00:00:00Z".into()),
        }
    }

    #[test]
    fn first_assignment_follows_plan_order_and_is_sticky() {
        let dir = tempfile::tempdir().unwrap();
        let p = plan();
        let svc = AnnotationService::open(p.clone(), &dir.path().join("log.jsonl")).unwrap();
        let v = svc.next_assignment("r1", None).unwrap();
        assert_eq!(v.assignment_id, p.assignments[0].assignment_id);
        assert_eq!(svc.next_assignment("r1", None).unwrap(), v);
        let other = svc.next_assignment("r2", None).unwrap();
        assert_ne!(other.assignment_id, v.assignment_id);
        assert_eq!(svc.progress().in_flight, 2);
    }

    #[test]
    fn duplicate_is_rejected_and_store_unchanged() {
        let dir = tempfile::tempdir().unwrap();
        let log = dir.path().join("log.jsonl");
        let svc = AnnotationService::open(plan(), &log).unwrap();
        let v = svc.next_assignment("r1", None).unwrap();
        svc.submit(answer(&v, "r1", Choice::Left)).unwrap();
        let before = std::fs::read(&log).unwrap();
        let err = svc.submit(answer(&v, "r1", Choice::Right)).unwrap_err();
        assert!(matches!(err, Error::Duplicate { .. }));
        assert_eq!(std::fs::read(&log).unwrap(), before);
        assert_eq!(svc.records().len(), 1);
    }

    #[test]
    fn completing_everything_matches_offline_ingest_and_survives_restart() {
        let dir = tempfile::tempdir().unwrap();
        let log = dir.path().join("log.jsonl");
        let p = plan();
        let svc = AnnotationService::open(p.clone(), &log).unwrap();
        let choices = [Choice::Left, Choice::Right, Choice::Unsure];
        let mut n = 0;
        for rater in ["r1", "r2", "r3"] {
            while let Some(v) = svc.next_assignment(rater, None) {
                svc.submit(answer(&v, rater, choices[n % 3])).unwrap();
                n += 1;
            }
        }
        assert_eq!(n, p.assignments.len());
        let prog = svc.progress();
        assert_eq!((prog.completed, prog.remaining, prog.in_flight), (n, 0, 0));
        let offline = report_to_string(&ingest_sxs(&read_sxs_log(&log).unwrap(), &p).unwrap()).unwrap();
        assert_eq!(svc.report().unwrap(), offline);

        drop(svc);
        let resumed = AnnotationService::open(p, &log).unwrap();
        assert_eq!(resumed.progress().completed, n);
        assert_eq!(resumed.report().unwrap(), offline);
        assert!(resumed.next_assignment("r4", None).is_none());
    }

    #[test]
    fn mismatched_side_and_unknown_pair() {
        let dir = tempfile::tempdir().unwrap();
        let svc = AnnotationService::open(plan(), &dir.path().join("log.jsonl")).unwrap();
        let v = svc.next_assignment("r1", Some("bright")).unwrap();
        assert_eq!(v.task, "bright");
        let a = plan().assignments.into_iter().find(|a| a.assignment_id == v.assignment_id).unwrap();
        let wrong = ResponseSubmission { left_model: Some(a.left_model.other()), ..answer(&v, "r1", Choice::Left) };
        assert!(matches!(svc.submit(wrong), Err(Error::Invalid(_))));
        let unknown = ResponseSubmission { pair_id: "nope".into(), ..answer(&v, "r1", Choice::Left) };
        assert!(matches!(svc.submit(unknown), Err(Error::UnknownAssignment(_))));
    }
}
