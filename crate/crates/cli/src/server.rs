//! HTTP API for answering queries of a human-mode run.
//!
//! Every mutation goes through one mutex around the learner, so duplicate
//! answers to a query are serialized: the first wins, the second gets 409.
//! When the last pending query of a round is answered or skipped the round
//! is closed (sieve and retrain) and the next batch selected before the
//! response is sent.

use std::net::SocketAddr;
use std::sync::{Arc, Mutex, MutexGuard};

use axum::extract::{Path, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use serde_json::json;
use spal_core::learner::{ActiveLearner, Phase, RoundSummary};
use spal_core::overlay::{encode_rgb_png, encode_rgba_png, region_overlay};
use spal_core::Error;
use tokio::sync::watch;

pub struct Service {
    learner: Mutex<ActiveLearner>,
    finished: watch::Sender<bool>,
    summaries: Mutex<Vec<RoundSummary>>,
}

pub type Shared = Arc<Service>;

impl Service {
    /// Wraps a learner, selecting the next batch if no round is open.
    pub fn new(mut learner: ActiveLearner) -> spal_core::Result<Shared> {
        if learner.state().phase == Phase::Ready {
            learner.begin_round()?;
        }
        let (finished, _) = watch::channel(learner.is_finished());
        Ok(Arc::new(Self {
            learner: Mutex::new(learner),
            finished,
            summaries: Mutex::new(Vec::new()),
        }))
    }

    pub fn lock(&self) -> MutexGuard<'_, ActiveLearner> {
        self.learner.lock().unwrap_or_else(|e| e.into_inner())
    }

    pub fn subscribe(&self) -> watch::Receiver<bool> {
        self.finished.subscribe()
    }

    /// Summaries of the rounds closed through the API so far.
    pub fn summaries(&self) -> Vec<RoundSummary> {
        self.summaries.lock().unwrap_or_else(|e| e.into_inner()).clone()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Progress {
    pub round: u32,
    pub phase: Phase,
    pub pending: usize,
    pub answered: usize,
    pub clicks_spent: u64,
}

fn progress_of(learner: &ActiveLearner) -> Progress {
    let s = learner.state();
    Progress {
        round: s.round,
        phase: s.phase,
        pending: s.num_pending(),
        answered: s.num_answered(),
        clicks_spent: s.clicks(),
    }
}

#[derive(Debug, Deserialize)]
pub struct AnswerBody {
    pub class_id: u64,
}

struct ApiError(StatusCode, String);

impl From<Error> for ApiError {
    fn from(e: Error) -> Self {
        let status = match e {
            Error::QueryNotFound(_) | Error::UnknownImage(_) => StatusCode::NOT_FOUND,
            Error::QueryClosed(_) | Error::State(_) => StatusCode::CONFLICT,
            Error::ClassOutOfRange { .. } => StatusCode::UNPROCESSABLE_ENTITY,
            _ => StatusCode::INTERNAL_SERVER_ERROR,
        };
        ApiError(status, e.to_string())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.0, Json(json!({ "error": self.1 }))).into_response()
    }
}

type ApiResult<T> = Result<T, ApiError>;

pub fn router(service: Shared) -> Router {
    Router::new()
        .route("/api/progress", get(progress))
        .route("/api/queries/next", get(next_query))
        .route("/api/queries/{id}/answer", post(answer))
        .route("/api/queries/{id}/skip", post(skip))
        .route("/img/{file}", get(image))
        .route("/overlay/{file}", get(overlay))
        .with_state(service)
}

async fn blocking<T: Send + 'static>(
    service: Shared,
    f: impl FnOnce(&Service) -> ApiResult<T> + Send + 'static,
) -> ApiResult<T> {
    tokio::task::spawn_blocking(move || f(&service))
        .await
        .map_err(|e| ApiError(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()))?
}

async fn progress(State(service): State<Shared>) -> Json<Progress> {
    Json(progress_of(&service.lock()))
}

async fn next_query(State(service): State<Shared>) -> Response {
    let learner = service.lock();
    let Some(q) = learner.state().pending().next() else {
        return StatusCode::NO_CONTENT.into_response();
    };
    Json(json!({
        "query_id": q.query_id,
        "image_id": q.image_id,
        "round": q.round,
        "pixel_count": q.pixels.len(),
        "class_names": learner.settings().class_names(),
        "image_url": format!("/img/{}.png", q.image_id),
        "overlay_url": format!("/overlay/{}.png", q.query_id),
    }))
    .into_response()
}

/// Closes the round once nothing is pending and opens the next one.
fn advance(service: &Service, learner: &mut ActiveLearner) -> spal_core::Result<bool> {
    if learner.state().phase != Phase::Querying || learner.state().num_pending() > 0 {
        return Ok(false);
    }
    let summary = learner.finish_round()?;
    service.summaries.lock().unwrap_or_else(|e| e.into_inner()).push(summary);
    if learner.is_finished() {
        service.finished.send_replace(true);
    } else {
        learner.begin_round()?;
    }
    Ok(true)
}

async fn answer(
    State(service): State<Shared>,
    Path(id): Path<u64>,
    Json(body): Json<AnswerBody>,
) -> ApiResult<Json<serde_json::Value>> {
    blocking(service, move |service| {
        let mut learner = service.lock();
        let class_id = u16::try_from(body.class_id).unwrap_or(u16::MAX);
        learner.answer(id, class_id)?;
        learner.checkpoint()?;
        let advanced = advance(service, &mut learner)?;
        Ok(Json(json!({ "advanced": advanced, "progress": progress_of(&learner) })))
    })
    .await
}

async fn skip(State(service): State<Shared>, Path(id): Path<u64>) -> ApiResult<Json<serde_json::Value>> {
    blocking(service, move |service| {
        let mut learner = service.lock();
        let refill = learner.skip(id)?;
        learner.checkpoint()?;
        let advanced = advance(service, &mut learner)?;
        Ok(Json(json!({
            "refill_query_id": refill,
            "advanced": advanced,
            "progress": progress_of(&learner),
        })))
    })
    .await
}

fn png_id(file: &str) -> ApiResult<u64> {
    file.strip_suffix(".png")
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| ApiError(StatusCode::NOT_FOUND, format!("no such file {file}")))
}

fn png(bytes: Vec<u8>) -> Response {
    ([(header::CONTENT_TYPE, "image/png")], bytes).into_response()
}

async fn image(State(service): State<Shared>, Path(file): Path<String>) -> ApiResult<Response> {
    let id = u32::try_from(png_id(&file)?).map_err(|_| Error::UnknownImage(u32::MAX))?;
    let learner = service.lock();
    let img = learner.image(id).ok_or(Error::UnknownImage(id))?;
    Ok(png(encode_rgb_png(&img.image)?))
}

async fn overlay(State(service): State<Shared>, Path(file): Path<String>) -> ApiResult<Response> {
    let qid = png_id(&file)?;
    let learner = service.lock();
    let q = learner.state().query(qid).ok_or(Error::QueryNotFound(qid))?;
    let img = learner.image(q.image_id).ok_or(Error::UnknownImage(q.image_id))?;
    let (w, h) = (img.image.width(), img.image.height());
    Ok(png(encode_rgba_png(w, h, region_overlay(w, h, &q.pixels))?))
}

/// Serves the API until the run finishes or the process is interrupted.
pub async fn serve(service: Shared, addr: SocketAddr) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    eprintln!("annotation API listening on http://{}", listener.local_addr()?);
    let mut done = service.subscribe();
    axum::serve(listener, router(service))
        .with_graceful_shutdown(async move {
            tokio::select! {
                _ = done.wait_for(|&f| f) => {}
                _ = tokio::signal::ctrl_c() => {}
            }
        })
        .await
}
