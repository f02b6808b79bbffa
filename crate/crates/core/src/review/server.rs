use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::{Arc, Mutex};

use axum::extract::{Path, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use tower_http::services::ServeDir;

use super::{ItemKind, Label, QueueStats, ReviewError, ReviewItem, ReviewQueue};
use crate::imaging::encode_png;

/// The writer lock: every mutation happens under it.
pub type SharedQueue = Arc<Mutex<ReviewQueue>>;

const CROP_SCALE: usize = 8;

#[derive(Serialize)]
struct ItemView {
    id: String,
    form_id: String,
    row_index: usize,
    cell_index: usize,
    kind: ItemKind,
    /// `"0"`-`"9"`, or `"BLANK"`.
    predicted: String,
    confidence: f32,
    crop_url: String,
    status: super::ItemStatus,
    operator_label: Option<Label>,
    #[serde(skip_serializing_if = "Option::is_none")]
    reason: Option<String>,
    labeled: usize,
    total: usize,
}

fn view(item: &ReviewItem, stats: QueueStats) -> ItemView {
    ItemView {
        id: item.id.clone(),
        form_id: item.form_id.clone(),
        row_index: item.row_index,
        cell_index: item.cell_index,
        kind: item.kind,
        predicted: item.predicted.map_or(Label::Blank, Label::Digit).to_string(),
        confidence: item.confidence,
        crop_url: format!("/api/crops/{}.png", item.id),
        status: item.status,
        operator_label: item.operator_label,
        reason: item.reason.clone(),
        labeled: stats.labeled,
        total: stats.total,
    }
}

#[derive(Serialize)]
struct ErrorBody {
    error: String,
}

fn error(status: StatusCode, e: impl ToString) -> Response {
    (status, Json(ErrorBody { error: e.to_string() })).into_response()
}

fn review_error(e: ReviewError) -> Response {
    let status = match e {
        ReviewError::UnknownItem(_) => StatusCode::NOT_FOUND,
        ReviewError::AlreadyLabeled(_) | ReviewError::DuplicateId(_) => StatusCode::CONFLICT,
        ReviewError::BadLabel(_) => StatusCode::BAD_REQUEST,
        _ => StatusCode::INTERNAL_SERVER_ERROR,
    };
    error(status, e)
}

async fn next(State(q): State<SharedQueue>) -> Response {
    let mut q = q.lock().expect("queue lock");
    let stats = q.stats();
    match q.next_pending() {
        Some(item) => Json(view(item, stats)).into_response(),
        None => StatusCode::NO_CONTENT.into_response(),
    }
}

async fn crop(State(q): State<SharedQueue>, Path(file): Path<String>) -> Response {
    let Some(id) = file.strip_suffix(".png") else {
        return error(StatusCode::NOT_FOUND, "crops are served as .png");
    };
    let img = {
        let q = q.lock().expect("queue lock");
        match q.get(id) {
            Some(item) => item.crop.upscale_nearest(CROP_SCALE),
            None => return review_error(ReviewError::UnknownItem(id.to_string())),
        }
    };
    match encode_png(&img) {
        Ok(bytes) => ([(header::CONTENT_TYPE, "image/png")], bytes).into_response(),
        Err(e) => error(StatusCode::INTERNAL_SERVER_ERROR, e),
    }
}

#[derive(Deserialize)]
struct LabelBody {
    label: String,
}

async fn label(State(q): State<SharedQueue>, Path(id): Path<String>, Json(body): Json<LabelBody>) -> Response {
    let label: Label = match body.label.parse() {
        Ok(l) => l,
        Err(e) => return review_error(e),
    };
    let mut q = q.lock().expect("queue lock");
    match q.submit_label(&id, label) {
        Ok(item) => {
            let stats = q.stats();
            Json(view(&item, stats)).into_response()
        }
        Err(e) => review_error(e),
    }
}

async fn stats(State(q): State<SharedQueue>) -> Json<QueueStats> {
    Json(q.lock().expect("queue lock").stats())
}

/// The review API; with `assets`, other paths serve the UI's static files.
pub fn router(queue: SharedQueue, assets: Option<PathBuf>) -> Router {
    let api = Router::new()
        .route("/api/queue/next", get(next))
        .route("/api/crops/{file}", get(crop))
        .route("/api/queue/{id}/label", post(label))
        .route("/api/stats", get(stats))
        .with_state(queue);
    match assets {
        Some(dir) => api.fallback_service(ServeDir::new(dir)),
        None => api,
    }
}

/// Serves until ctrl-c.
pub async fn serve(queue: SharedQueue, addr: SocketAddr, assets: Option<PathBuf>) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    axum::serve(listener, router(queue, assets))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}
