//! HTTP query service over a loaded model and dataset.
//!
//! Routes: `GET /objects`, `GET /objects/{id}/points`,
//! `POST /objects/{id}/query`. Errors are `{error, detail}` JSON.

use std::collections::BTreeMap;
use std::net::SocketAddr;
use std::sync::{Arc, OnceLock};

use axum::extract::{Path, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use find3d_core::bench::BenchmarkObject;
use find3d_core::query::{segment_features, PointFeaturizer, TextEmbedder};
use find3d_core::Mat;
use serde::{Deserialize, Serialize};

use crate::report::QueryJson;

pub type SharedEmbedder = Arc<dyn TextEmbedder + Send + Sync>;
pub type SharedFeaturizer = Arc<dyn PointFeaturizer + Send + Sync>;

struct Entry {
    object: BenchmarkObject,
    features: OnceLock<Result<Arc<Mat<f32>>, String>>,
}

/// Read-only after construction; per-object features are computed on first
/// use and kept.
pub struct ServiceState {
    model: SharedFeaturizer,
    embedder: SharedEmbedder,
    order: Vec<String>,
    objects: BTreeMap<String, Entry>,
}

impl ServiceState {
    pub fn new(model: SharedFeaturizer, embedder: SharedEmbedder, objects: Vec<BenchmarkObject>) -> Self {
        let order = objects.iter().map(|o| o.object_id.clone()).collect();
        let objects = objects
            .into_iter()
            .map(|o| (o.object_id.clone(), Entry { object: o, features: OnceLock::new() }))
            .collect();
        Self { model, embedder, order, objects }
    }

    fn features(&self, id: &str) -> Result<Arc<Mat<f32>>, ApiError> {
        let e = self.objects.get(id).ok_or_else(|| ApiError::not_found(id))?;
        e.features
            .get_or_init(|| self.model.point_features(&e.object.cloud).map(Arc::new).map_err(|e| e.to_string()))
            .clone()
            .map_err(|d| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "model_failed", d))
    }

    /// Query-result body for one object; the same bytes `segment` writes.
    pub fn query(&self, id: &str, queries: &[String]) -> Result<Vec<u8>, ApiError> {
        if !self.objects.contains_key(id) {
            return Err(ApiError::not_found(id));
        }
        if queries.is_empty() {
            return Err(ApiError::new(StatusCode::BAD_REQUEST, "empty_queries", "at least one query is required"));
        }
        let f = self.features(id)?;
        let r = segment_features(&f, queries, &*self.embedder).map_err(|e| match e {
            find3d_core::Error::Embedder { .. } => ApiError::new(StatusCode::BAD_GATEWAY, "embedder_failed", e.to_string()),
            other => ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "query_failed", other.to_string()),
        })?;
        Ok(QueryJson::from(&r).to_bytes())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub error: String,
    pub detail: String,
}

#[derive(Debug)]
pub struct ApiError {
    pub status: StatusCode,
    pub body: ErrorBody,
}

impl ApiError {
    fn new(status: StatusCode, error: &str, detail: impl Into<String>) -> Self {
        Self { status, body: ErrorBody { error: error.into(), detail: detail.into() } }
    }

    fn not_found(id: &str) -> Self {
        Self::new(StatusCode::NOT_FOUND, "not_found", format!("no object `{id}`"))
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(self.body)).into_response()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectSummary {
    pub id: String,
    pub category: String,
    pub n_points: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointsBody {
    pub positions: Vec<[f32; 3]>,
    pub colors: Vec<[f32; 3]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryBody {
    pub queries: Vec<String>,
}

type Shared = Arc<ServiceState>;

async fn list_objects(State(s): State<Shared>) -> Json<Vec<ObjectSummary>> {
    Json(
        s.order
            .iter()
            .map(|id| {
                let o = &s.objects[id].object;
                ObjectSummary { id: id.clone(), category: o.category.clone(), n_points: o.cloud.len() }
            })
            .collect(),
    )
}

async fn object_points(State(s): State<Shared>, Path(id): Path<String>) -> Result<Json<PointsBody>, ApiError> {
    let e = s.objects.get(&id).ok_or_else(|| ApiError::not_found(&id))?;
    let pts = e.object.cloud.points();
    Ok(Json(PointsBody {
        positions: pts.iter().map(|p| p.position.map(|v| v as f32)).collect(),
        colors: pts.iter().map(|p| p.color.map(|v| v as f32)).collect(),
    }))
}

async fn query_object(
    State(s): State<Shared>,
    Path(id): Path<String>,
    body: Result<Json<QueryBody>, axum::extract::rejection::JsonRejection>,
) -> Result<Response, ApiError> {
    let Json(q) = body.map_err(|e| ApiError::new(e.status(), "bad_request", e.body_text()))?;
    let bytes = tokio::task::spawn_blocking(move || s.query(&id, &q.queries))
        .await
        .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", e.to_string()))??;
    Ok(([(header::CONTENT_TYPE, "application/json")], bytes).into_response())
}

async fn fallback() -> ApiError {
    ApiError::new(StatusCode::NOT_FOUND, "not_found", "no such route")
}

pub fn router(state: Arc<ServiceState>) -> Router {
    Router::new()
        .route("/objects", get(list_objects))
        .route("/objects/{id}/points", get(object_points))
        .route("/objects/{id}/query", post(query_object))
        .fallback(fallback)
        .with_state(state)
}

/// Serves until ctrl-c.
pub async fn serve(state: Arc<ServiceState>, addr: SocketAddr) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    eprintln!("listening on http://{}", listener.local_addr()?);
    axum::serve(listener, router(state))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}
