//! HTTP JSON API over a glyph manifest: browsing, annotation with
//! optimistic concurrency, class statistics and model-assisted labeling.

pub mod error;
pub mod models;
pub mod store;

use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{Path as UrlPath, Query, State};
use axum::http::header;
use axum::response::IntoResponse;
use axum::routing::{get, post, put};
use axum::{Json, Router};
use base64::Engine;
use glyphforge_core::dataset::stats::class_sizes;
use glyphforge_core::dataset::{class_histogram, Sample};
use glyphforge_core::GrayImage;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use tower_http::services::ServeDir;

pub use error::{ServiceError, ServiceResult};
pub use models::{ModelInfo, ModelRegistry};
pub use store::{audit_path_for, version_token, AnnotationUpdate, AuditEntry, CrashHook, Store};

pub const MAX_PAGE_SIZE: usize = 200;
pub const DEFAULT_PAGE_SIZE: usize = 50;
pub const DEFAULT_TOP_K: usize = 5;

#[derive(Clone)]
pub struct AppState {
    pub store: Arc<Store>,
    pub models: Arc<ModelRegistry>,
}

impl AppState {
    pub fn open(manifest: &Path, models_dir: Option<PathBuf>) -> Result<Self, glyphforge_core::Error> {
        Ok(Self { store: Arc::new(Store::open(manifest)?), models: Arc::new(ModelRegistry::new(models_dir)) })
    }
}

/// API routes, plus the UI bundle served from `ui_dir` at `/` when given.
pub fn router(state: AppState, ui_dir: Option<&Path>) -> Router {
    let api = Router::new()
        .route("/api/samples", get(list_samples))
        .route("/api/samples/{id}", get(get_sample))
        .route("/api/samples/{id}/image", get(get_image))
        .route("/api/samples/{id}/annotation", put(annotate))
        .route("/api/stats/class-histogram", get(stats))
        .route("/api/models", get(list_models))
        .route("/api/predict", post(predict))
        .with_state(state);
    match ui_dir {
        Some(dir) => api.fallback_service(ServeDir::new(dir)),
        None => api,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SampleView {
    pub id: String,
    pub image_path: String,
    pub index: String,
    pub character: String,
    pub split: String,
    pub labeled: bool,
    pub version: String,
    pub image_url: String,
}

impl SampleView {
    fn new(s: &Sample, version: String) -> Self {
        Self {
            id: s.id.clone(),
            image_path: s.image_path.clone(),
            index: s.index.to_string(),
            character: s.character.clone(),
            split: s.split.to_string(),
            labeled: s.is_labeled(),
            version,
            image_url: format!("/api/samples/{}/image", s.id),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SamplePage {
    pub total: usize,
    pub page: usize,
    pub page_size: usize,
    pub items: Vec<SampleView>,
}

fn parse_usize(q: &HashMap<String, String>, key: &str, default: usize) -> ServiceResult<usize> {
    match q.get(key) {
        None => Ok(default),
        Some(v) => v.parse().map_err(|_| ServiceError::BadPageParams(format!("{key} must be a non-negative integer"))),
    }
}

fn parse_json<T: for<'de> Deserialize<'de>>(body: &Bytes) -> ServiceResult<T> {
    serde_json::from_slice(body).map_err(|e| ServiceError::BadRequest(format!("invalid request body: {e}")))
}

/// `?class=&unlabeled=&page=&page_size=`; pages are zero-based and
/// `page_size` is capped at [`MAX_PAGE_SIZE`].
async fn list_samples(
    State(st): State<AppState>,
    Query(q): Query<HashMap<String, String>>,
) -> ServiceResult<Json<SamplePage>> {
    let page = parse_usize(&q, "page", 0)?;
    let page_size = parse_usize(&q, "page_size", DEFAULT_PAGE_SIZE)?;
    if page_size == 0 {
        return Err(ServiceError::BadPageParams("page_size must be at least 1".into()));
    }
    let page_size = page_size.min(MAX_PAGE_SIZE);
    let unlabeled = match q.get("unlabeled").map(String::as_str) {
        None | Some("false") | Some("0") => false,
        Some("true") | Some("1") => true,
        Some(other) => return Err(ServiceError::BadPageParams(format!("unlabeled must be true or false, got {other:?}"))),
    };
    let class = q.get("class").filter(|c| !c.is_empty()).cloned();
    let matching: Vec<Sample> = st.store.read(|m| {
        m.samples
            .iter()
            .filter(|s| !unlabeled || !s.is_labeled())
            .filter(|s| class.as_ref().is_none_or(|c| &s.character == c))
            .cloned()
            .collect()
    });
    let items = matching
        .iter()
        .skip(page.saturating_mul(page_size))
        .take(page_size)
        .map(|s| SampleView::new(s, st.store.version_of(s)))
        .collect();
    Ok(Json(SamplePage { total: matching.len(), page, page_size, items }))
}

async fn get_sample(State(st): State<AppState>, UrlPath(id): UrlPath<String>) -> ServiceResult<Json<SampleView>> {
    let (s, v) = st.store.get(&id)?;
    Ok(Json(SampleView::new(&s, v)))
}

async fn get_image(State(st): State<AppState>, UrlPath(id): UrlPath<String>) -> ServiceResult<impl IntoResponse> {
    let (s, _) = st.store.get(&id)?;
    let path = st.store.read(|m| m.image_path(&s));
    let bytes = tokio::fs::read(&path).await.map_err(|e| ServiceError::Internal(format!("{}: {e}", path.display())))?;
    Ok(([(header::CONTENT_TYPE, "image/png")], bytes))
}

async fn annotate(
    State(st): State<AppState>,
    UrlPath(id): UrlPath<String>,
    body: Bytes,
) -> ServiceResult<Json<SampleView>> {
    let update: AnnotationUpdate = parse_json(&body)?;
    let store = st.store.clone();
    let (s, v) = tokio::task::spawn_blocking(move || store.annotate(&id, &update))
        .await
        .map_err(|e| ServiceError::Internal(e.to_string()))??;
    Ok(Json(SampleView::new(&s, v)))
}

async fn stats(State(st): State<AppState>) -> Json<Value> {
    Json(st.store.read(|m| {
        let sizes = class_sizes(m);
        let classes: Vec<Value> =
            m.classes.iter().zip(&sizes).map(|(c, n)| json!({ "character": c, "count": n })).collect();
        let unlabeled = m.samples.iter().filter(|s| !s.is_labeled()).count();
        json!({ "histogram": class_histogram(m), "classes": classes, "unlabeled": unlabeled })
    }))
}

async fn list_models(State(st): State<AppState>) -> Json<Value> {
    Json(json!({ "models": st.models.list() }))
}

#[derive(Clone, Debug, Deserialize)]
pub struct PredictRequest {
    pub model: String,
    #[serde(default)]
    pub sample_id: Option<String>,
    /// Base64-encoded PNG, used when `sample_id` is absent.
    #[serde(default)]
    pub image_png_base64: Option<String>,
    #[serde(default)]
    pub k: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub class_index: usize,
    pub character: String,
    pub probability: f64,
}

async fn predict(State(st): State<AppState>, body: Bytes) -> ServiceResult<Json<Value>> {
    let req: PredictRequest = parse_json(&body)?;
    let image = match (&req.sample_id, &req.image_png_base64) {
        (Some(id), _) => {
            let (s, _) = st.store.get(id)?;
            st.store.read(|m| m.load_image(&s)).map_err(ServiceError::from)?
        }
        (None, Some(b64)) => {
            let bytes = base64::engine::general_purpose::STANDARD
                .decode(b64.trim())
                .map_err(|e| ServiceError::BadImage(format!("invalid base64: {e}")))?;
            GrayImage::decode_png(&bytes).map_err(|e| ServiceError::BadImage(e.to_string()))?
        }
        (None, None) => return Err(ServiceError::BadRequest("give sample_id or image_png_base64".into())),
    };
    let model = st.models.get(&req.model)?;
    let k = req.k.unwrap_or(DEFAULT_TOP_K);
    let probs = tokio::task::spawn_blocking(move || model.predict_proba(&image).map(|p| (p, model)))
        .await
        .map_err(|e| ServiceError::Internal(e.to_string()))?
        .map_err(ServiceError::from)?;
    let (probs, model) = probs;
    let predictions: Vec<Prediction> = probs
        .top_k(k)
        .into_iter()
        .map(|(c, p)| Prediction { class_index: c, character: model.classes[c].clone(), probability: p })
        .collect();
    Ok(Json(json!({ "model": req.model, "predictions": predictions })))
}

/// Serves until the listener fails.
pub async fn serve(listener: tokio::net::TcpListener, app: Router) -> std::io::Result<()> {
    axum::serve(listener, app).await
}
