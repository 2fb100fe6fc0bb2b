//! Local HTTP service behind the landmark annotator.

use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use axum::body::Bytes;
use axum::extract::{Path as UrlPath, Query, State};
use axum::http::{header, StatusCode};
use axum::response::{Html, IntoResponse, Response};
use axum::routing::get;
use axum::{Json, Router};
use earmetrics_core::augment::{is_image_path, ImageBuffer};
use earmetrics_core::fsutil::write_atomic;
use earmetrics_core::geometry::{LandmarkFile, Violation};
use serde::{Deserialize, Serialize};
use serde_json::json;
use tower_http::services::ServeDir;

pub struct AppState {
    images: PathBuf,
    out: PathBuf,
    locks: Mutex<HashMap<String, Arc<tokio::sync::Mutex<()>>>>,
}

impl AppState {
    pub fn new(images: PathBuf, out: PathBuf) -> Self {
        Self {
            images,
            out,
            locks: Mutex::new(HashMap::new()),
        }
    }

    fn lock_for(&self, id: &str) -> Arc<tokio::sync::Mutex<()>> {
        self.locks
            .lock()
            .expect("lock table poisoned")
            .entry(id.to_string())
            .or_default()
            .clone()
    }

    fn landmark_path(&self, id: &str) -> PathBuf {
        self.out.join(format!("{id}.json"))
    }

    /// Images directly in the image directory keyed by file stem; the first
    /// file in sorted order wins when two share a stem.
    fn scan(&self) -> std::io::Result<Vec<(String, PathBuf)>> {
        let mut files: Vec<PathBuf> = std::fs::read_dir(&self.images)?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.is_file() && is_image_path(p))
            .collect();
        files.sort();
        let mut out: Vec<(String, PathBuf)> = Vec::new();
        for f in files {
            let id = f
                .file_stem()
                .unwrap_or_default()
                .to_string_lossy()
                .into_owned();
            if out.iter().any(|(k, _)| *k == id) {
                log::warn!("ignoring {}: id `{id}` already taken", f.display());
                continue;
            }
            out.push((id, f));
        }
        Ok(out)
    }

    fn find(&self, id: &str) -> Result<PathBuf, ApiError> {
        self.scan()
            .map_err(ApiError::internal)?
            .into_iter()
            .find(|(k, _)| k == id)
            .map(|(_, p)| p)
            .ok_or_else(|| ApiError::not_found(format!("no image with id `{id}`")))
    }
}

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    body: serde_json::Value,
}

impl ApiError {
    fn not_found(message: String) -> Self {
        Self {
            status: StatusCode::NOT_FOUND,
            body: json!({ "error": message }),
        }
    }

    fn internal(e: impl std::fmt::Display) -> Self {
        Self {
            status: StatusCode::INTERNAL_SERVER_ERROR,
            body: json!({ "error": e.to_string() }),
        }
    }

    fn invalid(errors: Vec<Violation>) -> Self {
        Self {
            status: StatusCode::UNPROCESSABLE_ENTITY,
            body: json!({ "errors": errors }),
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(self.body)).into_response()
    }
}

#[derive(Debug, Serialize, Deserialize, PartialEq)]
pub struct ImageEntry {
    pub id: String,
    pub file: String,
    pub annotated: bool,
}

#[derive(Debug, Deserialize)]
struct ListQuery {
    #[serde(default)]
    pending: bool,
}

async fn list_images(
    State(st): State<Arc<AppState>>,
    Query(q): Query<ListQuery>,
) -> Result<Json<Vec<ImageEntry>>, ApiError> {
    let entries = st
        .scan()
        .map_err(ApiError::internal)?
        .into_iter()
        .map(|(id, p)| ImageEntry {
            annotated: st.landmark_path(&id).is_file(),
            file: p
                .file_name()
                .unwrap_or_default()
                .to_string_lossy()
                .into_owned(),
            id,
        })
        .filter(|e| !q.pending || !e.annotated)
        .collect();
    Ok(Json(entries))
}

fn content_type(p: &Path) -> &'static str {
    match p
        .extension()
        .and_then(|e| e.to_str())
        .map(str::to_ascii_lowercase)
        .as_deref()
    {
        Some("png") => "image/png",
        Some("jpg" | "jpeg") => "image/jpeg",
        _ => "application/octet-stream",
    }
}

async fn get_image(
    State(st): State<Arc<AppState>>,
    UrlPath(id): UrlPath<String>,
) -> Result<Response, ApiError> {
    let path = st.find(&id)?;
    let bytes = tokio::fs::read(&path).await.map_err(ApiError::internal)?;
    Ok(([(header::CONTENT_TYPE, content_type(&path))], bytes).into_response())
}

async fn get_landmarks(
    State(st): State<Arc<AppState>>,
    UrlPath(id): UrlPath<String>,
) -> Result<Response, ApiError> {
    st.find(&id)?;
    let lock = st.lock_for(&id);
    let _guard = lock.lock().await;
    match tokio::fs::read(st.landmark_path(&id)).await {
        Ok(bytes) => Ok(([(header::CONTENT_TYPE, "application/json")], bytes).into_response()),
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
            Err(ApiError::not_found(format!("`{id}` has no landmarks yet")))
        }
        Err(e) => Err(ApiError::internal(e)),
    }
}

/// Schema and invariant violations of a posted landmark document.
pub fn validate_submission(
    body: &[u8],
    image_size: Option<(usize, usize)>,
) -> Result<LandmarkFile, Vec<Violation>> {
    let file: LandmarkFile = serde_json::from_slice(body).map_err(|e| {
        vec![Violation {
            field: "body".into(),
            message: e.to_string(),
        }]
    })?;
    let lm = file.to_landmarks();
    let mut errors = lm.violations();
    if let Some((w, h)) = image_size {
        for l in earmetrics_core::geometry::Landmark::ALL {
            let p = lm.get(l);
            if p.x > w as f64 || p.y > h as f64 {
                errors.push(Violation {
                    field: l.name().into(),
                    message: format!("({}, {}) lies outside the {w}×{h} image", p.x, p.y),
                });
            }
        }
    }
    if errors.is_empty() {
        Ok(file)
    } else {
        Err(errors)
    }
}

async fn post_landmarks(
    State(st): State<Arc<AppState>>,
    UrlPath(id): UrlPath<String>,
    body: Bytes,
) -> Result<Response, ApiError> {
    let image = st.find(&id)?;
    let size = ImageBuffer::dimensions(&image).ok();
    let file = validate_submission(&body, size).map_err(ApiError::invalid)?;
    let lock = st.lock_for(&id);
    let _guard = lock.lock().await;
    let path = st.landmark_path(&id);
    let text = file.to_json();
    let write = {
        let path = path.clone();
        let text = text.clone();
        tokio::task::spawn_blocking(move || write_atomic(&path, text.as_bytes()))
    };
    write
        .await
        .map_err(ApiError::internal)?
        .map_err(ApiError::internal)?;
    log::info!("saved {}", path.display());
    Ok(([(header::CONTENT_TYPE, "application/json")], text).into_response())
}

const PLACEHOLDER_PAGE: &str = "<!doctype html>
<html><head><meta charset=\"utf-8\"><title>earmetrics annotate</title></head>
<body>
<h1>earmetrics annotation service</h1>
<p>No UI assets were given (<code>--assets DIR</code>). The API is available:</p>
<ul>
<li><code>GET /api/images</code> (<code>?pending=true</code> for unannotated only)</li>
<li><code>GET /api/image/{id}</code></li>
<li><code>GET /api/landmarks/{id}</code></li>
<li><code>POST /api/landmarks/{id}</code></li>
</ul>
</body></html>
";

async fn placeholder() -> Html<&'static str> {
    Html(PLACEHOLDER_PAGE)
}

pub fn router(state: Arc<AppState>, assets: Option<&Path>) -> Router {
    let api = Router::new()
        .route("/api/images", get(list_images))
        .route("/api/image/{id}", get(get_image))
        .route(
            "/api/landmarks/{id}",
            get(get_landmarks).post(post_landmarks),
        )
        .with_state(state);
    match assets {
        Some(dir) => api.fallback_service(ServeDir::new(dir)),
        None => api.route("/", get(placeholder)),
    }
}

pub async fn serve(
    listener: tokio::net::TcpListener,
    state: Arc<AppState>,
    assets: Option<PathBuf>,
) -> std::io::Result<()> {
    let app = router(state, assets.as_deref());
    axum::serve(listener, app)
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}
