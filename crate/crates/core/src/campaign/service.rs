//! HTTP/JSON surface of the campaign store.
//!
//! Every error body is `{"code": ..., "message": ...}`. The store sits
//! behind one mutex, so requests are applied one at a time; each write is
//! journaled before it becomes visible.

use std::future::Future;
use std::path::{Component, Path, PathBuf};
use std::sync::{Arc, Mutex, MutexGuard};

use axum::extract::rejection::{JsonRejection, QueryRejection};
use axum::extract::{Path as UrlPath, Query, State};
use axum::http::{header, HeaderValue, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::Deserialize;
use serde_json::{json, Value};
use tokio::net::TcpListener;

use super::{CampaignSpec, CampaignStore, ServiceConfig, StoreError};
use crate::hierarchy::Hierarchy;
use crate::localization::{read_manifest, CropRect, ImageRecord, LocalizationStrategy};
use crate::outcomes::{resolve_golds, LabelLine};
use crate::traversal::{AskAnswer, LabelingScheme, TraversalConfig};

#[derive(Clone)]
pub struct AppState {
    pub store: Arc<Mutex<CampaignStore>>,
    /// Version used when a new campaign does not name one.
    pub default_hierarchy: String,
    pub image_root: Option<PathBuf>,
}

impl AppState {
    /// Opens (replaying) the journal and registers the configured hierarchy.
    pub fn open(cfg: &ServiceConfig) -> Result<Self, StoreError> {
        let h = match &cfg.hierarchy {
            Some(p) => Hierarchy::load(p)?,
            None => Hierarchy::musical_instruments(),
        };
        let mut store = CampaignStore::open(&cfg.data_dir)?;
        let default_hierarchy = store.register_hierarchy(&h)?;
        Ok(AppState {
            store: Arc::new(Mutex::new(store)),
            default_hierarchy,
            image_root: cfg.image_root.clone(),
        })
    }

    pub fn with_store(store: CampaignStore, default_hierarchy: String) -> Self {
        AppState {
            store: Arc::new(Mutex::new(store)),
            default_hierarchy,
            image_root: None,
        }
    }

    fn lock(&self) -> MutexGuard<'_, CampaignStore> {
        // A panic mid-request leaves the store consistent: effects are only
        // committed after the journal write succeeded.
        self.store.lock().unwrap_or_else(|p| p.into_inner())
    }
}

struct ApiError {
    status: StatusCode,
    code: &'static str,
    message: String,
}

impl ApiError {
    fn bad_request(message: impl Into<String>) -> Self {
        ApiError {
            status: StatusCode::BAD_REQUEST,
            code: "bad_request",
            message: message.into(),
        }
    }
}

impl From<StoreError> for ApiError {
    fn from(e: StoreError) -> Self {
        use StoreError::*;
        let status = match &e {
            UnknownHierarchy(_) | UnknownCampaign(_) | UnknownTask(_) | UnknownSession(_)
            | UnknownImage(_) => StatusCode::NOT_FOUND,
            DuplicateCampaign(_)
            | DuplicateRecord { .. }
            | WrongStatus { .. }
            | NotTerminal(_)
            | AmbiguousTask(_)
            | EmptyCampaign(_) => StatusCode::CONFLICT,
            Traversal(crate::traversal::TraversalError::Terminal) => StatusCode::CONFLICT,
            Io(_) | CorruptJournal { .. } => StatusCode::INTERNAL_SERVER_ERROR,
            _ => StatusCode::UNPROCESSABLE_ENTITY,
        };
        ApiError {
            status,
            code: e.code(),
            message: e.to_string(),
        }
    }
}

impl From<JsonRejection> for ApiError {
    fn from(e: JsonRejection) -> Self {
        ApiError::bad_request(e.body_text())
    }
}

impl From<QueryRejection> for ApiError {
    fn from(e: QueryRejection) -> Self {
        ApiError::bad_request(e.body_text())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (
            self.status,
            Json(json!({"code": self.code, "message": self.message})),
        )
            .into_response()
    }
}

type ApiResult<T = Json<Value>> = Result<T, ApiError>;

fn to_json(v: impl serde::Serialize) -> Json<Value> {
    Json(serde_json::to_value(v).expect("response serializes"))
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/health", get(health))
        .route("/hierarchies/{version}", get(hierarchy))
        .route("/campaigns", get(list_campaigns).post(create_campaign))
        .route("/campaigns/{id}", get(get_campaign))
        .route("/campaigns/{id}/open", post(open_campaign))
        .route("/campaigns/{id}/close", post(close_campaign))
        .route("/campaigns/{id}/gold", post(load_gold))
        .route("/campaigns/{id}/tasks/next", get(next_task))
        .route("/campaigns/{id}/stats", get(stats))
        .route("/campaigns/{id}/export", get(export))
        .route("/sessions", post(start_session))
        .route("/sessions/{id}", get(get_session))
        .route("/sessions/{id}/question", get(question))
        .route("/sessions/{id}/answer", post(answer))
        .route("/images/{image_id}", get(image))
        .fallback(|| async {
            ApiError {
                status: StatusCode::NOT_FOUND,
                code: "not_found",
                message: "no such route".into(),
            }
        })
        .with_state(state)
}

/// Serves until `shutdown` resolves, then syncs the journal.
pub async fn serve(
    listener: TcpListener,
    state: AppState,
    shutdown: impl Future<Output = ()> + Send + 'static,
) -> std::io::Result<()> {
    let store = state.store.clone();
    axum::serve(listener, router(state))
        .with_graceful_shutdown(shutdown)
        .await?;
    let mut s = store.lock().unwrap_or_else(|p| p.into_inner());
    s.flush().map_err(|e| std::io::Error::other(e.to_string()))
}

async fn health(State(st): State<AppState>) -> Json<Value> {
    let s = st.lock();
    Json(json!({
        "status": "ok",
        "events": s.event_count(),
        "digest": s.digest(),
        "default_hierarchy": st.default_hierarchy,
    }))
}

async fn hierarchy(State(st): State<AppState>, UrlPath(version): UrlPath<String>) -> ApiResult {
    let s = st.lock();
    Ok(to_json(s.hierarchy(&version)?.to_document()))
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct CreateCampaign {
    campaign_id: String,
    #[serde(default)]
    hierarchy_version: Option<String>,
    #[serde(default)]
    images: Option<Vec<ImageRecord>>,
    /// Manifest file name under the image root.
    #[serde(default)]
    dataset: Option<String>,
    #[serde(default)]
    strategy: LocalizationStrategy,
    #[serde(default)]
    labeling_scheme: LabelingScheme,
    #[serde(default)]
    traversal: TraversalConfig,
}

async fn list_campaigns(State(st): State<AppState>) -> Json<Value> {
    let s = st.lock();
    let list: Vec<Value> = s
        .campaigns()
        .map(|c| {
            json!({
                "campaign_id": c.id(),
                "status": c.status,
                "tasks": c.tasks.len(),
                "hierarchy_version": c.spec.hierarchy_version,
            })
        })
        .collect();
    Json(Value::Array(list))
}

async fn create_campaign(
    State(st): State<AppState>,
    body: Result<Json<CreateCampaign>, JsonRejection>,
) -> ApiResult<(StatusCode, Json<Value>)> {
    let Json(req) = body?;
    let images = match (req.images, req.dataset) {
        (Some(_), Some(_)) => return Err(ApiError::bad_request("give either images or dataset")),
        (Some(images), None) => images,
        (None, None) => Vec::new(),
        (None, Some(name)) => {
            let path = contained(st.image_root.as_deref(), &name)?;
            let file = std::fs::File::open(&path)
                .map_err(|e| ApiError::bad_request(format!("dataset `{name}`: {e}")))?;
            read_manifest(std::io::BufReader::new(file)).map_err(StoreError::from)?
        }
    };
    let spec = CampaignSpec {
        campaign_id: req.campaign_id,
        hierarchy_version: req
            .hierarchy_version
            .unwrap_or_else(|| st.default_hierarchy.clone()),
        images,
        strategy: req.strategy,
        labeling_scheme: req.labeling_scheme,
        traversal: req.traversal,
    };
    let mut s = st.lock();
    let (campaign, warnings) = s.create_campaign(spec)?;
    Ok((
        StatusCode::CREATED,
        Json(json!({"campaign": campaign, "warnings": warnings})),
    ))
}

async fn get_campaign(State(st): State<AppState>, UrlPath(id): UrlPath<String>) -> ApiResult {
    let s = st.lock();
    Ok(to_json(s.campaign(&id)?))
}

async fn open_campaign(State(st): State<AppState>, UrlPath(id): UrlPath<String>) -> ApiResult {
    let mut s = st.lock();
    Ok(to_json(s.open_campaign(&id)?))
}

async fn close_campaign(State(st): State<AppState>, UrlPath(id): UrlPath<String>) -> ApiResult {
    let mut s = st.lock();
    Ok(to_json(s.close_campaign(&id)?))
}

async fn load_gold(
    State(st): State<AppState>,
    UrlPath(id): UrlPath<String>,
    body: Result<Json<Vec<LabelLine>>, JsonRejection>,
) -> ApiResult {
    let Json(lines) = body?;
    let mut s = st.lock();
    let version = s.campaign(&id)?.spec.hierarchy_version.clone();
    let golds = resolve_golds(s.hierarchy(&version)?, &lines).map_err(StoreError::from)?;
    let n = golds.len();
    s.load_gold(&id, golds)?;
    Ok(Json(json!({"campaign_id": id, "golds": n})))
}

#[derive(Deserialize)]
struct AnnotatorQuery {
    annotator: String,
}

async fn next_task(
    State(st): State<AppState>,
    UrlPath(id): UrlPath<String>,
    q: Result<Query<AnnotatorQuery>, QueryRejection>,
) -> ApiResult {
    let Query(q) = q?;
    let s = st.lock();
    let next = s.next_task(&id, &q.annotator)?;
    let assignment = s.assignment(&id, &q.annotator)?;
    Ok(Json(json!({
        "next": next,
        "done": assignment.cursor,
        "total": assignment.task_ids.len(),
    })))
}

async fn stats(State(st): State<AppState>, UrlPath(id): UrlPath<String>) -> ApiResult {
    let s = st.lock();
    Ok(to_json(s.campaign_stats(&id)?))
}

#[derive(Deserialize)]
struct ExportQuery {
    #[serde(default)]
    scheme: Option<String>,
    #[serde(default)]
    seed: Option<u64>,
}

async fn export(
    State(st): State<AppState>,
    UrlPath(id): UrlPath<String>,
    q: Result<Query<ExportQuery>, QueryRejection>,
) -> ApiResult<Response> {
    let Query(q) = q?;
    let scheme = q
        .scheme
        .map(|s| s.parse::<LabelingScheme>())
        .transpose()
        .map_err(ApiError::bad_request)?;
    let s = st.lock();
    let lines = s.export_dataset(&id, scheme, q.seed)?;
    Ok((
        [(header::CONTENT_TYPE, "application/x-ndjson")],
        super::store::export_jsonl(&lines),
    )
        .into_response())
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct StartSession {
    task_id: String,
    annotator_id: String,
    #[serde(default)]
    campaign_id: Option<String>,
}

async fn start_session(
    State(st): State<AppState>,
    body: Result<Json<StartSession>, JsonRejection>,
) -> ApiResult<(StatusCode, Json<Value>)> {
    let Json(req) = body?;
    let mut s = st.lock();
    let campaign = s.resolve_campaign(req.campaign_id.as_deref(), &req.task_id)?;
    let entry = s
        .start_session(&campaign, &req.task_id, &req.annotator_id)?
        .clone();
    let question = s.question(&entry.session.session_id)?;
    Ok((
        StatusCode::CREATED,
        Json(json!({"session": entry, "prompt": question})),
    ))
}

async fn get_session(State(st): State<AppState>, UrlPath(id): UrlPath<String>) -> ApiResult {
    let s = st.lock();
    Ok(to_json(s.session(&id)?))
}

async fn question(State(st): State<AppState>, UrlPath(id): UrlPath<String>) -> ApiResult {
    let s = st.lock();
    Ok(to_json(s.question(&id)?))
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct AnswerBody {
    value: String,
    /// Position of this answer among the annotator's answers. A retried post
    /// with an index that is already logged returns the current state
    /// instead of answering twice.
    #[serde(default)]
    index: Option<usize>,
}

async fn answer(
    State(st): State<AppState>,
    UrlPath(id): UrlPath<String>,
    body: Result<Json<AnswerBody>, JsonRejection>,
) -> ApiResult {
    let Json(req) = body?;
    let answer: AskAnswer = req.value.parse().map_err(ApiError::bad_request)?;
    let mut s = st.lock();
    if let Some(index) = req.index {
        let logged: Vec<AskAnswer> = s
            .session(&id)?
            .session
            .answer_log
            .iter()
            .filter(|a| !a.synthetic)
            .map(|a| a.answer)
            .collect();
        match logged.get(index) {
            Some(&prior) if prior == answer => {
                let entry = s.session(&id)?.clone();
                let prompt = s.question(&id)?;
                return Ok(Json(json!({"session": entry, "prompt": prompt})));
            }
            Some(&prior) => {
                return Err(ApiError {
                    status: StatusCode::CONFLICT,
                    code: "answer_conflict",
                    message: format!("answer {index} was already logged as `{prior}`"),
                })
            }
            None if index != logged.len() => {
                return Err(ApiError {
                    status: StatusCode::CONFLICT,
                    code: "answer_conflict",
                    message: format!("expected answer index {}, got {index}", logged.len()),
                })
            }
            None => {}
        }
    }
    let entry = s.submit_answer(&id, answer)?.clone();
    let prompt = s.question(&id)?;
    Ok(Json(json!({"session": entry, "prompt": prompt})))
}

#[derive(Deserialize)]
struct ImageQuery {
    /// Task whose crop should be applied.
    #[serde(default)]
    task: Option<String>,
    /// Explicit crop, `x_min,y_min,x_max,y_max`.
    #[serde(default)]
    crop: Option<String>,
}

/// Joins `name` under `root`, refusing anything that could leave it.
fn contained(root: Option<&Path>, name: &str) -> Result<PathBuf, ApiError> {
    let root = root.ok_or_else(|| ApiError {
        status: StatusCode::NOT_FOUND,
        code: "no_image_root",
        message: "the service has no image root configured".into(),
    })?;
    let rel = Path::new(name);
    if rel.components().any(|c| !matches!(c, Component::Normal(_))) {
        return Err(ApiError::bad_request(format!(
            "path `{name}` escapes the image root"
        )));
    }
    Ok(root.join(rel))
}

fn parse_crop(text: &str, image: &ImageRecord) -> Result<CropRect, ApiError> {
    let parts: Vec<u32> = text
        .split(',')
        .map(|p| p.trim().parse::<u32>())
        .collect::<Result<_, _>>()
        .map_err(|e| ApiError::bad_request(format!("crop: {e}")))?;
    match parts.as_slice() {
        &[x0, y0, x1, y1] if x0 < x1 && y0 < y1 && x1 <= image.width && y1 <= image.height => {
            Ok(CropRect([x0, y0, x1, y1]))
        }
        _ => Err(ApiError::bad_request(format!(
            "crop `{text}` is not x_min,y_min,x_max,y_max inside {}x{}",
            image.width, image.height
        ))),
    }
}

/// Raw image bytes. Cropping is left to the client: the rectangle travels
/// in the `X-Crop` header.
async fn image(
    State(st): State<AppState>,
    UrlPath(image_id): UrlPath<String>,
    q: Result<Query<ImageQuery>, QueryRejection>,
) -> ApiResult<Response> {
    let Query(q) = q?;
    let (record, crop) = {
        let s = st.lock();
        let owner = s
            .campaigns()
            .find(|c| c.image(&image_id).is_some())
            .ok_or_else(|| StoreError::UnknownImage(image_id.clone()))?;
        let record = owner.image(&image_id).expect("found above").clone();
        let crop = match (&q.task, &q.crop) {
            (Some(_), Some(_)) => return Err(ApiError::bad_request("give either task or crop")),
            (Some(t), None) => {
                let task = owner
                    .task(t)
                    .filter(|t| t.image_id == image_id)
                    .ok_or_else(|| StoreError::UnknownTask(t.clone()))?;
                task.crop
            }
            (None, Some(c)) => Some(parse_crop(c, &record)?),
            (None, None) => None,
        };
        (record, crop)
    };
    let path = contained(st.image_root.as_deref(), &record.uri)?;
    let bytes = tokio::fs::read(&path).await.map_err(|e| ApiError {
        status: StatusCode::NOT_FOUND,
        code: "image_missing",
        message: format!("{}: {e}", record.uri),
    })?;
    let mime = match path
        .extension()
        .and_then(|e| e.to_str())
        .map(str::to_ascii_lowercase)
        .as_deref()
    {
        Some("jpg" | "jpeg") => "image/jpeg",
        Some("png") => "image/png",
        Some("gif") => "image/gif",
        Some("webp") => "image/webp",
        _ => "application/octet-stream",
    };
    let mut resp = ([(header::CONTENT_TYPE, mime)], bytes).into_response();
    if let Some(CropRect([a, b, c, d])) = crop {
        resp.headers_mut().insert(
            "x-crop",
            HeaderValue::from_str(&format!("{a},{b},{c},{d}")).expect("ascii"),
        );
    }
    Ok(resp)
}
