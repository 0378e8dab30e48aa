//! HTTP API over a loaded archive bundle.
//!
//! Every response is a view of a library call on the immutable bundle; the
//! service holds no other state.

use std::path::PathBuf;
use std::sync::Arc;

use axum::extract::rejection::{JsonRejection, QueryRejection};
use axum::extract::{Path, Query, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};

use shotindex_core::bundle::{ArchiveBundle, BundleError, BundleMetadata};
use shotindex_core::ingest::FeatureVector;
use shotindex_core::lexical::LexicalError;
use shotindex_core::model::{AnnotationKind, QueryKind, RankedResult, ShotId, KEYFRAMES_PER_SHOT};
use shotindex_core::similarity::{query_by_shot, query_by_vector, SearchError, DEFAULT_SHORTLIST};

pub const DEFAULT_K: usize = 100;
pub const MAX_K: usize = 10_000;
/// Keyframe used when a similarity request names a shot but no position.
pub const DEFAULT_POSITION: u8 = 2;

#[derive(Clone)]
pub struct AppState {
    pub bundle: Arc<ArchiveBundle>,
    pub thumbnails: Option<PathBuf>,
    pub shortlist_size: usize,
}

impl AppState {
    pub fn new(bundle: ArchiveBundle) -> Self {
        Self {
            bundle: Arc::new(bundle),
            thumbnails: None,
            shortlist_size: DEFAULT_SHORTLIST,
        }
    }
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/api/health", get(health))
        .route("/api/shots/:video_id/:shot_index", get(shot))
        .route("/api/labels", get(labels))
        .route("/api/search/concept", get(concept))
        .route("/api/search/person", get(person))
        .route("/api/search/text", get(text))
        .route("/api/search/similar", post(similar))
        .route("/thumbnails/:video_id/:shot_index/:file", get(thumbnail))
        .with_state(state)
}

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    code: &'static str,
    message: String,
}

impl ApiError {
    fn bad_request(message: impl Into<String>) -> Self {
        Self {
            status: StatusCode::BAD_REQUEST,
            code: "bad_request",
            message: message.into(),
        }
    }

    fn not_found(message: impl Into<String>) -> Self {
        Self {
            status: StatusCode::NOT_FOUND,
            code: "not_found",
            message: message.into(),
        }
    }

    pub fn status(&self) -> StatusCode {
        self.status
    }
}

#[derive(Serialize, Deserialize)]
pub struct ErrorBody {
    pub error: String,
    pub message: String,
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let body = ErrorBody {
            error: self.code.into(),
            message: self.message,
        };
        (self.status, Json(body)).into_response()
    }
}

impl From<SearchError> for ApiError {
    fn from(e: SearchError) -> Self {
        match e {
            SearchError::UnknownShot(_) | SearchError::UnknownPosition { .. } => ApiError::not_found(e.to_string()),
            _ => ApiError::bad_request(e.to_string()),
        }
    }
}

impl From<LexicalError> for ApiError {
    fn from(e: LexicalError) -> Self {
        match e {
            LexicalError::UnknownLabel { .. } => ApiError::not_found(e.to_string()),
            LexicalError::EmptyQuery => ApiError::bad_request(e.to_string()),
        }
    }
}

impl From<BundleError> for ApiError {
    fn from(e: BundleError) -> Self {
        match e {
            BundleError::ChecksumMismatch { .. } => ApiError {
                status: StatusCode::CONFLICT,
                code: "checksum_mismatch",
                message: e.to_string(),
            },
            _ => ApiError {
                status: StatusCode::INTERNAL_SERVER_ERROR,
                code: "bundle",
                message: e.to_string(),
            },
        }
    }
}

impl From<QueryRejection> for ApiError {
    fn from(e: QueryRejection) -> Self {
        ApiError::bad_request(e.body_text())
    }
}

impl From<JsonRejection> for ApiError {
    fn from(e: JsonRejection) -> Self {
        ApiError::bad_request(e.body_text())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRecord {
    pub rank: usize,
    pub shot: String,
    pub video_id: String,
    pub shot_index: u32,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchResponse {
    pub query_kind: QueryKind,
    pub offset: usize,
    pub k: usize,
    pub results: Vec<ResultRecord>,
}

/// Records for a page whose first entry has rank `offset + 1`.
pub fn to_response(result: RankedResult, offset: usize, k: usize) -> SearchResponse {
    let query_kind = result.query_kind;
    let results = result
        .page(offset, k)
        .entries
        .into_iter()
        .enumerate()
        .map(|(i, e)| ResultRecord {
            rank: offset + i + 1,
            shot: e.shot.to_string(),
            video_id: e.shot.video_id.to_string(),
            shot_index: e.shot.shot_index,
            score: e.score,
        })
        .collect();
    SearchResponse {
        query_kind,
        offset,
        k,
        results,
    }
}

fn window(k: Option<usize>, offset: Option<usize>) -> Result<(usize, usize), ApiError> {
    let k = k.unwrap_or(DEFAULT_K);
    if k == 0 || k > MAX_K {
        return Err(ApiError::bad_request(format!("k must be in 1..={MAX_K}")));
    }
    Ok((k, offset.unwrap_or(0)))
}

async fn health(State(state): State<AppState>) -> Json<BundleMetadata> {
    Json(state.bundle.metadata.clone())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KeyframeRecord {
    pub position: u8,
    pub frame_number: u64,
    pub thumbnail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShotRecord {
    pub shot: String,
    pub video_id: String,
    pub shot_index: u32,
    pub start_frame: u64,
    pub end_frame: u64,
    pub keyframes: Vec<KeyframeRecord>,
}

async fn shot(
    State(state): State<AppState>,
    Path((video_id, shot_index)): Path<(String, String)>,
) -> Result<Json<ShotRecord>, ApiError> {
    let shot_index: u32 = shot_index
        .parse()
        .map_err(|_| ApiError::bad_request(format!("invalid shot index {shot_index:?}")))?;
    let id = ShotId::new(video_id.as_str(), shot_index);
    let shots = &state.bundle.shots;
    let ordinal = shots
        .ordinal(&id)
        .ok_or_else(|| ApiError::not_found(format!("unknown shot {id}")))?;
    let shot = shots.shot(ordinal);
    let keyframes = shots
        .keyframe_frames(ordinal)
        .iter()
        .enumerate()
        .map(|(p, &f)| KeyframeRecord {
            position: p as u8,
            frame_number: f,
            thumbnail: format!("/thumbnails/{}/{}/{p}.jpg", shot.video_id, shot.shot_index),
        })
        .collect();
    Ok(Json(ShotRecord {
        shot: id.to_string(),
        video_id: shot.video_id.to_string(),
        shot_index: shot.shot_index,
        start_frame: shot.start_frame,
        end_frame: shot.end_frame,
        keyframes,
    }))
}

#[derive(Debug, Deserialize)]
struct LabelsParams {
    kind: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelRecord {
    pub label: String,
    pub kind: AnnotationKind,
    pub shots: usize,
}

async fn labels(
    State(state): State<AppState>,
    params: Result<Query<LabelsParams>, QueryRejection>,
) -> Result<Json<Vec<LabelRecord>>, ApiError> {
    let Query(params) = params?;
    let kinds = match params.kind.as_deref() {
        None => vec![AnnotationKind::Concept, AnnotationKind::Person],
        Some(k) => vec![k.parse().map_err(ApiError::bad_request)?],
    };
    let out = kinds
        .into_iter()
        .flat_map(|kind| {
            state
                .bundle
                .postings
                .labels(kind)
                .into_iter()
                .map(move |(label, shots)| LabelRecord {
                    label: label.to_owned(),
                    kind,
                    shots,
                })
        })
        .collect();
    Ok(Json(out))
}

#[derive(Debug, Deserialize)]
struct LabelParams {
    label: Option<String>,
    k: Option<usize>,
    offset: Option<usize>,
}

fn label_search(state: &AppState, params: LabelParams, kind: AnnotationKind) -> Result<SearchResponse, ApiError> {
    let label = params
        .label
        .filter(|l| !l.trim().is_empty())
        .ok_or_else(|| ApiError::bad_request("missing label"))?;
    let (k, offset) = window(params.k, params.offset)?;
    let result = state
        .bundle
        .postings
        .concept_search(&label, kind, offset.saturating_add(k))?;
    Ok(to_response(result, offset, k))
}

async fn concept(
    State(state): State<AppState>,
    params: Result<Query<LabelParams>, QueryRejection>,
) -> Result<Json<SearchResponse>, ApiError> {
    Ok(Json(label_search(&state, params?.0, AnnotationKind::Concept)?))
}

async fn person(
    State(state): State<AppState>,
    params: Result<Query<LabelParams>, QueryRejection>,
) -> Result<Json<SearchResponse>, ApiError> {
    Ok(Json(label_search(&state, params?.0, AnnotationKind::Person)?))
}

#[derive(Debug, Deserialize)]
struct TextParams {
    q: Option<String>,
    k: Option<usize>,
    offset: Option<usize>,
}

async fn text(
    State(state): State<AppState>,
    params: Result<Query<TextParams>, QueryRejection>,
) -> Result<Json<SearchResponse>, ApiError> {
    let Query(params) = params?;
    let q = params.q.ok_or_else(|| ApiError::bad_request("missing q"))?;
    let (k, offset) = window(params.k, params.offset)?;
    let bundle = state.bundle.clone();
    let result = tokio::task::spawn_blocking(move || bundle.vocabulary.text_search(&q, offset.saturating_add(k)))
        .await
        .map_err(|e| ApiError::bad_request(e.to_string()))??;
    Ok(Json(to_response(result, offset, k)))
}

/// A shot given either as `"video_id#shot_index"` or as an object.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ShotParam {
    Id(String),
    Fields { video_id: String, shot_index: u32 },
}

impl ShotParam {
    fn to_id(&self) -> Result<ShotId, ApiError> {
        match self {
            ShotParam::Id(s) => s.parse().map_err(ApiError::bad_request),
            ShotParam::Fields { video_id, shot_index } => Ok(ShotId::new(video_id.as_str(), *shot_index)),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimilarRequest {
    #[serde(default)]
    pub shot: Option<ShotParam>,
    #[serde(default)]
    pub position: Option<u8>,
    #[serde(default)]
    pub vector: Option<Vec<f64>>,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    #[serde(default)]
    pub k: Option<usize>,
    #[serde(default)]
    pub offset: Option<usize>,
}

fn default_alpha() -> f64 {
    1.0
}

pub fn run_similar(state: &AppState, req: SimilarRequest) -> Result<SearchResponse, ApiError> {
    let (k, offset) = window(req.k, req.offset)?;
    let wanted = offset.saturating_add(k);
    let bundle = &state.bundle;
    let result = match (req.shot, req.vector) {
        (Some(shot), None) => {
            let position = req.position.unwrap_or(DEFAULT_POSITION);
            if position as usize >= KEYFRAMES_PER_SHOT {
                return Err(ApiError::bad_request(format!("position {position} outside 0..=4")));
            }
            query_by_shot(
                &bundle.similarity,
                &shot.to_id()?,
                position,
                req.alpha,
                wanted,
                state.shortlist_size,
            )?
        }
        (None, Some(values)) => {
            let vector = FeatureVector::new(values).map_err(|e| ApiError::bad_request(e.to_string()))?;
            query_by_vector(
                &bundle.similarity,
                &bundle.encoders,
                &vector,
                req.alpha,
                wanted,
                state.shortlist_size,
            )?
        }
        _ => return Err(ApiError::bad_request("give exactly one of shot or vector")),
    };
    Ok(to_response(result, offset, k))
}

async fn similar(
    State(state): State<AppState>,
    body: Result<Json<SimilarRequest>, JsonRejection>,
) -> Result<Json<SearchResponse>, ApiError> {
    let Json(req) = body?;
    let response = tokio::task::spawn_blocking(move || run_similar(&state, req))
        .await
        .map_err(|e| ApiError::bad_request(e.to_string()))??;
    Ok(Json(response))
}

const PLACEHOLDER_SVG: &str = r##"<svg xmlns="http://www.w3.org/2000/svg" width="160" height="90" viewBox="0 0 160 90"><rect width="160" height="90" fill="#d0d0d0"/><text x="80" y="50" font-family="sans-serif" font-size="12" text-anchor="middle" fill="#606060">no thumbnail</text></svg>"##;

async fn thumbnail(
    State(state): State<AppState>,
    Path((video_id, shot_index, file)): Path<(String, String, String)>,
) -> Response {
    let safe = |s: &str| !s.is_empty() && s != "." && s != ".." && !s.contains(['/', '\\']);
    if let Some(dir) = &state.thumbnails {
        if safe(&video_id) && safe(&shot_index) && safe(&file) {
            let path = dir.join(&video_id).join(&shot_index).join(&file);
            if let Ok(bytes) = tokio::fs::read(&path).await {
                return ([(header::CONTENT_TYPE, "image/jpeg")], bytes).into_response();
            }
        }
    }
    ([(header::CONTENT_TYPE, "image/svg+xml")], PLACEHOLDER_SVG).into_response()
}
