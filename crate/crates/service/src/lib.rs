//! HTTP facade over `nrv-core`.
//!
//! Every payload is the serialized result of the matching library call.
//! Responses derived from a single volume carry its provenance in the
//! `X-Provenance` header; errors are JSON `{code, message}` bodies.

mod error;
mod session;

use std::io::Cursor;
use std::net::SocketAddr;
use std::path::Path;
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::rejection::{JsonRejection, QueryRejection};
use axum::extract::{DefaultBodyLimit, Path as UrlPath, Query, State};
use axum::http::{header, HeaderValue, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use nrv_core::io::{from_bytes, to_bytes, NrvHeader};
use nrv_core::vesselness::{jerman_response, suppress_background, DEFAULT_GRAD_PERCENTILE};
use nrv_core::views::{default_tf, fiber_density};
use nrv_core::{
    connected_components, extract_isosurface, foreground_mask, histogram, render_slice, Axis, Direction, Domain,
    Provenance, SliceImage, SliceShading, VesselnessParams, Volume3D,
};
use serde::{Deserialize, Serialize};

pub use error::{ApiError, ApiResult, ErrorBody};
pub use session::{valid_id, JobStatus, Session, SessionConfig, Stats};

pub const PROVENANCE_HEADER: &str = "x-provenance";
pub const CACHE_HEADER: &str = "x-morph-cache";
const MAX_UPLOAD_BYTES: usize = 1 << 30;

type AppState = Arc<Session>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VolumeInfo {
    pub id: String,
    #[serde(flatten)]
    pub header: NrvHeader,
}

impl VolumeInfo {
    pub fn of(id: &str, v: &Volume3D) -> VolumeInfo {
        VolumeInfo {
            id: id.to_string(),
            header: NrvHeader::of(v),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DensityReport {
    pub volume_id: String,
    pub threshold: f32,
    pub density: f64,
    pub percent: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JobInfo {
    pub job_id: String,
    #[serde(flatten)]
    pub status: JobStatus,
}

#[derive(Debug, Deserialize)]
pub struct VesselnessRequest {
    pub volume_id: String,
    pub sigmas: Option<Vec<f64>>,
    pub tau: Option<f64>,
    pub intensity_scales: Option<Vec<f64>>,
    /// Apply gradient-distance background suppression before filtering.
    #[serde(default)]
    pub suppress_background: bool,
    pub grad_percentile: Option<u8>,
}

impl VesselnessRequest {
    pub fn params(&self, defaults: &VesselnessParams) -> VesselnessParams {
        VesselnessParams {
            sigmas_um: self.sigmas.clone().unwrap_or_else(|| defaults.sigmas_um.clone()),
            tau: self.tau.unwrap_or(defaults.tau),
            intensity_scales: self
                .intensity_scales
                .clone()
                .unwrap_or_else(|| defaults.intensity_scales.clone()),
        }
    }
}

#[derive(Debug, Deserialize)]
pub struct PrepareRequest {
    pub young_id: String,
    pub old_id: String,
    pub dir: String,
}

#[derive(Debug, Deserialize)]
struct UploadQuery {
    id: Option<String>,
}

#[derive(Debug, Deserialize)]
struct SliceQuery {
    axis: Option<String>,
    index: Option<usize>,
    tf: Option<String>,
    domain: Option<Domain>,
    gamma: Option<f64>,
}

#[derive(Debug, Deserialize)]
struct ThresholdQuery {
    threshold: Option<f32>,
    domain: Option<Domain>,
}

#[derive(Debug, Deserialize)]
struct MeshQuery {
    iso: Option<f64>,
    domain: Option<Domain>,
}

#[derive(Debug, Deserialize)]
struct MorphQuery {
    sigma: Option<f64>,
    dir: Option<String>,
    format: Option<String>,
    axis: Option<String>,
    index: Option<usize>,
}

pub fn router(session: Arc<Session>) -> Router {
    Router::new()
        .route("/volumes", get(list_volumes).post(upload_volume))
        .route("/volumes/{id}", get(download_volume))
        .route("/volumes/{id}/slice", get(slice))
        .route("/volumes/{id}/histogram", get(volume_histogram))
        .route("/vesselness", post(vesselness))
        .route("/components/{id}", get(components))
        .route("/mesh/{id}", get(mesh))
        .route("/morph/prepare", post(morph_prepare))
        .route("/morph/jobs/{job}", get(morph_job))
        .route("/morph/{young}/{old}", get(morph_frame))
        .route("/metrics/density/{id}", get(density))
        .route("/stats", get(stats))
        .layer(DefaultBodyLimit::max(MAX_UPLOAD_BYTES))
        .with_state(session)
}

#[derive(Debug, thiserror::Error)]
pub enum ServeError {
    #[error("loading data directory: {0}")]
    Load(#[from] nrv_core::Error),
    #[error("bind or serve failure: {0}")]
    Io(#[from] std::io::Error),
}

/// Loads `data_dir` and serves until the process is stopped.
pub async fn serve(bind: &str, data_dir: &Path, config: SessionConfig) -> Result<(), ServeError> {
    let session = Arc::new(Session::new(config));
    let n = session.load_dir(data_dir)?;
    let listener = tokio::net::TcpListener::bind(bind).await?;
    let addr: SocketAddr = listener.local_addr()?;
    log::info!("serving {n} volumes on http://{addr}");
    axum::serve(listener, router(session)).await?;
    Ok(())
}

/// PNG encoding of a rendered slice.
pub fn encode_png(img: &SliceImage) -> Vec<u8> {
    let color = if img.channels == 1 {
        image::ExtendedColorType::L8
    } else {
        image::ExtendedColorType::Rgb8
    };
    let mut out = Cursor::new(Vec::new());
    image::write_buffer_with_format(
        &mut out,
        &img.pixels,
        img.width as u32,
        img.height as u32,
        color,
        image::ImageFormat::Png,
    )
    .expect("encoding an in-memory PNG cannot fail");
    out.into_inner()
}

async fn blocking<T: Send + 'static>(f: impl FnOnce() -> ApiResult<T> + Send + 'static) -> ApiResult<T> {
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ApiError::internal(e.to_string()))?
}

fn tagged(provenance: Provenance, response: impl IntoResponse) -> Response {
    let mut r = response.into_response();
    r.headers_mut()
        .insert(PROVENANCE_HEADER, HeaderValue::from_static(provenance.as_str()));
    r
}

fn binary(content_type: &'static str, body: Vec<u8>) -> Response {
    ([(header::CONTENT_TYPE, content_type)], body).into_response()
}

fn parse_axis(axis: Option<&str>) -> ApiResult<Axis> {
    Ok(axis.unwrap_or("z").parse()?)
}

fn shading(tf: Option<&str>, domain: Option<Domain>, v: &Volume3D) -> ApiResult<SliceShading> {
    match tf.unwrap_or("gray") {
        "gray" => Ok(SliceShading::Gray),
        "default" => Ok(SliceShading::Transfer(default_tf(domain.unwrap_or(Domain::Young), &histogram(v)?))),
        other => Err(ApiError::bad_request("invalid_parameter", format!("unknown transfer function `{other}`"))),
    }
}

async fn list_volumes(State(s): State<AppState>) -> Json<Vec<VolumeInfo>> {
    Json(s.list().iter().map(|(id, v)| VolumeInfo::of(id, v)).collect())
}

async fn upload_volume(
    State(s): State<AppState>,
    q: Result<Query<UploadQuery>, QueryRejection>,
    body: Bytes,
) -> ApiResult<Response> {
    let Query(q) = q?;
    let id = match q.id {
        Some(id) if valid_id(&id) => id,
        Some(id) => return Err(ApiError::bad_request("invalid_id", format!("invalid volume id `{id}`"))),
        None => s.fresh_id("vol"),
    };
    let v = blocking(move || Ok(from_bytes(&body)?)).await?;
    let info = VolumeInfo::of(&id, &v);
    let p = v.provenance();
    s.insert(id, v);
    Ok(tagged(p, (StatusCode::CREATED, Json(info))))
}

async fn download_volume(State(s): State<AppState>, UrlPath(id): UrlPath<String>) -> ApiResult<Response> {
    let v = s.get(&id)?;
    let p = v.provenance();
    let bytes = blocking(move || Ok(to_bytes(&v))).await?;
    Ok(tagged(p, binary("application/octet-stream", bytes)))
}

async fn slice(
    State(s): State<AppState>,
    UrlPath(id): UrlPath<String>,
    q: Result<Query<SliceQuery>, QueryRejection>,
) -> ApiResult<Response> {
    let Query(q) = q?;
    let v = s.get(&id)?;
    let axis = parse_axis(q.axis.as_deref())?;
    let index = q
        .index
        .ok_or_else(|| ApiError::bad_request("invalid_query", "missing `index`"))?;
    let p = v.provenance();
    let png = blocking(move || {
        let shade = shading(q.tf.as_deref(), q.domain, &v)?;
        let img = render_slice(&v, axis, index, &shade, q.gamma.unwrap_or(1.0))?;
        Ok(encode_png(&img))
    })
    .await?;
    Ok(tagged(p, binary("image/png", png)))
}

async fn volume_histogram(State(s): State<AppState>, UrlPath(id): UrlPath<String>) -> ApiResult<Response> {
    let v = s.get(&id)?;
    let p = v.provenance();
    let h = blocking(move || Ok(histogram(&v)?)).await?;
    Ok(tagged(p, Json(h)))
}

async fn vesselness(
    State(s): State<AppState>,
    req: Result<Json<VesselnessRequest>, JsonRejection>,
) -> ApiResult<Response> {
    let Json(req) = req?;
    let v = s.get(&req.volume_id)?;
    let params = req.params(&s.config.vesselness);
    let grad = req.grad_percentile.unwrap_or(DEFAULT_GRAD_PERCENTILE);
    let suppress = req.suppress_background;
    let out = blocking(move || {
        let input = if suppress {
            suppress_background(&v, grad, &params)?
        } else {
            (*v).clone()
        };
        Ok(jerman_response(&input, &params)?)
    })
    .await?;
    let id = s.fresh_id(&format!("{}-vesselness", req.volume_id));
    let info = VolumeInfo::of(&id, &out);
    let p = out.provenance();
    s.insert(id, out);
    Ok(tagged(p, (StatusCode::CREATED, Json(info))))
}

async fn components(
    State(s): State<AppState>,
    UrlPath(id): UrlPath<String>,
    q: Result<Query<ThresholdQuery>, QueryRejection>,
) -> ApiResult<Response> {
    let Query(q) = q?;
    let v = s.get(&id)?;
    let t = q.threshold.unwrap_or(s.config.threshold());
    let domain = q.domain.unwrap_or(Domain::Young);
    let p = v.provenance();
    let comps = blocking(move || Ok(connected_components(&foreground_mask(&v, t), domain, v.provenance()))).await?;
    Ok(tagged(p, Json(comps)))
}

async fn mesh(
    State(s): State<AppState>,
    UrlPath(id): UrlPath<String>,
    q: Result<Query<MeshQuery>, QueryRejection>,
) -> ApiResult<Response> {
    let Query(q) = q?;
    let v = s.get(&id)?;
    let iso = q.iso.unwrap_or(0.5);
    let domain = q.domain.unwrap_or(Domain::Young);
    let p = v.provenance();
    let obj = blocking(move || Ok(extract_isosurface(&v, iso, domain)?.to_obj_string())).await?;
    Ok(tagged(p, ([(header::CONTENT_TYPE, "text/plain; charset=utf-8")], obj)))
}

async fn morph_prepare(
    State(s): State<AppState>,
    req: Result<Json<PrepareRequest>, JsonRejection>,
) -> ApiResult<Response> {
    let Json(req) = req?;
    let dir: Direction = req.dir.parse()?;
    s.get(&req.young_id)?;
    s.get(&req.old_id)?;
    let job = s.new_job();
    let (session, job_id) = (s.clone(), job.clone());
    tokio::task::spawn_blocking(move || {
        let status = match session.morph_field(&req.young_id, &req.old_id, dir) {
            Ok(_) => JobStatus::Ready,
            Err(e) => JobStatus::Failed {
                code: e.code.to_string(),
                message: e.message,
            },
        };
        session.set_job(&job_id, status);
    });
    let info = JobInfo {
        job_id: job,
        status: JobStatus::Pending,
    };
    Ok((StatusCode::ACCEPTED, Json(info)).into_response())
}

async fn morph_job(State(s): State<AppState>, UrlPath(job): UrlPath<String>) -> ApiResult<Json<JobInfo>> {
    let status = s.job(&job)?;
    Ok(Json(JobInfo { job_id: job, status }))
}

async fn morph_frame(
    State(s): State<AppState>,
    UrlPath((young, old)): UrlPath<(String, String)>,
    q: Result<Query<MorphQuery>, QueryRejection>,
) -> ApiResult<Response> {
    let Query(q) = q?;
    let sigma = q
        .sigma
        .ok_or_else(|| ApiError::bad_request("invalid_query", "missing `sigma`"))?;
    let dir: Direction = q.dir.as_deref().unwrap_or("o2y").parse()?;
    let png = match q.format.as_deref().unwrap_or("nrv") {
        "nrv" => None,
        "png" => Some((
            parse_axis(q.axis.as_deref())?,
            q.index
                .ok_or_else(|| ApiError::bad_request("invalid_query", "missing `index`"))?,
        )),
        other => return Err(ApiError::bad_request("invalid_parameter", format!("unknown format `{other}`"))),
    };
    let session = s.clone();
    let (bytes, hit, is_png) = blocking(move || {
        let (yv, ov) = (session.get(&young)?, session.get(&old)?);
        let (field, hit) = session.morph_field(&young, &old, dir)?;
        let frame = field.intermediate_volume(&yv, &ov, sigma, dir)?;
        let bytes = match png {
            None => to_bytes(&frame),
            Some((axis, index)) => encode_png(&render_slice(&frame, axis, index, &SliceShading::Gray, 1.0)?),
        };
        Ok((bytes, hit, png.is_some()))
    })
    .await?;
    let content_type = if is_png { "image/png" } else { "application/octet-stream" };
    let mut r = tagged(Provenance::Morphed, binary(content_type, bytes));
    r.headers_mut()
        .insert(CACHE_HEADER, HeaderValue::from_static(if hit { "hit" } else { "miss" }));
    Ok(r)
}

async fn density(
    State(s): State<AppState>,
    UrlPath(id): UrlPath<String>,
    q: Result<Query<ThresholdQuery>, QueryRejection>,
) -> ApiResult<Response> {
    let Query(q) = q?;
    let v = s.get(&id)?;
    let threshold = q.threshold.unwrap_or(s.config.threshold());
    let p = v.provenance();
    let density = blocking(move || Ok(fiber_density(&foreground_mask(&v, threshold)))).await?;
    let report = DensityReport {
        volume_id: id,
        threshold,
        density,
        percent: density * 100.0,
    };
    Ok(tagged(p, Json(report)))
}

async fn stats(State(s): State<AppState>) -> Json<Stats> {
    Json(s.stats())
}
