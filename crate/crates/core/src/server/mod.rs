//! HTTP interface.
//!
//! Browsing, downloading source, fetching shares and sample data need no
//! session. Publishing, sharing and uploading do. Every response, including
//! errors and unmatched paths, carries the content-security-policy header.

mod config;
mod error;
mod session;

use std::sync::Arc;
use std::time::Instant;

use axum::body::{Body, Bytes};
use axum::extract::{DefaultBodyLimit, FromRequestParts, MatchedPath, Path, Query, Request, State};
use axum::http::request::Parts;
use axum::http::{header, HeaderMap, HeaderName, HeaderValue, StatusCode};
use axum::middleware::{self, Next};
use axum::response::{IntoResponse, Redirect, Response};
use axum::routing::{self, MethodRouter};
use axum::{Json, Router};
use base64::Engine;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::clock::{OsEntropy, SystemClock, Timestamp};
use crate::csp;
use crate::manifest::validate_manifest_with_policy;
use crate::store::{
    ApplicationSource, NewDataset, Registry, RegistryConfig, SearchQuery, SqliteStorage,
    StoreError, UserAccount,
};

pub use config::{
    ConfigError, ServerConfig, ServiceSettings, ENV_BIND, ENV_MAX_BODY_MIB, ENV_PUBLIC_ORIGIN,
    ENV_SESSION_HOURS, ENV_SHARE_RATE_PER_MIN, ENV_SHARE_TTL_HOURS, ENV_STORAGE,
};
pub use error::{ApiError, PROBLEM_CONTENT_TYPE};
pub use session::{RateLimiter, SessionTable, SessionToken, SESSION_TOKEN_BYTES};

pub const SESSION_COOKIE: &str = "sandhub_session";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Route {
    pub method: &'static str,
    pub path: &'static str,
}

const fn route(method: &'static str, path: &'static str) -> Route {
    Route { method, path }
}

/// Every mounted route. The router is built from this table and nothing else.
pub const ROUTE_TABLE: [Route; 12] = [
    route("GET", "/applications"),
    route("POST", "/applications"),
    route("GET", "/applications/{name}/{version}"),
    route("GET", "/applications/{name}/{version}/source"),
    route("POST", "/auth/register"),
    route("POST", "/auth/login"),
    route("POST", "/auth/logout"),
    route("POST", "/share"),
    route("GET", "/share/{token}"),
    route("POST", "/data"),
    route("GET", "/data"),
    route("GET", "/data/{id}"),
];

fn endpoint(r: Route) -> MethodRouter<AppState> {
    match (r.method, r.path) {
        ("GET", "/applications") => routing::get(list_applications),
        ("POST", "/applications") => routing::post(publish_application),
        ("GET", "/applications/{name}/{version}") => routing::get(application_detail),
        ("GET", "/applications/{name}/{version}/source") => routing::get(application_source),
        ("POST", "/auth/register") => routing::post(register),
        ("POST", "/auth/login") => routing::post(login),
        ("POST", "/auth/logout") => routing::post(logout),
        ("POST", "/share") => routing::post(store_share),
        ("GET", "/share/{token}") => routing::get(fetch_share),
        ("POST", "/data") => routing::post(upload_dataset),
        ("GET", "/data") => routing::get(list_datasets),
        ("GET", "/data/{id}") => routing::get(download_dataset),
        _ => unreachable!("no handler for {} {}", r.method, r.path),
    }
}

#[derive(Clone)]
pub struct AppState {
    inner: Arc<Inner>,
}

struct Inner {
    registry: Arc<Registry>,
    sessions: SessionTable,
    share_limiter: RateLimiter,
    settings: ServiceSettings,
    csp_value: HeaderValue,
}

impl AppState {
    /// Sessions and rate limits run on the registry's clock and entropy.
    pub fn new(registry: Arc<Registry>, settings: ServiceSettings) -> Self {
        let csp_value =
            HeaderValue::from_str(&settings.csp.header_value()).expect("CSP is a valid header");
        let sessions = SessionTable::new(
            settings.session_ttl,
            registry.clock().clone(),
            registry.entropy().clone(),
        );
        Self {
            inner: Arc::new(Inner {
                share_limiter: RateLimiter::new(settings.share_rate_per_min),
                registry,
                sessions,
                settings,
                csp_value,
            }),
        }
    }

    pub fn registry(&self) -> &Arc<Registry> {
        &self.inner.registry
    }

    pub fn sessions(&self) -> &SessionTable {
        &self.inner.sessions
    }

    pub fn router(&self) -> Router {
        let mut router = Router::new();
        for r in ROUTE_TABLE {
            router = router.route(r.path, endpoint(r));
        }
        router
            .fallback(|| async { ApiError::not_found() })
            .layer(middleware::from_fn(log_request))
            .layer(DefaultBodyLimit::max(self.inner.settings.max_body_bytes))
            .layer(middleware::map_response_with_state(
                self.inner.csp_value.clone(),
                security_headers,
            ))
            .with_state(self.clone())
    }

    /// Drops expired shares and sessions.
    pub fn purge_expired(&self) -> Result<(usize, usize), StoreError> {
        let shares = self.inner.registry.purge_expired_shares()?;
        Ok((shares, self.inner.sessions.purge_expired()))
    }
}

pub fn router(registry: Arc<Registry>, settings: ServiceSettings) -> Router {
    AppState::new(registry, settings).router()
}

/// Opens the configured store and serves until interrupted.
pub async fn serve(config: ServerConfig) -> anyhow::Result<()> {
    let storage = SqliteStorage::open(&config.storage)?;
    let registry = Arc::new(Registry::new(
        Box::new(storage),
        Arc::new(SystemClock),
        Arc::new(OsEntropy),
        RegistryConfig {
            share_ttl: config.share_ttl,
            ..RegistryConfig::default()
        },
    ));
    let state = AppState::new(registry, config.settings.clone());

    let purger = state.clone();
    tokio::spawn(async move {
        let mut tick = tokio::time::interval(std::time::Duration::from_secs(600));
        loop {
            tick.tick().await;
            let s = purger.clone();
            match tokio::task::spawn_blocking(move || s.purge_expired()).await {
                Ok(Ok((shares, sessions))) if shares + sessions > 0 => {
                    log::info!("purged {shares} expired shares and {sessions} sessions");
                }
                Ok(Err(e)) => log::warn!("purge failed: {e}"),
                _ => {}
            }
        }
    });

    let listener = tokio::net::TcpListener::bind(config.bind).await?;
    log::info!(
        "listening on http://{} as {}",
        listener.local_addr()?,
        config.settings.csp.own_origin()
    );
    axum::serve(listener, state.router())
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
            log::info!("shutting down");
        })
        .await?;
    Ok(())
}

async fn security_headers(State(csp_value): State<HeaderValue>, mut res: Response) -> Response {
    let h = res.headers_mut();
    h.insert(HeaderName::from_static(csp::HEADER_NAME), csp_value);
    h.insert(
        header::X_CONTENT_TYPE_OPTIONS,
        HeaderValue::from_static("nosniff"),
    );
    h.insert(
        header::REFERRER_POLICY,
        HeaderValue::from_static("no-referrer"),
    );
    res
}

/// Logs the route template, never the concrete path, so share tokens stay
/// out of the log.
async fn log_request(req: Request, next: Next) -> Response {
    let method = req.method().clone();
    let template = req
        .extensions()
        .get::<MatchedPath>()
        .map_or_else(|| "<unmatched>".to_owned(), |p| p.as_str().to_owned());
    let started = Instant::now();
    let res = next.run(req).await;
    log::info!(
        "{method} {template} -> {} in {:?}",
        res.status().as_u16(),
        started.elapsed()
    );
    res
}

// ---- authentication ----

/// The caller's account, resolved from a bearer token or the session cookie.
pub struct CurrentUser {
    pub account: UserAccount,
    token: String,
}

fn session_token(headers: &HeaderMap) -> Option<String> {
    if let Some(v) = headers
        .get(header::AUTHORIZATION)
        .and_then(|v| v.to_str().ok())
    {
        if let Some(t) = v.strip_prefix("Bearer ") {
            return Some(t.trim().to_owned());
        }
    }
    headers
        .get_all(header::COOKIE)
        .iter()
        .filter_map(|v| v.to_str().ok())
        .flat_map(|v| v.split(';'))
        .find_map(|kv| {
            let (k, v) = kv.trim().split_once('=')?;
            (k == SESSION_COOKIE).then(|| v.to_owned())
        })
}

impl FromRequestParts<AppState> for CurrentUser {
    type Rejection = ApiError;

    async fn from_request_parts(parts: &mut Parts, state: &AppState) -> Result<Self, ApiError> {
        let token = session_token(&parts.headers).ok_or_else(ApiError::unauthenticated)?;
        let user_id = state
            .inner
            .sessions
            .resolve(&token)
            .ok_or_else(ApiError::unauthenticated)?;
        let account = state
            .inner
            .registry
            .user(&user_id)
            .map_err(|_| ApiError::unauthenticated())?;
        Ok(Self { account, token })
    }
}

fn parse_json<T: serde::de::DeserializeOwned>(body: &[u8]) -> Result<T, ApiError> {
    serde_json::from_slice(body)
        .map_err(|e| ApiError::bad_request(format!("invalid JSON body: {e}")))
}

async fn blocking<T: Send + 'static>(
    f: impl FnOnce() -> Result<T, StoreError> + Send + 'static,
) -> Result<T, ApiError> {
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|_| StoreError::Storage("worker panicked".into()))?
        .map_err(ApiError::from)
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct Credentials {
    handle: String,
    password: String,
}

async fn register(State(state): State<AppState>, body: Bytes) -> Result<Response, ApiError> {
    let c: Credentials = parse_json(&body)?;
    if c.password.is_empty() {
        return Err(ApiError::bad_request("password must not be empty"));
    }
    let registry = state.inner.registry.clone();
    let account = blocking(move || registry.register_user(&c.handle, &c.password)).await?;
    Ok((StatusCode::CREATED, Json(account)).into_response())
}

#[derive(Serialize)]
struct LoginResponse {
    token: String,
    expires_at: Timestamp,
    user: UserAccount,
}

async fn login(State(state): State<AppState>, body: Bytes) -> Result<Response, ApiError> {
    let c: Credentials = parse_json(&body)?;
    let registry = state.inner.registry.clone();
    let account = blocking(move || registry.authenticate(&c.handle, &c.password)).await?;
    let session = state.inner.sessions.issue(account.user_id.clone());
    let max_age = (session.expires_at - session.issued_at).num_seconds();
    let cookie = format!(
        "{SESSION_COOKIE}={}; Path=/; Max-Age={max_age}; HttpOnly; Secure; SameSite=Strict",
        session.token
    );
    let mut res = Json(LoginResponse {
        token: session.token,
        expires_at: session.expires_at,
        user: account,
    })
    .into_response();
    res.headers_mut().insert(
        header::SET_COOKIE,
        HeaderValue::from_str(&cookie).expect("token is header-safe"),
    );
    Ok(res)
}

async fn logout(State(state): State<AppState>, user: CurrentUser) -> Response {
    state.inner.sessions.revoke(&user.token);
    let mut res = StatusCode::NO_CONTENT.into_response();
    res.headers_mut().insert(
        header::SET_COOKIE,
        HeaderValue::from_str(&format!(
            "{SESSION_COOKIE}=; Path=/; Max-Age=0; HttpOnly; Secure; SameSite=Strict"
        ))
        .unwrap(),
    );
    res
}

// ---- applications ----

#[derive(Deserialize)]
struct ListParams {
    tag: Option<String>,
    q: Option<String>,
    #[serde(default)]
    all_versions: bool,
}

fn non_empty(s: Option<String>) -> Option<String> {
    s.filter(|s| !s.trim().is_empty())
}

async fn list_applications(
    State(state): State<AppState>,
    Query(p): Query<ListParams>,
) -> Result<Response, ApiError> {
    let query = SearchQuery {
        tag: non_empty(p.tag),
        text: non_empty(p.q),
        all_versions: p.all_versions,
    };
    Ok(Json(state.inner.registry.search_applications(&query)?).into_response())
}

async fn publish_application(
    State(state): State<AppState>,
    user: CurrentUser,
    body: Bytes,
) -> Result<Response, ApiError> {
    if !user.account.can_publish_app {
        return Err(ApiError::forbidden());
    }
    let text =
        std::str::from_utf8(&body).map_err(|_| ApiError::bad_request("body is not UTF-8"))?;
    let manifest = validate_manifest_with_policy(text, &state.inner.settings.csp)?;
    state
        .inner
        .registry
        .put_application(&manifest, &user.account.user_id)?;
    log::info!(
        "{} published {} {}",
        user.account.handle,
        manifest.name,
        manifest.version
    );
    Ok((
        StatusCode::CREATED,
        Json(json!({ "name": manifest.name, "version": manifest.version.as_str() })),
    )
        .into_response())
}

async fn application_detail(
    State(state): State<AppState>,
    Path((name, version)): Path<(String, String)>,
) -> Result<Response, ApiError> {
    let manifest = state.inner.registry.get_application(&name, &version)?;
    Ok(Json(manifest.to_document()).into_response())
}

async fn application_source(
    State(state): State<AppState>,
    Path((name, version)): Path<(String, String)>,
) -> Result<Response, ApiError> {
    Ok(
        match state
            .inner
            .registry
            .get_application_source(&name, &version)?
        {
            ApplicationSource::Inline(text) => {
                ([(header::CONTENT_TYPE, "text/plain; charset=utf-8")], text).into_response()
            }
            ApplicationSource::Redirect(url) => Redirect::temporary(&url).into_response(),
        },
    )
}

// ---- shares ----

#[derive(Serialize)]
struct ShareCreated {
    token: String,
    expires_at: Timestamp,
    link: String,
}

async fn store_share(
    State(state): State<AppState>,
    user: CurrentUser,
    body: Bytes,
) -> Result<Response, ApiError> {
    let inner = &state.inner;
    inner
        .share_limiter
        .admit(&user.account.user_id, inner.registry.clock().now())
        .map_err(ApiError::rate_limited)?;
    let record = inner.registry.store_share(&body, &user.account.user_id)?;
    let link = format!(
        "{}/receive#{}",
        inner.settings.csp.own_origin(),
        record.token
    );
    Ok((
        StatusCode::CREATED,
        Json(ShareCreated {
            token: record.token,
            expires_at: record.expires_at,
            link,
        }),
    )
        .into_response())
}

async fn fetch_share(
    State(state): State<AppState>,
    Path(token): Path<String>,
) -> Result<Response, ApiError> {
    let blob = state.inner.registry.fetch_share(&token)?;
    Ok((
        [
            (header::CONTENT_TYPE, "application/octet-stream"),
            (header::CACHE_CONTROL, "no-store"),
        ],
        blob,
    )
        .into_response())
}

// ---- sample data ----

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct DatasetUpload {
    name: String,
    #[serde(default)]
    description: String,
    /// Standard base64.
    content: String,
}

async fn upload_dataset(
    State(state): State<AppState>,
    user: CurrentUser,
    body: Bytes,
) -> Result<Response, ApiError> {
    if !user.account.can_upload_data {
        return Err(ApiError::forbidden());
    }
    let upload: DatasetUpload = parse_json(&body)?;
    if upload.name.trim().is_empty() {
        return Err(ApiError::bad_request("dataset name must not be empty"));
    }
    let content = base64::engine::general_purpose::STANDARD
        .decode(upload.content.as_bytes())
        .map_err(|e| ApiError::bad_request(format!("content is not base64: {e}")))?;
    let byte_size = content.len();
    let id = state.inner.registry.put_sample_dataset(
        NewDataset {
            name: upload.name,
            description: upload.description,
            content,
        },
        &user.account.user_id,
    )?;
    Ok((
        StatusCode::CREATED,
        Json(json!({ "dataset_id": id, "byte_size": byte_size })),
    )
        .into_response())
}

async fn list_datasets(State(state): State<AppState>) -> Result<Response, ApiError> {
    Ok(Json(state.inner.registry.list_sample_datasets()?).into_response())
}

fn attachment_name(name: &str) -> String {
    let cleaned: String = name
        .chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || matches!(c, '.' | '-' | '_') {
                c
            } else {
                '_'
            }
        })
        .collect();
    if cleaned.is_empty() {
        "dataset".into()
    } else {
        cleaned
    }
}

async fn download_dataset(
    State(state): State<AppState>,
    Path(id): Path<String>,
) -> Result<Response, ApiError> {
    let d = state.inner.registry.get_sample_dataset(&id)?;
    let disposition = format!("attachment; filename=\"{}\"", attachment_name(&d.name));
    let mut res = Response::new(Body::from(d.content));
    let h = res.headers_mut();
    h.insert(
        header::CONTENT_TYPE,
        HeaderValue::from_static("application/octet-stream"),
    );
    h.insert(
        header::CONTENT_DISPOSITION,
        HeaderValue::from_str(&disposition).expect("sanitized"),
    );
    Ok(res)
}
