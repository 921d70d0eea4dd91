#![allow(dead_code)]

use std::sync::Arc;

use axum::body::Body;
use axum::http::{HeaderMap, Method, Request, StatusCode};
use axum::Router;
use chrono::{TimeZone, Utc};
use http_body_util::BodyExt;
use sandhub::clock::{ManualClock, SeededEntropy};
use sandhub::csp::CspPolicy;
use sandhub::server::{AppState, ServiceSettings};
use sandhub::store::{PermissionKind, Registry, RegistryConfig, SqliteStorage};
use serde_json::{json, Value};
use tower::ServiceExt;

pub const ORIGIN: &str = "https://sandhub.test";

pub struct Harness {
    pub state: AppState,
    pub router: Router,
    pub clock: ManualClock,
}

pub struct Reply {
    pub status: StatusCode,
    pub headers: HeaderMap,
    pub body: Vec<u8>,
}

impl Reply {
    pub fn json(&self) -> Value {
        serde_json::from_slice(&self.body)
            .unwrap_or_else(|e| panic!("{e}: {}", String::from_utf8_lossy(&self.body)))
    }

    pub fn header(&self, name: &str) -> Option<&str> {
        self.headers.get(name).and_then(|v| v.to_str().ok())
    }

    pub fn text(&self) -> String {
        String::from_utf8(self.body.clone()).unwrap()
    }
}

impl Harness {
    pub fn new() -> Self {
        Self::with_origin(ORIGIN)
    }

    pub fn with_origin(origin: &str) -> Self {
        Self::build(ServiceSettings::new(CspPolicy::new(origin).unwrap()))
    }

    pub fn build(settings: ServiceSettings) -> Self {
        let clock = ManualClock::new(Utc.with_ymd_and_hms(2026, 3, 1, 12, 0, 0).unwrap());
        let registry = Registry::new(
            Box::new(SqliteStorage::open_in_memory().unwrap()),
            Arc::new(clock.clone()),
            Arc::new(SeededEntropy::new(7)),
            RegistryConfig {
                credential_iterations: 1_000,
                ..RegistryConfig::default()
            },
        );
        let state = AppState::new(Arc::new(registry), settings);
        let router = state.router();
        Self {
            state,
            router,
            clock,
        }
    }

    /// Loads the built-in application corpus.
    pub fn seeded() -> Self {
        let h = Self::new();
        let reg = h.state.registry();
        let op = reg.operator().unwrap();
        reg.grant_directly(&op.handle, PermissionKind::PublishApp)
            .unwrap();
        reg.seed(&op.user_id).unwrap();
        h
    }

    pub async fn send(
        &self,
        method: Method,
        uri: &str,
        headers: &[(&str, &str)],
        body: impl Into<Body>,
    ) -> Reply {
        let mut req = Request::builder().method(method).uri(uri);
        for (k, v) in headers {
            req = req.header(*k, *v);
        }
        let res = self
            .router
            .clone()
            .oneshot(req.body(body.into()).unwrap())
            .await
            .unwrap();
        let status = res.status();
        let headers = res.headers().clone();
        let body = res.into_body().collect().await.unwrap().to_bytes().to_vec();
        Reply {
            status,
            headers,
            body,
        }
    }

    pub async fn get(&self, uri: &str) -> Reply {
        self.send(Method::GET, uri, &[], Body::empty()).await
    }

    pub async fn get_as(&self, uri: &str, token: &str) -> Reply {
        let auth = format!("Bearer {token}");
        self.send(Method::GET, uri, &[("authorization", &auth)], Body::empty())
            .await
    }

    /// POSTs `body`, authenticated when `token` is given.
    pub async fn post(&self, uri: &str, token: Option<&str>, body: impl Into<Body>) -> Reply {
        match token {
            Some(t) => {
                let auth = format!("Bearer {t}");
                self.send(Method::POST, uri, &[("authorization", &auth)], body)
                    .await
            }
            None => self.send(Method::POST, uri, &[], body).await,
        }
    }

    pub async fn register(&self, handle: &str, password: &str) -> Reply {
        let body = json!({ "handle": handle, "password": password }).to_string();
        self.post("/auth/register", None, body).await
    }

    pub async fn login(&self, handle: &str, password: &str) -> Reply {
        let body = json!({ "handle": handle, "password": password }).to_string();
        self.post("/auth/login", None, body).await
    }

    /// Registers `handle`, grants `perms` out of band, logs in and returns
    /// the session token.
    pub async fn user(&self, handle: &str, perms: &[PermissionKind]) -> String {
        assert_eq!(
            self.register(handle, "secret").await.status,
            StatusCode::CREATED
        );
        for p in perms {
            self.state.registry().grant_directly(handle, *p).unwrap();
        }
        let r = self.login(handle, "secret").await;
        assert_eq!(r.status, StatusCode::OK);
        r.json()["token"].as_str().unwrap().to_owned()
    }
}

/// A structurally valid sealed blob: salt, IV and `blocks` cipher blocks.
pub fn fake_blob(blocks: usize) -> Vec<u8> {
    (0..32 + 16 * blocks)
        .map(|i| (i * 31 % 251) as u8)
        .collect()
}

/// Substitutes a concrete value for each `{param}` segment.
pub fn concrete_path(template: &str) -> String {
    template
        .split('/')
        .map(|seg| if seg.starts_with('{') { "x" } else { seg })
        .collect::<Vec<_>>()
        .join("/")
}
