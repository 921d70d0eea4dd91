//! Persistence and query layer.
//!
//! [`Registry`] holds the rules (permissions, uniqueness, expiry, token
//! minting) and talks to a [`Storage`] backend for the rows themselves.
//! [`SqliteStorage`] is the bundled backend.

mod credentials;
mod sqlite;

use std::collections::BTreeMap;
use std::sync::Arc;

use chrono::Duration;
use serde::Serialize;

use crate::clock::{random_token, Clock, Entropy, Timestamp};
use crate::manifest::{ApplicationManifest, Runtime, SourceRef, Version};
use crate::share::check_blob_structure;

pub use credentials::{hash_password, verify_password, DEFAULT_CREDENTIAL_ITERATIONS};
pub use sqlite::SqliteStorage;

/// 128-bit share tokens.
pub const SHARE_TOKEN_BYTES: usize = 16;
const ID_BYTES: usize = 12;

#[derive(Debug, thiserror::Error, Clone, PartialEq, Eq)]
pub enum StoreError {
    #[error("an application with this name and version already exists")]
    DuplicateNameVersion,
    #[error("permission denied")]
    PermissionDenied,
    #[error("unknown user")]
    UnknownUser,
    #[error("not found")]
    NotFound,
    #[error("sealed blob is structurally invalid")]
    MalformedBlob,
    #[error("authentication required")]
    Unauthenticated,
    #[error("only administrators may do that")]
    NotAdmin,
    #[error("no such permission request")]
    NoSuchRequest,
    #[error("a request of this kind is already pending")]
    DuplicatePending,
    #[error("handle already taken")]
    DuplicateHandle,
    #[error("invalid handle or password")]
    BadCredentials,
    #[error("invalid handle: {0}")]
    InvalidHandle(&'static str),
    #[error("storage failure: {0}")]
    Storage(String),
}

pub type StoreResult<T> = Result<T, StoreError>;

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(transparent)]
pub struct UserId(pub String);

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct UserAccount {
    pub user_id: UserId,
    pub handle: String,
    #[serde(skip)]
    pub credential_hash: String,
    pub can_publish_app: bool,
    pub can_upload_data: bool,
    pub is_admin: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum PermissionKind {
    PublishApp,
    UploadData,
}

impl PermissionKind {
    pub fn label(self) -> &'static str {
        match self {
            PermissionKind::PublishApp => "publish-app",
            PermissionKind::UploadData => "upload-data",
        }
    }

    pub fn from_label(s: &str) -> Option<Self> {
        match s {
            "publish-app" => Some(PermissionKind::PublishApp),
            "upload-data" => Some(PermissionKind::UploadData),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum RequestStatus {
    Pending,
    Granted,
    Denied,
}

impl RequestStatus {
    pub(crate) fn label(self) -> &'static str {
        match self {
            RequestStatus::Pending => "pending",
            RequestStatus::Granted => "granted",
            RequestStatus::Denied => "denied",
        }
    }

    pub(crate) fn from_label(s: &str) -> Option<Self> {
        match s {
            "pending" => Some(RequestStatus::Pending),
            "granted" => Some(RequestStatus::Granted),
            "denied" => Some(RequestStatus::Denied),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct PermissionRequest {
    pub request_id: String,
    pub user_id: UserId,
    pub kind: PermissionKind,
    pub status: RequestStatus,
    pub created_at: Timestamp,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StoredApplication {
    pub manifest: ApplicationManifest,
    pub publisher: UserId,
    pub published_at: Timestamp,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ApplicationSummary {
    pub name: String,
    pub version: String,
    pub runtime: Runtime,
    pub short_description: String,
    pub tags: Vec<String>,
}

impl From<&ApplicationManifest> for ApplicationSummary {
    fn from(m: &ApplicationManifest) -> Self {
        Self {
            name: m.name.clone(),
            version: m.version.to_string(),
            runtime: m.runtime,
            short_description: m.short_description.clone(),
            tags: m.tags.iter().cloned().collect(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SearchQuery {
    pub tag: Option<String>,
    pub text: Option<String>,
    pub all_versions: bool,
}

/// What `GET .../source` hands the browser.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ApplicationSource {
    Inline(String),
    Redirect(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SharedResultRecord {
    pub token: String,
    pub blob: Vec<u8>,
    pub owner: UserId,
    pub created_at: Timestamp,
    pub expires_at: Timestamp,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NewDataset {
    pub name: String,
    pub description: String,
    pub content: Vec<u8>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SampleDataset {
    pub dataset_id: String,
    pub name: String,
    pub description: String,
    pub content: Vec<u8>,
    pub uploader: UserId,
    pub byte_size: u64,
    pub uploaded_at: Timestamp,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct DatasetSummary {
    pub dataset_id: String,
    pub name: String,
    pub description: String,
    pub byte_size: u64,
    pub uploaded_at: Timestamp,
}

/// Row-level persistence. Implementations enforce the uniqueness
/// constraints they are handed (handle, `(name, version)`, token).
pub trait Storage: Send + Sync {
    fn insert_user(&self, user: &UserAccount) -> StoreResult<()>;
    fn user(&self, id: &UserId) -> StoreResult<Option<UserAccount>>;
    fn user_by_handle(&self, handle: &str) -> StoreResult<Option<UserAccount>>;

    fn insert_request(&self, request: &PermissionRequest) -> StoreResult<()>;
    fn request(&self, request_id: &str) -> StoreResult<Option<PermissionRequest>>;
    fn pending_request(
        &self,
        user: &UserId,
        kind: PermissionKind,
    ) -> StoreResult<Option<PermissionRequest>>;
    /// Atomically settles a pending request, setting the matching flag when
    /// granted.
    fn settle_request(&self, request_id: &str, status: RequestStatus) -> StoreResult<()>;

    fn insert_application(&self, app: &StoredApplication) -> StoreResult<()>;
    fn application(&self, name: &str, version: &str) -> StoreResult<Option<StoredApplication>>;
    fn applications(&self) -> StoreResult<Vec<StoredApplication>>;

    fn insert_share(&self, share: &SharedResultRecord) -> StoreResult<()>;
    fn share(&self, token: &str) -> StoreResult<Option<SharedResultRecord>>;
    fn delete_share(&self, token: &str) -> StoreResult<()>;
    fn purge_shares_expired_at(&self, now: Timestamp) -> StoreResult<usize>;

    fn insert_dataset(&self, dataset: &SampleDataset) -> StoreResult<()>;
    fn dataset(&self, id: &str) -> StoreResult<Option<SampleDataset>>;
    fn datasets(&self) -> StoreResult<Vec<DatasetSummary>>;
}

#[derive(Debug, Clone)]
pub struct RegistryConfig {
    pub share_ttl: Duration,
    pub credential_iterations: u32,
}

impl Default for RegistryConfig {
    fn default() -> Self {
        Self {
            share_ttl: Duration::days(7),
            credential_iterations: DEFAULT_CREDENTIAL_ITERATIONS,
        }
    }
}

pub const OPERATOR_HANDLE: &str = "operator";

pub struct Registry {
    storage: Box<dyn Storage>,
    clock: Arc<dyn Clock>,
    entropy: Arc<dyn Entropy>,
    config: RegistryConfig,
}

impl std::fmt::Debug for Registry {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Registry")
            .field("config", &self.config)
            .finish_non_exhaustive()
    }
}

fn check_handle(handle: &str) -> StoreResult<()> {
    if handle.is_empty() || handle.len() > 64 {
        return Err(StoreError::InvalidHandle("must be 1 to 64 characters"));
    }
    if !handle
        .chars()
        .all(|c| c.is_ascii_alphanumeric() || matches!(c, '_' | '-' | '.'))
    {
        return Err(StoreError::InvalidHandle(
            "only ASCII letters, digits, '_', '-' and '.' are allowed",
        ));
    }
    Ok(())
}

impl Registry {
    pub fn new(
        storage: Box<dyn Storage>,
        clock: Arc<dyn Clock>,
        entropy: Arc<dyn Entropy>,
        config: RegistryConfig,
    ) -> Self {
        Self {
            storage,
            clock,
            entropy,
            config,
        }
    }

    pub fn config(&self) -> &RegistryConfig {
        &self.config
    }

    pub fn clock(&self) -> &Arc<dyn Clock> {
        &self.clock
    }

    pub fn entropy(&self) -> &Arc<dyn Entropy> {
        &self.entropy
    }

    fn new_id(&self) -> String {
        random_token(self.entropy.as_ref(), ID_BYTES)
    }

    // ---- accounts ----

    pub fn register_user(&self, handle: &str, password: &str) -> StoreResult<UserAccount> {
        self.create_account(handle, password, false)
    }

    fn create_account(
        &self,
        handle: &str,
        password: &str,
        is_admin: bool,
    ) -> StoreResult<UserAccount> {
        check_handle(handle)?;
        if password.is_empty() {
            return Err(StoreError::BadCredentials);
        }
        let mut salt = [0u8; 16];
        self.entropy.fill(&mut salt);
        let user = UserAccount {
            user_id: UserId(self.new_id()),
            handle: handle.to_owned(),
            credential_hash: hash_password(password, &salt, self.config.credential_iterations),
            can_publish_app: false,
            can_upload_data: false,
            is_admin,
        };
        self.storage.insert_user(&user)?;
        Ok(user)
    }

    /// Creates an administrator account.
    pub fn register_admin(&self, handle: &str, password: &str) -> StoreResult<UserAccount> {
        self.create_account(handle, password, true)
    }

    /// The built-in administrator used by local command-line tooling. It
    /// gets a random password nobody knows, so it cannot log in over HTTP.
    pub fn operator(&self) -> StoreResult<UserAccount> {
        if let Some(u) = self.storage.user_by_handle(OPERATOR_HANDLE)? {
            return Ok(u);
        }
        let password = random_token(self.entropy.as_ref(), 32);
        match self.create_account(OPERATOR_HANDLE, &password, true) {
            Err(StoreError::DuplicateHandle) => self
                .storage
                .user_by_handle(OPERATOR_HANDLE)?
                .ok_or(StoreError::UnknownUser),
            other => other,
        }
    }

    pub fn authenticate(&self, handle: &str, password: &str) -> StoreResult<UserAccount> {
        let user = self
            .storage
            .user_by_handle(handle)?
            .ok_or(StoreError::BadCredentials)?;
        if verify_password(password, &user.credential_hash) {
            Ok(user)
        } else {
            Err(StoreError::BadCredentials)
        }
    }

    pub fn user(&self, id: &UserId) -> StoreResult<UserAccount> {
        self.storage.user(id)?.ok_or(StoreError::UnknownUser)
    }

    pub fn user_by_handle(&self, handle: &str) -> StoreResult<UserAccount> {
        self.storage
            .user_by_handle(handle)?
            .ok_or(StoreError::UnknownUser)
    }

    // ---- permissions ----

    pub fn request_permission(
        &self,
        user: &UserId,
        kind: PermissionKind,
    ) -> StoreResult<PermissionRequest> {
        self.user(user)?;
        if self.storage.pending_request(user, kind)?.is_some() {
            return Err(StoreError::DuplicatePending);
        }
        let request = PermissionRequest {
            request_id: self.new_id(),
            user_id: user.clone(),
            kind,
            status: RequestStatus::Pending,
            created_at: self.clock.now(),
        };
        self.storage.insert_request(&request)?;
        Ok(request)
    }

    pub fn grant_permission(&self, admin: &UserId, request_id: &str) -> StoreResult<UserAccount> {
        let request = self.settle(admin, request_id, RequestStatus::Granted)?;
        self.user(&request.user_id)
    }

    pub fn deny_permission(
        &self,
        admin: &UserId,
        request_id: &str,
    ) -> StoreResult<PermissionRequest> {
        let mut request = self.settle(admin, request_id, RequestStatus::Denied)?;
        request.status = RequestStatus::Denied;
        Ok(request)
    }

    fn settle(
        &self,
        admin: &UserId,
        request_id: &str,
        status: RequestStatus,
    ) -> StoreResult<PermissionRequest> {
        if !self.user(admin)?.is_admin {
            return Err(StoreError::NotAdmin);
        }
        let request = self
            .storage
            .request(request_id)?
            .filter(|r| r.status == RequestStatus::Pending)
            .ok_or(StoreError::NoSuchRequest)?;
        self.storage.settle_request(request_id, status)?;
        Ok(request)
    }

    pub fn pending_request(
        &self,
        user: &UserId,
        kind: PermissionKind,
    ) -> StoreResult<Option<PermissionRequest>> {
        self.storage.pending_request(user, kind)
    }

    // ---- applications ----

    pub fn put_application(
        &self,
        manifest: &ApplicationManifest,
        publisher: &UserId,
    ) -> StoreResult<(String, String)> {
        let user = self.user(publisher)?;
        if !user.can_publish_app {
            return Err(StoreError::PermissionDenied);
        }
        if self
            .storage
            .application(&manifest.name, manifest.version.as_str())?
            .is_some()
        {
            return Err(StoreError::DuplicateNameVersion);
        }
        self.storage.insert_application(&StoredApplication {
            manifest: manifest.clone(),
            publisher: publisher.clone(),
            published_at: self.clock.now(),
        })?;
        Ok((manifest.name.clone(), manifest.version.to_string()))
    }

    pub fn get_application(&self, name: &str, version: &str) -> StoreResult<ApplicationManifest> {
        self.storage
            .application(name, version)?
            .map(|a| a.manifest)
            .ok_or(StoreError::NotFound)
    }

    pub fn get_application_source(
        &self,
        name: &str,
        version: &str,
    ) -> StoreResult<ApplicationSource> {
        Ok(match self.get_application(name, version)?.source {
            SourceRef::Inline(text) => ApplicationSource::Inline(text),
            SourceRef::Url(url) => ApplicationSource::Redirect(url.to_string()),
        })
    }

    /// Case-insensitive tag equality and name/short-description substring
    /// match. Unless `all_versions` is set, only the newest version of each
    /// name is considered. Results are ordered by name, then newest first.
    pub fn search_applications(&self, query: &SearchQuery) -> StoreResult<Vec<ApplicationSummary>> {
        let mut apps: Vec<ApplicationManifest> = self
            .storage
            .applications()?
            .into_iter()
            .map(|a| a.manifest)
            .collect();
        if !query.all_versions {
            let mut latest: BTreeMap<String, ApplicationManifest> = BTreeMap::new();
            for m in apps {
                match latest.get(&m.name) {
                    Some(cur) if cur.version >= m.version => {}
                    _ => {
                        latest.insert(m.name.clone(), m);
                    }
                }
            }
            apps = latest.into_values().collect();
        }
        let tag = query.tag.as_deref().map(str::to_lowercase);
        let text = query.text.as_deref().map(str::to_lowercase);
        apps.retain(|m| {
            let tag_ok = tag
                .as_deref()
                .map_or(true, |t| m.tags.iter().any(|mt| mt.to_lowercase() == t));
            let text_ok = text.as_deref().map_or(true, |q| {
                m.name.to_lowercase().contains(q) || m.short_description.to_lowercase().contains(q)
            });
            tag_ok && text_ok
        });
        apps.sort_by(|a, b| {
            a.name
                .to_lowercase()
                .cmp(&b.name.to_lowercase())
                .then_with(|| a.name.cmp(&b.name))
                .then_with(|| b.version.cmp(&a.version))
        });
        Ok(apps.iter().map(ApplicationSummary::from).collect())
    }

    pub fn application_versions(&self, name: &str) -> StoreResult<Vec<Version>> {
        let mut v: Vec<Version> = self
            .storage
            .applications()?
            .into_iter()
            .filter(|a| a.manifest.name == name)
            .map(|a| a.manifest.version)
            .collect();
        v.sort_by(|a, b| b.cmp(a));
        Ok(v)
    }

    // ---- shares ----

    /// Stores an opaque sealed blob. Only its shape is checked; the server
    /// has no key.
    pub fn store_share(&self, blob: &[u8], owner: &UserId) -> StoreResult<SharedResultRecord> {
        if self.storage.user(owner)?.is_none() {
            return Err(StoreError::Unauthenticated);
        }
        check_blob_structure(blob).map_err(|_| StoreError::MalformedBlob)?;
        let now = self.clock.now();
        let record = SharedResultRecord {
            token: random_token(self.entropy.as_ref(), SHARE_TOKEN_BYTES),
            blob: blob.to_vec(),
            owner: owner.clone(),
            created_at: now,
            expires_at: now + self.config.share_ttl,
        };
        self.storage.insert_share(&record)?;
        Ok(record)
    }

    /// Unknown, expired and purged tokens are all `NotFound`. Expired rows
    /// are deleted on sight.
    pub fn fetch_share(&self, token: &str) -> StoreResult<Vec<u8>> {
        let record = self.storage.share(token)?.ok_or(StoreError::NotFound)?;
        if self.clock.now() >= record.expires_at {
            self.storage.delete_share(token)?;
            return Err(StoreError::NotFound);
        }
        Ok(record.blob)
    }

    pub fn purge_expired_shares(&self) -> StoreResult<usize> {
        self.storage.purge_shares_expired_at(self.clock.now())
    }

    // ---- sample data ----

    pub fn put_sample_dataset(
        &self,
        dataset: NewDataset,
        uploader: &UserId,
    ) -> StoreResult<String> {
        if !self.user(uploader)?.can_upload_data {
            return Err(StoreError::PermissionDenied);
        }
        let id = self.new_id();
        self.storage.insert_dataset(&SampleDataset {
            dataset_id: id.clone(),
            name: dataset.name,
            description: dataset.description,
            byte_size: dataset.content.len() as u64,
            content: dataset.content,
            uploader: uploader.clone(),
            uploaded_at: self.clock.now(),
        })?;
        Ok(id)
    }

    pub fn list_sample_datasets(&self) -> StoreResult<Vec<DatasetSummary>> {
        self.storage.datasets()
    }

    pub fn get_sample_dataset(&self, id: &str) -> StoreResult<SampleDataset> {
        self.storage.dataset(id)?.ok_or(StoreError::NotFound)
    }

    /// Publishes the built-in manifest corpus as `publisher`, skipping any
    /// `(name, version)` already present. Returns how many were added.
    pub fn seed(&self, publisher: &UserId) -> StoreResult<usize> {
        let manifests = crate::manifest::seed_manifests()
            .map_err(|e| StoreError::Storage(format!("seed corpus invalid: {e}")))?;
        let mut added = 0;
        for m in &manifests {
            match self.put_application(m, publisher) {
                Ok(_) => added += 1,
                Err(StoreError::DuplicateNameVersion) => {}
                Err(e) => return Err(e),
            }
        }
        Ok(added)
    }

    /// Ensures `handle` holds `kind`, filing and granting a request through
    /// the operator account. Used by local administration tooling.
    pub fn grant_directly(&self, handle: &str, kind: PermissionKind) -> StoreResult<UserAccount> {
        let user = self.user_by_handle(handle)?;
        let operator = self.operator()?;
        let request = match self.storage.pending_request(&user.user_id, kind)? {
            Some(r) => r,
            None => self.request_permission(&user.user_id, kind)?,
        };
        self.grant_permission(&operator.user_id, &request.request_id)
    }
}
