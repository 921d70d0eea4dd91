use std::path::Path;
use std::sync::Mutex;

use chrono::DateTime;
use rusqlite::{params, Connection, ErrorCode, OptionalExtension, Row};

use super::{
    DatasetSummary, PermissionKind, PermissionRequest, RequestStatus, SampleDataset,
    SharedResultRecord, Storage, StoreError, StoreResult, StoredApplication, UserAccount, UserId,
};
use crate::clock::Timestamp;
use crate::manifest::parse_trusted_manifest;

pub(super) const SCHEMA: &str = "
CREATE TABLE IF NOT EXISTS users (
    user_id          TEXT PRIMARY KEY,
    handle           TEXT NOT NULL UNIQUE,
    credential_hash  TEXT NOT NULL,
    can_publish_app  INTEGER NOT NULL DEFAULT 0,
    can_upload_data  INTEGER NOT NULL DEFAULT 0,
    is_admin         INTEGER NOT NULL DEFAULT 0
);
CREATE TABLE IF NOT EXISTS permission_requests (
    request_id  TEXT PRIMARY KEY,
    user_id     TEXT NOT NULL REFERENCES users(user_id),
    kind        TEXT NOT NULL,
    status      TEXT NOT NULL,
    created_at  INTEGER NOT NULL
);
CREATE UNIQUE INDEX IF NOT EXISTS one_pending_request
    ON permission_requests(user_id, kind) WHERE status = 'pending';
CREATE TABLE IF NOT EXISTS applications (
    name          TEXT NOT NULL,
    version       TEXT NOT NULL,
    manifest      TEXT NOT NULL,
    publisher     TEXT NOT NULL REFERENCES users(user_id),
    published_at  INTEGER NOT NULL,
    PRIMARY KEY (name, version)
);
CREATE TRIGGER IF NOT EXISTS applications_immutable BEFORE UPDATE ON applications
    BEGIN SELECT RAISE(ABORT, 'applications are immutable'); END;
CREATE TABLE IF NOT EXISTS shares (
    token       TEXT PRIMARY KEY,
    blob        BLOB NOT NULL,
    owner       TEXT NOT NULL REFERENCES users(user_id),
    created_at  INTEGER NOT NULL,
    expires_at  INTEGER NOT NULL,
    CHECK (expires_at > created_at)
);
CREATE TABLE IF NOT EXISTS datasets (
    dataset_id   TEXT PRIMARY KEY,
    name         TEXT NOT NULL,
    description  TEXT NOT NULL,
    content      BLOB NOT NULL,
    uploader     TEXT NOT NULL REFERENCES users(user_id),
    byte_size    INTEGER NOT NULL,
    uploaded_at  INTEGER NOT NULL,
    CHECK (byte_size = length(content))
);
CREATE TRIGGER IF NOT EXISTS datasets_immutable BEFORE UPDATE ON datasets
    BEGIN SELECT RAISE(ABORT, 'datasets are immutable'); END;
";

/// Single-file SQLite backend. One connection, serialized behind a mutex.
pub struct SqliteStorage {
    conn: Mutex<Connection>,
}

impl std::fmt::Debug for SqliteStorage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str("SqliteStorage")
    }
}

fn db_err(e: rusqlite::Error) -> StoreError {
    StoreError::Storage(e.to_string())
}

fn is_constraint(e: &rusqlite::Error) -> bool {
    matches!(e, rusqlite::Error::SqliteFailure(f, _) if f.code == ErrorCode::ConstraintViolation)
}

fn millis(t: Timestamp) -> i64 {
    t.timestamp_millis()
}

fn from_millis(ms: i64) -> rusqlite::Result<Timestamp> {
    DateTime::from_timestamp_millis(ms).ok_or(rusqlite::Error::IntegralValueOutOfRange(0, ms))
}

fn user_row(row: &Row<'_>) -> rusqlite::Result<UserAccount> {
    Ok(UserAccount {
        user_id: UserId(row.get(0)?),
        handle: row.get(1)?,
        credential_hash: row.get(2)?,
        can_publish_app: row.get(3)?,
        can_upload_data: row.get(4)?,
        is_admin: row.get(5)?,
    })
}

fn request_row(row: &Row<'_>) -> rusqlite::Result<PermissionRequest> {
    let kind: String = row.get(2)?;
    let status: String = row.get(3)?;
    Ok(PermissionRequest {
        request_id: row.get(0)?,
        user_id: UserId(row.get(1)?),
        kind: PermissionKind::from_label(&kind)
            .ok_or_else(|| rusqlite::Error::InvalidColumnName(kind.clone()))?,
        status: RequestStatus::from_label(&status)
            .ok_or_else(|| rusqlite::Error::InvalidColumnName(status.clone()))?,
        created_at: from_millis(row.get(4)?)?,
    })
}

fn application_row(row: &Row<'_>) -> rusqlite::Result<StoredApplication> {
    let text: String = row.get(0)?;
    let manifest = parse_trusted_manifest(&text).map_err(|e| {
        rusqlite::Error::FromSqlConversionFailure(0, rusqlite::types::Type::Text, Box::new(e))
    })?;
    Ok(StoredApplication {
        manifest,
        publisher: UserId(row.get(1)?),
        published_at: from_millis(row.get(2)?)?,
    })
}

fn share_row(row: &Row<'_>) -> rusqlite::Result<SharedResultRecord> {
    Ok(SharedResultRecord {
        token: row.get(0)?,
        blob: row.get(1)?,
        owner: UserId(row.get(2)?),
        created_at: from_millis(row.get(3)?)?,
        expires_at: from_millis(row.get(4)?)?,
    })
}

const USER_COLS: &str =
    "user_id, handle, credential_hash, can_publish_app, can_upload_data, is_admin";
const REQUEST_COLS: &str = "request_id, user_id, kind, status, created_at";

impl SqliteStorage {
    pub fn open(path: impl AsRef<Path>) -> StoreResult<Self> {
        Self::init(Connection::open(path).map_err(db_err)?)
    }

    pub fn open_in_memory() -> StoreResult<Self> {
        Self::init(Connection::open_in_memory().map_err(db_err)?)
    }

    fn init(conn: Connection) -> StoreResult<Self> {
        conn.execute_batch("PRAGMA foreign_keys = ON; PRAGMA journal_mode = WAL;")
            .map_err(db_err)?;
        conn.execute_batch(SCHEMA).map_err(db_err)?;
        Ok(Self {
            conn: Mutex::new(conn),
        })
    }

    fn with<T>(&self, f: impl FnOnce(&mut Connection) -> rusqlite::Result<T>) -> StoreResult<T> {
        let mut conn = self
            .conn
            .lock()
            .map_err(|_| StoreError::Storage("poisoned".into()))?;
        f(&mut conn).map_err(db_err)
    }

    fn insert(
        &self,
        on_conflict: StoreError,
        f: impl FnOnce(&Connection) -> rusqlite::Result<usize>,
    ) -> StoreResult<()> {
        let conn = self
            .conn
            .lock()
            .map_err(|_| StoreError::Storage("poisoned".into()))?;
        match f(&conn) {
            Ok(_) => Ok(()),
            Err(e) if is_constraint(&e) => Err(on_conflict),
            Err(e) => Err(db_err(e)),
        }
    }
}

impl Storage for SqliteStorage {
    fn insert_user(&self, u: &UserAccount) -> StoreResult<()> {
        self.insert(StoreError::DuplicateHandle, |c| {
            c.execute(
                &format!("INSERT INTO users ({USER_COLS}) VALUES (?1, ?2, ?3, ?4, ?5, ?6)"),
                params![
                    u.user_id.0,
                    u.handle,
                    u.credential_hash,
                    u.can_publish_app,
                    u.can_upload_data,
                    u.is_admin
                ],
            )
        })
    }

    fn user(&self, id: &UserId) -> StoreResult<Option<UserAccount>> {
        self.with(|c| {
            c.query_row(
                &format!("SELECT {USER_COLS} FROM users WHERE user_id = ?1"),
                [&id.0],
                user_row,
            )
            .optional()
        })
    }

    fn user_by_handle(&self, handle: &str) -> StoreResult<Option<UserAccount>> {
        self.with(|c| {
            c.query_row(
                &format!("SELECT {USER_COLS} FROM users WHERE handle = ?1"),
                [handle],
                user_row,
            )
            .optional()
        })
    }

    fn insert_request(&self, r: &PermissionRequest) -> StoreResult<()> {
        self.insert(StoreError::DuplicatePending, |c| {
            c.execute(
                &format!(
                    "INSERT INTO permission_requests ({REQUEST_COLS}) VALUES (?1, ?2, ?3, ?4, ?5)"
                ),
                params![
                    r.request_id,
                    r.user_id.0,
                    r.kind.label(),
                    r.status.label(),
                    millis(r.created_at)
                ],
            )
        })
    }

    fn request(&self, request_id: &str) -> StoreResult<Option<PermissionRequest>> {
        self.with(|c| {
            c.query_row(
                &format!("SELECT {REQUEST_COLS} FROM permission_requests WHERE request_id = ?1"),
                [request_id],
                request_row,
            )
            .optional()
        })
    }

    fn pending_request(
        &self,
        user: &UserId,
        kind: PermissionKind,
    ) -> StoreResult<Option<PermissionRequest>> {
        self.with(|c| {
            c.query_row(
                &format!(
                    "SELECT {REQUEST_COLS} FROM permission_requests \
                     WHERE user_id = ?1 AND kind = ?2 AND status = 'pending'"
                ),
                params![user.0, kind.label()],
                request_row,
            )
            .optional()
        })
    }

    fn settle_request(&self, request_id: &str, status: RequestStatus) -> StoreResult<()> {
        let changed = self.with(|c| {
            let tx = c.transaction()?;
            let row: Option<(String, String)> = tx
                .query_row(
                    "SELECT user_id, kind FROM permission_requests \
                     WHERE request_id = ?1 AND status = 'pending'",
                    [request_id],
                    |r| Ok((r.get(0)?, r.get(1)?)),
                )
                .optional()?;
            let Some((user_id, kind)) = row else {
                return Ok(false);
            };
            tx.execute(
                "UPDATE permission_requests SET status = ?1 WHERE request_id = ?2",
                params![status.label(), request_id],
            )?;
            if status == RequestStatus::Granted {
                let column = match PermissionKind::from_label(&kind) {
                    Some(PermissionKind::PublishApp) => "can_publish_app",
                    Some(PermissionKind::UploadData) => "can_upload_data",
                    None => return Err(rusqlite::Error::InvalidColumnName(kind)),
                };
                tx.execute(
                    &format!("UPDATE users SET {column} = 1 WHERE user_id = ?1"),
                    [user_id],
                )?;
            }
            tx.commit()?;
            Ok(true)
        })?;
        if changed {
            Ok(())
        } else {
            Err(StoreError::NoSuchRequest)
        }
    }

    fn insert_application(&self, app: &StoredApplication) -> StoreResult<()> {
        let text = serde_json::to_string(&app.manifest.to_document())
            .map_err(|e| StoreError::Storage(e.to_string()))?;
        self.insert(StoreError::DuplicateNameVersion, |c| {
            c.execute(
                "INSERT INTO applications (name, version, manifest, publisher, published_at) \
                 VALUES (?1, ?2, ?3, ?4, ?5)",
                params![
                    app.manifest.name,
                    app.manifest.version.as_str(),
                    text,
                    app.publisher.0,
                    millis(app.published_at)
                ],
            )
        })
    }

    fn application(&self, name: &str, version: &str) -> StoreResult<Option<StoredApplication>> {
        self.with(|c| {
            c.query_row(
                "SELECT manifest, publisher, published_at FROM applications \
                 WHERE name = ?1 AND version = ?2",
                [name, version],
                application_row,
            )
            .optional()
        })
    }

    fn applications(&self) -> StoreResult<Vec<StoredApplication>> {
        self.with(|c| {
            let mut stmt =
                c.prepare("SELECT manifest, publisher, published_at FROM applications")?;
            let rows = stmt.query_map([], application_row)?;
            rows.collect()
        })
    }

    fn insert_share(&self, s: &SharedResultRecord) -> StoreResult<()> {
        self.insert(StoreError::Storage("share token collision".into()), |c| {
            c.execute(
                "INSERT INTO shares (token, blob, owner, created_at, expires_at) \
                 VALUES (?1, ?2, ?3, ?4, ?5)",
                params![
                    s.token,
                    s.blob,
                    s.owner.0,
                    millis(s.created_at),
                    millis(s.expires_at)
                ],
            )
        })
    }

    fn share(&self, token: &str) -> StoreResult<Option<SharedResultRecord>> {
        self.with(|c| {
            c.query_row(
                "SELECT token, blob, owner, created_at, expires_at FROM shares WHERE token = ?1",
                [token],
                share_row,
            )
            .optional()
        })
    }

    fn delete_share(&self, token: &str) -> StoreResult<()> {
        self.with(|c| c.execute("DELETE FROM shares WHERE token = ?1", [token]))
            .map(drop)
    }

    fn purge_shares_expired_at(&self, now: Timestamp) -> StoreResult<usize> {
        self.with(|c| c.execute("DELETE FROM shares WHERE expires_at <= ?1", [millis(now)]))
    }

    fn insert_dataset(&self, d: &SampleDataset) -> StoreResult<()> {
        self.insert(StoreError::Storage("dataset id collision".into()), |c| {
            c.execute(
                "INSERT INTO datasets \
                 (dataset_id, name, description, content, uploader, byte_size, uploaded_at) \
                 VALUES (?1, ?2, ?3, ?4, ?5, ?6, ?7)",
                params![
                    d.dataset_id,
                    d.name,
                    d.description,
                    d.content,
                    d.uploader.0,
                    d.byte_size as i64,
                    millis(d.uploaded_at)
                ],
            )
        })
    }

    fn dataset(&self, id: &str) -> StoreResult<Option<SampleDataset>> {
        self.with(|c| {
            c.query_row(
                "SELECT dataset_id, name, description, content, uploader, byte_size, uploaded_at \
                 FROM datasets WHERE dataset_id = ?1",
                [id],
                |r| {
                    Ok(SampleDataset {
                        dataset_id: r.get(0)?,
                        name: r.get(1)?,
                        description: r.get(2)?,
                        content: r.get(3)?,
                        uploader: UserId(r.get(4)?),
                        byte_size: r.get::<_, i64>(5)? as u64,
                        uploaded_at: from_millis(r.get(6)?)?,
                    })
                },
            )
            .optional()
        })
    }

    fn datasets(&self) -> StoreResult<Vec<DatasetSummary>> {
        self.with(|c| {
            let mut stmt = c.prepare(
                "SELECT dataset_id, name, description, byte_size, uploaded_at \
                 FROM datasets ORDER BY uploaded_at, rowid",
            )?;
            let rows = stmt.query_map([], |r| {
                Ok(DatasetSummary {
                    dataset_id: r.get(0)?,
                    name: r.get(1)?,
                    description: r.get(2)?,
                    byte_size: r.get::<_, i64>(3)? as u64,
                    uploaded_at: from_millis(r.get(4)?)?,
                })
            })?;
            rows.collect()
        })
    }
}
