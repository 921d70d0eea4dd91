use std::collections::{HashMap, VecDeque};
use std::sync::{Arc, Mutex};

use chrono::Duration;
use serde::Serialize;

use crate::clock::{random_token, Clock, Entropy, Timestamp};
use crate::store::UserId;

pub const SESSION_TOKEN_BYTES: usize = 32;

#[derive(Clone, PartialEq, Eq, Serialize)]
pub struct SessionToken {
    pub token: String,
    pub user_id: UserId,
    pub issued_at: Timestamp,
    pub expires_at: Timestamp,
}

impl std::fmt::Debug for SessionToken {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SessionToken")
            .field("user_id", &self.user_id)
            .field("expires_at", &self.expires_at)
            .finish_non_exhaustive()
    }
}

/// In-memory session records. Sessions do not survive a restart.
pub struct SessionTable {
    sessions: Mutex<HashMap<String, SessionToken>>,
    ttl: Duration,
    clock: Arc<dyn Clock>,
    entropy: Arc<dyn Entropy>,
}

impl SessionTable {
    pub fn new(ttl: Duration, clock: Arc<dyn Clock>, entropy: Arc<dyn Entropy>) -> Self {
        Self {
            sessions: Mutex::new(HashMap::new()),
            ttl,
            clock,
            entropy,
        }
    }

    pub fn issue(&self, user_id: UserId) -> SessionToken {
        let now = self.clock.now();
        let mut sessions = self.sessions.lock().unwrap();
        let token = loop {
            let t = random_token(self.entropy.as_ref(), SESSION_TOKEN_BYTES);
            if !sessions.contains_key(&t) {
                break t;
            }
        };
        let session = SessionToken {
            token: token.clone(),
            user_id,
            issued_at: now,
            expires_at: now + self.ttl,
        };
        sessions.insert(token, session.clone());
        session
    }

    /// The owning user, if the token is known and unexpired.
    pub fn resolve(&self, token: &str) -> Option<UserId> {
        let now = self.clock.now();
        let mut sessions = self.sessions.lock().unwrap();
        match sessions.get(token) {
            Some(s) if now < s.expires_at => Some(s.user_id.clone()),
            Some(_) => {
                sessions.remove(token);
                None
            }
            None => None,
        }
    }

    pub fn revoke(&self, token: &str) -> bool {
        self.sessions.lock().unwrap().remove(token).is_some()
    }

    pub fn purge_expired(&self) -> usize {
        let now = self.clock.now();
        let mut sessions = self.sessions.lock().unwrap();
        let before = sessions.len();
        sessions.retain(|_, s| now < s.expires_at);
        before - sessions.len()
    }

    pub fn len(&self) -> usize {
        self.sessions.lock().unwrap().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Sliding one-minute window per user. A limit of zero disables it.
pub struct RateLimiter {
    per_minute: u32,
    hits: Mutex<HashMap<UserId, VecDeque<Timestamp>>>,
}

impl RateLimiter {
    pub fn new(per_minute: u32) -> Self {
        Self {
            per_minute,
            hits: Mutex::new(HashMap::new()),
        }
    }

    /// Records a hit, or returns how many seconds until one would be admitted.
    pub fn admit(&self, user: &UserId, now: Timestamp) -> Result<(), u64> {
        if self.per_minute == 0 {
            return Ok(());
        }
        let window = Duration::minutes(1);
        let mut hits = self.hits.lock().unwrap();
        let q = hits.entry(user.clone()).or_default();
        while q.front().is_some_and(|t| now - *t >= window) {
            q.pop_front();
        }
        if q.len() >= self.per_minute as usize {
            let wait = (*q.front().unwrap() + window - now).num_seconds().max(1);
            return Err(wait as u64);
        }
        q.push_back(now);
        Ok(())
    }
}
