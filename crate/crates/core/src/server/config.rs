use std::net::SocketAddr;
use std::path::PathBuf;

use chrono::Duration;

use crate::csp::CspPolicy;

pub const ENV_BIND: &str = "SANDHUB_BIND";
pub const ENV_PUBLIC_ORIGIN: &str = "SANDHUB_PUBLIC_ORIGIN";
pub const ENV_STORAGE: &str = "SANDHUB_STORAGE";
pub const ENV_SHARE_TTL_HOURS: &str = "SANDHUB_SHARE_TTL_HOURS";
pub const ENV_SESSION_HOURS: &str = "SANDHUB_SESSION_HOURS";
pub const ENV_SHARE_RATE_PER_MIN: &str = "SANDHUB_SHARE_RATE_PER_MIN";
pub const ENV_MAX_BODY_MIB: &str = "SANDHUB_MAX_BODY_MIB";

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
#[error("{var}: {message}")]
pub struct ConfigError {
    pub var: &'static str,
    pub message: String,
}

/// Everything the request handlers need besides the registry.
#[derive(Debug, Clone)]
pub struct ServiceSettings {
    pub csp: CspPolicy,
    pub session_ttl: Duration,
    pub share_rate_per_min: u32,
    pub max_body_bytes: usize,
}

impl ServiceSettings {
    pub fn new(csp: CspPolicy) -> Self {
        Self {
            csp,
            session_ttl: Duration::hours(24),
            share_rate_per_min: 30,
            max_body_bytes: 64 << 20,
        }
    }
}

#[derive(Debug, Clone)]
pub struct ServerConfig {
    pub bind: SocketAddr,
    pub storage: PathBuf,
    pub share_ttl: Duration,
    pub settings: ServiceSettings,
}

impl ServerConfig {
    pub fn from_env() -> Result<Self, ConfigError> {
        Self::from_lookup(|k| std::env::var(k).ok())
    }

    /// Reads configuration through `lookup`. Unset variables take defaults:
    /// bind 127.0.0.1:8080, origin `http://<bind>`, storage `sandhub.db`,
    /// shares kept 168 h, sessions 24 h, 30 shares per minute, 64 MiB bodies.
    pub fn from_lookup(lookup: impl Fn(&str) -> Option<String>) -> Result<Self, ConfigError> {
        let bind: SocketAddr = parse(&lookup, ENV_BIND, "127.0.0.1:8080".parse().unwrap())?;
        let origin = lookup(ENV_PUBLIC_ORIGIN).unwrap_or_else(|| format!("http://{bind}"));
        let csp = CspPolicy::new(&origin).map_err(|e| ConfigError {
            var: ENV_PUBLIC_ORIGIN,
            message: e.to_string(),
        })?;
        let storage =
            lookup(ENV_STORAGE).map_or_else(|| PathBuf::from("sandhub.db"), PathBuf::from);
        let share_hours: u32 = parse(&lookup, ENV_SHARE_TTL_HOURS, 168)?;
        let session_hours: u32 = parse(&lookup, ENV_SESSION_HOURS, 24)?;
        let share_rate_per_min = parse(&lookup, ENV_SHARE_RATE_PER_MIN, 30)?;
        let max_body_mib: usize = parse(&lookup, ENV_MAX_BODY_MIB, 64)?;
        for (var, v) in [
            (ENV_SHARE_TTL_HOURS, share_hours),
            (ENV_SESSION_HOURS, session_hours),
        ] {
            if v == 0 {
                return Err(ConfigError {
                    var,
                    message: "must be at least 1".into(),
                });
            }
        }
        Ok(Self {
            bind,
            storage,
            share_ttl: Duration::hours(share_hours.into()),
            settings: ServiceSettings {
                csp,
                session_ttl: Duration::hours(session_hours.into()),
                share_rate_per_min,
                max_body_bytes: max_body_mib << 20,
            },
        })
    }
}

fn parse<T: std::str::FromStr>(
    lookup: &impl Fn(&str) -> Option<String>,
    var: &'static str,
    default: T,
) -> Result<T, ConfigError>
where
    T::Err: std::fmt::Display,
{
    match lookup(var) {
        None => Ok(default),
        Some(raw) => raw.trim().parse().map_err(|e: T::Err| ConfigError {
            var,
            message: format!("{raw:?}: {e}"),
        }),
    }
}
