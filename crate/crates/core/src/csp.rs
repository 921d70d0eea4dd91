//! Content-Security-Policy whitelist.
//!
//! Applications run in the visitor's browser and may only reach the platform
//! itself plus the handful of origins that host the interpreter runtimes,
//! their packages and application sources. The same list governs which
//! source URLs a manifest may reference.

use url::Url;

pub const HEADER_NAME: &str = "content-security-policy";

/// External origins the browser runtimes need, in header order.
pub const EXTERNAL_ORIGINS: [&str; 5] = [
    // R interpreter and precompiled packages
    "https://*.r-wasm.org",
    // Python interpreter and styling
    "https://cdn.jsdelivr.net",
    // Python package installer
    "https://pypi.org",
    "https://files.pythonhosted.org",
    // hosted application sources
    "https://raw.githubusercontent.com",
];

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CspPolicy {
    own_origin: String,
}

#[derive(Debug, thiserror::Error)]
#[error("invalid own origin {0:?}")]
pub struct InvalidOrigin(pub String);

impl CspPolicy {
    /// `own_origin` is the public origin the platform is served from, for
    /// example `https://localhost:8443`. Paths and trailing slashes are dropped.
    pub fn new(own_origin: &str) -> Result<Self, InvalidOrigin> {
        let url = Url::parse(own_origin).map_err(|_| InvalidOrigin(own_origin.to_owned()))?;
        if !matches!(url.scheme(), "http" | "https") || url.host_str().is_none() {
            return Err(InvalidOrigin(own_origin.to_owned()));
        }
        Ok(Self {
            own_origin: url.origin().ascii_serialization(),
        })
    }

    pub fn own_origin(&self) -> &str {
        &self.own_origin
    }

    /// Own origin first, then the external whitelist.
    pub fn allowed_origins(&self) -> Vec<&str> {
        std::iter::once(self.own_origin.as_str())
            .chain(EXTERNAL_ORIGINS)
            .collect()
    }

    pub fn header_value(&self) -> String {
        let sources = self.allowed_origins().join(" ");
        format!(
            "default-src 'self'; \
             connect-src {sources}; \
             script-src {sources} 'wasm-unsafe-eval'; \
             style-src {sources} 'unsafe-inline'; \
             img-src 'self' data: blob:; \
             worker-src 'self' blob:; \
             object-src 'none'; \
             base-uri 'self'; \
             form-action 'self'; \
             frame-ancestors 'none'"
        )
    }

    pub fn header(&self) -> (&'static str, String) {
        (HEADER_NAME, self.header_value())
    }

    /// Whether `url` points at an origin the policy lets the browser contact.
    pub fn permits_url(&self, url: &Url) -> bool {
        url.origin().ascii_serialization() == self.own_origin || external_whitelist_permits(url)
    }
}

/// Whether `url` is on one of the external whitelisted origins.
pub fn external_whitelist_permits(url: &Url) -> bool {
    let Some(host) = url.host_str() else {
        return false;
    };
    EXTERNAL_ORIGINS.iter().any(|pattern| {
        let (scheme, host_pattern) = pattern.split_once("://").expect("scheme in pattern");
        if url.scheme() != scheme || url.port().is_some() {
            return false;
        }
        match host_pattern.strip_prefix("*.") {
            Some(suffix) => host
                .strip_suffix(suffix)
                .is_some_and(|head| head.len() > 1 && head.ends_with('.')),
            None => host == host_pattern,
        }
    })
}
