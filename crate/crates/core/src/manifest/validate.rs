use std::collections::{BTreeSet, HashSet};
use std::fmt;

use regex::Regex;
use serde::Serialize;
use serde_json::{Map, Value};
use std::sync::OnceLock;
use url::Url;

use super::{
    ApplicationManifest, EntryPointSpec, ParamKind, ParamValue, ParameterSpec, ReturnKind, Runtime,
    SourceRef, Version, MAX_SHORT_DESCRIPTION_CHARS,
};
use crate::csp::{external_whitelist_permits, CspPolicy};

const TOP_LEVEL_KEYS: [&str; 8] = [
    "name",
    "version",
    "runtime",
    "short_description",
    "long_description",
    "tags",
    "source",
    "entry_point",
];
const ENTRY_POINT_KEYS: [&str; 3] = ["function", "returns", "parameters"];
const PARAMETER_KEYS: [&str; 4] = ["name", "kind", "description", "default"];

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Violation {
    pub path: String,
    pub message: String,
}

/// Every problem found in a candidate manifest, anchored at its field path
/// (`entry_point.parameters[2].kind`).
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    fn push(&mut self, path: impl Into<String>, message: impl Into<String>) {
        self.violations.push(Violation {
            path: path.into(),
            message: message.into(),
        });
    }

    pub fn mentions(&self, path: &str) -> bool {
        self.violations.iter().any(|v| v.path == path)
    }

    pub fn is_empty(&self) -> bool {
        self.violations.is_empty()
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, v) in self.violations.iter().enumerate() {
            if i > 0 {
                writeln!(f)?;
            }
            write!(f, "{}: {}", v.path, v.message)?;
        }
        Ok(())
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ManifestError {
    #[error("malformed manifest document: {0}")]
    MalformedDocument(String),
    #[error("manifest failed validation:\n{0}")]
    Invalid(ValidationReport),
}

pub fn validate_manifest(text: &str) -> Result<ApplicationManifest, ManifestError> {
    let doc: Value =
        serde_json::from_str(text).map_err(|e| ManifestError::MalformedDocument(e.to_string()))?;
    validate_document(&doc)
}

/// Like [`validate_manifest`], additionally allowing source URLs on the
/// policy's own origin.
pub fn validate_manifest_with_policy(
    text: &str,
    policy: &CspPolicy,
) -> Result<ApplicationManifest, ManifestError> {
    let doc: Value =
        serde_json::from_str(text).map_err(|e| ManifestError::MalformedDocument(e.to_string()))?;
    validate_document_with_policy(&doc, policy)
}

pub fn validate_document(doc: &Value) -> Result<ApplicationManifest, ManifestError> {
    Checker::new(UrlRule::ExternalOnly).run(doc)
}

pub fn validate_document_with_policy(
    doc: &Value,
    policy: &CspPolicy,
) -> Result<ApplicationManifest, ManifestError> {
    Checker::new(UrlRule::Policy(policy)).run(doc)
}

/// Re-reads a manifest that was validated when it was stored. Source URL
/// origins are not re-checked, since they may sit on a since-renamed own origin.
pub(crate) fn parse_trusted_manifest(text: &str) -> Result<ApplicationManifest, ManifestError> {
    let doc: Value =
        serde_json::from_str(text).map_err(|e| ManifestError::MalformedDocument(e.to_string()))?;
    Checker::new(UrlRule::Trusted).run(&doc)
}

fn identifier_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"^[A-Za-z_.$][A-Za-z0-9_.$]*$").unwrap())
}

fn is_identifier(s: &str) -> bool {
    s != "." && identifier_re().is_match(s)
}

#[derive(Clone, Copy)]
enum UrlRule<'a> {
    ExternalOnly,
    Policy(&'a CspPolicy),
    Trusted,
}

struct Checker<'a> {
    urls: UrlRule<'a>,
    report: ValidationReport,
}

impl<'a> Checker<'a> {
    fn new(urls: UrlRule<'a>) -> Self {
        Self {
            urls,
            report: ValidationReport::default(),
        }
    }

    fn run(mut self, doc: &Value) -> Result<ApplicationManifest, ManifestError> {
        let Some(obj) = doc.as_object() else {
            return Err(ManifestError::MalformedDocument(
                "top level must be an object".into(),
            ));
        };
        self.unknown_keys(obj, &TOP_LEVEL_KEYS, "");

        let name = self.string(obj, "name", "name");
        if let Some(n) = &name {
            if n.trim().is_empty() {
                self.report.push("name", "must not be empty");
            } else if n.contains('/') || n.chars().any(char::is_control) {
                self.report
                    .push("name", "must not contain '/' or control characters");
            }
        }

        let version = self.string(obj, "version", "version").and_then(|v| {
            let parsed = Version::parse(&v);
            if parsed.is_none() {
                self.report
                    .push("version", "must be dotted numerics such as 1.0.2");
            }
            parsed
        });

        let runtime = self.string(obj, "runtime", "runtime").and_then(|r| {
            let parsed = Runtime::from_label(&r);
            if parsed.is_none() {
                self.report.push(
                    "runtime",
                    format!(
                        "unknown runtime {r:?}; expected one of {}",
                        Runtime::LABELS.join(", ")
                    ),
                );
            }
            parsed
        });

        let short_description = self.string(obj, "short_description", "short_description");
        if let Some(s) = &short_description {
            let n = s.chars().count();
            if n > MAX_SHORT_DESCRIPTION_CHARS {
                self.report.push(
                    "short_description",
                    format!("{n} characters exceeds the limit of {MAX_SHORT_DESCRIPTION_CHARS}"),
                );
            }
        }
        let long_description = self.string(obj, "long_description", "long_description");
        let tags = self.tags(obj.get("tags"));
        let source = self.source(obj.get("source"));
        let entry_point = self.entry_point(obj.get("entry_point"));

        if !self.report.is_empty() {
            return Err(ManifestError::Invalid(self.report));
        }
        // every field is Some once the report is empty
        Ok(ApplicationManifest {
            name: name.unwrap(),
            version: version.unwrap(),
            runtime: runtime.unwrap(),
            short_description: short_description.unwrap(),
            long_description: long_description.unwrap(),
            tags: tags.unwrap(),
            entry_point: entry_point.unwrap(),
            source: source.unwrap(),
        })
    }

    fn unknown_keys(&mut self, obj: &Map<String, Value>, allowed: &[&str], prefix: &str) {
        for key in obj.keys() {
            if !allowed.contains(&key.as_str()) {
                self.report.push(join(prefix, key), "unknown key");
            }
        }
    }

    fn string(&mut self, obj: &Map<String, Value>, key: &str, path: &str) -> Option<String> {
        match obj.get(key) {
            None => {
                self.report.push(path, "required");
                None
            }
            Some(Value::String(s)) => Some(s.clone()),
            Some(_) => {
                self.report.push(path, "must be a string");
                None
            }
        }
    }

    fn tags(&mut self, value: Option<&Value>) -> Option<BTreeSet<String>> {
        let Some(value) = value else {
            self.report.push("tags", "required");
            return None;
        };
        let Some(items) = value.as_array() else {
            self.report.push("tags", "must be an array of strings");
            return None;
        };
        let mut tags = BTreeSet::new();
        let mut ok = true;
        for (i, item) in items.iter().enumerate() {
            let path = format!("tags[{i}]");
            let Some(tag) = item.as_str() else {
                self.report.push(path, "must be a string");
                ok = false;
                continue;
            };
            let problem = if tag.is_empty() {
                Some("must not be empty")
            } else if tag.chars().any(char::is_whitespace) {
                Some("must not contain whitespace")
            } else if tag.to_lowercase() != tag {
                Some("must be lowercase")
            } else if !tags.insert(tag.to_owned()) {
                Some("duplicate tag")
            } else {
                None
            };
            if let Some(p) = problem {
                self.report.push(path, p);
                ok = false;
            }
        }
        ok.then_some(tags)
    }

    fn source(&mut self, value: Option<&Value>) -> Option<SourceRef> {
        let Some(value) = value else {
            self.report.push("source", "required");
            return None;
        };
        let Some(obj) = value.as_object() else {
            self.report
                .push("source", "must be an object with \"inline\" or \"url\"");
            return None;
        };
        self.unknown_keys(obj, &["inline", "url"], "source");
        match (obj.get("inline"), obj.get("url")) {
            (Some(_), Some(_)) => {
                self.report
                    .push("source", "exactly one of \"inline\" or \"url\" is allowed");
                None
            }
            (None, None) => {
                self.report
                    .push("source", "one of \"inline\" or \"url\" is required");
                None
            }
            (Some(Value::String(text)), None) => Some(SourceRef::Inline(text.clone())),
            (Some(_), None) => {
                self.report.push("source.inline", "must be a string");
                None
            }
            (None, Some(Value::String(raw))) => match Url::parse(raw) {
                Err(_) => {
                    self.report.push("source.url", "not a valid URL");
                    None
                }
                Ok(url) => {
                    let permitted = match self.urls {
                        UrlRule::ExternalOnly => external_whitelist_permits(&url),
                        UrlRule::Policy(p) => p.permits_url(&url),
                        UrlRule::Trusted => true,
                    };
                    if permitted {
                        Some(SourceRef::Url(url))
                    } else {
                        self.report.push(
                            "source.url",
                            format!(
                                "origin {} is not on the content-security-policy whitelist",
                                url.origin().ascii_serialization()
                            ),
                        );
                        None
                    }
                }
            },
            (None, Some(_)) => {
                self.report.push("source.url", "must be a string");
                None
            }
        }
    }

    fn entry_point(&mut self, value: Option<&Value>) -> Option<EntryPointSpec> {
        let Some(value) = value else {
            self.report.push("entry_point", "required");
            return None;
        };
        let Some(obj) = value.as_object() else {
            self.report.push("entry_point", "must be an object");
            return None;
        };
        self.unknown_keys(obj, &ENTRY_POINT_KEYS, "entry_point");

        let function_name = self
            .string(obj, "function", "entry_point.function")
            .and_then(|f| {
                if is_identifier(&f) {
                    Some(f)
                } else {
                    self.report.push(
                        "entry_point.function",
                        format!("{f:?} is not an identifier"),
                    );
                    None
                }
            });
        let return_kind = self
            .string(obj, "returns", "entry_point.returns")
            .and_then(|r| {
                let parsed = ReturnKind::from_label(&r);
                if parsed.is_none() {
                    self.report.push(
                        "entry_point.returns",
                        format!("unknown return kind {r:?}; expected one of html, file"),
                    );
                }
                parsed
            });
        let parameters = self.parameters(obj.get("parameters"));

        Some(EntryPointSpec {
            function_name: function_name?,
            parameters: parameters?,
            return_kind: return_kind?,
        })
    }

    fn parameters(&mut self, value: Option<&Value>) -> Option<Vec<ParameterSpec>> {
        let Some(value) = value else {
            self.report.push("entry_point.parameters", "required");
            return None;
        };
        let Some(items) = value.as_array() else {
            self.report
                .push("entry_point.parameters", "must be an array");
            return None;
        };
        let mut seen = HashSet::new();
        let mut out = Vec::with_capacity(items.len());
        let mut ok = true;
        for (i, item) in items.iter().enumerate() {
            let prefix = format!("entry_point.parameters[{i}]");
            match self.parameter(item, &prefix) {
                Some(p) => {
                    if !seen.insert(p.name.clone()) {
                        self.report.push(
                            format!("{prefix}.name"),
                            format!("duplicate parameter {:?}", p.name),
                        );
                        ok = false;
                    }
                    out.push(p);
                }
                None => ok = false,
            }
        }
        ok.then_some(out)
    }

    fn parameter(&mut self, value: &Value, prefix: &str) -> Option<ParameterSpec> {
        let Some(obj) = value.as_object() else {
            self.report.push(prefix, "must be an object");
            return None;
        };
        self.unknown_keys(obj, &PARAMETER_KEYS, prefix);

        let name_path = format!("{prefix}.name");
        let name = self.string(obj, "name", &name_path).and_then(|n| {
            if is_identifier(&n) {
                Some(n)
            } else {
                self.report
                    .push(name_path.clone(), format!("{n:?} is not an identifier"));
                None
            }
        });
        let kind_path = format!("{prefix}.kind");
        let kind = self.string(obj, "kind", &kind_path).and_then(|k| {
            let parsed = ParamKind::from_label(&k);
            if parsed.is_none() {
                self.report.push(
                    kind_path.clone(),
                    format!(
                        "unsupported parameter kind {k:?}; expected one of {}",
                        ParamKind::LABELS.join(", ")
                    ),
                );
            }
            parsed
        });
        let description = self.string(obj, "description", &format!("{prefix}.description"));

        let default = match (obj.get("default"), kind) {
            (None, _) => Some(None),
            // kind already reported
            (Some(_), None) => None,
            (Some(v), Some(kind)) => match default_value(kind, v) {
                Some(d) => Some(Some(d)),
                None => {
                    self.report.push(
                        format!("{prefix}.default"),
                        format!("default does not match kind {}", kind.label()),
                    );
                    None
                }
            },
        };

        Some(ParameterSpec {
            name: name?,
            kind: kind?,
            description: description?,
            default: default?,
        })
    }
}

fn default_value(kind: ParamKind, v: &Value) -> Option<ParamValue> {
    match kind {
        ParamKind::Path => v.as_str().map(|s| ParamValue::Path(s.to_owned())),
        ParamKind::String => v.as_str().map(|s| ParamValue::String(s.to_owned())),
        ParamKind::Integer => v.as_i64().map(ParamValue::Integer),
        ParamKind::Float => v.as_f64().filter(|x| x.is_finite()).map(ParamValue::Float),
        ParamKind::Boolean => v.as_bool().map(ParamValue::Boolean),
    }
}

fn join(prefix: &str, key: &str) -> String {
    if prefix.is_empty() {
        key.to_owned()
    } else {
        format!("{prefix}.{key}")
    }
}
