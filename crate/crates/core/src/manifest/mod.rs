//! Application manifests.
//!
//! A manifest names an application, pins its version and runtime, and
//! describes the single entry-point function the browser runner calls: its
//! typed parameters and whether it returns an HTML fragment or the name of a
//! file it wrote.

mod presence;
mod seeds;
mod validate;

use std::cmp::Ordering;
use std::collections::BTreeSet;
use std::fmt;

use serde_json::{json, Map, Value};
use url::Url;

pub use presence::{check_entry_point_presence, Presence};
pub use seeds::{seed_documents, seed_manifests};
pub(crate) use validate::parse_trusted_manifest;
pub use validate::{
    validate_document, validate_document_with_policy, validate_manifest,
    validate_manifest_with_policy, ManifestError, ValidationReport, Violation,
};

pub const MAX_SHORT_DESCRIPTION_CHARS: usize = 280;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Runtime {
    Python,
    R,
    Javascript,
}

impl Runtime {
    pub const LABELS: [&'static str; 3] = ["python", "r", "javascript"];

    pub fn label(self) -> &'static str {
        match self {
            Runtime::Python => "python",
            Runtime::R => "r",
            Runtime::Javascript => "javascript",
        }
    }

    pub fn from_label(s: &str) -> Option<Self> {
        match s {
            "python" => Some(Runtime::Python),
            "r" => Some(Runtime::R),
            "javascript" => Some(Runtime::Javascript),
            _ => None,
        }
    }
}

impl fmt::Display for Runtime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl serde::Serialize for Runtime {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(self.label())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ParamKind {
    Path,
    String,
    Integer,
    Float,
    Boolean,
}

impl ParamKind {
    pub const LABELS: [&'static str; 5] = ["path", "string", "integer", "float", "boolean"];
    pub const ALL: [ParamKind; 5] = [
        ParamKind::Path,
        ParamKind::String,
        ParamKind::Integer,
        ParamKind::Float,
        ParamKind::Boolean,
    ];

    pub fn label(self) -> &'static str {
        match self {
            ParamKind::Path => "path",
            ParamKind::String => "string",
            ParamKind::Integer => "integer",
            ParamKind::Float => "float",
            ParamKind::Boolean => "boolean",
        }
    }

    pub fn from_label(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.label() == s)
    }

    /// Value a run form starts from when no default is declared.
    pub fn neutral_value(self) -> ParamValue {
        match self {
            ParamKind::Path => ParamValue::Path(String::new()),
            ParamKind::String => ParamValue::String(String::new()),
            ParamKind::Integer => ParamValue::Integer(0),
            ParamKind::Float => ParamValue::Float(0.0),
            ParamKind::Boolean => ParamValue::Boolean(false),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ParamValue {
    Path(String),
    String(String),
    Integer(i64),
    Float(f64),
    Boolean(bool),
}

impl ParamValue {
    pub fn kind(&self) -> ParamKind {
        match self {
            ParamValue::Path(_) => ParamKind::Path,
            ParamValue::String(_) => ParamKind::String,
            ParamValue::Integer(_) => ParamKind::Integer,
            ParamValue::Float(_) => ParamKind::Float,
            ParamValue::Boolean(_) => ParamKind::Boolean,
        }
    }

    pub fn to_json(&self) -> Value {
        match self {
            ParamValue::Path(s) | ParamValue::String(s) => json!(s),
            ParamValue::Integer(i) => json!(i),
            ParamValue::Float(x) => json!(x),
            ParamValue::Boolean(b) => json!(b),
        }
    }
}

impl fmt::Display for ParamValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ParamValue::Path(s) | ParamValue::String(s) => f.write_str(s),
            ParamValue::Integer(i) => write!(f, "{i}"),
            ParamValue::Float(x) => write!(f, "{x:?}"),
            ParamValue::Boolean(b) => write!(f, "{b}"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReturnKind {
    Html,
    File,
}

impl ReturnKind {
    pub fn label(self) -> &'static str {
        match self {
            ReturnKind::Html => "html",
            ReturnKind::File => "file",
        }
    }

    pub fn from_label(s: &str) -> Option<Self> {
        match s {
            "html" => Some(ReturnKind::Html),
            "file" => Some(ReturnKind::File),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParameterSpec {
    pub name: String,
    pub kind: ParamKind,
    pub description: String,
    pub default: Option<ParamValue>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EntryPointSpec {
    pub function_name: String,
    pub parameters: Vec<ParameterSpec>,
    pub return_kind: ReturnKind,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SourceRef {
    Inline(String),
    Url(Url),
}

/// Dotted numeric version, ordered segment by segment.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Version {
    raw: String,
    segments: Vec<u64>,
}

impl Version {
    pub fn parse(s: &str) -> Option<Self> {
        if s.is_empty() {
            return None;
        }
        let segments = s
            .split('.')
            .map(|seg| {
                if seg.is_empty() || !seg.bytes().all(|b| b.is_ascii_digit()) {
                    None
                } else {
                    seg.parse::<u64>().ok()
                }
            })
            .collect::<Option<Vec<_>>>()?;
        Some(Self {
            raw: s.to_owned(),
            segments,
        })
    }

    pub fn as_str(&self) -> &str {
        &self.raw
    }

    pub fn segments(&self) -> &[u64] {
        &self.segments
    }
}

impl Ord for Version {
    fn cmp(&self, other: &Self) -> Ordering {
        self.segments
            .cmp(&other.segments)
            .then_with(|| self.raw.cmp(&other.raw))
    }
}

impl PartialOrd for Version {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Display for Version {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.raw)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ApplicationManifest {
    pub name: String,
    pub version: Version,
    pub runtime: Runtime,
    pub short_description: String,
    pub long_description: String,
    pub tags: BTreeSet<String>,
    pub entry_point: EntryPointSpec,
    pub source: SourceRef,
}

impl ApplicationManifest {
    pub fn to_document(&self) -> Value {
        let parameters: Vec<Value> = self
            .entry_point
            .parameters
            .iter()
            .map(|p| {
                let mut obj = Map::new();
                obj.insert("name".into(), json!(p.name));
                obj.insert("kind".into(), json!(p.kind.label()));
                obj.insert("description".into(), json!(p.description));
                if let Some(d) = &p.default {
                    obj.insert("default".into(), d.to_json());
                }
                Value::Object(obj)
            })
            .collect();
        let source = match &self.source {
            SourceRef::Inline(text) => json!({ "inline": text }),
            SourceRef::Url(url) => json!({ "url": url.as_str() }),
        };
        json!({
            "name": self.name,
            "version": self.version.as_str(),
            "runtime": self.runtime.label(),
            "short_description": self.short_description,
            "long_description": self.long_description,
            "tags": self.tags.iter().collect::<Vec<_>>(),
            "source": source,
            "entry_point": {
                "function": self.entry_point.function_name,
                "returns": self.entry_point.return_kind.label(),
                "parameters": parameters,
            },
        })
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(&self.to_document()).expect("manifest serializes")
    }
}

/// One entry per parameter in declaration order: the declared default, or
/// the kind's neutral value.
pub fn render_parameter_defaults(manifest: &ApplicationManifest) -> Vec<(String, ParamValue)> {
    manifest
        .entry_point
        .parameters
        .iter()
        .map(|p| {
            let value = p.default.clone().unwrap_or_else(|| p.kind.neutral_value());
            (p.name.clone(), value)
        })
        .collect()
}
