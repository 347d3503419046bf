//! Enriched records: CDX metadata plus a tree of derived values.
//!
//! Derived values live in a [`Node`] tree addressed by dot paths such as
//! `payload.string.length`. A node may hold its own value and children at the
//! same time; the JSON writer then emits the value under the `_` key. The
//! reserved root segment `record` resolves to the read-only CDX metadata.

use std::collections::BTreeSet;
use std::fmt;
use std::sync::Arc;

use indexmap::IndexMap;
use thiserror::Error;

use crate::cdx::CdxRecord;

/// Root segment that exposes CDX metadata.
pub const RECORD_ROOT: &str = "record";
/// Path of enrichment failure annotations.
pub const ERROR_PATH: &str = "error";

#[derive(Debug, Error, PartialEq, Eq)]
pub enum PathError {
    #[error("empty path")]
    Empty,
    #[error("invalid path segment {segment:?} in {path:?}")]
    Segment { path: String, segment: String },
    #[error("path {0:?} is under the read-only `record` root")]
    Reserved(String),
}

#[derive(Debug, Error, PartialEq, Eq)]
#[error("value at {path:?} is {found}, not {expected}")]
pub struct AccessError {
    pub path: String,
    pub expected: &'static str,
    pub found: &'static str,
}

/// A derived value. Large payloads are reference-counted so records clone
/// cheaply.
#[derive(Debug, Clone, PartialEq)]
pub enum Value {
    Bool(bool),
    Int(i64),
    Float(f64),
    Str(Arc<str>),
    Bytes(Arc<[u8]>),
    /// Ordered string-keyed mapping, e.g. a header block.
    Map(Arc<Vec<(String, Value)>>),
    List(Arc<Vec<Value>>),
}

impl Value {
    pub fn type_name(&self) -> &'static str {
        match self {
            Value::Bool(_) => "bool",
            Value::Int(_) => "int",
            Value::Float(_) => "float",
            Value::Str(_) => "string",
            Value::Bytes(_) => "bytes",
            Value::Map(_) => "map",
            Value::List(_) => "list",
        }
    }

    pub fn as_str(&self) -> Option<&str> {
        match self {
            Value::Str(s) => Some(s),
            _ => None,
        }
    }

    pub fn as_bytes(&self) -> Option<&[u8]> {
        match self {
            Value::Bytes(b) => Some(b),
            _ => None,
        }
    }

    pub fn as_i64(&self) -> Option<i64> {
        match self {
            Value::Int(i) => Some(*i),
            _ => None,
        }
    }

    /// Case-insensitive key lookup in a [`Value::Map`].
    pub fn map_get(&self, key: &str) -> Option<&Value> {
        match self {
            Value::Map(entries) => entries.iter().find(|(k, _)| k.eq_ignore_ascii_case(key)).map(|(_, v)| v),
            _ => None,
        }
    }

    pub fn string_map(entries: impl IntoIterator<Item = (String, String)>) -> Value {
        Value::Map(Arc::new(entries.into_iter().map(|(k, v)| (k, Value::from(v))).collect()))
    }
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Bool(b) => write!(f, "{b}"),
            Value::Int(i) => write!(f, "{i}"),
            Value::Float(x) => write!(f, "{x}"),
            Value::Str(s) => f.write_str(s),
            Value::Bytes(b) => write!(f, "bytes(length: {})", b.len()),
            Value::Map(m) => write!(f, "map(size: {})", m.len()),
            Value::List(l) => write!(f, "list(size: {})", l.len()),
        }
    }
}

impl From<&str> for Value {
    fn from(s: &str) -> Self {
        Value::Str(Arc::from(s))
    }
}

impl From<String> for Value {
    fn from(s: String) -> Self {
        Value::Str(Arc::from(s))
    }
}

impl From<Vec<u8>> for Value {
    fn from(b: Vec<u8>) -> Self {
        Value::Bytes(Arc::from(b))
    }
}

impl From<i64> for Value {
    fn from(i: i64) -> Self {
        Value::Int(i)
    }
}

impl From<f64> for Value {
    fn from(x: f64) -> Self {
        Value::Float(x)
    }
}

impl From<bool> for Value {
    fn from(b: bool) -> Self {
        Value::Bool(b)
    }
}

/// Checked conversion used by [`EnrichedRecord::get_as`].
pub trait FromValue: Sized {
    const EXPECTED: &'static str;
    fn from_value(value: &Value) -> Option<Self>;
}

impl FromValue for String {
    const EXPECTED: &'static str = "string";
    fn from_value(value: &Value) -> Option<Self> {
        value.as_str().map(str::to_string)
    }
}

impl FromValue for i64 {
    const EXPECTED: &'static str = "int";
    fn from_value(value: &Value) -> Option<Self> {
        value.as_i64()
    }
}

impl FromValue for f64 {
    const EXPECTED: &'static str = "float";
    fn from_value(value: &Value) -> Option<Self> {
        match value {
            Value::Float(x) => Some(*x),
            Value::Int(i) => Some(*i as f64),
            _ => None,
        }
    }
}

impl FromValue for bool {
    const EXPECTED: &'static str = "bool";
    fn from_value(value: &Value) -> Option<Self> {
        match value {
            Value::Bool(b) => Some(*b),
            _ => None,
        }
    }
}

impl FromValue for Vec<u8> {
    const EXPECTED: &'static str = "bytes";
    fn from_value(value: &Value) -> Option<Self> {
        value.as_bytes().map(<[u8]>::to_vec)
    }
}

/// One level of the field tree.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Node {
    pub value: Option<Value>,
    pub children: IndexMap<String, Node>,
}

impl Node {
    pub fn child(&self, key: &str) -> Option<&Node> {
        self.children.get(key)
    }

    pub fn is_empty(&self) -> bool {
        self.value.is_none() && self.children.is_empty()
    }

    /// Walks `segments` from this node.
    pub fn descend<'a, 's>(&'a self, segments: impl IntoIterator<Item = &'s str>) -> Option<&'a Node> {
        segments.into_iter().try_fold(self, |node, seg| node.children.get(seg))
    }

    fn descend_mut_or_create(&mut self, segments: &[&str]) -> &mut Node {
        segments.iter().fold(self, |node, seg| node.children.entry((*seg).to_string()).or_default())
    }
}

fn valid_segment(seg: &str) -> bool {
    let mut chars = seg.chars();
    chars.next().is_some_and(|c| c.is_ascii_alphabetic())
        && chars.all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-')
}

/// Splits and checks a dot path against the key grammar `[A-Za-z][A-Za-z0-9_-]*`.
pub fn split_path(path: &str) -> Result<Vec<&str>, PathError> {
    if path.is_empty() {
        return Err(PathError::Empty);
    }
    path.split('.')
        .map(|seg| {
            if valid_segment(seg) {
                Ok(seg)
            } else {
                Err(PathError::Segment { path: path.to_string(), segment: seg.to_string() })
            }
        })
        .collect()
}

/// Joins a base path and a relative path, either of which may be empty.
pub fn join_path(base: &str, rest: &str) -> String {
    match (base.is_empty(), rest.is_empty()) {
        (true, _) => rest.to_string(),
        (_, true) => base.to_string(),
        _ => format!("{base}.{rest}"),
    }
}

/// Value of a CDX metadata field by its JSON name (`status`, `surtUrl`, ...).
pub fn metadata_value(m: &CdxRecord, field: &str) -> Option<Value> {
    Some(match field {
        "surtUrl" => Value::from(m.surt_url.as_str()),
        "timestamp" => Value::from(m.timestamp.as_str()),
        "originalUrl" => Value::from(m.original_url.as_str()),
        "mime" => Value::from(m.mime.as_str()),
        "status" => Value::Int(m.status? as i64),
        "digest" => Value::from(m.digest.as_str()),
        "redirectUrl" => Value::from(m.redirect_url.as_deref()?),
        "meta" => Value::from(m.meta_tags.as_deref()?),
        "compressedLength" => Value::Int(m.compressed_length as i64),
        "offset" => Value::Int(m.offset as i64),
        "filename" => Value::from(m.filename.as_str()),
        _ => return None,
    })
}

/// A capture under construction: metadata, derived fields, output marks, and
/// the ledger of enrichments already computed.
#[derive(Debug, Clone, PartialEq)]
pub struct EnrichedRecord {
    pub meta: Arc<CdxRecord>,
    pub tree: Node,
    pub output_marks: BTreeSet<String>,
    pub applied: BTreeSet<String>,
}

impl EnrichedRecord {
    pub fn new(meta: CdxRecord) -> Self {
        Self::from_shared(Arc::new(meta))
    }

    pub fn from_shared(meta: Arc<CdxRecord>) -> Self {
        EnrichedRecord { meta, tree: Node::default(), output_marks: BTreeSet::new(), applied: BTreeSet::new() }
    }

    /// Resolves a dot path; `None` if any segment is missing. Segments past a
    /// [`Value::Map`] look up its keys case-insensitively.
    pub fn get_path(&self, path: &str) -> Option<Value> {
        let mut segments = path.split('.');
        let first = segments.next()?;
        if first == RECORD_ROOT {
            let field = segments.next()?;
            return segments.next().is_none().then(|| metadata_value(&self.meta, field)).flatten();
        }
        let mut node = self.tree.child(first)?;
        let mut segments = segments.peekable();
        while let Some(seg) = segments.peek() {
            match node.children.get(*seg) {
                Some(child) => {
                    node = child;
                    segments.next();
                }
                None => break,
            }
        }
        let mut value = node.value.as_ref()?;
        for seg in segments {
            value = value.map_get(seg)?;
        }
        Some(value.clone())
    }

    /// Typed read: absent paths are `Ok(None)`, wrong types are errors.
    pub fn get_as<T: FromValue>(&self, path: &str) -> Result<Option<T>, AccessError> {
        match self.get_path(path) {
            None => Ok(None),
            Some(v) => T::from_value(&v).map(Some).ok_or(AccessError {
                path: path.to_string(),
                expected: T::EXPECTED,
                found: v.type_name(),
            }),
        }
    }

    pub fn node_at(&self, path: &str) -> Option<&Node> {
        self.tree.descend(path.split('.'))
    }

    /// Returns a new record with `value` stored at `path`; `self` is untouched.
    pub fn set_path(&self, path: &str, value: Value) -> Result<EnrichedRecord, PathError> {
        let mut next = self.clone();
        next.insert(path, value)?;
        Ok(next)
    }

    /// In-place variant of [`set_path`](Self::set_path).
    pub fn insert(&mut self, path: &str, value: Value) -> Result<(), PathError> {
        let segments = split_path(path)?;
        if segments[0] == RECORD_ROOT {
            return Err(PathError::Reserved(path.to_string()));
        }
        self.tree.descend_mut_or_create(&segments).value = Some(value);
        Ok(())
    }

    pub fn mark(&mut self, path: impl Into<String>) {
        self.output_marks.insert(path.into());
    }

    /// Records the first enrichment failure; later failures are ignored.
    pub fn annotate_error(&mut self, message: impl Into<String>) {
        if self.tree.child(ERROR_PATH).is_none() {
            self.tree
                .children
                .insert(ERROR_PATH.to_string(), Node { value: Some(Value::from(message.into())), ..Node::default() });
            self.output_marks.insert(ERROR_PATH.to_string());
        }
    }

    pub fn error(&self) -> Option<String> {
        self.tree.child(ERROR_PATH)?.value.as_ref()?.as_str().map(str::to_string)
    }

    /// Sort key used for record-set comparisons: `(surt, timestamp)`.
    pub fn key(&self) -> (&str, &str) {
        (&self.meta.surt_url, &self.meta.timestamp)
    }
}
