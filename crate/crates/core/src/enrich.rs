//! Enrichment functions.
//!
//! An enrichment is defined by four properties: the enrichment it depends on,
//! the field of that dependency's result it reads (`dependency_field`), the
//! result fields it produces, and a pure body. Results are stored as children
//! of the input value's node, so every derived value keeps its lineage:
//! `payload` -> `payload.string` -> `payload.string.html.title`.
//!
//! Dependencies run implicitly and are memoized per record through the
//! record's `applied` set. Only explicitly requested enrichments mark their
//! results for output.

use std::fmt;
use std::io::Read;
use std::sync::Arc;

use flate2::read::{DeflateDecoder, MultiGzDecoder, ZlibDecoder};
use indexmap::IndexMap;
use thiserror::Error;

use crate::cdx::CdxRecord;
use crate::model::{join_path, split_path, EnrichedRecord, Value};
use crate::warcio::{parse_http_response, WarcError, WarcRecord};

pub const RESPONSE: &str = "response";
pub const STRING_CONTENT: &str = "string";
pub const HTML_TITLE: &str = "html-title";

pub type BodyError = Box<dyn std::error::Error + Send + Sync>;

/// Relative result path -> value.
pub type EnrichOutput = Vec<(String, Value)>;

pub type EnrichBody =
    Arc<dyn Fn(Option<&Value>, &mut EnrichContext<'_>) -> Result<EnrichOutput, BodyError> + Send + Sync>;

pub type MapBody = Arc<dyn Fn(&Value) -> Result<Value, BodyError> + Send + Sync>;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum EnrichError {
    #[error("unknown enrichment {0:?}")]
    Unknown(String),
    #[error("enrichment {0:?} is already registered")]
    Duplicate(String),
    #[error("invalid enrichment {name:?}: {reason}")]
    InvalidSpec { name: String, reason: String },
    #[error("dependency cycle through {0:?}")]
    Cycle(String),
}

/// Access to archive records for enrichments that need the raw capture.
pub trait RecordFetcher {
    fn fetch(&mut self, meta: &CdxRecord) -> Result<Arc<WarcRecord>, WarcError>;
}

/// Fetcher for records that have no archive behind them.
pub struct NoArchive;

impl RecordFetcher for NoArchive {
    fn fetch(&mut self, meta: &CdxRecord) -> Result<Arc<WarcRecord>, WarcError> {
        Err(WarcError::Format(format!("no archive available for {}", meta.original_url)))
    }
}

pub struct EnrichContext<'a> {
    pub record: &'a EnrichedRecord,
    pub fetcher: &'a mut dyn RecordFetcher,
}

/// A registered enrichment function.
#[derive(Clone)]
pub struct EnrichFunc {
    pub name: String,
    pub dependency: Option<String>,
    /// Input path relative to the dependency's result root.
    pub dependency_field: String,
    /// Result paths relative to the input node.
    pub result_fields: Vec<String>,
    pub body: EnrichBody,
}

impl fmt::Debug for EnrichFunc {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("EnrichFunc")
            .field("name", &self.name)
            .field("dependency", &self.dependency)
            .field("dependency_field", &self.dependency_field)
            .field("result_fields", &self.result_fields)
            .finish_non_exhaustive()
    }
}

impl EnrichFunc {
    pub fn new(
        name: impl Into<String>,
        dependency: Option<&str>,
        dependency_field: impl Into<String>,
        result_fields: &[&str],
        body: impl Fn(Option<&Value>, &mut EnrichContext<'_>) -> Result<EnrichOutput, BodyError> + Send + Sync + 'static,
    ) -> Self {
        EnrichFunc {
            name: name.into(),
            dependency: dependency.map(str::to_string),
            dependency_field: dependency_field.into(),
            result_fields: result_fields.iter().map(|s| s.to_string()).collect(),
            body: Arc::new(body),
        }
    }

    /// Same definition with a different body; used to instrument built-ins.
    pub fn with_body(mut self, body: EnrichBody) -> Self {
        self.body = body;
        self
    }

    /// Reads the WARC record behind the CDX row and splits the HTTP response
    /// into `recordHeader`, `httpHeader`, and `payload`.
    pub fn response() -> Self {
        EnrichFunc::new(RESPONSE, None, "", &["recordHeader", "httpHeader", "payload"], |_, ctx| {
            let warc = ctx.fetcher.fetch(&ctx.record.meta)?;
            let http = parse_http_response(&warc.payload)?;
            Ok(vec![
                ("recordHeader".to_string(), Value::string_map(warc.headers.joined())),
                ("httpHeader".to_string(), Value::string_map(http.headers.joined())),
                ("payload".to_string(), Value::from(http.body)),
            ])
        })
    }

    /// Decodes the payload to text: content encoding first, then the charset
    /// from `Content-Type`, falling back to lossy UTF-8.
    pub fn string_content() -> Self {
        EnrichFunc::new(STRING_CONTENT, Some(RESPONSE), "payload", &["string"], |input, ctx| {
            let bytes = input.and_then(Value::as_bytes).ok_or("payload is not a byte value")?;
            let header = |name: &str| {
                ctx.record.get_path(&format!("httpHeader.{name}")).and_then(|v| v.as_str().map(str::to_string))
            };
            let decoded = decode_content(bytes, header("Content-Encoding").as_deref())?;
            let charset = header("Content-Type").and_then(|ct| crate::warcio::charset_param(&ct));
            let text = decode_charset(&decoded, charset.as_deref());
            Ok(vec![("string".to_string(), Value::from(text))])
        })
    }

    /// First `<title>` element, whitespace-collapsed. No title, no result.
    pub fn html_title() -> Self {
        EnrichFunc::new(HTML_TITLE, Some(STRING_CONTENT), "string", &["html.title"], |input, _| {
            let html = input.and_then(Value::as_str).ok_or("input is not a string")?;
            Ok(extract_title(html).map(|t| vec![("html.title".to_string(), Value::from(t))]).unwrap_or_default())
        })
    }
}

fn decode_content(bytes: &[u8], encoding: Option<&str>) -> Result<Vec<u8>, BodyError> {
    let encoding = encoding.map(|e| e.trim().to_ascii_lowercase());
    let mut out = Vec::with_capacity(bytes.len() * 3);
    match encoding.as_deref() {
        Some("gzip") | Some("x-gzip") => {
            MultiGzDecoder::new(bytes).read_to_end(&mut out)?;
        }
        Some("deflate") => {
            // Servers send both zlib-wrapped and raw deflate under this name.
            if ZlibDecoder::new(bytes).read_to_end(&mut out).is_err() {
                out.clear();
                DeflateDecoder::new(bytes).read_to_end(&mut out)?;
            }
        }
        _ => out.extend_from_slice(bytes),
    }
    Ok(out)
}

fn decode_charset(bytes: &[u8], charset: Option<&str>) -> String {
    match charset {
        Some("iso-8859-1" | "latin1" | "latin-1" | "iso8859-1" | "windows-1252" | "cp1252" | "us-ascii" | "ascii") => {
            bytes.iter().map(|&b| b as char).collect()
        }
        _ => String::from_utf8_lossy(bytes).into_owned(),
    }
}

fn find_ascii_ci(haystack: &str, needle: &str, from: usize) -> Option<usize> {
    let h = haystack.as_bytes();
    let n = needle.as_bytes();
    (from..=h.len().checked_sub(n.len())?).find(|&i| h[i..i + n.len()].eq_ignore_ascii_case(n))
}

pub fn extract_title(html: &str) -> Option<String> {
    let mut from = 0;
    let open = loop {
        let at = find_ascii_ci(html, "<title", from)?;
        // Reject e.g. `<titlebar>`.
        match html.as_bytes().get(at + 6) {
            Some(b'>') | Some(b' ') | Some(b'\t') | Some(b'\n') | Some(b'\r') | Some(b'/') => break at,
            _ => from = at + 6,
        }
    };
    let start = open + html[open..].find('>')? + 1;
    let end = find_ascii_ci(html, "</title", start)?;
    Some(html[start..end].split_whitespace().collect::<Vec<_>>().join(" "))
}

/// Where a map-enrichment reads its input.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum MapInput {
    Path(String),
    /// An enrichment (run implicitly if needed) and a field of its result.
    Dependency {
        name: String,
        field: String,
    },
}

/// A one-off enrichment producing exactly one result field from one value.
#[derive(Clone)]
pub struct MapEnrich {
    pub input: MapInput,
    pub result_key: String,
    pub body: MapBody,
}

impl fmt::Debug for MapEnrich {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("MapEnrich")
            .field("input", &self.input)
            .field("result_key", &self.result_key)
            .finish_non_exhaustive()
    }
}

/// Scalar result types a map-enrichment may return. Mappings are excluded so
/// a map-enrichment always creates a single field.
pub trait MapResult {
    fn into_value(self) -> Value;
}

impl MapResult for String {
    fn into_value(self) -> Value {
        Value::from(self)
    }
}
impl MapResult for i64 {
    fn into_value(self) -> Value {
        Value::Int(self)
    }
}
impl MapResult for f64 {
    fn into_value(self) -> Value {
        Value::Float(self)
    }
}
impl MapResult for bool {
    fn into_value(self) -> Value {
        Value::Bool(self)
    }
}
impl MapResult for Vec<u8> {
    fn into_value(self) -> Value {
        Value::from(self)
    }
}

impl MapEnrich {
    /// Untyped form; a body returning [`Value::Map`] fails per record.
    pub fn new(
        input: MapInput,
        result_key: impl Into<String>,
        body: impl Fn(&Value) -> Result<Value, BodyError> + Send + Sync + 'static,
    ) -> Result<Self, EnrichError> {
        let result_key = result_key.into();
        let single = split_path(&result_key).map(|segs| segs.len() == 1).unwrap_or(false);
        if !single {
            return Err(EnrichError::InvalidSpec {
                name: format!("map:{result_key}"),
                reason: "a map enrichment creates exactly one result field (a single key)".to_string(),
            });
        }
        if let MapInput::Path(p) = &input {
            split_path(p)
                .map_err(|e| EnrichError::InvalidSpec { name: format!("map:{result_key}"), reason: e.to_string() })?;
        }
        Ok(MapEnrich { input, result_key, body: Arc::new(body) })
    }

    /// Typed form: the input is converted with checked casting and the output
    /// must be a scalar.
    pub fn typed<I, O>(
        input: MapInput,
        result_key: impl Into<String>,
        body: impl Fn(I) -> O + Send + Sync + 'static,
    ) -> Result<Self, EnrichError>
    where
        I: crate::model::FromValue,
        O: MapResult,
    {
        MapEnrich::new(input, result_key, move |v| {
            let typed =
                I::from_value(v).ok_or_else(|| format!("expected {} input, found {}", I::EXPECTED, v.type_name()))?;
            Ok(body(typed).into_value())
        })
    }

    /// `length` of the string, byte, list, or map at `path`. Strings count
    /// characters.
    pub fn length(path: &str) -> Result<Self, EnrichError> {
        MapEnrich::new(MapInput::Path(path.to_string()), "length", |v| {
            let n = match v {
                Value::Str(s) => s.chars().count(),
                Value::Bytes(b) => b.len(),
                Value::List(l) => l.len(),
                Value::Map(m) => m.len(),
                other => return Err(format!("cannot take the length of a {}", other.type_name()).into()),
            };
            Ok(Value::Int(n as i64))
        })
    }
}

/// One enrichment request inside a plan.
#[derive(Debug, Clone)]
pub enum Enrichment {
    Func {
        name: String,
        /// Overrides the function's default `(dependency, dependency_field)`.
        dependency_override: Option<(String, String)>,
    },
    Map(MapEnrich),
}

impl Enrichment {
    pub fn func(name: &str) -> Self {
        Enrichment::Func { name: name.to_string(), dependency_override: None }
    }

    pub fn func_with_dependency(name: &str, dependency: &str, field: &str) -> Self {
        Enrichment::Func {
            name: name.to_string(),
            dependency_override: Some((dependency.to_string(), field.to_string())),
        }
    }

    /// Parses a textual spec: a registered function name, or
    /// `map:length(<path>)` for the built-in length map-enrichment.
    pub fn parse(spec: &str) -> Result<Self, EnrichError> {
        let spec = spec.trim();
        let invalid = |reason: &str| EnrichError::InvalidSpec { name: spec.to_string(), reason: reason.to_string() };
        match spec.strip_prefix("map:") {
            None if spec.is_empty() => Err(invalid("empty enrichment name")),
            None => Ok(Enrichment::func(spec)),
            Some(rest) => {
                let (key, path) = rest
                    .strip_suffix(')')
                    .and_then(|r| r.split_once('('))
                    .ok_or_else(|| invalid("expected map:<key>(<path>)"))?;
                match key {
                    "length" => MapEnrich::length(path).map(Enrichment::Map),
                    _ => Err(invalid("the only built-in map enrichment is length")),
                }
            }
        }
    }
}

impl fmt::Display for Enrichment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Enrichment::Func { name, dependency_override: None } => f.write_str(name),
            Enrichment::Func { name, dependency_override: Some((d, field)) } => write!(f, "{name}({d}.{field})"),
            Enrichment::Map(m) => match &m.input {
                MapInput::Path(p) => write!(f, "map:{}({p})", m.result_key),
                MapInput::Dependency { name, field } => write!(f, "map:{}({name}.{field})", m.result_key),
            },
        }
    }
}

/// Registered enrichment functions, built once and then shared read-only.
#[derive(Debug, Clone)]
pub struct Registry {
    funcs: IndexMap<String, EnrichFunc>,
}

impl Default for Registry {
    fn default() -> Self {
        Self::builtin()
    }
}

impl Registry {
    pub fn empty() -> Self {
        Registry { funcs: IndexMap::new() }
    }

    /// `response`, `string`, and `html-title`.
    pub fn builtin() -> Self {
        let mut r = Registry::empty();
        for f in [EnrichFunc::response(), EnrichFunc::string_content(), EnrichFunc::html_title()] {
            r.register(f).expect("built-ins are consistent");
        }
        r
    }

    /// Dependencies must be registered first, which keeps the graph acyclic.
    pub fn register(&mut self, func: EnrichFunc) -> Result<(), EnrichError> {
        let invalid = |reason: String| EnrichError::InvalidSpec { name: func.name.clone(), reason };
        if func.name.is_empty() {
            return Err(invalid("empty name".to_string()));
        }
        if self.funcs.contains_key(&func.name) {
            return Err(EnrichError::Duplicate(func.name.clone()));
        }
        if func.result_fields.is_empty() {
            return Err(invalid("no result fields".to_string()));
        }
        for field in &func.result_fields {
            split_path(field).map_err(|e| invalid(e.to_string()))?;
        }
        match &func.dependency {
            Some(dep) if *dep == func.name => return Err(EnrichError::Cycle(func.name.clone())),
            Some(dep) if !self.funcs.contains_key(dep) => return Err(EnrichError::Unknown(dep.clone())),
            Some(_) => {
                split_path(&func.dependency_field).map_err(|e| invalid(e.to_string()))?;
            }
            None => {}
        }
        self.funcs.insert(func.name.clone(), func);
        Ok(())
    }

    /// Replaces a function's body (for instrumentation), keeping its definition.
    pub fn replace_body(&mut self, name: &str, body: EnrichBody) -> Result<(), EnrichError> {
        let f = self.funcs.get_mut(name).ok_or_else(|| EnrichError::Unknown(name.to_string()))?;
        f.body = body;
        Ok(())
    }

    pub fn get(&self, name: &str) -> Result<&EnrichFunc, EnrichError> {
        self.funcs.get(name).ok_or_else(|| EnrichError::Unknown(name.to_string()))
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.funcs.keys().map(String::as_str)
    }

    /// Path of the node a function's results are stored under.
    pub fn result_root(
        &self,
        name: &str,
        dependency_override: Option<&(String, String)>,
    ) -> Result<String, EnrichError> {
        let func = self.get(name)?;
        let (dep, field) = match dependency_override {
            Some((d, f)) => (Some(d.as_str()), f.as_str()),
            None => (func.dependency.as_deref(), func.dependency_field.as_str()),
        };
        match dep {
            None => Ok(String::new()),
            Some(d) => Ok(join_path(&self.result_root(d, None)?, field)),
        }
    }

    /// Every path an enrichment can produce, including implicit dependencies.
    pub fn producible_paths(&self, enrichment: &Enrichment) -> Result<Vec<String>, EnrichError> {
        match enrichment {
            Enrichment::Func { name, dependency_override } => {
                let func = self.get(name)?;
                let root = self.result_root(name, dependency_override.as_ref())?;
                let mut out: Vec<String> = func.result_fields.iter().map(|f| join_path(&root, f)).collect();
                let dep = dependency_override.as_ref().map(|(d, _)| d.clone()).or(func.dependency.clone());
                if let Some(dep) = dep {
                    out.extend(self.producible_paths(&Enrichment::func(&dep))?);
                }
                Ok(out)
            }
            Enrichment::Map(m) => {
                let (input, mut out) = match &m.input {
                    MapInput::Path(p) => (p.clone(), Vec::new()),
                    MapInput::Dependency { name, field } => (
                        join_path(&self.result_root(name, None)?, field),
                        self.producible_paths(&Enrichment::func(name))?,
                    ),
                };
                out.push(join_path(&input, &m.result_key));
                Ok(out)
            }
        }
    }

    pub fn validate(&self, enrichment: &Enrichment) -> Result<(), EnrichError> {
        match enrichment {
            Enrichment::Func { name, dependency_override } => {
                self.get(name)?;
                if let Some((dep, field)) = dependency_override {
                    if dep == name {
                        return Err(EnrichError::Cycle(name.clone()));
                    }
                    self.get(dep)?;
                    split_path(field)
                        .map_err(|e| EnrichError::InvalidSpec { name: name.clone(), reason: e.to_string() })?;
                }
                Ok(())
            }
            Enrichment::Map(MapEnrich { input: MapInput::Dependency { name, .. }, .. }) => self.get(name).map(|_| ()),
            Enrichment::Map(_) => Ok(()),
        }
    }

    /// Applies `enrichment` and returns the updated record. Failures are
    /// recorded under the `error` path instead of dropping the record.
    pub fn apply(
        &self,
        record: &EnrichedRecord,
        enrichment: &Enrichment,
        fetcher: &mut dyn RecordFetcher,
    ) -> EnrichedRecord {
        let mut next = record.clone();
        self.apply_in_place(&mut next, enrichment, fetcher);
        next
    }

    pub fn apply_in_place(
        &self,
        record: &mut EnrichedRecord,
        enrichment: &Enrichment,
        fetcher: &mut dyn RecordFetcher,
    ) {
        let result = match enrichment {
            Enrichment::Func { name, dependency_override } => {
                self.ensure(record, name, dependency_override.as_ref(), true, fetcher, 0).map(|_| ())
            }
            Enrichment::Map(m) => self.apply_map(record, m, fetcher),
        };
        if let Err(message) = result {
            record.annotate_error(message);
        }
    }

    fn ensure(
        &self,
        record: &mut EnrichedRecord,
        name: &str,
        dependency_override: Option<&(String, String)>,
        explicit: bool,
        fetcher: &mut dyn RecordFetcher,
        depth: usize,
    ) -> Result<(), String> {
        if depth > self.funcs.len() {
            return Err(EnrichError::Cycle(name.to_string()).to_string());
        }
        let func = self.get(name).map_err(|e| e.to_string())?;
        let root = self.result_root(name, dependency_override).map_err(|e| e.to_string())?;
        let id = match dependency_override {
            None => name.to_string(),
            Some(_) => format!("{name}@{root}"),
        };

        if !record.applied.contains(&id) {
            let dep = dependency_override.map(|(d, _)| d.as_str()).or(func.dependency.as_deref());
            let input = match dep {
                None => None,
                Some(dep) => {
                    self.ensure(record, dep, None, false, fetcher, depth + 1)?;
                    Some(record.get_path(&root).ok_or_else(|| format!("{name}: missing input value at {root:?}"))?)
                }
            };
            let output = {
                let mut ctx = EnrichContext { record: &*record, fetcher: &mut *fetcher };
                (func.body)(input.as_ref(), &mut ctx).map_err(|e| format!("{name}: {e}"))?
            };
            for (field, value) in output {
                if !func.result_fields.contains(&field) {
                    return Err(format!("{name}: undeclared result field {field:?}"));
                }
                record.insert(&join_path(&root, &field), value).map_err(|e| format!("{name}: {e}"))?;
            }
            record.applied.insert(id);
        }

        if explicit {
            for field in &func.result_fields {
                let path = join_path(&root, field);
                if record.node_at(&path).is_some_and(|n| n.value.is_some()) {
                    record.mark(path);
                }
            }
        }
        Ok(())
    }

    fn apply_map(
        &self,
        record: &mut EnrichedRecord,
        m: &MapEnrich,
        fetcher: &mut dyn RecordFetcher,
    ) -> Result<(), String> {
        let input_path = match &m.input {
            MapInput::Path(p) => p.clone(),
            MapInput::Dependency { name, field } => {
                self.ensure(record, name, None, false, fetcher, 0)?;
                join_path(&self.result_root(name, None).map_err(|e| e.to_string())?, field)
            }
        };
        let label = format!("map:{}", m.result_key);
        let id = format!("{label}({input_path})");
        let target = join_path(&input_path, &m.result_key);
        if !record.applied.contains(&id) {
            let input = record
                .get_path(&input_path)
                .ok_or_else(|| format!("{label}: missing input value at {input_path:?}"))?;
            let value = (m.body)(&input).map_err(|e| format!("{label}: {e}"))?;
            if matches!(value, Value::Map(_)) {
                return Err(format!("{label}: a map enrichment must produce a single value, not a mapping"));
            }
            record.insert(&target, value).map_err(|e| format!("{label}: {e}"))?;
            record.applied.insert(id);
        }
        record.mark(target);
        Ok(())
    }
}
