//! Lineage-preserving JSON output.
//!
//! Each record becomes an object whose `record` key holds the CDX metadata.
//! Derived values follow as nested objects along their derivation path. Only
//! marked paths and their ancestors are written. A node that carries a value
//! and also has visible children writes the value under `_`.

use std::collections::HashSet;
use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::Path;

use base64::Engine;
use flate2::write::GzEncoder;
use flate2::Compression;
use serde_json::{Map, Value as Json};

use crate::cdx::timestamp_to_iso;
use crate::model::{join_path, EnrichedRecord, Node, Value, RECORD_ROOT};
use crate::warcio::{parse_http_response, payload_digest, Headers, WarcRecord};

/// Key holding a node's own value next to its derived children.
pub const UNDERSCORE: &str = "_";

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct JsonOptions {
    /// Emit byte values as base64 instead of `bytes(length: N)`.
    pub base64_bytes: bool,
    pub pretty: bool,
}

fn value_to_json(value: &Value, opts: &JsonOptions) -> Json {
    match value {
        Value::Bool(b) => Json::Bool(*b),
        Value::Int(i) => Json::from(*i),
        Value::Float(x) => serde_json::Number::from_f64(*x).map_or(Json::Null, Json::Number),
        Value::Str(s) => Json::String(s.to_string()),
        Value::Bytes(b) if opts.base64_bytes => Json::String(base64::engine::general_purpose::STANDARD.encode(b)),
        Value::Bytes(b) => Json::String(format!("bytes(length: {})", b.len())),
        Value::Map(entries) => Json::Object(entries.iter().map(|(k, v)| (k.clone(), value_to_json(v, opts))).collect()),
        Value::List(items) => Json::Array(items.iter().map(|v| value_to_json(v, opts)).collect()),
    }
}

pub fn metadata_json(record: &EnrichedRecord) -> Json {
    let m = &record.meta;
    let mut obj = Map::new();
    obj.insert("surtUrl".into(), Json::String(m.surt_url.clone()));
    obj.insert(
        "timestamp".into(),
        Json::String(timestamp_to_iso(&m.timestamp).unwrap_or_else(|_| m.timestamp.clone())),
    );
    obj.insert("originalUrl".into(), Json::String(m.original_url.clone()));
    obj.insert("mime".into(), Json::String(m.mime.clone()));
    obj.insert("status".into(), m.status.map_or(Json::Null, Json::from));
    obj.insert("digest".into(), Json::String(m.digest.clone()));
    obj.insert("redirectUrl".into(), Json::String(m.redirect_url.clone().unwrap_or_else(|| "-".into())));
    obj.insert("meta".into(), Json::String(m.meta_tags.clone().unwrap_or_else(|| "-".into())));
    Json::Object(obj)
}

/// Every mark plus all of its ancestor paths.
fn visible_paths(record: &EnrichedRecord) -> HashSet<String> {
    let mut out = HashSet::new();
    for mark in &record.output_marks {
        let mut prefix = String::new();
        for seg in mark.split('.') {
            prefix = join_path(&prefix, seg);
            out.insert(prefix.clone());
        }
    }
    out
}

fn render(
    node: &Node,
    path: &str,
    record: &EnrichedRecord,
    visible: &HashSet<String>,
    opts: &JsonOptions,
) -> Option<Json> {
    let own = node.value.as_ref().filter(|_| record.output_marks.contains(path)).map(|v| value_to_json(v, opts));
    let mut children = Map::new();
    for (key, child) in &node.children {
        let child_path = join_path(path, key);
        if visible.contains(&child_path) {
            if let Some(json) = render(child, &child_path, record, visible, opts) {
                children.insert(key.clone(), json);
            }
        }
    }
    if children.is_empty() {
        return own;
    }
    match own {
        Some(own) => {
            let mut obj = Map::with_capacity(children.len() + 1);
            obj.insert(UNDERSCORE.to_string(), own);
            obj.extend(children);
            Some(Json::Object(obj))
        }
        None => Some(Json::Object(children)),
    }
}

pub fn record_to_json_value(record: &EnrichedRecord, opts: &JsonOptions) -> Json {
    let mut obj = Map::new();
    obj.insert(RECORD_ROOT.to_string(), metadata_json(record));
    let visible = visible_paths(record);
    for (key, child) in &record.tree.children {
        if visible.contains(key) {
            if let Some(json) = render(child, key, record, &visible, opts) {
                obj.insert(key.clone(), json);
            }
        }
    }
    Json::Object(obj)
}

/// A raw archive record: its headers, and for HTTP responses the status,
/// HTTP headers, de-chunked body digest and body.
pub fn warc_record_json(record: &WarcRecord, opts: &JsonOptions) -> Json {
    let mut obj = Map::new();
    let headers =
        |h: &Headers| -> Json { Json::Object(h.joined().into_iter().map(|(k, v)| (k, Json::String(v))).collect()) };
    obj.insert("version".into(), Json::String(record.version.clone()));
    obj.insert("recordHeader".into(), headers(&record.headers));
    match parse_http_response(&record.payload) {
        Ok(http) => {
            obj.insert("status".into(), Json::from(http.status));
            obj.insert("httpHeader".into(), headers(&http.headers));
            obj.insert("digest".into(), Json::String(payload_digest(&http.body)));
            obj.insert("body".into(), value_to_json(&Value::from(http.body), opts));
        }
        Err(_) => {
            obj.insert("payload".into(), value_to_json(&Value::from(record.payload.clone()), opts));
        }
    }
    Json::Object(obj)
}

/// Compact or pretty JSON text for one record, without a trailing newline.
pub fn record_to_json(record: &EnrichedRecord, opts: &JsonOptions) -> String {
    let value = record_to_json_value(record, opts);
    if opts.pretty { serde_json::to_string_pretty(&value) } else { serde_json::to_string(&value) }
        .expect("JSON values always serialize")
}

/// Writes one JSON object per record, each followed by LF.
pub fn write_corpus<'a, W: Write>(
    sink: W,
    records: impl IntoIterator<Item = &'a EnrichedRecord>,
    opts: &JsonOptions,
) -> io::Result<W> {
    let mut sink = sink;
    for record in records {
        sink.write_all(record_to_json(record, opts).as_bytes())?;
        sink.write_all(b"\n")?;
    }
    sink.flush()?;
    Ok(sink)
}

/// Saves records to `path`; a `.gz` suffix gzip-compresses the whole stream.
pub fn save_corpus<'a>(
    records: impl IntoIterator<Item = &'a EnrichedRecord>,
    path: &Path,
    opts: &JsonOptions,
) -> io::Result<()> {
    let file = BufWriter::new(File::create(path)?);
    if path.extension().is_some_and(|e| e == "gz") {
        let encoder = write_corpus(GzEncoder::new(file, Compression::default()), records, opts)?;
        encoder.finish()?.flush()
    } else {
        write_corpus(file, records, opts)?.flush()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cdx::parse_cdx_line;
    use serde_json::json;

    fn record() -> EnrichedRecord {
        EnrichedRecord::new(
            parse_cdx_line(
                "com,example)/jcdl 20160117113253 http://example.com/jcdl text/html 200 \
                 RKMS6XLYED4G8POFQUIN37WDEWYLD9Z - - 12345 67890 archive.warc.gz",
            )
            .unwrap(),
        )
    }

    fn with_response(mut r: EnrichedRecord) -> EnrichedRecord {
        r.insert("recordHeader", Value::string_map([("WARC-Type".into(), "response".into())])).unwrap();
        r.insert("httpHeader", Value::string_map([("Content-Type".into(), "text/html".into())])).unwrap();
        r.insert("payload", Value::from(vec![0u8; 2345])).unwrap();
        r
    }

    #[test]
    fn metadata_only() {
        let j = record_to_json_value(&record(), &JsonOptions::default());
        assert_eq!(
            j,
            json!({"record": {
                "surtUrl": "com,example)/jcdl",
                "timestamp": "2016-01-17T11:32:53.000+00:00",
                "originalUrl": "http://example.com/jcdl",
                "mime": "text/html",
                "status": 200,
                "digest": "RKMS6XLYED4G8POFQUIN37WDEWYLD9Z",
                "redirectUrl": "-",
                "meta": "-"
            }})
        );
    }

    #[test]
    fn unmarked_fields_are_omitted() {
        let mut r = with_response(record());
        r.insert("payload.string", Value::from("<html>...</html>")).unwrap();
        r.mark("payload.string");
        let j = record_to_json_value(&r, &JsonOptions::default());
        assert_eq!(j["payload"], json!({"string": "<html>...</html>"}));
        assert_eq!(j.as_object().unwrap().keys().collect::<Vec<_>>(), vec!["record", "payload"]);
    }

    #[test]
    fn underscore_holds_own_value() {
        let mut r = with_response(record());
        r.insert("payload.string", Value::from("<html>...</html>")).unwrap();
        r.insert("payload.string.length", Value::Int(2345)).unwrap();
        r.mark("payload.string");
        r.mark("payload.string.length");
        let j = record_to_json_value(&r, &JsonOptions::default());
        assert_eq!(j["payload"], json!({"string": {"_": "<html>...</html>", "length": 2345}}));

        r.mark("payload");
        let j = record_to_json_value(&r, &JsonOptions::default());
        assert_eq!(j["payload"]["_"], json!("bytes(length: 2345)"));
        let keys: Vec<_> = j["payload"].as_object().unwrap().keys().cloned().collect();
        assert_eq!(keys, vec!["_", "string"]);
    }

    #[test]
    fn bytes_render_as_placeholder_or_base64() {
        let mut r = record();
        r.insert("payload", Value::from(b"hi".to_vec())).unwrap();
        r.mark("payload");
        assert_eq!(record_to_json_value(&r, &JsonOptions::default())["payload"], json!("bytes(length: 2)"));
        let opts = JsonOptions { base64_bytes: true, pretty: false };
        assert_eq!(record_to_json_value(&r, &opts)["payload"], json!("aGk="));
    }

    #[test]
    fn output_is_deterministic_and_line_based() {
        let mut r = with_response(record());
        r.mark("httpHeader");
        let opts = JsonOptions::default();
        assert_eq!(record_to_json(&r, &opts), record_to_json(&r.clone(), &opts));
        let out = write_corpus(Vec::new(), [&r, &r], &opts).unwrap();
        let text = String::from_utf8(out).unwrap();
        assert_eq!(text.lines().count(), 2);
        let pretty = JsonOptions { pretty: true, ..opts };
        assert!(record_to_json(&r, &pretty).contains("\n  \"record\": {"));
    }

    #[test]
    fn raw_record_view() {
        let mut headers = Headers::new();
        headers.push("WARC-Type", "response");
        let http = b"HTTP/1.1 404 Not Found\r\nContent-Type: text/plain\r\n\r\nnope".to_vec();
        let j = warc_record_json(&WarcRecord::new(headers, http), &JsonOptions::default());
        assert_eq!(j["status"], json!(404));
        assert_eq!(j["httpHeader"]["Content-Type"], json!("text/plain"));
        assert_eq!(j["digest"], json!(payload_digest(b"nope")));
        assert_eq!(j["body"], json!("bytes(length: 4)"));
        assert_eq!(j["recordHeader"]["Content-Length"], json!("56"));
    }

    #[test]
    fn gz_suffix_compresses() {
        use std::io::Read;
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("results.json.gz");
        save_corpus([&record()], &path, &JsonOptions::default()).unwrap();
        let raw = std::fs::read(&path).unwrap();
        assert_eq!(&raw[..2], &[0x1f, 0x8b]);
        let mut text = String::new();
        flate2::read::GzDecoder::new(&raw[..]).read_to_string(&mut text).unwrap();
        assert_eq!(text, format!("{}\n", record_to_json(&record(), &JsonOptions::default())));

        let empty = dir.path().join("empty.json");
        save_corpus([], &empty, &JsonOptions::default()).unwrap();
        assert_eq!(std::fs::read(&empty).unwrap().len(), 0);
    }
}
