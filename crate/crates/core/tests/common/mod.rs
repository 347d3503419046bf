//! Fixtures and independent oracles shared by the integration tests.
#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};
use std::fs::File;
use std::io::BufReader;
use std::sync::Arc;

use cdxcorpus::cdx::{read_cdx, CdxRecord};
use cdxcorpus::corpusgen::{generate_corpus, Corpus, CorpusSpec};
use cdxcorpus::enrich::{Enrichment, MapEnrich, RecordFetcher, HTML_TITLE, RESPONSE, STRING_CONTENT};
use cdxcorpus::jsonout::{record_to_json, JsonOptions};
use cdxcorpus::model::{EnrichedRecord, Value};
use cdxcorpus::pipeline::{Clause, Field, FilterExpr, Literal, Op, Plan};
use cdxcorpus::warcio::{WarcError, WarcRecord};
use rand::seq::SliceRandom;
use rand::Rng;
use serde_json::Value as Json;
use sha1::{Digest, Sha1};

pub fn default_corpus() -> (tempfile::TempDir, Corpus) {
    let dir = tempfile::tempdir().expect("temp dir");
    let corpus = generate_corpus(&CorpusSpec::default(), dir.path()).expect("default corpus");
    (dir, corpus)
}

pub fn small_spec(seed: u64) -> CorpusSpec {
    CorpusSpec {
        domains: 4,
        urls_per_domain: 6,
        captures_per_url: 4,
        seed,
        body_size: (300, 4000),
        records_per_file: 25,
        ..CorpusSpec::default()
    }
}

pub fn small_corpus(seed: u64) -> (tempfile::TempDir, Corpus) {
    let dir = tempfile::tempdir().expect("temp dir");
    let corpus = generate_corpus(&small_spec(seed), dir.path()).expect("small corpus");
    (dir, corpus)
}

pub fn cdx_rows(corpus: &Corpus) -> Vec<CdxRecord> {
    read_cdx(BufReader::new(File::open(&corpus.cdx).expect("cdx file"))).collect::<Result<_, _>>().expect("valid cdx")
}

/// Base32 (RFC 4648, no padding) of SHA-1, written out independently of the
/// library's digest helper.
pub fn sha1_base32(bytes: &[u8]) -> String {
    const ALPHABET: &[u8; 32] = b"ABCDEFGHIJKLMNOPQRSTUVWXYZ234567";
    let digest = Sha1::digest(bytes);
    let mut out = String::new();
    let (mut buffer, mut bits) = (0u32, 0u32);
    for &byte in digest.iter() {
        buffer = (buffer << 8) | u32::from(byte);
        bits += 8;
        while bits >= 5 {
            bits -= 5;
            out.push(ALPHABET[((buffer >> bits) & 31) as usize] as char);
        }
    }
    if bits > 0 {
        out.push(ALPHABET[((buffer << (5 - bits)) & 31) as usize] as char);
    }
    out
}

/// HTTP body after the header block, de-chunked when the headers say so.
pub fn http_body(message: &[u8]) -> Vec<u8> {
    let split = message.windows(4).position(|w| w == b"\r\n\r\n").expect("header terminator") + 4;
    let head = String::from_utf8_lossy(&message[..split]).to_ascii_lowercase();
    let body = &message[split..];
    if !head.contains("transfer-encoding: chunked") {
        return body.to_vec();
    }
    let mut out = Vec::new();
    let mut rest = body;
    loop {
        let nl = rest.windows(2).position(|w| w == b"\r\n").expect("chunk size line");
        let size_text = String::from_utf8_lossy(&rest[..nl]);
        let size = usize::from_str_radix(size_text.split(';').next().unwrap().trim(), 16).expect("hex size");
        rest = &rest[nl + 2..];
        if size == 0 {
            return out;
        }
        out.extend_from_slice(&rest[..size]);
        rest = &rest[size + 2..];
    }
}

/// Group by SURT, keep the maximum timestamp, later row wins ties.
pub fn brute_force_latest(rows: &[CdxRecord]) -> Vec<CdxRecord> {
    let mut best: BTreeMap<&str, (usize, &CdxRecord)> = BTreeMap::new();
    for (i, row) in rows.iter().enumerate() {
        let replace = match best.get(row.surt_url.as_str()) {
            None => true,
            Some((_, current)) => row.timestamp >= current.timestamp,
        };
        if replace {
            best.insert(&row.surt_url, (i, row));
        }
    }
    let mut kept: Vec<(usize, &CdxRecord)> = best.into_values().collect();
    kept.sort_by_key(|(i, _)| *i);
    kept.into_iter().map(|(_, r)| r.clone()).collect()
}

pub fn keys(records: &[EnrichedRecord]) -> Vec<(String, String, String, u64)> {
    records
        .iter()
        .map(|r| (r.meta.surt_url.clone(), r.meta.timestamp.clone(), r.meta.filename.clone(), r.meta.offset))
        .collect()
}

pub fn json_lines(records: &[EnrichedRecord]) -> Vec<String> {
    records.iter().map(|r| record_to_json(r, &JsonOptions::default())).collect()
}

/// Serves one constructed WARC record for every fetch and counts fetches.
pub struct FixedFetcher {
    pub record: Arc<WarcRecord>,
    pub fetches: usize,
}

impl RecordFetcher for FixedFetcher {
    fn fetch(&mut self, _meta: &CdxRecord) -> Result<Arc<WarcRecord>, WarcError> {
        self.fetches += 1;
        Ok(self.record.clone())
    }
}

/// A random plan from the filter grammar, anchored on values present in the
/// corpus so that most plans select something.
pub fn random_plan(rng: &mut impl Rng, corpus: &Corpus) -> (String, Plan) {
    let rows = cdx_rows(corpus);
    let pick = rows.choose(rng).expect("non-empty corpus").clone();
    let mut clauses = Vec::new();
    let candidates: Vec<Clause> = vec![
        Clause { field: Field::Status, op: Op::Eq, literal: Literal::Int(200) },
        Clause { field: Field::Status, op: Op::Ge, literal: Literal::Int(300) },
        Clause { field: Field::Mime, op: Op::Eq, literal: Literal::Str(pick.mime.clone()) },
        Clause { field: Field::Domain, op: Op::Eq, literal: Literal::Str(pick.domain()) },
        Clause { field: Field::Timestamp, op: Op::Prefix, literal: Literal::Str(pick.timestamp[..6].to_string()) },
        Clause { field: Field::Timestamp, op: Op::Ge, literal: Literal::Str(pick.timestamp.clone()) },
        Clause { field: Field::Url, op: Op::Contains, literal: Literal::Str("/news/".into()) },
        Clause {
            field: Field::Surt,
            op: Op::Prefix,
            literal: Literal::Str(pick.surt_url[..pick.surt_url.find(')').unwrap() + 1].to_string()),
        },
        Clause { field: Field::Mime, op: Op::Ne, literal: Literal::Str("image/png".into()) },
        Clause { field: Field::Path("record.status".into()), op: Op::Lt, literal: Literal::Int(500) },
    ];
    let take = rng.gen_range(1..=2);
    for clause in candidates.choose_multiple(rng, take) {
        clauses.push(clause.clone());
    }
    let expr = FilterExpr { clauses };
    let mut description = expr.to_string();
    let mut plan = Plan::new([corpus.cdx.clone()], corpus.dir.clone()).filter_expr(expr).expect("metadata filter");
    if rng.gen_bool(0.4) {
        plan = plan.latest_per_url();
        description.push_str(" | latest");
    }
    let enrich_sets: [&[&str]; 4] = [
        &[STRING_CONTENT],
        &[RESPONSE, STRING_CONTENT],
        &[STRING_CONTENT, HTML_TITLE],
        &[HTML_TITLE, "map:length(payload.string)"],
    ];
    for spec in *enrich_sets.choose(rng).unwrap() {
        plan = plan.enrich(Enrichment::parse(spec).unwrap()).unwrap();
        description.push_str(&format!(" | {spec}"));
    }
    if rng.gen_bool(0.5) {
        plan = plan.filter_derived_op("payload.string", Op::Contains, Literal::Str("internet".into())).unwrap();
        description.push_str(" | contains internet");
    }
    if rng.gen_bool(0.3) {
        plan = plan.latest_per_url();
        description.push_str(" | latest");
    }
    if rng.gen_bool(0.3) {
        plan = plan.map_enrich(MapEnrich::length("payload.string").unwrap()).unwrap();
        description.push_str(" | length");
    }
    (description, plan)
}

/// Expected JSON for a tree value, written independently of the serializer.
fn expected_json(value: &Value) -> Json {
    match value {
        Value::Bool(b) => Json::Bool(*b),
        Value::Int(i) => Json::from(*i),
        Value::Float(f) => Json::from(*f),
        Value::Str(s) => Json::String(s.to_string()),
        Value::Bytes(b) => Json::String(format!("bytes(length: {})", b.len())),
        Value::Map(m) => Json::Object(m.iter().map(|(k, v)| (k.clone(), expected_json(v))).collect()),
        Value::List(l) => Json::Array(l.iter().map(expected_json).collect()),
    }
}

/// Lineage completeness, omission, and parse-back checks for one record and
/// its serialized line.
pub fn check_lineage(record: &EnrichedRecord, line: &str) -> Result<(), String> {
    let json: Json = serde_json::from_str(line).map_err(|e| format!("unparseable JSON: {e}"))?;
    let obj = json.as_object().ok_or("top level is not an object")?;
    if obj.keys().next().map(String::as_str) != Some("record") {
        return Err("`record` is not the first key".into());
    }
    let marks: BTreeSet<&str> = record.output_marks.iter().map(String::as_str).collect();
    let mut allowed: BTreeSet<String> = BTreeSet::new();
    for mark in &marks {
        let segments: Vec<&str> = mark.split('.').collect();
        let mut node = &json;
        for (depth, seg) in segments.iter().enumerate() {
            allowed.insert(segments[..=depth].join("."));
            node = node.get(*seg).ok_or_else(|| format!("missing {} of mark {mark}", segments[..=depth].join(".")))?;
            let last = depth + 1 == segments.len();
            if !last && !node.is_object() {
                return Err(format!("prefix {} of {mark} is not an object", segments[..=depth].join(".")));
            }
        }
        let tree_value = record.node_at(mark).and_then(|n| n.value.clone()).ok_or(format!("{mark} has no value"))?;
        let has_visible_children =
            marks.iter().any(|m| m.len() > mark.len() && m.starts_with(mark) && m.as_bytes()[mark.len()] == b'.');
        let written = if has_visible_children { node.get("_").ok_or(format!("{mark} lacks `_`"))? } else { node };
        if *written != expected_json(&tree_value) {
            return Err(format!("value of {mark} does not parse back"));
        }
    }
    let has_children =
        |p: &str| allowed.iter().any(|a| a.len() > p.len() && a.starts_with(p) && a.as_bytes()[p.len()] == b'.');
    let mut stack: Vec<(&Json, String)> = vec![(&json, String::new())];
    while let Some((node, path)) = stack.pop() {
        let Some(map) = node.as_object() else { continue };
        for (key, child) in map {
            if path.is_empty() && key == "record" {
                continue;
            }
            if key == "_" && marks.contains(path.as_str()) {
                continue;
            }
            let child_path = if path.is_empty() { key.clone() } else { format!("{path}.{key}") };
            if !allowed.contains(&child_path) {
                return Err(format!("unmarked field {child_path} in output"));
            }
            if has_children(&child_path) {
                stack.push((child, child_path));
            }
        }
    }
    Ok(())
}
