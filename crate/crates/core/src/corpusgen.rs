//! Deterministic synthetic web archives with a ground-truth ledger.
//!
//! A corpus directory holds record-per-member WARC (or ARC) files, a CSV
//! ledger describing every capture, and a CDX index derived from the
//! archives. Every byte depends only on the [`CorpusSpec`], so tests can
//! regenerate identical data from a seed.

use std::collections::BTreeSet;
use std::fs::{self, File};
use std::io::{self, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::thread;

use chrono::{Duration, NaiveDateTime};
use flate2::write::GzEncoder;
use flate2::Compression;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::cdx::{self, sort_cdx, write_cdx_line, CdxRecord, HEADER_LINE};
use crate::warcio::{
    arc_filedesc_bytes, arc_record_bytes, capture_metadata, chunk_body, payload_digest, scan_records, Headers,
    MemberWriter, WarcError, WarcRecord,
};

pub const LEDGER_FILE: &str = "ledger.csv";
pub const CDX_FILE: &str = "index.cdx";
pub const LEDGER_HEADER: [&str; 7] = ["url", "timestamp", "status", "mime", "title", "terms", "digest"];

const VOCABULARY: [&str; 48] = [
    "archive", "capture", "crawler", "library", "history", "record", "science", "museum", "research", "digital",
    "network", "server", "protocol", "browser", "storage", "picture", "memory", "analysis", "metadata", "corpus",
    "language", "society", "culture", "politics", "economy", "election", "weather", "sports", "health", "music",
    "travel", "garden", "kitchen", "market", "school", "river", "mountain", "ocean", "forest", "city", "village",
    "bridge", "engine", "signal", "letter", "window", "camera", "planet",
];
const TITLE_WORDS: [&str; 16] = [
    "Annual", "Report", "Daily", "News", "Field", "Notes", "Open", "Data", "Public", "Review", "Local", "Guide",
    "Weekly", "Digest", "Project", "Overview",
];
const ACCENTED_TITLE_WORDS: [&str; 4] = ["Café", "Résumé", "Naïve", "Über"];
const TLDS: [&str; 4] = ["com", "org", "net", "de"];
const SECTIONS: [&str; 5] = ["news", "blog", "docs", "about", "archive"];

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("invalid corpus spec: {0}")]
    Spec(String),
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error("{path}: {source}")]
    Archive { path: PathBuf, source: WarcError },
    #[error("ledger: {0}")]
    Ledger(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ArchiveFormat {
    #[default]
    Warc,
    Arc,
}

impl ArchiveFormat {
    fn extension(self) -> &'static str {
        match self {
            ArchiveFormat::Warc => "warc.gz",
            ArchiveFormat::Arc => "arc.gz",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CorpusSpec {
    pub domains: usize,
    pub urls_per_domain: usize,
    pub captures_per_url: usize,
    /// Inclusive capture window as 14-digit timestamps.
    pub period: (String, String),
    pub seed: u64,
    pub chunked_fraction: f64,
    pub gzip_body_fraction: f64,
    pub non_html_fraction: f64,
    pub error_status_fraction: f64,
    /// Marker term planted in a known subset of text bodies.
    pub needle: String,
    pub needle_fraction: f64,
    /// Inclusive body size range in bytes for text captures.
    pub body_size: (usize, usize),
    pub records_per_file: usize,
    pub format: ArchiveFormat,
}

impl Default for CorpusSpec {
    fn default() -> Self {
        CorpusSpec {
            domains: 10,
            urls_per_domain: 20,
            captures_per_url: 5,
            period: ("20111203000000".into(), "20121009000000".into()),
            seed: 42,
            chunked_fraction: 0.2,
            gzip_body_fraction: 0.1,
            non_html_fraction: 0.1,
            error_status_fraction: 0.1,
            needle: "internet".into(),
            needle_fraction: 0.3,
            body_size: (1024, 50 * 1024),
            records_per_file: 250,
            format: ArchiveFormat::Warc,
        }
    }
}

impl CorpusSpec {
    pub fn record_count(&self) -> usize {
        self.domains * self.urls_per_domain * self.captures_per_url
    }

    pub fn validate(&self) -> Result<(NaiveDateTime, NaiveDateTime), CorpusError> {
        let err = |m: &str| Err(CorpusError::Spec(m.to_string()));
        if self.domains == 0 || self.urls_per_domain == 0 || self.captures_per_url == 0 {
            return err("domains, urls_per_domain and captures_per_url must be positive");
        }
        if self.records_per_file == 0 {
            return err("records_per_file must be positive");
        }
        let fractions = [
            self.chunked_fraction,
            self.gzip_body_fraction,
            self.non_html_fraction,
            self.error_status_fraction,
            self.needle_fraction,
        ];
        if fractions.iter().any(|f| !(0.0..=1.0).contains(f)) {
            return err("fractions must lie in [0, 1]");
        }
        if self.body_size.0 == 0 || self.body_size.0 > self.body_size.1 {
            return err("body_size must be a non-empty positive range");
        }
        if self.needle.is_empty()
            || !self.needle.bytes().all(|b| b.is_ascii_lowercase())
            || VOCABULARY.iter().any(|w| w.contains(self.needle.as_str()))
        {
            return err("needle must be a lowercase ASCII word that no vocabulary word contains");
        }
        let start = cdx::validate_timestamp(&self.period.0).map_err(|e| CorpusError::Spec(e.to_string()))?;
        let end = cdx::validate_timestamp(&self.period.1).map_err(|e| CorpusError::Spec(e.to_string()))?;
        let seconds = (end - start).num_seconds();
        if seconds < 0 || (seconds as u128) < self.captures_per_url as u128 {
            return err("period must cover at least one second per capture");
        }
        Ok((start, end))
    }
}

/// Ground truth for one capture.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LedgerRow {
    pub url: String,
    pub timestamp: String,
    pub status: u16,
    pub mime: String,
    /// Empty for captures without an HTML title.
    pub title: String,
    /// Distinct words of the body text, sorted.
    pub terms: Vec<String>,
    pub digest: String,
}

/// Paths and ledger of a generated corpus.
#[derive(Debug, Clone)]
pub struct Corpus {
    pub dir: PathBuf,
    pub archives: Vec<PathBuf>,
    pub cdx: PathBuf,
    pub ledger_path: PathBuf,
    pub ledger: Vec<LedgerRow>,
}

impl Corpus {
    /// Loads an existing corpus directory.
    pub fn open(dir: &Path) -> Result<Corpus, CorpusError> {
        let ledger_path = dir.join(LEDGER_FILE);
        let cdx = dir.join(CDX_FILE);
        if !cdx.is_file() {
            return Err(CorpusError::Io(io::Error::new(
                io::ErrorKind::NotFound,
                format!("{} not found", cdx.display()),
            )));
        }
        Ok(Corpus {
            dir: dir.to_path_buf(),
            archives: archive_paths(dir)?,
            cdx,
            ledger: read_ledger(&ledger_path)?,
            ledger_path,
        })
    }

    pub fn total_archive_bytes(&self) -> io::Result<u64> {
        self.archives.iter().map(|p| fs::metadata(p).map(|m| m.len())).sum()
    }
}

/// Archive files of a directory in name order.
pub fn archive_paths(dir: &Path) -> io::Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    for entry in fs::read_dir(dir)? {
        let path = entry?.path();
        let name = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
        if (name.ends_with(".warc.gz") || name.ends_with(".arc.gz")) && path.is_file() {
            out.push(path);
        }
    }
    out.sort();
    Ok(out)
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Kind {
    Html,
    Text,
    Image,
}

struct Page {
    url: String,
    ip: String,
    kind: Kind,
    latin1: bool,
}

struct Capture {
    row: LedgerRow,
    http: Vec<u8>,
    ip: String,
}

fn title_for(rng: &mut ChaCha8Rng, accented: bool) -> String {
    let mut words: Vec<&str> = (0..rng.gen_range(2..=4)).map(|_| *TITLE_WORDS.choose(rng).unwrap()).collect();
    if accented {
        words.insert(0, ACCENTED_TITLE_WORDS.choose(rng).unwrap());
    }
    format!("{} {}", words.join(" "), rng.gen_range(1..1000))
}

/// Paragraph text of roughly `target` bytes drawn from a topic subset of the
/// vocabulary, with the needle planted `needles` times.
fn body_words(rng: &mut ChaCha8Rng, target: usize, needle: &str, needles: usize) -> Vec<String> {
    let topic_size = rng.gen_range(6..=12);
    let topic: Vec<&str> = VOCABULARY.choose_multiple(rng, topic_size).copied().collect();
    let mut words = Vec::new();
    let mut len = 0;
    while len < target {
        let w = *topic.choose(rng).unwrap();
        len += w.len() + 1;
        words.push(w.to_string());
    }
    for _ in 0..needles {
        let at = rng.gen_range(0..=words.len());
        words.insert(at, needle.to_string());
    }
    words
}

fn paragraphs(words: &[String]) -> String {
    words.chunks(40).map(|c| format!("<p>{}</p>\n", c.join(" "))).collect()
}

fn terms_of(words: &[String]) -> Vec<String> {
    words.iter().cloned().collect::<BTreeSet<_>>().into_iter().collect()
}

fn encode_text(text: &str, latin1: bool) -> Vec<u8> {
    if latin1 {
        text.chars().map(|c| u8::try_from(u32::from(c)).unwrap_or(b'?')).collect()
    } else {
        text.as_bytes().to_vec()
    }
}

fn gzip(bytes: &[u8]) -> io::Result<Vec<u8>> {
    let mut enc = GzEncoder::new(Vec::new(), Compression::default());
    enc.write_all(bytes)?;
    enc.finish()
}

fn reason(status: u16) -> &'static str {
    match status {
        200 => "OK",
        301 => "Moved Permanently",
        404 => "Not Found",
        _ => "Internal Server Error",
    }
}

fn make_capture(rng: &mut ChaCha8Rng, spec: &CorpusSpec, page: &Page, when: NaiveDateTime) -> io::Result<Capture> {
    let status = if rng.gen_bool(spec.error_status_fraction) { *[301u16, 404, 500].choose(rng).unwrap() } else { 200 };
    let mut headers: Vec<(String, String)> = vec![
        ("Date".into(), when.format("%a, %d %b %Y %H:%M:%S GMT").to_string()),
        ("Server".into(), "synthetic/1.0".into()),
    ];
    let (content_type, mime, title, words, body) = if status != 200 {
        let title = format!("{status} {}", reason(status));
        let words: Vec<String> = match status {
            301 => "this page has moved",
            404 => "the requested page was not found",
            _ => "the server encountered an error",
        }
        .split(' ')
        .map(String::from)
        .collect();
        if status == 301 {
            headers.push(("Location".into(), format!("{}/moved", page.url.trim_end_matches('/'))));
        }
        let html = format!("<html><head><title>{title}</title></head><body>\n{}</body></html>\n", paragraphs(&words));
        ("text/html; charset=utf-8".to_string(), "text/html", title, words, html.into_bytes())
    } else {
        let target = rng.gen_range(spec.body_size.0..=spec.body_size.1);
        let needles =
            if page.kind != Kind::Image && rng.gen_bool(spec.needle_fraction) { rng.gen_range(1..=5) } else { 0 };
        match page.kind {
            Kind::Html => {
                let accented = rng.gen_bool(0.1);
                let title = title_for(rng, page.latin1 || accented);
                let words = body_words(rng, target, &spec.needle, needles);
                let charset = if page.latin1 { "iso-8859-1" } else { "utf-8" };
                let html = format!(
                    "<!DOCTYPE html>\n<html><head><meta charset=\"{charset}\"><title>{title}</title></head>\n<body>\n{}</body></html>\n",
                    paragraphs(&words)
                );
                (format!("text/html; charset={charset}"), "text/html", title, words, encode_text(&html, page.latin1))
            }
            Kind::Text => {
                let words = body_words(rng, target, &spec.needle, needles);
                let text = words.chunks(12).map(|c| c.join(" ") + "\n").collect::<String>();
                ("text/plain; charset=utf-8".to_string(), "text/plain", String::new(), words, text.into_bytes())
            }
            Kind::Image => {
                let mut png = b"\x89PNG\r\n\x1a\n".to_vec();
                png.extend((0..target / 4).map(|_| rng.gen::<u8>()));
                ("image/png".to_string(), "image/png", String::new(), Vec::new(), png)
            }
        }
    };
    headers.insert(1, ("Content-Type".into(), content_type));
    let body = if page.kind != Kind::Image && status == 200 && rng.gen_bool(spec.gzip_body_fraction) {
        headers.push(("Content-Encoding".into(), "gzip".into()));
        gzip(&body)?
    } else {
        body
    };
    let digest = payload_digest(&body);
    let wire_body = if rng.gen_bool(spec.chunked_fraction) {
        headers.push(("Transfer-Encoding".into(), "chunked".into()));
        let sizes: Vec<usize> = (0..rng.gen_range(1..=6)).map(|_| rng.gen_range(1..=8192)).collect();
        chunk_body(&body, &sizes)
    } else {
        headers.push(("Content-Length".into(), body.len().to_string()));
        body
    };
    let mut http = format!("HTTP/1.1 {status} {}\r\n", reason(status)).into_bytes();
    for (k, v) in &headers {
        http.extend_from_slice(format!("{k}: {v}\r\n").as_bytes());
    }
    http.extend_from_slice(b"\r\n");
    http.extend_from_slice(&wire_body);
    Ok(Capture {
        row: LedgerRow {
            url: page.url.clone(),
            timestamp: when.format("%Y%m%d%H%M%S").to_string(),
            status,
            mime: mime.to_string(),
            title,
            terms: terms_of(&words),
            digest,
        },
        http,
        ip: page.ip.clone(),
    })
}

fn record_id(rng: &mut ChaCha8Rng) -> String {
    let b: [u8; 16] = rng.gen();
    format!(
        "<urn:uuid:{:08x}-{:04x}-4{:03x}-{:04x}-{:012x}>",
        u32::from_be_bytes([b[0], b[1], b[2], b[3]]),
        u16::from_be_bytes([b[4], b[5]]),
        u16::from_be_bytes([b[6], b[7]]) & 0x0fff,
        (u16::from_be_bytes([b[8], b[9]]) & 0x3fff) | 0x8000,
        u64::from_be_bytes([0, 0, b[10], b[11], b[12], b[13], b[14], b[15]]),
    )
}

fn warcinfo(rng: &mut ChaCha8Rng, filename: &str, when: NaiveDateTime) -> WarcRecord {
    let mut headers = Headers::new();
    headers.push("WARC-Type", "warcinfo");
    headers.push("WARC-Date", when.format("%Y-%m-%dT%H:%M:%SZ").to_string());
    headers.push("WARC-Filename", filename);
    headers.push("WARC-Record-ID", record_id(rng));
    headers.push("Content-Type", "application/warc-fields");
    WarcRecord::new(headers, b"software: cdxcorpus synthetic generator\r\nformat: WARC File Format 1.0\r\n".to_vec())
}

fn response_record(rng: &mut ChaCha8Rng, capture: &Capture, when: NaiveDateTime) -> WarcRecord {
    let mut headers = Headers::new();
    headers.push("WARC-Type", "response");
    headers.push("WARC-Target-URI", capture.row.url.as_str());
    headers.push("WARC-Date", when.format("%Y-%m-%dT%H:%M:%SZ").to_string());
    headers.push("WARC-Record-ID", record_id(rng));
    headers.push("WARC-IP-Address", capture.ip.as_str());
    headers.push("WARC-Payload-Digest", format!("sha1:{}", capture.row.digest));
    headers.push("Content-Type", "application/http; msgtype=response");
    WarcRecord::new(headers, capture.http.clone())
}

fn pages(rng: &mut ChaCha8Rng, spec: &CorpusSpec) -> Vec<Page> {
    let mut out = Vec::with_capacity(spec.domains * spec.urls_per_domain);
    for d in 0..spec.domains {
        let host = format!("site{d:02}.{}", TLDS[d % TLDS.len()]);
        for u in 0..spec.urls_per_domain {
            let kind = if rng.gen_bool(spec.non_html_fraction) {
                if rng.gen_bool(0.5) {
                    Kind::Text
                } else {
                    Kind::Image
                }
            } else {
                Kind::Html
            };
            let ext = match kind {
                Kind::Html => "html",
                Kind::Text => "txt",
                Kind::Image => "png",
            };
            let url = match (u, kind) {
                (0, Kind::Html) => format!("http://{host}/"),
                _ => {
                    let section = SECTIONS.choose(rng).unwrap();
                    let query =
                        if rng.gen_bool(0.15) { format!("?page={}", rng.gen_range(2..10)) } else { String::new() };
                    format!("http://{host}/{section}/item-{u:03}.{ext}{query}")
                }
            };
            out.push(Page { url, ip: format!("10.0.{}.{}", d % 256, u % 250 + 1), kind, latin1: rng.gen_bool(0.15) });
        }
    }
    out
}

/// Writes archives, `ledger.csv` and `index.cdx` into `out_dir`.
pub fn generate_corpus(spec: &CorpusSpec, out_dir: &Path) -> Result<Corpus, CorpusError> {
    let (start, end) = spec.validate()?;
    fs::create_dir_all(out_dir)?;
    let span = (end - start).num_seconds();
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);

    let mut scheduled: Vec<(NaiveDateTime, usize)> = Vec::with_capacity(spec.record_count());
    let pages = pages(&mut rng, spec);
    for (i, _) in pages.iter().enumerate() {
        let mut seen = BTreeSet::new();
        while seen.len() < spec.captures_per_url {
            seen.insert(rng.gen_range(0..=span));
        }
        scheduled.extend(seen.into_iter().map(|s| (start + Duration::seconds(s), i)));
    }
    scheduled.sort_by(|a, b| (a.0, &pages[a.1].url).cmp(&(b.0, &pages[b.1].url)));

    let mut ledger = Vec::with_capacity(scheduled.len());
    let mut archives = Vec::new();
    for (file_no, batch) in scheduled.chunks(spec.records_per_file).enumerate() {
        let filename = format!("corpus-{file_no:05}.{}", spec.format.extension());
        let path = out_dir.join(&filename);
        let archive_err = |source| CorpusError::Archive { path: path.clone(), source };
        let mut writer = MemberWriter::new(BufWriter::new(File::create(&path)?), filename.as_str());
        let first = batch[0].0;
        match spec.format {
            ArchiveFormat::Warc => writer.write_record(&warcinfo(&mut rng, &filename, first)),
            ArchiveFormat::Arc => {
                writer.write_member(&arc_filedesc_bytes(&filename, &first.format("%Y%m%d%H%M%S").to_string()))
            }
        }
        .map_err(archive_err)?;
        for &(when, page_idx) in batch {
            let capture = make_capture(&mut rng, spec, &pages[page_idx], when)?;
            match spec.format {
                ArchiveFormat::Warc => writer.write_record(&response_record(&mut rng, &capture, when)),
                ArchiveFormat::Arc => writer.write_member(&arc_record_bytes(
                    &capture.row.url,
                    &capture.ip,
                    &capture.row.timestamp,
                    &capture.row.mime,
                    &capture.http,
                )),
            }
            .map_err(archive_err)?;
            ledger.push(capture.row);
        }
        writer.finish()?.into_inner().map_err(|e| e.into_error())?.sync_all()?;
        archives.push(path);
    }

    let ledger_path = out_dir.join(LEDGER_FILE);
    write_ledger(&ledger, &ledger_path)?;
    let cdx = out_dir.join(CDX_FILE);
    cdx_from_warc(&archives, &cdx)?;
    Ok(Corpus { dir: out_dir.to_path_buf(), archives, cdx, ledger_path, ledger })
}

fn scan_file(path: &Path) -> Result<Vec<CdxRecord>, CorpusError> {
    let archive_err = |source| CorpusError::Archive { path: path.to_path_buf(), source };
    let name = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    let mut rows = Vec::new();
    for item in scan_records(BufReader::new(File::open(path)?), &name) {
        let (locator, record) = item.map_err(archive_err)?;
        if let Some(row) = capture_metadata(&record, &locator).map_err(archive_err)? {
            rows.push(row);
        }
    }
    Ok(rows)
}

/// One CDX row per response record across `paths`, sorted. Files are scanned
/// in parallel; the `filename` field holds each file's base name.
pub fn cdx_rows(paths: &[PathBuf]) -> Result<Vec<CdxRecord>, CorpusError> {
    let per_file: Vec<Result<Vec<CdxRecord>, CorpusError>> = thread::scope(|s| {
        let handles: Vec<_> = paths.iter().map(|p| s.spawn(move || scan_file(p))).collect();
        handles.into_iter().map(|h| h.join().unwrap_or_else(|panic| std::panic::resume_unwind(panic))).collect()
    });
    let mut rows = Vec::new();
    for result in per_file {
        rows.extend(result?);
    }
    sort_cdx(&mut rows);
    Ok(rows)
}

/// Writes a sorted CDX file with header line; returns the number of rows.
pub fn cdx_from_warc(paths: &[PathBuf], out: &Path) -> Result<usize, CorpusError> {
    let rows = cdx_rows(paths)?;
    let mut sink = BufWriter::new(File::create(out)?);
    writeln!(sink, "{HEADER_LINE}")?;
    for row in &rows {
        writeln!(sink, "{}", write_cdx_line(row))?;
    }
    sink.flush()?;
    Ok(rows.len())
}

pub fn write_ledger(rows: &[LedgerRow], path: &Path) -> Result<(), CorpusError> {
    let ledger_err = |e: csv::Error| CorpusError::Ledger(e.to_string());
    let mut w = csv::Writer::from_path(path).map_err(ledger_err)?;
    w.write_record(LEDGER_HEADER).map_err(ledger_err)?;
    for r in rows {
        let status = r.status.to_string();
        let terms = r.terms.join(";");
        w.write_record([&r.url, &r.timestamp, &status, &r.mime, &r.title, &terms, &r.digest]).map_err(ledger_err)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_ledger(path: &Path) -> Result<Vec<LedgerRow>, CorpusError> {
    let ledger_err = |e: csv::Error| CorpusError::Ledger(e.to_string());
    let mut r = csv::Reader::from_path(path).map_err(ledger_err)?;
    let header = r.headers().map_err(ledger_err)?;
    if header.iter().ne(LEDGER_HEADER) {
        return Err(CorpusError::Ledger(format!("unexpected header {header:?}")));
    }
    let mut rows = Vec::new();
    for record in r.records() {
        let rec = record.map_err(ledger_err)?;
        let status = rec[2].parse().map_err(|_| CorpusError::Ledger(format!("bad status {:?}", &rec[2])))?;
        rows.push(LedgerRow {
            url: rec[0].to_string(),
            timestamp: rec[1].to_string(),
            status,
            mime: rec[3].to_string(),
            title: rec[4].to_string(),
            terms: rec[5].split(';').filter(|t| !t.is_empty()).map(String::from).collect(),
            digest: rec[6].to_string(),
        });
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cdx::read_cdx;

    fn small(seed: u64) -> CorpusSpec {
        CorpusSpec {
            domains: 3,
            urls_per_domain: 4,
            captures_per_url: 3,
            seed,
            body_size: (200, 2000),
            records_per_file: 10,
            error_status_fraction: 0.3,
            non_html_fraction: 0.3,
            chunked_fraction: 0.5,
            gzip_body_fraction: 0.3,
            ..CorpusSpec::default()
        }
    }

    #[test]
    fn cardinality_and_files() {
        let dir = tempfile::tempdir().unwrap();
        let corpus = generate_corpus(&small(1), dir.path()).unwrap();
        assert_eq!(corpus.ledger.len(), 36);
        assert_eq!(corpus.archives.len(), 4);
        let rows: Vec<_> =
            read_cdx(BufReader::new(File::open(&corpus.cdx).unwrap())).collect::<Result<_, _>>().unwrap();
        assert_eq!(rows.len(), 36);
        assert_eq!(read_ledger(&corpus.ledger_path).unwrap(), corpus.ledger);
    }

    #[test]
    fn same_seed_same_bytes() {
        let (a, b, c) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
        let ca = generate_corpus(&small(7), a.path()).unwrap();
        let cb = generate_corpus(&small(7), b.path()).unwrap();
        let cc = generate_corpus(&small(8), c.path()).unwrap();
        for (pa, pb) in ca.archives.iter().zip(&cb.archives) {
            assert_eq!(fs::read(pa).unwrap(), fs::read(pb).unwrap());
        }
        assert_eq!(fs::read(&ca.cdx).unwrap(), fs::read(&cb.cdx).unwrap());
        assert_ne!(fs::read(&ca.cdx).unwrap(), fs::read(&cc.cdx).unwrap());
    }

    #[test]
    fn ledger_agrees_with_scan() {
        for format in [ArchiveFormat::Warc, ArchiveFormat::Arc] {
            let dir = tempfile::tempdir().unwrap();
            let corpus = generate_corpus(&CorpusSpec { format, ..small(3) }, dir.path()).unwrap();
            let mut from_ledger: Vec<_> = corpus
                .ledger
                .iter()
                .map(|r| (r.url.clone(), r.timestamp.clone(), Some(r.status), r.mime.clone(), r.digest.clone()))
                .collect();
            let mut from_scan: Vec<_> = cdx_rows(&corpus.archives)
                .unwrap()
                .into_iter()
                .map(|r| (r.original_url, r.timestamp, r.status, r.mime, r.digest))
                .collect();
            from_ledger.sort();
            from_scan.sort();
            assert_eq!(from_ledger, from_scan);
        }
    }

    #[test]
    fn cdx_is_sorted() {
        let dir = tempfile::tempdir().unwrap();
        let corpus = generate_corpus(&small(5), dir.path()).unwrap();
        let text = fs::read_to_string(&corpus.cdx).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some(HEADER_LINE));
        let keys: Vec<(String, String)> = lines
            .map(|l| {
                let f: Vec<&str> = l.split(' ').collect();
                (f[0].to_string(), f[1].to_string())
            })
            .collect();
        assert!(keys.windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn needle_appears_exactly_where_recorded() {
        let dir = tempfile::tempdir().unwrap();
        let corpus = generate_corpus(&small(9), dir.path()).unwrap();
        let with = corpus.ledger.iter().filter(|r| r.terms.iter().any(|t| t == "internet")).count();
        assert!(with > 0 && with < corpus.ledger.len());
        assert!(corpus.ledger.iter().all(|r| r.status == 200 || !r.terms.contains(&"internet".to_string())));
    }

    #[test]
    fn invalid_specs_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        for spec in [
            CorpusSpec { domains: 0, ..CorpusSpec::default() },
            CorpusSpec { chunked_fraction: 1.5, ..CorpusSpec::default() },
            CorpusSpec { needle: "work".into(), ..CorpusSpec::default() },
            CorpusSpec { period: ("20121009000000".into(), "20111203000000".into()), ..CorpusSpec::default() },
            CorpusSpec { body_size: (10, 5), ..CorpusSpec::default() },
        ] {
            assert!(matches!(generate_corpus(&spec, dir.path()), Err(CorpusError::Spec(_))), "{spec:?}");
        }
    }
}
