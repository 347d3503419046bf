//! WARC and ARC record IO over record-per-gzip-member archives.
//!
//! Every record is written as its own gzip member, so a `(offset, length)`
//! pair taken from a CDX row can be decompressed without touching the rest of
//! the file. [`read_record_at`] reads exactly that byte range;
//! [`RecordScanner`] walks the members in order and reports their locators.
//!
//! ARC files are read-only. Their records are normalized into the
//! [`WarcRecord`] shape with synthesized `WARC-*` headers.

use std::fmt;
use std::io::{self, BufRead, BufReader, Read, Seek, SeekFrom, Write};

use data_encoding::BASE32_NOPAD;
use flate2::bufread::GzDecoder;
use flate2::write::GzEncoder;
use flate2::Compression;
use sha1::{Digest, Sha1};
use thiserror::Error;

use crate::cdx;

const GZIP_MAGIC: [u8; 2] = [0x1f, 0x8b];

#[derive(Debug, Error)]
pub enum WarcError {
    #[error("I/O error: {0}")]
    Io(#[from] io::Error),
    #[error("bad locator at offset {offset}: {reason}")]
    Locator { offset: u64, reason: String },
    #[error("corrupt gzip member at offset {offset}: {reason}")]
    Corrupt { offset: u64, reason: String },
    #[error("malformed record: {0}")]
    Format(String),
    #[error(
        "gzip member at offset {offset} holds more than one record; the archive is not \
         record-per-member compressed (re-pack it with one gzip member per record)"
    )]
    NotMemberAligned { offset: u64 },
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum HttpError {
    #[error("missing or invalid HTTP status line")]
    StatusLine,
    #[error("HTTP header block is not terminated by an empty line")]
    Unterminated,
    #[error("malformed chunked transfer encoding: {0}")]
    Chunked(String),
}

/// Ordered header list with case-insensitive lookup. Duplicate names are kept.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Headers(Vec<(String, String)>);

impl Headers {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, name: impl Into<String>, value: impl Into<String>) {
        self.0.push((name.into(), value.into()));
    }

    /// First value for `name`, compared ASCII case-insensitively.
    pub fn get(&self, name: &str) -> Option<&str> {
        self.0.iter().find(|(n, _)| n.eq_ignore_ascii_case(name)).map(|(_, v)| v.as_str())
    }

    pub fn set(&mut self, name: &str, value: impl Into<String>) {
        let value = value.into();
        match self.0.iter_mut().find(|(n, _)| n.eq_ignore_ascii_case(name)) {
            Some(slot) => slot.1 = value,
            None => self.0.push((name.to_string(), value)),
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &str)> {
        self.0.iter().map(|(n, v)| (n.as_str(), v.as_str()))
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Collapses duplicate names (exact spelling) into one entry joined with `", "`,
    /// keeping first-occurrence order.
    pub fn joined(&self) -> Vec<(String, String)> {
        let mut out: Vec<(String, String)> = Vec::with_capacity(self.0.len());
        for (name, value) in &self.0 {
            match out.iter_mut().find(|(n, _)| n == name) {
                Some(slot) => {
                    slot.1.push_str(", ");
                    slot.1.push_str(value);
                }
                None => out.push((name.clone(), value.clone())),
            }
        }
        out
    }
}

impl FromIterator<(String, String)> for Headers {
    fn from_iter<T: IntoIterator<Item = (String, String)>>(iter: T) -> Self {
        Headers(iter.into_iter().collect())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WarcRecord {
    /// `WARC/1.0` or `WARC/1.1`.
    pub version: String,
    pub headers: Headers,
    pub payload: Vec<u8>,
}

impl WarcRecord {
    /// Builds a record and sets `Content-Length` to match the payload.
    pub fn new(headers: Headers, payload: Vec<u8>) -> Self {
        let mut headers = headers;
        headers.set("Content-Length", payload.len().to_string());
        WarcRecord { version: "WARC/1.0".to_string(), headers, payload }
    }

    pub fn record_type(&self) -> Option<&str> {
        self.headers.get("WARC-Type")
    }

    pub fn target_uri(&self) -> Option<&str> {
        self.headers.get("WARC-Target-URI")
    }

    pub fn date(&self) -> Option<&str> {
        self.headers.get("WARC-Date")
    }

    /// Version line, headers, blank line, payload, and the closing CRLF CRLF.
    pub fn serialize(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.payload.len() + 512);
        out.extend_from_slice(self.version.as_bytes());
        out.extend_from_slice(b"\r\n");
        for (name, value) in self.headers.iter() {
            out.extend_from_slice(name.as_bytes());
            out.extend_from_slice(b": ");
            out.extend_from_slice(value.as_bytes());
            out.extend_from_slice(b"\r\n");
        }
        out.extend_from_slice(b"\r\n");
        out.extend_from_slice(&self.payload);
        out.extend_from_slice(b"\r\n\r\n");
        out
    }
}

/// Where a record's gzip member lives.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct RecordLocator {
    pub filename: String,
    pub offset: u64,
    pub compressed_length: u64,
}

impl fmt::Display for RecordLocator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}@{}+{}", self.filename, self.offset, self.compressed_length)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HttpResponse {
    pub version: String,
    pub status: u16,
    pub reason: String,
    pub headers: Headers,
    pub body: Vec<u8>,
}

impl HttpResponse {
    /// Lowercased media type without parameters, e.g. `text/html`.
    pub fn mime(&self) -> Option<String> {
        self.headers.get("Content-Type").map(media_type)
    }

    pub fn charset(&self) -> Option<String> {
        self.headers.get("Content-Type").and_then(charset_param)
    }
}

pub fn media_type(content_type: &str) -> String {
    content_type.split(';').next().unwrap_or_default().trim().to_ascii_lowercase()
}

pub fn charset_param(content_type: &str) -> Option<String> {
    content_type.split(';').skip(1).find_map(|param| {
        let (k, v) = param.split_once('=')?;
        k.trim().eq_ignore_ascii_case("charset").then(|| v.trim().trim_matches('"').to_ascii_lowercase())
    })
}

/// Base32 (RFC 4648, unpadded) SHA-1 of `bytes`, the CDX digest encoding.
pub fn payload_digest(bytes: &[u8]) -> String {
    BASE32_NOPAD.encode(&Sha1::digest(bytes))
}

/// Counts every byte pulled from the wrapped reader.
#[derive(Debug)]
pub struct CountingReader<R> {
    inner: R,
    bytes_read: u64,
}

impl<R> CountingReader<R> {
    pub fn new(inner: R) -> Self {
        CountingReader { inner, bytes_read: 0 }
    }

    pub fn bytes_read(&self) -> u64 {
        self.bytes_read
    }

    pub fn into_inner(self) -> R {
        self.inner
    }
}

impl<R: Read> Read for CountingReader<R> {
    fn read(&mut self, buf: &mut [u8]) -> io::Result<usize> {
        let n = self.inner.read(buf)?;
        self.bytes_read += n as u64;
        Ok(n)
    }
}

impl<R: Seek> Seek for CountingReader<R> {
    fn seek(&mut self, pos: SeekFrom) -> io::Result<u64> {
        self.inner.seek(pos)
    }
}

fn gzip_member(bytes: &[u8]) -> io::Result<Vec<u8>> {
    let mut encoder = GzEncoder::new(Vec::with_capacity(bytes.len() / 3 + 64), Compression::default());
    encoder.write_all(bytes)?;
    encoder.finish()
}

/// Compresses `record` as one standalone gzip member at the sink's current
/// position.
pub fn write_warc_record_gz<W: Write + Seek>(
    sink: &mut W,
    filename: &str,
    record: &WarcRecord,
) -> Result<RecordLocator, WarcError> {
    let offset = sink.seek(SeekFrom::End(0))?;
    let member = gzip_member(&record.serialize())?;
    sink.write_all(&member)?;
    Ok(RecordLocator { filename: filename.to_string(), offset, compressed_length: member.len() as u64 })
}

/// Appends gzip members to a stream, tracking offsets without seeking.
pub struct MemberWriter<W> {
    inner: W,
    filename: String,
    position: u64,
}

impl<W: Write> MemberWriter<W> {
    pub fn new(inner: W, filename: impl Into<String>) -> Self {
        MemberWriter { inner, filename: filename.into(), position: 0 }
    }

    pub fn write_record(&mut self, record: &WarcRecord) -> Result<RecordLocator, WarcError> {
        self.write_member(&record.serialize())
    }

    /// Compresses arbitrary bytes (e.g. an ARC record) as one member.
    pub fn write_member(&mut self, bytes: &[u8]) -> Result<RecordLocator, WarcError> {
        let member = gzip_member(bytes)?;
        self.inner.write_all(&member)?;
        let locator = RecordLocator {
            filename: self.filename.clone(),
            offset: self.position,
            compressed_length: member.len() as u64,
        };
        self.position += member.len() as u64;
        Ok(locator)
    }

    pub fn position(&self) -> u64 {
        self.position
    }

    pub fn finish(mut self) -> io::Result<W> {
        self.inner.flush()?;
        Ok(self.inner)
    }
}

/// Reads and parses the single record stored at `locator`. Exactly
/// `compressed_length` bytes are read from `file`.
pub fn read_record_at<R: Read + Seek>(file: &mut R, locator: &RecordLocator) -> Result<WarcRecord, WarcError> {
    let offset = locator.offset;
    file.seek(SeekFrom::Start(offset))?;
    let mut member = vec![0u8; locator.compressed_length as usize];
    let mut filled = 0;
    while filled < member.len() {
        match file.read(&mut member[filled..])? {
            0 => break,
            n => filled += n,
        }
    }
    if filled < 2 || member[..2] != GZIP_MAGIC {
        return Err(WarcError::Locator { offset, reason: "no gzip member starts here".to_string() });
    }
    if filled < member.len() {
        return Err(WarcError::Corrupt {
            offset,
            reason: format!("file ends after {filled} of {} bytes", member.len()),
        });
    }

    let mut input: &[u8] = &member;
    let content = decode_member(&mut input, offset)?;
    if !input.is_empty() {
        return Err(WarcError::Locator {
            offset,
            reason: format!("{} bytes remain after the gzip member", input.len()),
        });
    }
    parse_member_content(&content, offset)
}

fn decode_member<R: BufRead>(reader: &mut R, offset: u64) -> Result<Vec<u8>, WarcError> {
    let mut content = Vec::new();
    GzDecoder::new(reader)
        .read_to_end(&mut content)
        .map_err(|e| WarcError::Corrupt { offset, reason: e.to_string() })?;
    Ok(content)
}

fn parse_member_content(content: &[u8], offset: u64) -> Result<WarcRecord, WarcError> {
    let (record, consumed) = parse_record_bytes(content)?;
    let rest = &content[consumed..];
    if rest.iter().any(|b| !matches!(b, b'\r' | b'\n')) {
        return Err(WarcError::NotMemberAligned { offset });
    }
    Ok(record)
}

/// Sequentially decodes every gzip member of an archive file.
pub struct RecordScanner<R> {
    reader: BufReader<CountingReader<R>>,
    filename: String,
    failed: bool,
}

impl<R: Read> RecordScanner<R> {
    pub fn new(inner: R, filename: impl Into<String>) -> Self {
        RecordScanner {
            reader: BufReader::with_capacity(64 * 1024, CountingReader::new(inner)),
            filename: filename.into(),
            failed: false,
        }
    }

    /// Bytes pulled from the underlying source so far.
    pub fn bytes_read(&self) -> u64 {
        self.reader.get_ref().bytes_read()
    }

    fn consumed(&self) -> u64 {
        self.bytes_read() - self.reader.buffer().len() as u64
    }

    fn next_member(&mut self) -> Result<Option<(RecordLocator, WarcRecord)>, WarcError> {
        loop {
            if self.reader.fill_buf()?.is_empty() {
                return Ok(None);
            }
            let offset = self.consumed();
            if self.reader.buffer().len() >= 2 && self.reader.buffer()[..2] != GZIP_MAGIC {
                return Err(WarcError::Corrupt { offset, reason: "expected a gzip member".to_string() });
            }
            let content = decode_member(&mut self.reader, offset)?;
            let locator =
                RecordLocator { filename: self.filename.clone(), offset, compressed_length: self.consumed() - offset };
            if content.starts_with(b"filedesc://") {
                continue;
            }
            let record = parse_member_content(&content, offset)?;
            return Ok(Some((locator, record)));
        }
    }
}

impl<R: Read> Iterator for RecordScanner<R> {
    type Item = Result<(RecordLocator, WarcRecord), WarcError>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.failed {
            return None;
        }
        let item = self.next_member().transpose();
        if matches!(item, Some(Err(_))) {
            self.failed = true;
        }
        item
    }
}

/// Iterates every record of a record-per-member archive in file order.
pub fn scan_records<R: Read>(file: R, filename: &str) -> RecordScanner<R> {
    RecordScanner::new(file, filename)
}

fn find(haystack: &[u8], needle: &[u8]) -> Option<usize> {
    haystack.windows(needle.len()).position(|w| w == needle)
}

/// Splits off one line, accepting CRLF or LF endings.
fn take_line(data: &[u8]) -> Option<(&[u8], &[u8])> {
    let nl = data.iter().position(|&b| b == b'\n')?;
    let line = &data[..nl];
    let line = line.strip_suffix(b"\r").unwrap_or(line);
    Some((line, &data[nl + 1..]))
}

/// Parses one uncompressed WARC or ARC record from the start of `data` and
/// returns it with the number of bytes it spans (including trailing newlines).
pub fn parse_record_bytes(data: &[u8]) -> Result<(WarcRecord, usize), WarcError> {
    if data.starts_with(b"WARC/") {
        parse_warc_bytes(data)
    } else {
        parse_arc_bytes(data)
    }
}

fn parse_warc_bytes(data: &[u8]) -> Result<(WarcRecord, usize), WarcError> {
    let (version, mut rest) = take_line(data).ok_or_else(|| WarcError::Format("truncated version line".to_string()))?;
    let version = String::from_utf8_lossy(version).into_owned();
    if version != "WARC/1.0" && version != "WARC/1.1" {
        return Err(WarcError::Format(format!("unsupported version line {version:?}")));
    }

    let mut headers = Headers::new();
    loop {
        let (line, next) =
            take_line(rest).ok_or_else(|| WarcError::Format("header block is not terminated".to_string()))?;
        rest = next;
        if line.is_empty() {
            break;
        }
        let line = String::from_utf8_lossy(line);
        let (name, value) =
            line.split_once(':').ok_or_else(|| WarcError::Format(format!("header line without colon: {line:?}")))?;
        headers.push(name.trim(), value.trim());
    }

    let length: usize = headers
        .get("Content-Length")
        .ok_or_else(|| WarcError::Format("missing Content-Length".to_string()))?
        .parse()
        .map_err(|_| WarcError::Format("invalid Content-Length".to_string()))?;
    if rest.len() < length {
        return Err(WarcError::Format(format!("payload truncated: {} of {length} bytes", rest.len())));
    }
    let payload = rest[..length].to_vec();
    let mut consumed = data.len() - rest.len() + length;
    let trailer = &data[consumed..];
    consumed += trailer.iter().take(4).take_while(|&&b| b == b'\r' || b == b'\n').count();
    Ok((WarcRecord { version, headers, payload }, consumed))
}

/// Parses an ARC v1 block (`<url> <ip> <date> <mime> <length>` line plus body)
/// into the WARC record shape.
pub fn parse_arc_record(block: &[u8]) -> Result<WarcRecord, WarcError> {
    parse_arc_bytes(block).map(|(record, _)| record)
}

fn parse_arc_bytes(data: &[u8]) -> Result<(WarcRecord, usize), WarcError> {
    let (line, rest) = take_line(data).ok_or_else(|| WarcError::Format("missing ARC header line".to_string()))?;
    let line = String::from_utf8_lossy(line);
    let tokens: Vec<&str> = line.split(' ').collect();
    if tokens.len() != 5 {
        return Err(WarcError::Format(format!("ARC header line has {} fields, expected 5", tokens.len())));
    }
    let [url, ip, date, mime, length] = [tokens[0], tokens[1], tokens[2], tokens[3], tokens[4]];
    let length: usize = length.parse().map_err(|_| WarcError::Format(format!("invalid ARC length {length:?}")))?;
    let date_iso = cdx::validate_timestamp(date)
        .map_err(|e| WarcError::Format(e.to_string()))?
        .format("%Y-%m-%dT%H:%M:%SZ")
        .to_string();
    if rest.len() < length {
        return Err(WarcError::Format(format!("ARC body truncated: {} of {length} bytes", rest.len())));
    }

    let mut headers = Headers::new();
    headers.push("WARC-Type", "response");
    headers.push("WARC-Target-URI", url);
    headers.push("WARC-Date", date_iso);
    headers.push("WARC-IP-Address", ip);
    headers.push("Content-Type", mime);
    headers.push("Content-Length", length.to_string());
    let payload = rest[..length].to_vec();
    let mut consumed = data.len() - rest.len() + length;
    consumed += data[consumed..].iter().take(2).take_while(|&&b| b == b'\n').count();
    Ok((WarcRecord { version: "WARC/1.0".to_string(), headers, payload }, consumed))
}

/// Serializes one ARC v1 record.
pub fn arc_record_bytes(url: &str, ip: &str, timestamp: &str, mime: &str, body: &[u8]) -> Vec<u8> {
    let mut out = format!("{url} {ip} {timestamp} {mime} {}\n", body.len()).into_bytes();
    out.extend_from_slice(body);
    out.push(b'\n');
    out
}

/// The leading `filedesc://` record of an ARC v1 file.
pub fn arc_filedesc_bytes(filename: &str, timestamp: &str) -> Vec<u8> {
    let body = "1 0 cdxcorpus\nURL IP-address Archive-date Content-type Archive-length\n";
    arc_record_bytes(&format!("filedesc://{filename}"), "0.0.0.0", timestamp, "text/plain", body.as_bytes())
}

/// Splits an HTTP response message into status, headers, and body. Chunked
/// transfer encoding is removed; content encodings are left alone.
pub fn parse_http_response(payload: &[u8]) -> Result<HttpResponse, HttpError> {
    if !payload.starts_with(b"HTTP/") {
        return Err(HttpError::StatusLine);
    }
    let crlf = find(payload, b"\r\n\r\n").map(|i| (i, i + 4));
    let lf = find(payload, b"\n\n").map(|i| (i, i + 2));
    let (head_end, body_start) = match (crlf, lf) {
        (Some(a), Some(b)) => a.min(b),
        (a, b) => a.or(b).ok_or(HttpError::Unterminated)?,
    };
    // Latin-1: every byte maps to the code point of the same value.
    let head: String = payload[..head_end].iter().map(|&b| b as char).collect();
    let mut lines = head.split('\n').map(|l| l.strip_suffix('\r').unwrap_or(l));

    let status_line = lines.next().ok_or(HttpError::StatusLine)?;
    let mut parts = status_line.splitn(3, ' ');
    let version = parts.next().unwrap_or_default().to_string();
    let status: u16 = parts
        .next()
        .filter(|c| c.len() == 3)
        .and_then(|c| c.parse().ok())
        .filter(|c| (100..=599).contains(c))
        .ok_or(HttpError::StatusLine)?;
    let reason = parts.next().unwrap_or_default().to_string();

    let mut headers = Headers::new();
    for line in lines {
        if let Some((name, value)) = line.split_once(':') {
            headers.push(name.trim(), value.trim());
        }
    }

    let raw_body = &payload[body_start..];
    let chunked = headers.get("Transfer-Encoding").is_some_and(|te| te.to_ascii_lowercase().contains("chunked"));
    let body = if chunked { dechunk(raw_body)? } else { raw_body.to_vec() };
    Ok(HttpResponse { version, status, reason, headers, body })
}

/// Removes chunked transfer framing. A stream cut off before the final zero
/// chunk yields the chunks read so far.
pub fn dechunk(mut data: &[u8]) -> Result<Vec<u8>, HttpError> {
    let mut out = Vec::with_capacity(data.len());
    loop {
        let Some((line, rest)) = take_line(data) else {
            if data.is_empty() {
                return Ok(out);
            }
            return Err(HttpError::Chunked("truncated chunk size line".to_string()));
        };
        let size_text =
            std::str::from_utf8(line).map_err(|_| HttpError::Chunked("non-ASCII chunk size".to_string()))?;
        let size_text = size_text.split(';').next().unwrap_or_default().trim();
        let size = usize::from_str_radix(size_text, 16)
            .map_err(|_| HttpError::Chunked(format!("invalid chunk size {size_text:?}")))?;
        if size == 0 {
            return Ok(out);
        }
        if rest.len() < size {
            return Err(HttpError::Chunked(format!("chunk of {size} bytes truncated")));
        }
        out.extend_from_slice(&rest[..size]);
        data = &rest[size..];
        data = data.strip_prefix(b"\r\n").or_else(|| data.strip_prefix(b"\n")).unwrap_or(data);
    }
}

/// Chunked framing for generated responses; `sizes` cycles over chunk lengths.
pub fn chunk_body(body: &[u8], sizes: &[usize]) -> Vec<u8> {
    let mut out = Vec::with_capacity(body.len() + 64);
    let mut rest = body;
    let mut i = 0;
    while !rest.is_empty() {
        let n = sizes[i % sizes.len()].max(1).min(rest.len());
        out.extend_from_slice(format!("{n:x}\r\n").as_bytes());
        out.extend_from_slice(&rest[..n]);
        out.extend_from_slice(b"\r\n");
        rest = &rest[n..];
        i += 1;
    }
    out.extend_from_slice(b"0\r\n\r\n");
    out
}

fn cdx_safe(url: &str) -> String {
    url.replace(' ', "%20")
}

/// Derives the CDX row for a response record found at `locator`. Status and
/// MIME come from the embedded HTTP response and the digest is recomputed from
/// its body. Other record types yield `None`.
pub fn capture_metadata(record: &WarcRecord, locator: &RecordLocator) -> Result<Option<cdx::CdxRecord>, WarcError> {
    if !record.record_type().is_some_and(|t| t.eq_ignore_ascii_case("response")) {
        return Ok(None);
    }
    let at = |what: String| WarcError::Format(format!("record at {locator}: {what}"));
    let uri = record.target_uri().ok_or_else(|| at("missing WARC-Target-URI".to_string()))?;
    let uri = cdx_safe(uri.trim_start_matches('<').trim_end_matches('>'));
    let date = record.date().ok_or_else(|| at("missing WARC-Date".to_string()))?;
    let timestamp = cdx::iso_to_timestamp(date).map_err(|e| at(e.to_string()))?;
    let http = parse_http_response(&record.payload).map_err(|e| at(e.to_string()))?;
    let redirect_url = match http.status {
        300..=399 => http.headers.get("Location").map(cdx_safe),
        _ => None,
    };
    Ok(Some(cdx::CdxRecord {
        surt_url: cdx::surt_from_url(&uri).map_err(|e| at(e.to_string()))?,
        timestamp,
        original_url: uri,
        mime: http.mime().filter(|m| !m.is_empty()).unwrap_or_else(|| "unk".to_string()),
        status: Some(http.status),
        digest: payload_digest(&http.body),
        redirect_url,
        meta_tags: None,
        compressed_length: locator.compressed_length,
        offset: locator.offset,
        filename: locator.filename.clone(),
    }))
}
