//! The 11-field CDX index format.
//!
//! A CDX file is plain text: an optional header line followed by one line per
//! capture with eleven space-separated fields:
//!
//! ```text
//! surt timestamp original-url mime status digest redirect meta length offset filename
//! ```
//!
//! The last three fields locate the capture's gzip member inside an archive
//! file, which is what makes selective access possible.

use std::fmt;
use std::io::BufRead;

use chrono::NaiveDateTime;
use thiserror::Error;

/// Canonical letter codes of the 11-field header (` CDX N b a m s k r M S V g`).
pub const HEADER_LINE: &str = " CDX N b a m s k r M S V g";

const HEADER_CODES: [&str; 11] = ["N", "b", "a", "m", "s", "k", "r", "M", "S", "V", "g"];
const HEADER_NAMES: [&str; 11] = [
    "urlkey",
    "timestamp",
    "original",
    "mimetype",
    "statuscode",
    "digest",
    "redirect",
    "metatags",
    "length",
    "offset",
    "filename",
];

const TIMESTAMP_FORMAT: &str = "%Y%m%d%H%M%S";

#[derive(Debug, Error, PartialEq, Eq)]
pub enum CdxError {
    #[error("9-field CDX lines are not supported (no compressed length); regenerate the index in 11-field form")]
    NineFieldFormat,
    #[error("expected 11 fields, found {0}")]
    FieldCount(usize),
    #[error("invalid {field} value {value:?}")]
    Field { field: &'static str, value: String },
    #[error("invalid timestamp {0:?}: expected 14 digits forming a valid UTC datetime")]
    Timestamp(String),
    #[error("cannot canonicalize url {0:?}")]
    Url(String),
    #[error("line {line}: {source}")]
    Line {
        line: usize,
        #[source]
        source: Box<CdxError>,
    },
    #[error("I/O error reading CDX: {0}")]
    Io(String),
}

/// One capture's metadata row.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct CdxRecord {
    pub surt_url: String,
    /// `YYYYMMDDHHMMSS`, UTC.
    pub timestamp: String,
    pub original_url: String,
    pub mime: String,
    pub status: Option<u16>,
    pub digest: String,
    pub redirect_url: Option<String>,
    pub meta_tags: Option<String>,
    pub compressed_length: u64,
    pub offset: u64,
    pub filename: String,
}

impl CdxRecord {
    /// Host reconstructed from the SURT key (no port), e.g. `example.com`.
    pub fn domain(&self) -> String {
        let host = self.surt_url.split(')').next().unwrap_or_default();
        let host = host.split(':').next().unwrap_or_default();
        if is_ip_literal(host) {
            return host.to_string();
        }
        host.split(',').rev().collect::<Vec<_>>().join(".")
    }
}

impl fmt::Display for CdxRecord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&write_cdx_line(self))
    }
}

fn dash(value: &Option<String>) -> &str {
    value.as_deref().unwrap_or("-")
}

fn undash(value: &str) -> Option<String> {
    (value != "-").then(|| value.to_string())
}

fn parse_u64(field: &'static str, value: &str) -> Result<u64, CdxError> {
    if value.is_empty() || !value.bytes().all(|b| b.is_ascii_digit()) {
        return Err(CdxError::Field { field, value: value.to_string() });
    }
    value.parse().map_err(|_| CdxError::Field { field, value: value.to_string() })
}

/// Parses one data line. Header lines must be filtered out by the caller
/// (see [`is_header_line`]).
pub fn parse_cdx_line(line: &str) -> Result<CdxRecord, CdxError> {
    let line = line.strip_suffix('\n').unwrap_or(line);
    let line = line.strip_suffix('\r').unwrap_or(line);
    let fields: Vec<&str> = line.split(' ').collect();
    match fields.len() {
        11 => {}
        9 => return Err(CdxError::NineFieldFormat),
        n => return Err(CdxError::FieldCount(n)),
    }

    validate_timestamp(fields[1])?;
    let status = match fields[4] {
        "-" => None,
        s => Some(
            parse_u64("status", s)
                .ok()
                .and_then(|v| u16::try_from(v).ok())
                .ok_or_else(|| CdxError::Field { field: "status", value: s.to_string() })?,
        ),
    };
    let compressed_length = parse_u64("compressed_length", fields[8])?;
    if compressed_length == 0 {
        return Err(CdxError::Field { field: "compressed_length", value: fields[8].to_string() });
    }
    let offset = parse_u64("offset", fields[9])?;

    Ok(CdxRecord {
        surt_url: fields[0].to_string(),
        timestamp: fields[1].to_string(),
        original_url: fields[2].to_string(),
        mime: fields[3].to_string(),
        status,
        digest: fields[5].to_string(),
        redirect_url: undash(fields[6]),
        meta_tags: undash(fields[7]),
        compressed_length,
        offset,
        filename: fields[10].to_string(),
    })
}

pub fn write_cdx_line(record: &CdxRecord) -> String {
    let status = record.status.map(|s| s.to_string()).unwrap_or_else(|| "-".to_string());
    format!(
        "{} {} {} {} {} {} {} {} {} {} {}",
        record.surt_url,
        record.timestamp,
        record.original_url,
        record.mime,
        status,
        record.digest,
        dash(&record.redirect_url),
        dash(&record.meta_tags),
        record.compressed_length,
        record.offset,
        record.filename,
    )
}

/// Sorts rows by SURT key, then timestamp, then the remaining line text.
pub fn sort_cdx(rows: &mut Vec<CdxRecord>) {
    let mut keyed: Vec<(String, CdxRecord)> = rows.drain(..).map(|r| (write_cdx_line(&r), r)).collect();
    keyed.sort_by(|(la, a), (lb, b)| {
        (a.surt_url.as_str(), a.timestamp.as_str(), la).cmp(&(b.surt_url.as_str(), b.timestamp.as_str(), lb))
    });
    rows.extend(keyed.into_iter().map(|(_, r)| r));
}

/// True for a `CDX ...` header or a line spelling out the canonical field names.
pub fn is_header_line(line: &str) -> bool {
    let tokens: Vec<&str> = line.split_whitespace().collect();
    match tokens.first() {
        Some(&"CDX") => true,
        Some(_) => {
            tokens.len() == 11
                && (tokens.iter().zip(HEADER_NAMES).all(|(t, n)| t.eq_ignore_ascii_case(n))
                    || tokens.iter().zip(HEADER_CODES).all(|(t, c)| *t == c))
        }
        None => false,
    }
}

/// Reads every data line of a CDX stream. A header is only recognized on the
/// first line; blank lines are skipped.
pub fn read_cdx<R: BufRead>(reader: R) -> impl Iterator<Item = Result<CdxRecord, CdxError>> {
    reader.lines().enumerate().filter_map(|(idx, line)| match line {
        Err(e) => Some(Err(CdxError::Io(e.to_string()))),
        Ok(line) if line.trim().is_empty() => None,
        Ok(line) if idx == 0 && is_header_line(&line) => None,
        Ok(line) => Some(parse_cdx_line(&line).map_err(|e| CdxError::Line { line: idx + 1, source: Box::new(e) })),
    })
}

pub fn validate_timestamp(ts: &str) -> Result<NaiveDateTime, CdxError> {
    if ts.len() != 14 || !ts.bytes().all(|b| b.is_ascii_digit()) {
        return Err(CdxError::Timestamp(ts.to_string()));
    }
    NaiveDateTime::parse_from_str(ts, TIMESTAMP_FORMAT).map_err(|_| CdxError::Timestamp(ts.to_string()))
}

/// `20160117113253` -> `2016-01-17T11:32:53.000+00:00`.
pub fn timestamp_to_iso(ts: &str) -> Result<String, CdxError> {
    let dt = validate_timestamp(ts)?;
    Ok(dt.format("%Y-%m-%dT%H:%M:%S%.3f+00:00").to_string())
}

/// Inverse direction for WARC-Date values such as `2016-01-17T11:32:53Z`.
/// Fractional seconds are truncated; offsets are applied to yield UTC.
pub fn iso_to_timestamp(iso: &str) -> Result<String, CdxError> {
    let parsed = chrono::DateTime::parse_from_rfc3339(iso)
        .map(|dt| dt.naive_utc())
        .or_else(|_| NaiveDateTime::parse_from_str(iso.trim_end_matches('Z'), "%Y-%m-%dT%H:%M:%S%.f"))
        .map_err(|_| CdxError::Timestamp(iso.to_string()))?;
    Ok(parsed.format(TIMESTAMP_FORMAT).to_string())
}

fn is_ip_literal(host: &str) -> bool {
    host.starts_with('[') || host.parse::<std::net::Ipv4Addr>().is_ok()
}

/// Sort-friendly URI reordering: `http://www.Example.com:8080/a?b` becomes
/// `com,example,www:8080)/a?b`.
///
/// The scheme, userinfo, fragment, and default port are dropped. The host is
/// lowercased and reversed (IP literals are kept as-is). Path and query are
/// kept verbatim.
pub fn surt_from_url(url: &str) -> Result<String, CdxError> {
    let bad = || CdxError::Url(url.to_string());
    let (scheme, rest) = url.split_once("://").ok_or_else(bad)?;
    let mut chars = scheme.chars();
    let valid_scheme = chars.next().is_some_and(|c| c.is_ascii_alphabetic())
        && chars.all(|c| c.is_ascii_alphanumeric() || matches!(c, '+' | '-' | '.'));
    if !valid_scheme {
        return Err(bad());
    }
    let scheme = scheme.to_ascii_lowercase();

    let rest = rest.split('#').next().unwrap_or_default();
    let authority_end = rest.find(['/', '?']).unwrap_or(rest.len());
    let (authority, path) = rest.split_at(authority_end);
    let host_port = authority.rsplit_once('@').map_or(authority, |(_, hp)| hp);

    let (host, port) = if let Some(stripped) = host_port.strip_prefix('[') {
        let close = stripped.find(']').ok_or_else(bad)?;
        let host = &host_port[..close + 2];
        let after = &host_port[close + 2..];
        (host, after.strip_prefix(':'))
    } else {
        match host_port.rsplit_once(':') {
            Some((h, p)) => (h, Some(p)),
            None => (host_port, None),
        }
    };
    if host.is_empty() || host.contains(char::is_whitespace) {
        return Err(bad());
    }
    let port = match port {
        None | Some("") => None,
        Some(p) if p.bytes().all(|b| b.is_ascii_digit()) => {
            let default = matches!((scheme.as_str(), p), ("http", "80") | ("https", "443"));
            (!default).then_some(p)
        }
        Some(_) => return Err(bad()),
    };

    let host = host.to_ascii_lowercase();
    let mut out = if is_ip_literal(&host) {
        host
    } else {
        host.trim_end_matches('.').split('.').rev().collect::<Vec<_>>().join(",")
    };
    if let Some(p) = port {
        out.push(':');
        out.push_str(p);
    }
    out.push(')');
    if !path.starts_with('/') {
        out.push('/');
    }
    out.push_str(path);
    Ok(out)
}
