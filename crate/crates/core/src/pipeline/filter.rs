//! Filter expressions: `<lhs> <op> <rhs>` clauses joined by `&&`.
//!
//! ```text
//! status == 200 && mime == "text/html" && timestamp prefix "201112"
//! path(payload.string) contains "internet"
//! ```
//!
//! `lhs` is one of `url surt domain mime status timestamp digest` or
//! `path(<dot.path>)`; `op` is one of `== != < <= > >= contains prefix`;
//! `rhs` is an integer or a double-quoted string.

use std::cmp::Ordering;
use std::fmt;

use thiserror::Error;

use crate::cdx::CdxRecord;
use crate::model::{metadata_value, split_path, EnrichedRecord, Value, RECORD_ROOT};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum FilterError {
    #[error("empty filter expression")]
    Empty,
    #[error("unknown field {0:?}")]
    UnknownField(String),
    #[error("unknown operator {0:?}")]
    UnknownOp(String),
    #[error("invalid literal {0:?}: use an integer or a double-quoted string")]
    Literal(String),
    #[error("unterminated string literal")]
    Unterminated,
    #[error("invalid path in {0:?}")]
    Path(String),
    #[error("expected `&&` between clauses, found {0:?}")]
    Conjunction(String),
    #[error("incomplete clause after {0:?}")]
    Incomplete(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Field {
    Url,
    Surt,
    Domain,
    Mime,
    Status,
    Timestamp,
    Digest,
    Path(String),
}

impl Field {
    fn parse(token: &str) -> Result<Field, FilterError> {
        Ok(match token {
            "url" => Field::Url,
            "surt" => Field::Surt,
            "domain" => Field::Domain,
            "mime" => Field::Mime,
            "status" => Field::Status,
            "timestamp" => Field::Timestamp,
            "digest" => Field::Digest,
            _ => {
                let inner = token
                    .strip_prefix("path(")
                    .and_then(|t| t.strip_suffix(')'))
                    .ok_or_else(|| FilterError::UnknownField(token.to_string()))?;
                split_path(inner).map_err(|_| FilterError::Path(token.to_string()))?;
                Field::Path(inner.to_string())
            }
        })
    }

    /// Readable from CDX metadata alone.
    pub fn is_metadata(&self) -> bool {
        match self {
            Field::Path(p) => p.split('.').next() == Some(RECORD_ROOT),
            _ => true,
        }
    }

    fn metadata(&self, meta: &CdxRecord) -> Option<Value> {
        match self {
            Field::Url => Some(Value::from(meta.original_url.as_str())),
            Field::Surt => Some(Value::from(meta.surt_url.as_str())),
            Field::Domain => Some(Value::from(meta.domain())),
            Field::Mime => Some(Value::from(meta.mime.as_str())),
            Field::Status => meta.status.map(|s| Value::Int(s as i64)),
            Field::Timestamp => Some(Value::from(meta.timestamp.as_str())),
            Field::Digest => Some(Value::from(meta.digest.as_str())),
            Field::Path(p) => {
                let mut segs = p.split('.');
                match (segs.next(), segs.next(), segs.next()) {
                    (Some(RECORD_ROOT), Some(field), None) => metadata_value(meta, field),
                    _ => None,
                }
            }
        }
    }
}

impl fmt::Display for Field {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Field::Url => f.write_str("url"),
            Field::Surt => f.write_str("surt"),
            Field::Domain => f.write_str("domain"),
            Field::Mime => f.write_str("mime"),
            Field::Status => f.write_str("status"),
            Field::Timestamp => f.write_str("timestamp"),
            Field::Digest => f.write_str("digest"),
            Field::Path(p) => write!(f, "path({p})"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Op {
    Eq,
    Ne,
    Lt,
    Le,
    Gt,
    Ge,
    Contains,
    Prefix,
}

impl Op {
    pub const ALL: [Op; 8] = [Op::Eq, Op::Ne, Op::Lt, Op::Le, Op::Gt, Op::Ge, Op::Contains, Op::Prefix];

    pub fn parse(token: &str) -> Result<Op, FilterError> {
        Ok(match token {
            "==" => Op::Eq,
            "!=" => Op::Ne,
            "<" => Op::Lt,
            "<=" => Op::Le,
            ">" => Op::Gt,
            ">=" => Op::Ge,
            "contains" => Op::Contains,
            "prefix" => Op::Prefix,
            _ => return Err(FilterError::UnknownOp(token.to_string())),
        })
    }

    fn holds(self, ord: Ordering) -> bool {
        match self {
            Op::Eq => ord == Ordering::Equal,
            Op::Ne => ord != Ordering::Equal,
            Op::Lt => ord == Ordering::Less,
            Op::Le => ord != Ordering::Greater,
            Op::Gt => ord == Ordering::Greater,
            Op::Ge => ord != Ordering::Less,
            Op::Contains | Op::Prefix => unreachable!("not an ordering operator"),
        }
    }
}

impl fmt::Display for Op {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Op::Eq => "==",
            Op::Ne => "!=",
            Op::Lt => "<",
            Op::Le => "<=",
            Op::Gt => ">",
            Op::Ge => ">=",
            Op::Contains => "contains",
            Op::Prefix => "prefix",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Literal {
    Int(i64),
    Str(String),
}

impl Literal {
    pub fn parse(token: &str) -> Result<Literal, FilterError> {
        if let Some(inner) = token.strip_prefix('"') {
            let inner = inner.strip_suffix('"').ok_or(FilterError::Unterminated)?;
            let mut out = String::with_capacity(inner.len());
            let mut chars = inner.chars();
            while let Some(c) = chars.next() {
                if c == '\\' {
                    out.push(chars.next().ok_or(FilterError::Unterminated)?);
                } else {
                    out.push(c);
                }
            }
            Ok(Literal::Str(out))
        } else {
            token.parse().map(Literal::Int).map_err(|_| FilterError::Literal(token.to_string()))
        }
    }

    fn text(&self) -> std::borrow::Cow<'_, str> {
        match self {
            Literal::Int(i) => i.to_string().into(),
            Literal::Str(s) => s.as_str().into(),
        }
    }
}

impl fmt::Display for Literal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Literal::Int(i) => write!(f, "{i}"),
            Literal::Str(s) => {
                f.write_str("\"")?;
                for c in s.chars() {
                    if c == '"' || c == '\\' {
                        f.write_str("\\")?;
                    }
                    write!(f, "{c}")?;
                }
                f.write_str("\"")
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Clause {
    pub field: Field,
    pub op: Op,
    pub literal: Literal,
}

impl fmt::Display for Clause {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {} {}", self.field, self.op, self.literal)
    }
}

fn text_matches(text: &str, op: Op, lit: &str) -> bool {
    match op {
        Op::Contains => text.contains(lit),
        Op::Prefix => text.starts_with(lit),
        _ => op.holds(text.cmp(lit)),
    }
}

fn bytes_match(bytes: &[u8], op: Op, lit: &[u8]) -> bool {
    match op {
        Op::Contains => lit.is_empty() || bytes.windows(lit.len()).any(|w| w == lit),
        Op::Prefix => bytes.starts_with(lit),
        _ => op.holds(bytes.cmp(lit)),
    }
}

/// Compares a (possibly absent) value with a literal. Absent values only
/// satisfy `!=`; maps and lists likewise.
pub fn compare(value: Option<&Value>, op: Op, lit: &Literal) -> bool {
    let Some(value) = value else {
        return op == Op::Ne;
    };
    match (value, lit, op) {
        (Value::Int(v), Literal::Int(n), Op::Eq | Op::Ne | Op::Lt | Op::Le | Op::Gt | Op::Ge) => op.holds(v.cmp(n)),
        (Value::Float(v), Literal::Int(n), Op::Eq | Op::Ne | Op::Lt | Op::Le | Op::Gt | Op::Ge) => {
            v.partial_cmp(&(*n as f64)).is_some_and(|o| op.holds(o))
        }
        (Value::Str(s), _, _) => text_matches(s, op, &lit.text()),
        (Value::Bytes(b), _, _) => bytes_match(b, op, lit.text().as_bytes()),
        (Value::Int(_) | Value::Float(_) | Value::Bool(_), _, _) => text_matches(&value.to_string(), op, &lit.text()),
        (Value::Map(_) | Value::List(_), _, _) => op == Op::Ne,
    }
}

/// A conjunction of clauses.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct FilterExpr {
    pub clauses: Vec<Clause>,
}

impl FilterExpr {
    pub fn parse(input: &str) -> Result<FilterExpr, FilterError> {
        let tokens = tokenize(input)?;
        if tokens.is_empty() {
            return Err(FilterError::Empty);
        }
        let mut clauses = Vec::new();
        let mut iter = tokens.iter();
        loop {
            let lhs = iter.next().ok_or_else(|| FilterError::Incomplete("&&".to_string()))?;
            let op = iter.next().ok_or_else(|| FilterError::Incomplete(lhs.clone()))?;
            let rhs = iter.next().ok_or_else(|| FilterError::Incomplete(op.clone()))?;
            clauses.push(Clause { field: Field::parse(lhs)?, op: Op::parse(op)?, literal: Literal::parse(rhs)? });
            match iter.next() {
                None => break,
                Some(t) if t == "&&" => continue,
                Some(t) => return Err(FilterError::Conjunction(t.clone())),
            }
        }
        Ok(FilterExpr { clauses })
    }

    pub fn is_metadata_only(&self) -> bool {
        self.clauses.iter().all(|c| c.field.is_metadata())
    }

    /// Paths referenced through `path(...)` that are not metadata.
    pub fn derived_paths(&self) -> impl Iterator<Item = &str> {
        self.clauses.iter().filter_map(|c| match &c.field {
            Field::Path(p) if !c.field.is_metadata() => Some(p.as_str()),
            _ => None,
        })
    }

    pub fn matches_meta(&self, meta: &CdxRecord) -> bool {
        self.clauses.iter().all(|c| compare(c.field.metadata(meta).as_ref(), c.op, &c.literal))
    }

    pub fn matches(&self, record: &EnrichedRecord) -> bool {
        self.clauses.iter().all(|c| {
            let value = match &c.field {
                Field::Path(p) => record.get_path(p),
                f => f.metadata(&record.meta),
            };
            compare(value.as_ref(), c.op, &c.literal)
        })
    }
}

impl fmt::Display for FilterExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, c) in self.clauses.iter().enumerate() {
            if i > 0 {
                f.write_str(" && ")?;
            }
            write!(f, "{c}")?;
        }
        Ok(())
    }
}

impl std::str::FromStr for FilterExpr {
    type Err = FilterError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        FilterExpr::parse(s)
    }
}

fn tokenize(input: &str) -> Result<Vec<String>, FilterError> {
    let mut tokens = Vec::new();
    let mut chars = input.chars().peekable();
    while let Some(&c) = chars.peek() {
        if c.is_whitespace() {
            chars.next();
        } else if c == '"' {
            let mut tok = String::from('"');
            chars.next();
            let mut closed = false;
            while let Some(c) = chars.next() {
                tok.push(c);
                if c == '\\' {
                    tok.push(chars.next().ok_or(FilterError::Unterminated)?);
                } else if c == '"' {
                    closed = true;
                    break;
                }
            }
            if !closed {
                return Err(FilterError::Unterminated);
            }
            tokens.push(tok);
        } else {
            let mut tok = String::new();
            while let Some(&c) = chars.peek() {
                if c.is_whitespace() || c == '"' {
                    break;
                }
                tok.push(c);
                chars.next();
            }
            tokens.push(tok);
        }
    }
    Ok(tokens)
}
