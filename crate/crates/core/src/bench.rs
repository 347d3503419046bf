//! Selective versus scan benchmark scenarios over a generated corpus.
//!
//! Every scenario filters, enriches with string content, derives the string
//! length, and sums the lengths:
//!
//! 1. all captures of one URL;
//! 2. all `text/html` captures of one domain;
//! 3. the latest successful capture of every URL within one month.

use std::fmt::Write as _;
use std::io::{self, Write};
use std::time::Duration;

use thiserror::Error;

use crate::corpusgen::{Corpus, CorpusError};
use crate::enrich::{MapEnrich, STRING_CONTENT};
use crate::model::EnrichedRecord;
use crate::pipeline::{
    Clause, ExecOptions, Execution, Field, FilterExpr, Literal, Mode, Op, PipelineError, Plan, PlanError,
};

pub const CSV_HEADER: &str = "scenario,mode,rep,wall_ms,cdx_lines,records_fetched,archive_bytes,records_out,length_sum";
pub const DEFAULT_REPS: usize = 5;
pub const LENGTH_PATH: &str = "payload.string.length";

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("unknown scenario {0}, expected 1, 2 or 3")]
    Scenario(u8),
    #[error("corpus has no text/html capture to anchor the scenarios")]
    EmptyCorpus,
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Plan(#[from] PlanError),
    #[error(transparent)]
    Pipeline(#[from] PipelineError),
}

/// Scenario anchors picked deterministically from the ledger.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ScenarioParams {
    pub url: String,
    pub domain: String,
    /// `YYYYMM` prefix of the earliest capture.
    pub month: String,
}

impl ScenarioParams {
    pub fn from_corpus(corpus: &Corpus) -> Result<ScenarioParams, BenchError> {
        let url = corpus
            .ledger
            .iter()
            .filter(|r| r.mime == "text/html")
            .map(|r| r.url.as_str())
            .min()
            .ok_or(BenchError::EmptyCorpus)?
            .to_string();
        let domain = url
            .split_once("://")
            .map_or(url.as_str(), |(_, rest)| rest)
            .split(['/', '?', '#'])
            .next()
            .unwrap_or_default()
            .to_ascii_lowercase();
        let month = corpus.ledger.iter().map(|r| &r.timestamp[..6]).min().ok_or(BenchError::EmptyCorpus)?.to_string();
        Ok(ScenarioParams { url, domain, month })
    }
}

fn clause(field: Field, op: Op, literal: Literal) -> Clause {
    Clause { field, op, literal }
}

/// The metadata selection of a scenario before enrichment.
pub fn scenario_selection(id: u8, corpus: &Corpus, params: &ScenarioParams) -> Result<Plan, BenchError> {
    let base = Plan::new([corpus.cdx.clone()], corpus.dir.clone());
    let clauses = match id {
        1 => vec![clause(Field::Url, Op::Eq, Literal::Str(params.url.clone()))],
        2 => vec![
            clause(Field::Domain, Op::Eq, Literal::Str(params.domain.clone())),
            clause(Field::Mime, Op::Eq, Literal::Str("text/html".into())),
        ],
        3 => vec![
            clause(Field::Timestamp, Op::Prefix, Literal::Str(params.month.clone())),
            clause(Field::Status, Op::Eq, Literal::Int(200)),
        ],
        other => return Err(BenchError::Scenario(other)),
    };
    let plan = base.filter_expr(FilterExpr { clauses })?;
    Ok(if id == 3 { plan.latest_per_url() } else { plan })
}

/// Full scenario plan: selection, string content, and its length.
pub fn scenario_plan(id: u8, corpus: &Corpus, params: &ScenarioParams) -> Result<Plan, BenchError> {
    let plan = scenario_selection(id, corpus, params)?
        .enrich_with(STRING_CONTENT)?
        .map_enrich(MapEnrich::length("payload.string").expect("static path is valid"))?;
    Ok(plan)
}

pub fn length_sum(records: &[EnrichedRecord]) -> i64 {
    records.iter().filter_map(|r| r.get_as::<i64>(LENGTH_PATH).ok().flatten()).sum()
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchRow {
    pub scenario: u8,
    pub mode: Mode,
    pub rep: usize,
    pub wall_ms: f64,
    pub cdx_lines: u64,
    pub records_fetched: u64,
    pub archive_bytes: u64,
    pub records_out: u64,
    pub length_sum: i64,
}

impl BenchRow {
    pub fn csv_line(&self) -> String {
        format!(
            "{},{},{},{:.3},{},{},{},{},{}",
            self.scenario,
            self.mode,
            self.rep,
            self.wall_ms,
            self.cdx_lines,
            self.records_fetched,
            self.archive_bytes,
            self.records_out,
            self.length_sum
        )
    }
}

/// Runs one repetition and returns the row with the execution itself.
pub fn run_once(
    id: u8,
    mode: Mode,
    corpus: &Corpus,
    params: &ScenarioParams,
    workers: usize,
) -> Result<(BenchRow, Execution), BenchError> {
    let plan = scenario_plan(id, corpus, params)?;
    let run = plan.execute(&ExecOptions { mode, workers: workers.max(1), drop_errors: false })?;
    let row = BenchRow {
        scenario: id,
        mode,
        rep: 0,
        wall_ms: run.stats.wall_time.as_secs_f64() * 1000.0,
        cdx_lines: run.stats.cdx_lines_read,
        records_fetched: run.stats.records_fetched,
        archive_bytes: run.stats.archive_bytes_read,
        records_out: run.stats.records_out,
        length_sum: length_sum(&run.records),
    };
    Ok((row, run))
}

pub fn run_scenario(
    id: u8,
    mode: Mode,
    corpus: &Corpus,
    reps: usize,
    workers: usize,
) -> Result<Vec<BenchRow>, BenchError> {
    let params = ScenarioParams::from_corpus(corpus)?;
    (1..=reps.max(1))
        .map(|rep| run_once(id, mode, corpus, &params, workers).map(|(row, _)| BenchRow { rep, ..row }))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Summary {
    pub min: Duration,
    pub median: Duration,
    pub max: Duration,
}

pub fn summarize(rows: &[BenchRow]) -> Option<Summary> {
    let mut ms: Vec<f64> = rows.iter().map(|r| r.wall_ms).collect();
    if ms.is_empty() {
        return None;
    }
    ms.sort_by(f64::total_cmp);
    let median = if ms.len() % 2 == 1 { ms[ms.len() / 2] } else { (ms[ms.len() / 2 - 1] + ms[ms.len() / 2]) / 2.0 };
    let d = |v: f64| Duration::from_secs_f64(v / 1000.0);
    Some(Summary { min: d(ms[0]), median: d(median), max: d(ms[ms.len() - 1]) })
}

pub fn write_csv<W: Write>(mut sink: W, rows: &[BenchRow]) -> io::Result<()> {
    writeln!(sink, "{CSV_HEADER}")?;
    for row in rows {
        writeln!(sink, "{}", row.csv_line())?;
    }
    sink.flush()
}

/// Plain-text table with one line per (scenario, mode) group.
pub fn format_table(rows: &[BenchRow]) -> String {
    let mut groups: Vec<(u8, Mode)> = rows.iter().map(|r| (r.scenario, r.mode)).collect();
    groups.dedup();
    let mut out = format!(
        "{:<8} {:<9} {:>4} {:>10} {:>10} {:>10} {:>9} {:>9} {:>12} {:>12}\n",
        "scenario", "mode", "reps", "min_ms", "median_ms", "max_ms", "fetched", "out", "bytes", "length_sum"
    );
    for (scenario, mode) in groups {
        let group: Vec<BenchRow> = rows.iter().filter(|r| r.scenario == scenario && r.mode == mode).cloned().collect();
        let s = summarize(&group).expect("group is non-empty");
        let last = group.last().expect("group is non-empty");
        let _ = writeln!(
            out,
            "{:<8} {:<9} {:>4} {:>10.2} {:>10.2} {:>10.2} {:>9} {:>9} {:>12} {:>12}",
            scenario,
            mode.to_string(),
            group.len(),
            s.min.as_secs_f64() * 1000.0,
            s.median.as_secs_f64() * 1000.0,
            s.max.as_secs_f64() * 1000.0,
            last.records_fetched,
            last.records_out,
            last.archive_bytes,
            last.length_sum
        );
    }
    out
}
