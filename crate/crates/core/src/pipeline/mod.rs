//! Lazily evaluated corpus-building plans.
//!
//! A [`Plan`] records steps without doing any IO. Execution streams the CDX,
//! applies the leading metadata-only steps there, and touches archive files
//! only for the records that survive to the first enrichment. The scan mode
//! ignores the CDX, re-derives every record's metadata from the archives, and
//! then applies the same steps; it serves as the reference for the selective
//! path and as the benchmark baseline.

mod execute;
pub mod filter;

use std::collections::{hash_map::Entry, HashMap, HashSet};
use std::fmt;
use std::io;
use std::path::PathBuf;
use std::sync::Arc;

use thiserror::Error;

use crate::cdx::{CdxError, CdxRecord};
use crate::enrich::{EnrichError, Enrichment, MapEnrich, Registry};
use crate::model::{split_path, EnrichedRecord, Value, ERROR_PATH, RECORD_ROOT};
use crate::warcio::WarcError;

pub use execute::{ExecOptions, Execution, ExecutionStats, Mode};
pub use filter::{Clause, Field, FilterError, FilterExpr, Literal, Op};

#[derive(Debug, Error)]
pub enum PlanError {
    #[error(transparent)]
    Enrich(#[from] EnrichError),
    #[error(transparent)]
    Filter(#[from] FilterError),
    #[error("no earlier enrichment produces {0:?}")]
    UnproducedPath(String),
    #[error("invalid path: {0}")]
    Path(String),
}

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("{path}: {source}")]
    Cdx { path: PathBuf, source: CdxError },
    #[error("{path}: {source}")]
    Archive { path: PathBuf, source: WarcError },
    #[error(transparent)]
    Plan(#[from] PlanError),
}

pub type MetaFn = Arc<dyn Fn(&CdxRecord) -> bool + Send + Sync>;
pub type ValueFn = Arc<dyn Fn(Option<&Value>) -> bool + Send + Sync>;

#[derive(Clone)]
pub enum MetaPredicate {
    Expr(FilterExpr),
    Custom(MetaFn),
}

impl MetaPredicate {
    pub fn matches(&self, meta: &CdxRecord) -> bool {
        match self {
            MetaPredicate::Expr(e) => e.matches_meta(meta),
            MetaPredicate::Custom(f) => f(meta),
        }
    }
}

#[derive(Clone)]
pub enum DerivedPredicate {
    Expr(FilterExpr),
    Custom { path: String, predicate: ValueFn },
}

impl DerivedPredicate {
    pub fn matches(&self, record: &EnrichedRecord) -> bool {
        match self {
            DerivedPredicate::Expr(e) => e.matches(record),
            DerivedPredicate::Custom { path, predicate } => predicate(record.get_path(path).as_ref()),
        }
    }

    fn paths(&self) -> Vec<&str> {
        match self {
            DerivedPredicate::Expr(e) => e.derived_paths().collect(),
            DerivedPredicate::Custom { path, .. } => vec![path.as_str()],
        }
    }
}

#[derive(Clone)]
pub enum Step {
    MetaFilter(MetaPredicate),
    Enrich(Enrichment),
    DerivedFilter(DerivedPredicate),
    LatestPerUrl,
}

impl Step {
    /// Runs on CDX metadata without archive access.
    pub fn is_metadata_only(&self) -> bool {
        matches!(self, Step::MetaFilter(_) | Step::LatestPerUrl)
    }
}

impl fmt::Debug for Step {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Step::MetaFilter(MetaPredicate::Expr(e)) => write!(f, "MetaFilter({e})"),
            Step::MetaFilter(MetaPredicate::Custom(_)) => f.write_str("MetaFilter(<fn>)"),
            Step::Enrich(e) => write!(f, "Enrich({e})"),
            Step::DerivedFilter(DerivedPredicate::Expr(e)) => write!(f, "DerivedFilter({e})"),
            Step::DerivedFilter(DerivedPredicate::Custom { path, .. }) => write!(f, "DerivedFilter({path}, <fn>)"),
            Step::LatestPerUrl => f.write_str("LatestPerUrl"),
        }
    }
}

/// CDX files and the directory their `filename` fields resolve against.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Source {
    pub cdx_paths: Vec<PathBuf>,
    pub archive_dir: PathBuf,
}

/// An immutable, unevaluated sequence of steps. Every builder returns a new
/// plan and leaves `self` untouched.
#[derive(Clone)]
pub struct Plan {
    source: Arc<Source>,
    registry: Arc<Registry>,
    steps: Vec<Step>,
}

impl fmt::Debug for Plan {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Plan").field("source", &self.source).field("steps", &self.steps).finish()
    }
}

impl Plan {
    pub fn new(cdx_paths: impl IntoIterator<Item = impl Into<PathBuf>>, archive_dir: impl Into<PathBuf>) -> Plan {
        Plan {
            source: Arc::new(Source {
                cdx_paths: cdx_paths.into_iter().map(Into::into).collect(),
                archive_dir: archive_dir.into(),
            }),
            registry: Arc::new(Registry::builtin()),
            steps: Vec::new(),
        }
    }

    pub fn with_registry(&self, registry: Arc<Registry>) -> Plan {
        Plan { registry, ..self.clone() }
    }

    pub fn source(&self) -> &Source {
        &self.source
    }

    pub fn registry(&self) -> &Registry {
        &self.registry
    }

    pub fn steps(&self) -> &[Step] {
        &self.steps
    }

    fn push(&self, step: Step) -> Plan {
        let mut next = self.clone();
        next.steps.push(step);
        next
    }

    pub fn filter_meta(&self, predicate: impl Fn(&CdxRecord) -> bool + Send + Sync + 'static) -> Plan {
        self.push(Step::MetaFilter(MetaPredicate::Custom(Arc::new(predicate))))
    }

    /// Adds a parsed expression: metadata-only expressions become metadata
    /// filters, anything referencing derived paths a derived filter.
    pub fn filter_expr(&self, expr: FilterExpr) -> Result<Plan, PlanError> {
        if expr.is_metadata_only() {
            return Ok(self.push(Step::MetaFilter(MetaPredicate::Expr(expr))));
        }
        let predicate = DerivedPredicate::Expr(expr);
        self.check_producible(&predicate)?;
        Ok(self.push(Step::DerivedFilter(predicate)))
    }

    pub fn filter(&self, expr: &str) -> Result<Plan, PlanError> {
        self.filter_expr(FilterExpr::parse(expr)?)
    }

    pub fn enrich(&self, enrichment: Enrichment) -> Result<Plan, PlanError> {
        self.registry.validate(&enrichment)?;
        Ok(self.push(Step::Enrich(enrichment)))
    }

    pub fn enrich_with(&self, name: &str) -> Result<Plan, PlanError> {
        self.enrich(Enrichment::func(name))
    }

    pub fn map_enrich(&self, map: MapEnrich) -> Result<Plan, PlanError> {
        self.enrich(Enrichment::Map(map))
    }

    pub fn filter_derived(
        &self,
        path: &str,
        predicate: impl Fn(Option<&Value>) -> bool + Send + Sync + 'static,
    ) -> Result<Plan, PlanError> {
        split_path(path).map_err(|e| PlanError::Path(e.to_string()))?;
        let predicate = DerivedPredicate::Custom { path: path.to_string(), predicate: Arc::new(predicate) };
        self.check_producible(&predicate)?;
        Ok(self.push(Step::DerivedFilter(predicate)))
    }

    /// `path op literal` as a derived filter, e.g. `payload.string contains "internet"`.
    pub fn filter_derived_op(&self, path: &str, op: Op, literal: Literal) -> Result<Plan, PlanError> {
        split_path(path).map_err(|e| PlanError::Path(e.to_string()))?;
        let expr = FilterExpr { clauses: vec![Clause { field: Field::Path(path.to_string()), op, literal }] };
        if expr.is_metadata_only() {
            return Ok(self.push(Step::MetaFilter(MetaPredicate::Expr(expr))));
        }
        let predicate = DerivedPredicate::Expr(expr);
        self.check_producible(&predicate)?;
        Ok(self.push(Step::DerivedFilter(predicate)))
    }

    pub fn latest_per_url(&self) -> Plan {
        self.push(Step::LatestPerUrl)
    }

    fn check_producible(&self, predicate: &DerivedPredicate) -> Result<(), PlanError> {
        let mut produced: Vec<String> = Vec::new();
        for step in &self.steps {
            if let Step::Enrich(e) = step {
                produced.extend(self.registry.producible_paths(e)?);
                produced.push(ERROR_PATH.to_string());
            }
        }
        for path in predicate.paths() {
            if path.split('.').next() == Some(RECORD_ROOT) {
                continue;
            }
            let ok = produced.iter().any(|p| {
                path == p
                    || path.strip_prefix(p.as_str()).is_some_and(|rest| rest.starts_with('.'))
                    || p.strip_prefix(path).is_some_and(|rest| rest.starts_with('.'))
            });
            if !ok {
                return Err(PlanError::UnproducedPath(path.to_string()));
            }
        }
        Ok(())
    }

    pub fn execute(&self, options: &ExecOptions) -> Result<Execution, PipelineError> {
        execute::run(self, options)
    }

    pub fn execute_selective(&self) -> Result<Execution, PipelineError> {
        self.execute(&ExecOptions::default())
    }

    pub fn execute_scan(&self) -> Result<Execution, PipelineError> {
        self.execute(&ExecOptions { mode: Mode::Scan, ..ExecOptions::default() })
    }

    pub fn count(&self) -> Result<(usize, ExecutionStats), PipelineError> {
        let run = self.execute_selective()?;
        Ok((run.records.len(), run.stats))
    }

    pub fn take(&self, n: usize) -> Result<Vec<EnrichedRecord>, PipelineError> {
        let mut records = self.execute_selective()?.records;
        records.truncate(n);
        Ok(records)
    }
}

/// Keeps the latest capture per SURT key. Ties on timestamp go to the item
/// appearing later; survivors keep their input order.
pub fn latest_per_url<T>(items: Vec<T>, meta: impl Fn(&T) -> &CdxRecord) -> Vec<T> {
    let mut best: HashMap<&str, usize> = HashMap::new();
    for (i, item) in items.iter().enumerate() {
        let m = meta(item);
        match best.entry(m.surt_url.as_str()) {
            Entry::Vacant(e) => {
                e.insert(i);
            }
            Entry::Occupied(mut e) => {
                if m.timestamp >= meta(&items[*e.get()]).timestamp {
                    e.insert(i);
                }
            }
        }
    }
    let keep: HashSet<usize> = best.into_values().collect();
    items.into_iter().enumerate().filter_map(|(i, item)| keep.contains(&i).then_some(item)).collect()
}
