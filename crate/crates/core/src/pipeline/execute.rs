//! Plan evaluation in selective and scan mode.

use std::collections::HashMap;
use std::fmt;
use std::fs::File;
use std::io::BufReader;
use std::path::{Component, Path, PathBuf};
use std::str::FromStr;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;
use std::thread;
use std::time::{Duration, Instant};

use crate::cdx::{read_cdx, sort_cdx, CdxRecord};
use crate::enrich::{RecordFetcher, Registry};
use crate::model::EnrichedRecord;
use crate::warcio::{
    capture_metadata, read_record_at, scan_records, CountingReader, RecordLocator, WarcError, WarcRecord,
};

use super::{latest_per_url, PipelineError, Plan, Step};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Mode {
    /// Stream the CDX and fetch only surviving records by offset.
    #[default]
    Selective,
    /// Decode every archive record and derive metadata from it.
    Scan,
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::Selective => "selective",
            Mode::Scan => "scan",
        })
    }
}

impl FromStr for Mode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "selective" => Ok(Mode::Selective),
            "scan" => Ok(Mode::Scan),
            other => Err(format!("unknown mode {other:?}, expected selective or scan")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExecOptions {
    pub mode: Mode,
    pub workers: usize,
    /// Remove records carrying an `error` annotation from the result.
    pub drop_errors: bool,
}

impl Default for ExecOptions {
    fn default() -> Self {
        ExecOptions {
            mode: Mode::Selective,
            workers: thread::available_parallelism().map_or(1, |n| n.get()),
            drop_errors: false,
        }
    }
}

/// IO counters for one execution. In scan mode every archive record is
/// decoded, so `cdx_lines_read` and `records_fetched` both count response
/// records found in the archives and `archive_bytes_read` equals the total
/// archive size.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct ExecutionStats {
    pub cdx_lines_read: u64,
    pub records_fetched: u64,
    pub archive_bytes_read: u64,
    pub records_out: u64,
    pub wall_time: Duration,
}

#[derive(Debug, Clone)]
pub struct Execution {
    pub records: Vec<EnrichedRecord>,
    pub stats: ExecutionStats,
}

#[derive(Default)]
struct Counters {
    fetched: AtomicU64,
    bytes: AtomicU64,
}

enum Archive {
    Files(PathBuf),
    Preloaded(Preloaded),
}

/// Resolves a CDX `filename` inside the archive directory, refusing names
/// that would escape it.
fn resolve(dir: &Path, filename: &str) -> Result<PathBuf, WarcError> {
    let rel = Path::new(filename);
    if filename.is_empty() || !rel.components().all(|c| matches!(c, Component::Normal(_))) {
        return Err(WarcError::Format(format!("archive filename {filename:?} is not a relative path")));
    }
    Ok(dir.join(rel))
}

/// Per-worker fetcher with one open handle per archive file.
struct WorkerFetcher<'a> {
    archive: &'a Archive,
    handles: HashMap<String, CountingReader<File>>,
    fetched: u64,
}

impl<'a> WorkerFetcher<'a> {
    fn new(archive: &'a Archive) -> Self {
        WorkerFetcher { archive, handles: HashMap::new(), fetched: 0 }
    }

    fn flush_into(&self, counters: &Counters) {
        let bytes: u64 = self.handles.values().map(CountingReader::bytes_read).sum();
        counters.bytes.fetch_add(bytes, Ordering::Relaxed);
        counters.fetched.fetch_add(self.fetched, Ordering::Relaxed);
    }
}

impl RecordFetcher for WorkerFetcher<'_> {
    fn fetch(&mut self, meta: &CdxRecord) -> Result<Arc<WarcRecord>, WarcError> {
        match self.archive {
            Archive::Preloaded(map) => map
                .get(&(meta.filename.clone(), meta.offset))
                .cloned()
                .ok_or_else(|| WarcError::Format(format!("no record at {}@{}", meta.filename, meta.offset))),
            Archive::Files(dir) => {
                if !self.handles.contains_key(&meta.filename) {
                    let path = resolve(dir, &meta.filename)?;
                    let file = File::open(&path).map_err(|e| WarcError::Format(format!("{}: {e}", path.display())))?;
                    self.handles.insert(meta.filename.clone(), CountingReader::new(file));
                }
                let handle = self.handles.get_mut(&meta.filename).expect("handle inserted above");
                let locator = RecordLocator {
                    filename: meta.filename.clone(),
                    offset: meta.offset,
                    compressed_length: meta.compressed_length,
                };
                self.fetched += 1;
                read_record_at(handle, &locator).map(Arc::new)
            }
        }
    }
}

fn leading_meta_filters(steps: &[Step]) -> usize {
    steps.iter().take_while(|s| matches!(s, Step::MetaFilter(_))).count()
}

fn passes(steps: &[Step], meta: &CdxRecord) -> bool {
    steps.iter().all(|s| match s {
        Step::MetaFilter(p) => p.matches(meta),
        _ => true,
    })
}

fn read_index(plan: &Plan, pushed: &[Step], stats: &mut ExecutionStats) -> Result<Vec<Arc<CdxRecord>>, PipelineError> {
    let mut out = Vec::new();
    for path in &plan.source.cdx_paths {
        let file = File::open(path).map_err(|source| PipelineError::Io { path: path.clone(), source })?;
        for row in read_cdx(BufReader::with_capacity(256 * 1024, file)) {
            let meta = row.map_err(|source| PipelineError::Cdx { path: path.clone(), source })?;
            stats.cdx_lines_read += 1;
            if passes(pushed, &meta) {
                out.push(Arc::new(meta));
            }
        }
    }
    Ok(out)
}

fn archive_files(dir: &Path) -> Result<Vec<PathBuf>, PipelineError> {
    let entries = std::fs::read_dir(dir).map_err(|source| PipelineError::Io { path: dir.to_path_buf(), source })?;
    let mut files = Vec::new();
    for entry in entries {
        let entry = entry.map_err(|source| PipelineError::Io { path: dir.to_path_buf(), source })?;
        let name = entry.file_name().to_string_lossy().into_owned();
        if (name.ends_with(".warc.gz") || name.ends_with(".arc.gz")) && entry.path().is_file() {
            files.push(entry.path());
        }
    }
    files.sort();
    Ok(files)
}

type Scanned = Vec<(CdxRecord, Arc<WarcRecord>)>;
type Preloaded = HashMap<(String, u64), Arc<WarcRecord>>;

fn scan_file(path: &Path, pushed: &[Step]) -> Result<(Scanned, u64, u64), PipelineError> {
    let archive_err = |source| PipelineError::Archive { path: path.to_path_buf(), source };
    let file = File::open(path).map_err(|source| PipelineError::Io { path: path.to_path_buf(), source })?;
    let name = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    let mut scanner = scan_records(file, &name);
    let mut out = Vec::new();
    let mut responses = 0;
    for item in &mut scanner {
        let (locator, record) = item.map_err(archive_err)?;
        let Some(meta) = capture_metadata(&record, &locator).map_err(archive_err)? else {
            continue;
        };
        responses += 1;
        if passes(pushed, &meta) {
            out.push((meta, Arc::new(record)));
        }
    }
    Ok((out, responses, scanner.bytes_read()))
}

fn scan_archives(
    plan: &Plan,
    pushed: &[Step],
    workers: usize,
    stats: &mut ExecutionStats,
) -> Result<(Vec<CdxRecord>, Preloaded), PipelineError> {
    let files = archive_files(&plan.source.archive_dir)?;
    let per_worker = files.len().div_ceil(workers.max(1)).max(1);
    let results: Vec<Result<(Scanned, u64, u64), PipelineError>> = thread::scope(|s| {
        let handles: Vec<_> = files
            .chunks(per_worker)
            .map(|chunk| {
                s.spawn(move || {
                    let mut acc = (Vec::new(), 0, 0);
                    for path in chunk {
                        let (rows, n, bytes) = scan_file(path, pushed)?;
                        acc.0.extend(rows);
                        acc.1 += n;
                        acc.2 += bytes;
                    }
                    Ok(acc)
                })
            })
            .collect();
        handles.into_iter().map(join).collect()
    });
    let mut all = Vec::new();
    for result in results {
        let (rows, n, bytes) = result?;
        all.extend(rows);
        stats.cdx_lines_read += n;
        stats.records_fetched += n;
        stats.archive_bytes_read += bytes;
    }
    let mut preloaded = HashMap::with_capacity(all.len());
    let mut metas = Vec::with_capacity(all.len());
    for (meta, record) in all {
        preloaded.insert((meta.filename.clone(), meta.offset), record);
        metas.push(meta);
    }
    sort_cdx(&mut metas);
    Ok((metas, preloaded))
}

fn join<T>(handle: thread::ScopedJoinHandle<'_, T>) -> T {
    handle.join().unwrap_or_else(|panic| std::panic::resume_unwind(panic))
}

fn apply_meta_steps(mut metas: Vec<Arc<CdxRecord>>, steps: &[Step]) -> Vec<Arc<CdxRecord>> {
    for step in steps {
        match step {
            Step::MetaFilter(p) => metas.retain(|m| p.matches(m)),
            Step::LatestPerUrl => metas = latest_per_url(metas, |m| m.as_ref()),
            Step::Enrich(_) | Step::DerivedFilter(_) => unreachable!("only metadata steps run on the index"),
        }
    }
    metas
}

fn process_chunk(
    chunk: Vec<EnrichedRecord>,
    steps: &[Step],
    registry: &Registry,
    archive: &Archive,
    counters: &Counters,
) -> Vec<EnrichedRecord> {
    let mut fetcher = WorkerFetcher::new(archive);
    let out = chunk
        .into_iter()
        .filter_map(|mut record| {
            for step in steps {
                match step {
                    Step::MetaFilter(p) if !p.matches(&record.meta) => return None,
                    Step::MetaFilter(_) => {}
                    Step::Enrich(e) => registry.apply_in_place(&mut record, e, &mut fetcher),
                    Step::DerivedFilter(p) if !p.matches(&record) => return None,
                    Step::DerivedFilter(_) => {}
                    Step::LatestPerUrl => unreachable!("segments are split at LatestPerUrl"),
                }
            }
            Some(record)
        })
        .collect();
    fetcher.flush_into(counters);
    out
}

fn run_segment(
    records: Vec<EnrichedRecord>,
    steps: &[Step],
    registry: &Registry,
    archive: &Archive,
    workers: usize,
    counters: &Counters,
) -> Vec<EnrichedRecord> {
    if steps.is_empty() || records.is_empty() {
        return records;
    }
    let workers = workers.clamp(1, records.len());
    if workers == 1 {
        return process_chunk(records, steps, registry, archive, counters);
    }
    let per_worker = records.len().div_ceil(workers);
    let mut chunks = Vec::with_capacity(workers);
    let mut rest = records;
    while !rest.is_empty() {
        let tail = rest.split_off(per_worker.min(rest.len()));
        chunks.push(std::mem::replace(&mut rest, tail));
    }
    thread::scope(|s| {
        let handles: Vec<_> = chunks
            .into_iter()
            .map(|chunk| s.spawn(move || process_chunk(chunk, steps, registry, archive, counters)))
            .collect();
        handles.into_iter().flat_map(join).collect()
    })
}

pub(super) fn run(plan: &Plan, options: &ExecOptions) -> Result<Execution, PipelineError> {
    let start = Instant::now();
    let mut stats = ExecutionStats::default();
    let steps = plan.steps.as_slice();
    let pushed = &steps[..leading_meta_filters(steps)];
    let lead_end = steps.iter().position(|s| !s.is_metadata_only()).unwrap_or(steps.len());
    let workers = options.workers.max(1);

    let (metas, archive) = match options.mode {
        Mode::Selective => {
            let metas = read_index(plan, pushed, &mut stats)?;
            (metas, Archive::Files(plan.source.archive_dir.clone()))
        }
        Mode::Scan => {
            let (metas, preloaded) = scan_archives(plan, pushed, workers, &mut stats)?;
            (metas.into_iter().map(Arc::new).collect(), Archive::Preloaded(preloaded))
        }
    };
    let metas = apply_meta_steps(metas, &steps[pushed.len()..lead_end]);
    let mut records: Vec<EnrichedRecord> = metas.into_iter().map(EnrichedRecord::from_shared).collect();

    let counters = Counters::default();
    for (i, segment) in steps[lead_end..].split(|s| matches!(s, Step::LatestPerUrl)).enumerate() {
        if i > 0 {
            records = latest_per_url(records, |r| r.meta.as_ref());
        }
        records = run_segment(records, segment, &plan.registry, &archive, workers, &counters);
    }
    if options.drop_errors {
        records.retain(|r| r.error().is_none());
    }

    stats.records_fetched += counters.fetched.load(Ordering::Relaxed);
    stats.archive_bytes_read += counters.bytes.load(Ordering::Relaxed);
    stats.records_out = records.len() as u64;
    stats.wall_time = start.elapsed();
    Ok(Execution { records, stats })
}
