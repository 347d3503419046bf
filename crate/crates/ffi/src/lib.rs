//! C ABI over the `cdxcorpus` library.
//!
//! Conventions:
//!
//! * Every fallible function returns a [`CdxcStatus`]; on failure a message is
//!   available from [`cdxc_last_error`] on the calling thread.
//! * Results are written through out-pointers. Strings returned this way are
//!   owned by the caller and released with [`cdxc_string_free`].
//! * [`CdxcRecord`] and [`CdxcPlan`] are opaque handles released with their
//!   `_free` function. Plan builders never modify their input handle; they
//!   return a new plan.
//! * Panics never cross the boundary; they surface as `CDXC_STATUS_PANIC`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::fs::File;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;

use cdxcorpus::cdx::{self, CdxRecord};
use cdxcorpus::corpusgen::{self, CorpusSpec};
use cdxcorpus::enrich::Enrichment;
use cdxcorpus::jsonout::{self, JsonOptions};
use cdxcorpus::model::metadata_value;
use cdxcorpus::pipeline::{ExecOptions, Execution, Mode, Plan};
use cdxcorpus::warcio::{read_record_at, RecordLocator};

/// Result code of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CdxcStatus {
    Ok = 0,
    NullArgument = 1,
    InvalidUtf8 = 2,
    Parse = 3,
    Plan = 4,
    Io = 5,
    InvalidArgument = 6,
    NotFound = 7,
    Panic = 99,
}

/// Execute with selective access through the CDX.
pub const CDXC_MODE_SELECTIVE: u32 = 0;
/// Execute by scanning every archive record.
pub const CDXC_MODE_SCAN: u32 = 1;

/// Counters of one plan execution.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct CdxcStats {
    pub cdx_lines_read: u64,
    pub records_fetched: u64,
    pub archive_bytes_read: u64,
    pub records_out: u64,
    pub wall_ms: f64,
}

/// Opaque parsed CDX line.
pub struct CdxcRecord(CdxRecord);

/// Opaque immutable plan.
pub struct CdxcPlan(Plan);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

struct Failure(CdxcStatus, String);

type FfiResult<T> = Result<T, Failure>;

fn fail<T>(status: CdxcStatus, message: impl ToString) -> FfiResult<T> {
    Err(Failure(status, message.to_string()))
}

fn set_last_error(message: String) {
    let c = CString::new(message.replace('\0', " ")).expect("NULs were replaced");
    LAST_ERROR.with(|slot| *slot.borrow_mut() = Some(c));
}

/// Runs `body`, converting errors and panics into a status code.
fn guard(body: impl FnOnce() -> FfiResult<()>) -> CdxcStatus {
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|slot| *slot.borrow_mut() = None);
            CdxcStatus::Ok
        }
        Ok(Err(Failure(status, message))) => {
            set_last_error(message);
            status
        }
        Err(_) => {
            set_last_error("internal panic".to_string());
            CdxcStatus::Panic
        }
    }
}

/// # Safety
/// `ptr` must be null or a valid NUL-terminated string.
unsafe fn str_arg<'a>(ptr: *const c_char, name: &str) -> FfiResult<&'a str> {
    if ptr.is_null() {
        return fail(CdxcStatus::NullArgument, format!("{name} is null"));
    }
    CStr::from_ptr(ptr).to_str().or_else(|_| fail(CdxcStatus::InvalidUtf8, format!("{name} is not valid UTF-8")))
}

fn out_arg<'a, T>(ptr: *mut T, name: &str) -> FfiResult<&'a mut T> {
    // SAFETY: callers pass either null or a valid, writable pointer.
    unsafe { ptr.as_mut() }.ok_or_else(|| Failure(CdxcStatus::NullArgument, format!("{name} is null")))
}

fn handle<'a, T>(ptr: *const T, name: &str) -> FfiResult<&'a T> {
    // SAFETY: callers pass either null or a live handle created by this library.
    unsafe { ptr.as_ref() }.ok_or_else(|| Failure(CdxcStatus::NullArgument, format!("{name} is null")))
}

fn c_string(s: String) -> FfiResult<*mut c_char> {
    CString::new(s).map(CString::into_raw).or_else(|_| fail(CdxcStatus::InvalidArgument, "result contains a NUL byte"))
}

fn stats_of(run: &Execution) -> CdxcStats {
    CdxcStats {
        cdx_lines_read: run.stats.cdx_lines_read,
        records_fetched: run.stats.records_fetched,
        archive_bytes_read: run.stats.archive_bytes_read,
        records_out: run.stats.records_out,
        wall_ms: run.stats.wall_time.as_secs_f64() * 1000.0,
    }
}

fn exec_options(mode: u32, workers: u32) -> FfiResult<ExecOptions> {
    let mode = match mode {
        CDXC_MODE_SELECTIVE => Mode::Selective,
        CDXC_MODE_SCAN => Mode::Scan,
        other => return fail(CdxcStatus::InvalidArgument, format!("unknown mode {other}")),
    };
    let defaults = ExecOptions::default();
    Ok(ExecOptions { mode, workers: if workers == 0 { defaults.workers } else { workers as usize }, ..defaults })
}

/// Message of the last failed call on this thread, or null. The pointer stays
/// valid until the next call into this library on the same thread.
#[no_mangle]
pub extern "C" fn cdxc_last_error() -> *const c_char {
    LAST_ERROR.with(|slot| slot.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Releases a string returned by this library. Null is ignored.
///
/// # Safety
/// `s` must be null or a string obtained from this library and not yet freed.
#[no_mangle]
pub unsafe extern "C" fn cdxc_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Writes the SURT form of `url` to `*out`.
///
/// # Safety
/// `url` must be a valid C string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn cdxc_surt_from_url(url: *const c_char, out: *mut *mut c_char) -> CdxcStatus {
    guard(|| {
        let url = str_arg(url, "url")?;
        let out = out_arg(out, "out")?;
        let surt = cdx::surt_from_url(url).or_else(|e| fail(CdxcStatus::Parse, e))?;
        *out = c_string(surt)?;
        Ok(())
    })
}

/// Writes the ISO-8601 form of a 14-digit timestamp to `*out`.
///
/// # Safety
/// `timestamp` must be a valid C string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn cdxc_timestamp_to_iso(timestamp: *const c_char, out: *mut *mut c_char) -> CdxcStatus {
    guard(|| {
        let ts = str_arg(timestamp, "timestamp")?;
        let out = out_arg(out, "out")?;
        let iso = cdx::timestamp_to_iso(ts).or_else(|e| fail(CdxcStatus::Parse, e))?;
        *out = c_string(iso)?;
        Ok(())
    })
}

/// Parses one 11-field CDX line into a new record handle.
///
/// # Safety
/// `line` must be a valid C string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn cdxc_cdx_parse(line: *const c_char, out: *mut *mut CdxcRecord) -> CdxcStatus {
    guard(|| {
        let line = str_arg(line, "line")?;
        let out = out_arg(out, "out")?;
        let record = cdx::parse_cdx_line(line).or_else(|e| fail(CdxcStatus::Parse, e))?;
        *out = Box::into_raw(Box::new(CdxcRecord(record)));
        Ok(())
    })
}

/// Writes a metadata field as text to `*out`. Field names: surtUrl,
/// timestamp, originalUrl, mime, status, digest, redirectUrl, meta,
/// compressedLength, offset, filename. Absent optional fields yield
/// `CDXC_STATUS_NOT_FOUND`.
///
/// # Safety
/// `record` must be a live handle; `field` a valid C string; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn cdxc_cdx_get(
    record: *const CdxcRecord,
    field: *const c_char,
    out: *mut *mut c_char,
) -> CdxcStatus {
    guard(|| {
        let record = handle(record, "record")?;
        let field = str_arg(field, "field")?;
        let out = out_arg(out, "out")?;
        let value = metadata_value(&record.0, field)
            .ok_or_else(|| Failure(CdxcStatus::NotFound, format!("no value for field {field:?}")))?;
        *out = c_string(value.to_string())?;
        Ok(())
    })
}

/// Writes the record's archive locator.
///
/// # Safety
/// `record` must be a live handle; the out-pointers must be writable.
#[no_mangle]
pub unsafe extern "C" fn cdxc_cdx_locator(
    record: *const CdxcRecord,
    offset: *mut u64,
    compressed_length: *mut u64,
) -> CdxcStatus {
    guard(|| {
        let record = handle(record, "record")?;
        *out_arg(offset, "offset")? = record.0.offset;
        *out_arg(compressed_length, "compressed_length")? = record.0.compressed_length;
        Ok(())
    })
}

/// Serializes the record back to a CDX line.
///
/// # Safety
/// `record` must be a live handle; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn cdxc_cdx_to_line(record: *const CdxcRecord, out: *mut *mut c_char) -> CdxcStatus {
    guard(|| {
        let record = handle(record, "record")?;
        *out_arg(out, "out")? = c_string(cdx::write_cdx_line(&record.0))?;
        Ok(())
    })
}

/// Releases a record handle. Null is ignored.
///
/// # Safety
/// `record` must be null or a handle from [`cdxc_cdx_parse`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn cdxc_cdx_free(record: *mut CdxcRecord) {
    if !record.is_null() {
        drop(Box::from_raw(record));
    }
}

/// Creates an empty plan over one CDX file and its archive directory. No IO
/// happens until the plan is executed.
///
/// # Safety
/// Both paths must be valid C strings; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn cdxc_plan_new(
    cdx_path: *const c_char,
    archive_dir: *const c_char,
    out: *mut *mut CdxcPlan,
) -> CdxcStatus {
    guard(|| {
        let cdx_path = str_arg(cdx_path, "cdx_path")?;
        let archive_dir = str_arg(archive_dir, "archive_dir")?;
        let out = out_arg(out, "out")?;
        *out = Box::into_raw(Box::new(CdxcPlan(Plan::new([PathBuf::from(cdx_path)], archive_dir))));
        Ok(())
    })
}

fn derive_plan(
    plan: *const CdxcPlan,
    out: *mut *mut CdxcPlan,
    step: impl FnOnce(&Plan) -> FfiResult<Plan>,
) -> FfiResult<()> {
    let plan = handle(plan, "plan")?;
    let out = out_arg(out, "out")?;
    let next = step(&plan.0)?;
    *out = Box::into_raw(Box::new(CdxcPlan(next)));
    Ok(())
}

/// Appends a filter expression, e.g. `status == 200 && mime == "text/html"`.
///
/// # Safety
/// `plan` must be a live handle; `expr` a valid C string; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn cdxc_plan_filter(
    plan: *const CdxcPlan,
    expr: *const c_char,
    out: *mut *mut CdxcPlan,
) -> CdxcStatus {
    guard(|| {
        let expr = str_arg(expr, "expr")?;
        derive_plan(plan, out, |p| p.filter(expr).or_else(|e| fail(CdxcStatus::Plan, e)))
    })
}

/// Appends an enrichment: `response`, `string`, `html-title` or
/// `map:length(<path>)`.
///
/// # Safety
/// `plan` must be a live handle; `spec` a valid C string; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn cdxc_plan_enrich(
    plan: *const CdxcPlan,
    spec: *const c_char,
    out: *mut *mut CdxcPlan,
) -> CdxcStatus {
    guard(|| {
        let spec = str_arg(spec, "spec")?;
        derive_plan(plan, out, |p| {
            let enrichment = Enrichment::parse(spec).or_else(|e| fail(CdxcStatus::Plan, e))?;
            p.enrich(enrichment).or_else(|e| fail(CdxcStatus::Plan, e))
        })
    })
}

/// Appends a latest-capture-per-URL step.
///
/// # Safety
/// `plan` must be a live handle; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn cdxc_plan_latest_per_url(plan: *const CdxcPlan, out: *mut *mut CdxcPlan) -> CdxcStatus {
    guard(|| derive_plan(plan, out, |p| Ok(p.latest_per_url())))
}

/// Executes the plan and writes the number of output records. `stats` may be
/// null. `workers == 0` uses all available cores.
///
/// # Safety
/// `plan` must be a live handle; `count` writable; `stats` null or writable.
#[no_mangle]
pub unsafe extern "C" fn cdxc_plan_count(
    plan: *const CdxcPlan,
    mode: u32,
    workers: u32,
    count: *mut u64,
    stats: *mut CdxcStats,
) -> CdxcStatus {
    guard(|| {
        let plan = handle(plan, "plan")?;
        let count = out_arg(count, "count")?;
        let run = plan.0.execute(&exec_options(mode, workers)?).or_else(|e| fail(CdxcStatus::Io, e))?;
        *count = run.records.len() as u64;
        if let Some(stats) = stats.as_mut() {
            *stats = stats_of(&run);
        }
        Ok(())
    })
}

/// Executes the plan and writes JSON lines to `path` (gzip when it ends in
/// `.gz`). `pretty` and `base64_bytes` are booleans.
///
/// # Safety
/// `plan` must be a live handle; `path` a valid C string; `stats` null or
/// writable.
#[no_mangle]
pub unsafe extern "C" fn cdxc_plan_save_json(
    plan: *const CdxcPlan,
    path: *const c_char,
    mode: u32,
    workers: u32,
    pretty: bool,
    base64_bytes: bool,
    stats: *mut CdxcStats,
) -> CdxcStatus {
    guard(|| {
        let plan = handle(plan, "plan")?;
        let path = str_arg(path, "path")?;
        let run = plan.0.execute(&exec_options(mode, workers)?).or_else(|e| fail(CdxcStatus::Io, e))?;
        jsonout::save_corpus(&run.records, path.as_ref(), &JsonOptions { base64_bytes, pretty })
            .or_else(|e| fail(CdxcStatus::Io, format!("{path}: {e}")))?;
        if let Some(stats) = stats.as_mut() {
            *stats = stats_of(&run);
        }
        Ok(())
    })
}

/// Number of steps recorded in the plan.
///
/// # Safety
/// `plan` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn cdxc_plan_step_count(plan: *const CdxcPlan) -> usize {
    plan.as_ref().map_or(0, |p| p.0.steps().len())
}

/// Releases a plan handle. Null is ignored.
///
/// # Safety
/// `plan` must be null or a plan handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn cdxc_plan_free(plan: *mut CdxcPlan) {
    if !plan.is_null() {
        drop(Box::from_raw(plan));
    }
}

/// Reads the record stored at (`offset`, `length`) of `archive_path` and
/// writes a JSON description to `*out`.
///
/// # Safety
/// `archive_path` must be a valid C string; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn cdxc_read_record_json(
    archive_path: *const c_char,
    offset: u64,
    length: u64,
    out: *mut *mut c_char,
) -> CdxcStatus {
    guard(|| {
        let path = str_arg(archive_path, "archive_path")?;
        let out = out_arg(out, "out")?;
        let mut file = File::open(path).or_else(|e| fail(CdxcStatus::Io, format!("{path}: {e}")))?;
        let locator = RecordLocator { filename: path.to_string(), offset, compressed_length: length };
        let record = read_record_at(&mut file, &locator).or_else(|e| fail(CdxcStatus::Parse, e))?;
        *out = c_string(jsonout::warc_record_json(&record, &JsonOptions::default()).to_string())?;
        Ok(())
    })
}

/// Generates a synthetic corpus (archives, `ledger.csv`, `index.cdx`) in
/// `out_dir` with default settings apart from the given sizes and seed.
///
/// # Safety
/// `out_dir` must be a valid C string; `records` null or writable.
#[no_mangle]
pub unsafe extern "C" fn cdxc_generate_corpus(
    out_dir: *const c_char,
    seed: u64,
    domains: u32,
    urls_per_domain: u32,
    captures_per_url: u32,
    records: *mut u64,
) -> CdxcStatus {
    guard(|| {
        let dir = str_arg(out_dir, "out_dir")?;
        let spec = CorpusSpec {
            seed,
            domains: domains as usize,
            urls_per_domain: urls_per_domain as usize,
            captures_per_url: captures_per_url as usize,
            ..CorpusSpec::default()
        };
        let corpus = corpusgen::generate_corpus(&spec, dir.as_ref()).or_else(|e| match e {
            corpusgen::CorpusError::Spec(_) => fail(CdxcStatus::InvalidArgument, e),
            _ => fail(CdxcStatus::Io, e),
        })?;
        if let Some(records) = records.as_mut() {
            *records = corpus.ledger.len() as u64;
        }
        Ok(())
    })
}
