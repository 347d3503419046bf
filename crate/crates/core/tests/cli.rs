//! The command-line tool agrees with the library it wraps.

mod common;

use std::path::Path;
use std::process::Command;

use cdxcorpus::cli::{run_cli_with, EXIT_DATA, EXIT_OK, EXIT_USAGE};
use cdxcorpus::enrich::{Enrichment, HTML_TITLE, STRING_CONTENT};
use cdxcorpus::jsonout::{record_to_json, warc_record_json, JsonOptions};
use cdxcorpus::pipeline::{ExecOptions, Literal, Mode, Op, Plan};
use cdxcorpus::warcio::{read_record_at, RecordLocator};

fn cli(args: &[&str]) -> (i32, String, String) {
    let mut out = Vec::new();
    let mut err = Vec::new();
    let argv = std::iter::once("cdxcorpus").chain(args.iter().copied());
    let code = run_cli_with(argv, &mut out, &mut err);
    (code, String::from_utf8(out).unwrap(), String::from_utf8(err).unwrap())
}

fn path_str(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn stat(text: &str, key: &str) -> u64 {
    text.lines()
        .find_map(|l| l.strip_prefix(key).and_then(|rest| rest.strip_prefix('\t')))
        .unwrap_or_else(|| panic!("no {key} in {text}"))
        .parse()
        .unwrap()
}

#[test]
fn extract_matches_the_library() {
    let (_dir, corpus) = common::small_corpus(7);
    let cdx = path_str(&corpus.cdx).to_string();
    let archives = path_str(&corpus.dir).to_string();
    for mode in ["selective", "scan"] {
        let (code, out, err) = cli(&[
            "extract",
            "--cdx",
            &cdx,
            "--archive-dir",
            &archives,
            "--filter",
            "status == 200",
            "--enrich",
            "string,html-title",
            "--derived-filter",
            "payload.string",
            "contains",
            "internet",
            "--latest-per-url",
            "--mode",
            mode,
            "-o",
            "-",
        ]);
        assert_eq!(code, EXIT_OK, "{err}");
        let plan = Plan::new([corpus.cdx.clone()], corpus.dir.clone())
            .filter("status == 200")
            .unwrap()
            .enrich_with(STRING_CONTENT)
            .unwrap()
            .enrich_with(HTML_TITLE)
            .unwrap()
            .filter_derived_op("payload.string", Op::Contains, Literal::Str("internet".into()))
            .unwrap()
            .latest_per_url();
        let expected: Vec<String> = plan
            .execute_selective()
            .unwrap()
            .records
            .iter()
            .map(|r| record_to_json(r, &JsonOptions::default()))
            .collect();
        assert!(!expected.is_empty());
        assert_eq!(out.lines().collect::<Vec<_>>(), expected);
        assert_eq!(stat(&err, "count"), expected.len() as u64);
    }
}

#[test]
fn flag_order_is_step_order() {
    let (_dir, corpus) = common::small_corpus(8);
    let cdx = path_str(&corpus.cdx).to_string();
    let archives = path_str(&corpus.dir).to_string();
    let run = |args: &[&str]| {
        let mut argv = vec!["count", "--cdx", &cdx, "--archive-dir", &archives];
        argv.extend_from_slice(args);
        let (code, out, err) = cli(&argv);
        assert_eq!(code, EXIT_OK, "{err}");
        stat(&out, "count")
    };
    let latest_then_filter = run(&["--latest-per-url", "--filter", "status == 200"]);
    let filter_then_latest = run(&["--filter", "status == 200", "--latest-per-url"]);
    let base = Plan::new([corpus.cdx.clone()], corpus.dir.clone());
    assert_eq!(latest_then_filter, base.latest_per_url().filter("status == 200").unwrap().count().unwrap().0 as u64);
    assert_eq!(filter_then_latest, base.filter("status == 200").unwrap().latest_per_url().count().unwrap().0 as u64);
}

#[test]
fn count_reports_io_statistics() {
    let (_dir, corpus) = common::small_corpus(9);
    let cdx = path_str(&corpus.cdx).to_string();
    let archives = path_str(&corpus.dir).to_string();
    let (code, out, _) =
        cli(&["count", "--cdx", &cdx, "--archive-dir", &archives, "--filter", "mime == \"text/html\""]);
    assert_eq!(code, EXIT_OK);
    assert_eq!(stat(&out, "archive_bytes_read"), 0);
    assert_eq!(stat(&out, "records_fetched"), 0);
    assert_eq!(stat(&out, "cdx_lines_read"), corpus.ledger.len() as u64);
    let expected = corpus.ledger.iter().filter(|r| r.mime == "text/html").count() as u64;
    assert_eq!(stat(&out, "count"), expected);

    let (code, out, _) =
        cli(&["count", "--cdx", &cdx, "--archive-dir", &archives, "--enrich", "string", "--mode", "scan"]);
    assert_eq!(code, EXIT_OK);
    assert_eq!(stat(&out, "archive_bytes_read"), corpus.total_archive_bytes().unwrap());
}

#[test]
fn extract_writes_gzip_files() {
    let (dir, corpus) = common::small_corpus(10);
    let out_path = dir.path().join("out.json.gz");
    let (code, _, err) = cli(&[
        "extract",
        "--cdx",
        path_str(&corpus.cdx),
        "--archive-dir",
        path_str(&corpus.dir),
        "--enrich",
        "string",
        "-o",
        path_str(&out_path),
    ]);
    assert_eq!(code, EXIT_OK, "{err}");
    let mut text = String::new();
    std::io::Read::read_to_string(
        &mut flate2::read::MultiGzDecoder::new(std::fs::File::open(&out_path).unwrap()),
        &mut text,
    )
    .unwrap();
    assert_eq!(text.lines().count(), corpus.ledger.len());
}

#[test]
fn inspect_prints_the_stored_record() {
    let (_dir, corpus) = common::small_corpus(11);
    let row = common::cdx_rows(&corpus).into_iter().find(|r| r.status == Some(200)).unwrap();
    let archive = corpus.dir.join(&row.filename);
    let (code, out, err) = cli(&[
        "inspect",
        "--archive",
        path_str(&archive),
        "--offset",
        &row.offset.to_string(),
        "--length",
        &row.compressed_length.to_string(),
    ]);
    assert_eq!(code, EXIT_OK, "{err}");
    let mut file = std::fs::File::open(&archive).unwrap();
    let locator =
        RecordLocator { filename: row.filename.clone(), offset: row.offset, compressed_length: row.compressed_length };
    let record = read_record_at(&mut file, &locator).unwrap();
    let expected = warc_record_json(&record, &JsonOptions { base64_bytes: false, pretty: true });
    let printed: serde_json::Value = serde_json::from_str(&out).unwrap();
    assert_eq!(printed, expected);
    assert_eq!(printed["digest"], serde_json::json!(row.digest));
}

#[test]
fn cdx_gen_reproduces_the_index() {
    let (dir, corpus) = common::small_corpus(12);
    let out = dir.path().join("rebuilt.cdx");
    let mut args = vec!["cdx-gen".to_string(), "-o".into(), path_str(&out).into()];
    args.extend(corpus.archives.iter().map(|p| path_str(p).to_string()));
    let refs: Vec<&str> = args.iter().map(String::as_str).collect();
    let (code, stdout, err) = cli(&refs);
    assert_eq!(code, EXIT_OK, "{err}");
    assert!(stdout.contains(&format!("wrote {} CDX lines", corpus.ledger.len())));
    assert_eq!(std::fs::read_to_string(out).unwrap(), std::fs::read_to_string(&corpus.cdx).unwrap());
}

#[test]
fn gen_corpus_is_deterministic() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for d in [&a, &b] {
        let (code, _, err) =
            cli(&["gen-corpus", "-o", path_str(d.path()), "--seed", "3", "--domains", "2", "--urls-per-domain", "3"]);
        assert_eq!(code, EXIT_OK, "{err}");
    }
    let mut names: Vec<_> = std::fs::read_dir(a.path()).unwrap().map(|e| e.unwrap().file_name()).collect();
    names.sort();
    assert!(names.len() >= 3);
    for name in names {
        assert_eq!(
            std::fs::read(a.path().join(&name)).unwrap(),
            std::fs::read(b.path().join(&name)).unwrap(),
            "{name:?}"
        );
    }
}

#[test]
fn arc_corpora_extract_like_warc_corpora() {
    let dir = tempfile::tempdir().unwrap();
    let (code, _, err) = cli(&[
        "gen-corpus",
        "-o",
        path_str(dir.path()),
        "--seed",
        "4",
        "--domains",
        "2",
        "--urls-per-domain",
        "3",
        "--format",
        "arc",
    ]);
    assert_eq!(code, EXIT_OK, "{err}");
    let cdx = dir.path().join("index.cdx");
    let plan = Plan::new([cdx], dir.path()).enrich(Enrichment::parse("string").unwrap()).unwrap();
    let sel = plan.execute(&ExecOptions::default()).unwrap();
    let scan = plan.execute(&ExecOptions { mode: Mode::Scan, ..ExecOptions::default() }).unwrap();
    assert_eq!(sel.records.len(), 30);
    assert_eq!(common::json_lines(&sel.records), common::json_lines(&scan.records));
    assert!(sel.records.iter().all(|r| r.error().is_none()));
}

#[test]
fn errors_map_to_exit_codes() {
    let (code, _, err) = cli(&["count", "--archive-dir", "/tmp"]);
    assert_eq!(code, EXIT_USAGE, "{err}");
    let (code, _, err) = cli(&["count", "--cdx", "/tmp/x.cdx", "--archive-dir", "/tmp", "--filter", "status ~ 1"]);
    assert_eq!(code, EXIT_USAGE, "{err}");
    let (code, _, err) = cli(&["count", "--cdx", "/nonexistent/index.cdx", "--archive-dir", "/tmp"]);
    assert_eq!(code, EXIT_DATA);
    assert!(err.contains("/nonexistent/index.cdx"));
}

#[test]
fn binary_runs_end_to_end() {
    let dir = tempfile::tempdir().unwrap();
    let bin = env!("CARGO_BIN_EXE_cdxcorpus");
    let gen = Command::new(bin)
        .args(["gen-corpus", "-o", path_str(dir.path()), "--domains", "1", "--urls-per-domain", "2"])
        .output()
        .unwrap();
    assert!(gen.status.success());
    let count = Command::new(bin)
        .args(["count", "--cdx", path_str(&dir.path().join("index.cdx")), "--archive-dir", path_str(dir.path())])
        .output()
        .unwrap();
    assert!(count.status.success());
    assert_eq!(stat(&String::from_utf8(count.stdout).unwrap(), "count"), 10);
    let bad = Command::new(bin).arg("frobnicate").output().unwrap();
    assert_eq!(bad.status.code(), Some(EXIT_USAGE));
}
