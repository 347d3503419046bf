use std::ffi::{c_char, CStr, CString};
use std::ptr;

use cdxcorpus_ffi::*;

fn take_string(p: *mut c_char) -> String {
    assert!(!p.is_null());
    let s = unsafe { CStr::from_ptr(p) }.to_str().unwrap().to_string();
    unsafe { cdxc_string_free(p) };
    s
}

fn last_error() -> String {
    let p = cdxc_last_error();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

const LINE: &str = "com,example)/jcdl 20160117113253 http://example.com/jcdl text/html 200 \
                    RKMS6XLYED4G8POFQUIN37WDEWYLD9Z - - 12345 67890 archive.warc.gz";

#[test]
fn surt_and_timestamp() {
    let url = CString::new("HTTP://Sub.Example.COM:8080/A/b?q=1").unwrap();
    let mut out = ptr::null_mut();
    assert_eq!(unsafe { cdxc_surt_from_url(url.as_ptr(), &mut out) }, CdxcStatus::Ok);
    assert_eq!(take_string(out), "com,example,sub:8080)/A/b?q=1");

    let ts = CString::new("20160117113253").unwrap();
    assert_eq!(unsafe { cdxc_timestamp_to_iso(ts.as_ptr(), &mut out) }, CdxcStatus::Ok);
    assert_eq!(take_string(out), "2016-01-17T11:32:53.000+00:00");

    let bad = CString::new("2016").unwrap();
    assert_eq!(unsafe { cdxc_timestamp_to_iso(bad.as_ptr(), &mut out) }, CdxcStatus::Parse);
    assert!(last_error().contains("2016"));
}

#[test]
fn null_and_utf8_arguments_are_rejected() {
    let mut out = ptr::null_mut();
    assert_eq!(unsafe { cdxc_surt_from_url(ptr::null(), &mut out) }, CdxcStatus::NullArgument);
    assert!(last_error().contains("url"));
    let url = CString::new("http://a/").unwrap();
    assert_eq!(unsafe { cdxc_surt_from_url(url.as_ptr(), ptr::null_mut()) }, CdxcStatus::NullArgument);
    let latin1 = [0x68u8, 0xe9, 0];
    assert_eq!(unsafe { cdxc_surt_from_url(latin1.as_ptr().cast(), &mut out) }, CdxcStatus::InvalidUtf8);
    unsafe {
        cdxc_string_free(ptr::null_mut());
        cdxc_cdx_free(ptr::null_mut());
        cdxc_plan_free(ptr::null_mut());
    }
}

#[test]
fn cdx_record_handle() {
    let line = CString::new(LINE).unwrap();
    let mut rec = ptr::null_mut();
    assert_eq!(unsafe { cdxc_cdx_parse(line.as_ptr(), &mut rec) }, CdxcStatus::Ok);
    let get = |field: &str| -> Result<String, CdxcStatus> {
        let f = CString::new(field).unwrap();
        let mut out = ptr::null_mut();
        match unsafe { cdxc_cdx_get(rec, f.as_ptr(), &mut out) } {
            CdxcStatus::Ok => Ok(take_string(out)),
            status => Err(status),
        }
    };
    assert_eq!(get("surtUrl").unwrap(), "com,example)/jcdl");
    assert_eq!(get("status").unwrap(), "200");
    assert_eq!(get("filename").unwrap(), "archive.warc.gz");
    assert_eq!(get("redirectUrl"), Err(CdxcStatus::NotFound));
    let (mut offset, mut length) = (0u64, 0u64);
    assert_eq!(unsafe { cdxc_cdx_locator(rec, &mut offset, &mut length) }, CdxcStatus::Ok);
    assert_eq!((offset, length), (67890, 12345));
    let mut out = ptr::null_mut();
    assert_eq!(unsafe { cdxc_cdx_to_line(rec, &mut out) }, CdxcStatus::Ok);
    assert_eq!(take_string(out), LINE);
    unsafe { cdxc_cdx_free(rec) };

    let short = CString::new("a b c").unwrap();
    assert_eq!(unsafe { cdxc_cdx_parse(short.as_ptr(), &mut rec) }, CdxcStatus::Parse);
}

#[test]
fn plans_over_a_generated_corpus() {
    let dir = tempfile::tempdir().unwrap();
    let dir_c = CString::new(dir.path().to_str().unwrap()).unwrap();
    let mut records = 0u64;
    assert_eq!(unsafe { cdxc_generate_corpus(dir_c.as_ptr(), 3, 2, 3, 2, &mut records) }, CdxcStatus::Ok);
    assert_eq!(records, 12);

    let cdx = CString::new(dir.path().join("index.cdx").to_str().unwrap()).unwrap();
    let mut base = ptr::null_mut();
    assert_eq!(unsafe { cdxc_plan_new(cdx.as_ptr(), dir_c.as_ptr(), &mut base) }, CdxcStatus::Ok);
    let expr = CString::new("status == 200").unwrap();
    let mut filtered = ptr::null_mut();
    assert_eq!(unsafe { cdxc_plan_filter(base, expr.as_ptr(), &mut filtered) }, CdxcStatus::Ok);
    assert_eq!(unsafe { cdxc_plan_step_count(base) }, 0);
    assert_eq!(unsafe { cdxc_plan_step_count(filtered) }, 1);

    let mut count = 0u64;
    let mut stats = CdxcStats::default();
    assert_eq!(unsafe { cdxc_plan_count(filtered, CDXC_MODE_SELECTIVE, 1, &mut count, &mut stats) }, CdxcStatus::Ok);
    assert_eq!(stats.archive_bytes_read, 0);
    assert_eq!(stats.cdx_lines_read, 12);
    assert_eq!(stats.records_out, count);

    let spec = CString::new("string").unwrap();
    let mut enriched = ptr::null_mut();
    assert_eq!(unsafe { cdxc_plan_enrich(filtered, spec.as_ptr(), &mut enriched) }, CdxcStatus::Ok);
    let mut latest = ptr::null_mut();
    assert_eq!(unsafe { cdxc_plan_latest_per_url(enriched, &mut latest) }, CdxcStatus::Ok);
    let out_path = CString::new(dir.path().join("out.json").to_str().unwrap()).unwrap();
    let mut scan_stats = CdxcStats::default();
    assert_eq!(
        unsafe { cdxc_plan_save_json(latest, out_path.as_ptr(), CDXC_MODE_SCAN, 0, false, false, &mut scan_stats) },
        CdxcStatus::Ok
    );
    let text = std::fs::read_to_string(dir.path().join("out.json")).unwrap();
    assert_eq!(text.lines().count() as u64, scan_stats.records_out);
    assert!(text.lines().all(|l| l.starts_with("{\"record\":")));
    assert_eq!(unsafe { cdxc_plan_count(latest, 7, 0, &mut count, ptr::null_mut()) }, CdxcStatus::InvalidArgument);

    let unknown = CString::new("entities").unwrap();
    let mut bad = ptr::null_mut();
    assert_eq!(unsafe { cdxc_plan_enrich(filtered, unknown.as_ptr(), &mut bad) }, CdxcStatus::Plan);
    assert!(bad.is_null());
    assert!(last_error().contains("entities"));

    unsafe {
        cdxc_plan_free(latest);
        cdxc_plan_free(enriched);
        cdxc_plan_free(filtered);
        cdxc_plan_free(base);
    }
}

#[test]
fn read_record_at_a_cdx_locator() {
    let dir = tempfile::tempdir().unwrap();
    let dir_c = CString::new(dir.path().to_str().unwrap()).unwrap();
    assert_eq!(unsafe { cdxc_generate_corpus(dir_c.as_ptr(), 5, 1, 2, 1, ptr::null_mut()) }, CdxcStatus::Ok);
    let text = std::fs::read_to_string(dir.path().join("index.cdx")).unwrap();
    let line = text.lines().nth(1).unwrap();
    let fields: Vec<&str> = line.split(' ').collect();
    let archive = CString::new(dir.path().join(fields[10]).to_str().unwrap()).unwrap();
    let mut out = ptr::null_mut();
    let status = unsafe {
        cdxc_read_record_json(archive.as_ptr(), fields[9].parse().unwrap(), fields[8].parse().unwrap(), &mut out)
    };
    assert_eq!(status, CdxcStatus::Ok);
    let json = take_string(out);
    assert!(json.contains(&format!("\"digest\":\"{}\"", fields[5])), "{json}");

    let status = unsafe { cdxc_read_record_json(archive.as_ptr(), 1, 10, &mut out) };
    assert_eq!(status, CdxcStatus::Parse);
}
