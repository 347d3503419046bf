#ifndef CDXCORPUS_H
#define CDXCORPUS_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Execute with selective access through the CDX.
 */
#define CDXC_MODE_SELECTIVE 0

/**
 * Execute by scanning every archive record.
 */
#define CDXC_MODE_SCAN 1

/**
 * Result code of every fallible call.
 */
typedef enum CdxcStatus {
  CDXC_STATUS_OK = 0,
  CDXC_STATUS_NULL_ARGUMENT = 1,
  CDXC_STATUS_INVALID_UTF8 = 2,
  CDXC_STATUS_PARSE = 3,
  CDXC_STATUS_PLAN = 4,
  CDXC_STATUS_IO = 5,
  CDXC_STATUS_INVALID_ARGUMENT = 6,
  CDXC_STATUS_NOT_FOUND = 7,
  CDXC_STATUS_PANIC = 99,
} CdxcStatus;

/**
 * Opaque immutable plan.
 */
typedef struct CdxcPlan CdxcPlan;

/**
 * Opaque parsed CDX line.
 */
typedef struct CdxcRecord CdxcRecord;

/**
 * Counters of one plan execution.
 */
typedef struct CdxcStats {
  uint64_t cdx_lines_read;
  uint64_t records_fetched;
  uint64_t archive_bytes_read;
  uint64_t records_out;
  double wall_ms;
} CdxcStats;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or null. The pointer stays
 * valid until the next call into this library on the same thread.
 */
const char *cdxc_last_error(void);

/**
 * Releases a string returned by this library. Null is ignored.
 *
 * # Safety
 * `s` must be null or a string obtained from this library and not yet freed.
 */
void cdxc_string_free(char *s);

/**
 * Writes the SURT form of `url` to `*out`.
 *
 * # Safety
 * `url` must be a valid C string; `out` must be writable.
 */
enum CdxcStatus cdxc_surt_from_url(const char *url, char **out);

/**
 * Writes the ISO-8601 form of a 14-digit timestamp to `*out`.
 *
 * # Safety
 * `timestamp` must be a valid C string; `out` must be writable.
 */
enum CdxcStatus cdxc_timestamp_to_iso(const char *timestamp, char **out);

/**
 * Parses one 11-field CDX line into a new record handle.
 *
 * # Safety
 * `line` must be a valid C string; `out` must be writable.
 */
enum CdxcStatus cdxc_cdx_parse(const char *line, struct CdxcRecord **out);

/**
 * Writes a metadata field as text to `*out`. Field names: surtUrl,
 * timestamp, originalUrl, mime, status, digest, redirectUrl, meta,
 * compressedLength, offset, filename. Absent optional fields yield
 * `CDXC_STATUS_NOT_FOUND`.
 *
 * # Safety
 * `record` must be a live handle; `field` a valid C string; `out` writable.
 */
enum CdxcStatus cdxc_cdx_get(const struct CdxcRecord *record, const char *field, char **out);

/**
 * Writes the record's archive locator.
 *
 * # Safety
 * `record` must be a live handle; the out-pointers must be writable.
 */
enum CdxcStatus cdxc_cdx_locator(const struct CdxcRecord *record,
                                 uint64_t *offset,
                                 uint64_t *compressed_length);

/**
 * Serializes the record back to a CDX line.
 *
 * # Safety
 * `record` must be a live handle; `out` writable.
 */
enum CdxcStatus cdxc_cdx_to_line(const struct CdxcRecord *record, char **out);

/**
 * Releases a record handle. Null is ignored.
 *
 * # Safety
 * `record` must be null or a handle from [`cdxc_cdx_parse`] not yet freed.
 */
void cdxc_cdx_free(struct CdxcRecord *record);

/**
 * Creates an empty plan over one CDX file and its archive directory. No IO
 * happens until the plan is executed.
 *
 * # Safety
 * Both paths must be valid C strings; `out` writable.
 */
enum CdxcStatus cdxc_plan_new(const char *cdx_path, const char *archive_dir, struct CdxcPlan **out);

/**
 * Appends a filter expression, e.g. `status == 200 && mime == "text/html"`.
 *
 * # Safety
 * `plan` must be a live handle; `expr` a valid C string; `out` writable.
 */
enum CdxcStatus cdxc_plan_filter(const struct CdxcPlan *plan,
                                 const char *expr,
                                 struct CdxcPlan **out);

/**
 * Appends an enrichment: `response`, `string`, `html-title` or
 * `map:length(<path>)`.
 *
 * # Safety
 * `plan` must be a live handle; `spec` a valid C string; `out` writable.
 */
enum CdxcStatus cdxc_plan_enrich(const struct CdxcPlan *plan,
                                 const char *spec,
                                 struct CdxcPlan **out);

/**
 * Appends a latest-capture-per-URL step.
 *
 * # Safety
 * `plan` must be a live handle; `out` writable.
 */
enum CdxcStatus cdxc_plan_latest_per_url(const struct CdxcPlan *plan, struct CdxcPlan **out);

/**
 * Executes the plan and writes the number of output records. `stats` may be
 * null. `workers == 0` uses all available cores.
 *
 * # Safety
 * `plan` must be a live handle; `count` writable; `stats` null or writable.
 */
enum CdxcStatus cdxc_plan_count(const struct CdxcPlan *plan,
                                uint32_t mode,
                                uint32_t workers,
                                uint64_t *count,
                                struct CdxcStats *stats);

/**
 * Executes the plan and writes JSON lines to `path` (gzip when it ends in
 * `.gz`). `pretty` and `base64_bytes` are booleans.
 *
 * # Safety
 * `plan` must be a live handle; `path` a valid C string; `stats` null or
 * writable.
 */
enum CdxcStatus cdxc_plan_save_json(const struct CdxcPlan *plan,
                                    const char *path,
                                    uint32_t mode,
                                    uint32_t workers,
                                    bool pretty,
                                    bool base64_bytes,
                                    struct CdxcStats *stats);

/**
 * Number of steps recorded in the plan.
 *
 * # Safety
 * `plan` must be null or a live handle.
 */
size_t cdxc_plan_step_count(const struct CdxcPlan *plan);

/**
 * Releases a plan handle. Null is ignored.
 *
 * # Safety
 * `plan` must be null or a plan handle not yet freed.
 */
void cdxc_plan_free(struct CdxcPlan *plan);

/**
 * Reads the record stored at (`offset`, `length`) of `archive_path` and
 * writes a JSON description to `*out`.
 *
 * # Safety
 * `archive_path` must be a valid C string; `out` writable.
 */
enum CdxcStatus cdxc_read_record_json(const char *archive_path,
                                      uint64_t offset,
                                      uint64_t length,
                                      char **out);

/**
 * Generates a synthetic corpus (archives, `ledger.csv`, `index.cdx`) in
 * `out_dir` with default settings apart from the given sizes and seed.
 *
 * # Safety
 * `out_dir` must be a valid C string; `records` null or writable.
 */
enum CdxcStatus cdxc_generate_corpus(const char *out_dir,
                                     uint64_t seed,
                                     uint32_t domains,
                                     uint32_t urls_per_domain,
                                     uint32_t captures_per_url,
                                     uint64_t *records);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* CDXCORPUS_H */
