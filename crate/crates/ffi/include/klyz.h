#ifndef KLYZ_H
#define KLYZ_H

/* Generated by cbindgen from src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result of every call.
 */
typedef enum KlyzStatus {
  KLYZ_STATUS_OK = 0,
  KLYZ_STATUS_NULL_POINTER = 1,
  KLYZ_STATUS_INVALID_UTF8 = 2,
  KLYZ_STATUS_INVALID_CONFIG = 3,
  KLYZ_STATUS_FLOW_FAILED = 4,
  KLYZ_STATUS_OUT_OF_RANGE = 5,
  KLYZ_STATUS_BUFFER_TOO_SMALL = 6,
} KlyzStatus;

/**
 * A finished run; opaque to C.
 */
typedef struct KlyzRun KlyzRun;

/**
 * Diagnostics of one recorded sample.
 */
typedef struct KlyzSample {
  double t;
  double sup_rm;
  double sup_ric;
  double sup_alpha;
  double sup_scalar;
  double area;
  double min_metric_eigenvalue;
} KlyzSample;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Validate `config_toml`, integrate it, and store a new handle in `out`.
 * Nothing is written to disk.
 *
 * # Safety
 * `config_toml` must be a NUL-terminated string and `out` a valid pointer.
 */
enum KlyzStatus klyz_run_from_toml(const char *config_toml, struct KlyzRun **out);

/**
 * Release a handle. Null is ignored.
 *
 * # Safety
 * `run` must come from [`klyz_run_from_toml`] and not be used afterwards.
 */
void klyz_run_free(struct KlyzRun *run);

/**
 * Process exit code of the run: 0 reached the final time, 3 positivity
 * lost, 4 blow-up threshold, 5 non-finite values.
 *
 * # Safety
 * `run` must be a live handle and `code` a valid pointer.
 */
enum KlyzStatus klyz_run_exit_code(const struct KlyzRun *run, int32_t *code);

/**
 * Number of recorded samples.
 *
 * # Safety
 * `run` must be a live handle and `count` a valid pointer.
 */
enum KlyzStatus klyz_run_sample_count(const struct KlyzRun *run, size_t *count);

/**
 * Diagnostics of sample `index`.
 *
 * # Safety
 * `run` must be a live handle and `out` a valid pointer.
 */
enum KlyzStatus klyz_run_sample(const struct KlyzRun *run, size_t index, struct KlyzSample *out);

/**
 * Copy field `field` (0 or 1) of sample `index` into `buf`. The field has
 * as many values as grid points, row-major. With a null `buf` only `len`
 * is set to the required length.
 *
 * # Safety
 * `run` must be a live handle, `len` a valid pointer, and `buf` null or
 * valid for `*len` doubles.
 */
enum KlyzStatus klyz_run_field(const struct KlyzRun *run,
                               size_t index,
                               uint32_t field,
                               double *buf,
                               size_t *len);

/**
 * Copy the last error message of this thread into `buf` as a
 * NUL-terminated string, truncating to `len` bytes. Returns the full
 * message length without the terminator.
 *
 * # Safety
 * `buf` must be null or valid for `len` bytes.
 */
size_t klyz_last_error(char *buf, size_t len);

/**
 * Library version as a static NUL-terminated string.
 */
const char *klyz_version(void);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* KLYZ_H */
