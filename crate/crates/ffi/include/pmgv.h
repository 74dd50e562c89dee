#ifndef PMGV_H
#define PMGV_H

/* Generated by cbindgen from crates/ffi. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum PmgvStatus {
  PMGV_STATUS_OK = 0,
  PMGV_STATUS_NULL_POINTER = 1,
  PMGV_STATUS_INVALID_UTF8 = 2,
  PMGV_STATUS_CONFIG = 3,
  PMGV_STATUS_DOMAIN = 4,
  PMGV_STATUS_PROTOCOL = 5,
  PMGV_STATUS_FRAME = 6,
  PMGV_STATUS_NETWORK = 7,
  PMGV_STATUS_IO = 8,
  /**
   * The output buffer was too small; `needed` holds the required size.
   */
  PMGV_STATUS_BUFFER_TOO_SMALL = 9,
  /**
   * The session has not been run yet, or has no sifted bits.
   */
  PMGV_STATUS_NO_DATA = 10,
  PMGV_STATUS_PANIC = 11,
} PmgvStatus;

typedef enum PmgvRole {
  PMGV_ROLE_ALICE = 0,
  PMGV_ROLE_BOB = 1,
} PmgvRole;

typedef enum PmgvCorrelation {
  PMGV_CORRELATION_C1 = 1,
  PMGV_CORRELATION_C2 = 2,
  PMGV_CORRELATION_C3 = 3,
  PMGV_CORRELATION_C4 = 4,
} PmgvCorrelation;

/**
 * Opaque session handle.
 */
typedef struct PmgvSession PmgvSession;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failure on this thread, or null. The pointer stays
 * valid until the next failing call on the same thread.
 */
const char *pmgv_last_error(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *pmgv_version(void);

/**
 * Parses and validates a JSON session config. On success `*out` owns a new
 * handle that must be released with [`pmgv_session_free`].
 *
 * # Safety
 * `config_json` must be a NUL-terminated string; `out` must be valid for
 * one write.
 */
enum PmgvStatus pmgv_session_new(const char *config_json, struct PmgvSession **out);

/**
 * # Safety
 * `session` must be null or a handle from [`pmgv_session_new`] that has not
 * been freed.
 */
void pmgv_session_free(struct PmgvSession *session);

/**
 * Runs the configured session. Running again replaces the previous result
 * with an identical one.
 *
 * # Safety
 * `session` must be a live handle.
 */
enum PmgvStatus pmgv_session_run(struct PmgvSession *session);

/**
 * Raw round count and sifted key length of a finished run.
 *
 * # Safety
 * `session` must be a live handle; the output pointers must be valid.
 */
enum PmgvStatus pmgv_session_counts(const struct PmgvSession *session,
                                    uint64_t *raw_count,
                                    uint64_t *sifted_count);

/**
 * QBER of a finished run; [`PmgvStatus::NoData`] for an empty sifted key.
 *
 * # Safety
 * `session` must be a live handle; `qber` must be valid for one write.
 */
enum PmgvStatus pmgv_session_qber(const struct PmgvSession *session, double *qber);

/**
 * Copies one party's sifted key as a `0`/`1` string.
 *
 * # Safety
 * `session` must be a live handle; `buf` must be valid for `len` bytes.
 */
enum PmgvStatus pmgv_session_key(const struct PmgvSession *session,
                                 enum PmgvRole role,
                                 char *buf,
                                 size_t len,
                                 size_t *needed);

/**
 * Copies the JSON session report.
 *
 * # Safety
 * `session` must be a live handle; `buf` must be valid for `len` bytes.
 */
enum PmgvStatus pmgv_session_report_json(const struct PmgvSession *session,
                                         char *buf,
                                         size_t len,
                                         size_t *needed);

/**
 * Copies the per-round audit log, one JSON object per line.
 *
 * # Safety
 * `session` must be a live handle; `buf` must be valid for `len` bytes.
 */
enum PmgvStatus pmgv_session_audit_jsonl(const struct PmgvSession *session,
                                         char *buf,
                                         size_t len,
                                         size_t *needed);

/**
 * Closed-form correlation at the given angles (degrees).
 *
 * # Safety
 * `out` must be valid for one write.
 */
enum PmgvStatus pmgv_analytic_correlation(enum PmgvCorrelation corr,
                                          double theta1_deg,
                                          double theta2_deg,
                                          double *out);

/**
 * Monte-Carlo correlation estimate over `n_samples` random phases.
 *
 * # Safety
 * `out` must be valid for one write.
 */
enum PmgvStatus pmgv_estimate_correlation(enum PmgvCorrelation corr,
                                          double theta1_deg,
                                          double theta2_deg,
                                          uint64_t n_samples,
                                          uint64_t seed,
                                          double *out);

/**
 * Raw key bits per second.
 *
 * # Safety
 * `out` must be valid for one write.
 */
enum PmgvStatus pmgv_raw_key_rate(double pulse_rate_hz,
                                  double success_prob,
                                  double total_detection_efficiency,
                                  double *out);

/**
 * Secret key bits per second for a post-processing factor in (0, 1].
 *
 * # Safety
 * `out` must be valid for one write.
 */
enum PmgvStatus pmgv_secret_key_rate(double raw_rate, double factor, double *out);

/**
 * Parses one wire line (without the newline) and copies its canonical
 * encoding. [`PmgvStatus::Frame`] with a typed message on rejection.
 *
 * # Safety
 * `line` must be a NUL-terminated string; `buf` must be valid for `len`
 * bytes.
 */
enum PmgvStatus pmgv_frame_canonicalize(const char *line, char *buf, size_t len, size_t *needed);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* PMGV_H */
