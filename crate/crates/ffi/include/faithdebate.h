#ifndef FAITHDEBATE_H
#define FAITHDEBATE_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum FdStatus {
  FD_STATUS_OK = 0,
  FD_STATUS_NULL_ARGUMENT = 1,
  FD_STATUS_INVALID_UTF8 = 2,
  FD_STATUS_INVALID_JSON = 3,
  FD_STATUS_INVALID_LABEL = 4,
  FD_STATUS_INVALID_CONFIG = 5,
  FD_STATUS_LENGTH_MISMATCH = 6,
  FD_STATUS_UNDEFINED_RATE = 7,
  FD_STATUS_DEGENERATE_DATA = 8,
  FD_STATUS_PARSE_FAILURE = 9,
  FD_STATUS_AUTH_ERROR = 10,
  FD_STATUS_BACKEND_UNAVAILABLE = 11,
  FD_STATUS_EVALUATION_FAILED = 12,
  FD_STATUS_PANIC = 13,
} FdStatus;

/**
 * Debate engine bound to a backend. Safe to use from several threads.
 */
typedef struct FdEngine FdEngine;

/**
 * Confusion counts with positive = unfaithful.
 */
typedef struct FdConfusion {
  uint64_t tp;
  uint64_t fp;
  uint64_t tn;
  uint64_t fn_;
} FdConfusion;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failure on this thread, or null. Valid until the next
 * failing call on the same thread; do not free.
 */
const char *fd_last_error(void);

/**
 * Library version as a static string; do not free.
 */
const char *fd_version(void);

/**
 * # Safety
 * `s` is null or a string returned by this library and not yet freed.
 */
void fd_string_free(char *s);

/**
 * # Safety
 * `preds` and `golds` point to `len` readable bytes; `out` is valid for a write.
 */
enum FdStatus fd_confusion(const uint8_t *preds,
                           const uint8_t *golds,
                           size_t len,
                           struct FdConfusion *out);

/**
 * Balanced accuracy in `[0, 1]`.
 *
 * # Safety
 * As for [`fd_confusion`].
 */
enum FdStatus fd_balanced_accuracy(const uint8_t *preds,
                                   const uint8_t *golds,
                                   size_t len,
                                   double *out);

/**
 * Nominal two-rater Krippendorff's alpha.
 *
 * # Safety
 * `a` and `b` point to `len` readable bytes; `out` is valid for a write.
 */
enum FdStatus fd_krippendorff_alpha(const uint8_t *a, const uint8_t *b, size_t len, double *out);

/**
 * Parses an agent response into an argument, returned as JSON.
 *
 * # Safety
 * `text` is a NUL-terminated string; `out_json` is valid for a write.
 */
enum FdStatus fd_parse_argument(const char *text,
                                uint32_t agent_id,
                                uint32_t round,
                                char **out_json);

/**
 * The ambiguity taxonomy as JSON.
 *
 * # Safety
 * `out_json` is valid for a write.
 */
enum FdStatus fd_taxonomy_json(char **out_json);

/**
 * The curated guideline set as JSON.
 *
 * # Safety
 * `out_json` is valid for a write.
 */
enum FdStatus fd_default_guidelines_json(char **out_json);

/**
 * Engine over a scripted backend. `spec_json` uses the scripted spec format;
 * `config_json` is a debate config or null for the defaults.
 *
 * # Safety
 * String arguments are NUL-terminated or null where allowed; `out` is valid for a write.
 */
enum FdStatus fd_engine_new_scripted(const char *spec_json,
                                     const char *config_json,
                                     struct FdEngine **out);

/**
 * Engine over an HTTP chat-completions backend. `http_json` holds
 * `base_url`, `model` and optionally `timeout_s`. A null `api_key` reads the
 * key from the environment; a missing key fails with `AuthError`.
 *
 * # Safety
 * String arguments are NUL-terminated or null where allowed; `out` is valid for a write.
 */
enum FdStatus fd_engine_new_http(const char *http_json,
                                 const char *api_key,
                                 const char *config_json,
                                 struct FdEngine **out);

/**
 * Runs all sessions for one record (JSON in the canonical record format) and
 * returns `{"outcome": ..., "transcripts": [...]}` as JSON.
 *
 * # Safety
 * `engine` is a live handle; `record_json` is NUL-terminated; `out_json` is valid for a write.
 */
enum FdStatus fd_engine_evaluate(const struct FdEngine *engine,
                                 const char *record_json,
                                 char **out_json);

/**
 * # Safety
 * `engine` is null or a handle from this library that has not been freed.
 */
void fd_engine_free(struct FdEngine *engine);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* FAITHDEBATE_H */
