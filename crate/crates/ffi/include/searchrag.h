#ifndef SEARCHRAG_H
#define SEARCHRAG_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result codes shared by every entry point.
 */
typedef enum SrStatus {
  SR_STATUS_OK = 0,
  /**
   * A required pointer argument was null.
   */
  SR_STATUS_NULL_ARGUMENT = 1,
  /**
   * A string argument was not valid UTF-8.
   */
  SR_STATUS_INVALID_UTF8 = 2,
  /**
   * The configuration JSON or a run parameter was rejected.
   */
  SR_STATUS_INVALID_CONFIG = 3,
  /**
   * The question or dataset input could not be parsed.
   */
  SR_STATUS_INVALID_INPUT = 4,
  /**
   * The LLM or search backend failed in a way that aborted the call.
   */
  SR_STATUS_BACKEND = 5,
  /**
   * The search provider refused further queries; the run was aborted.
   */
  SR_STATUS_QUOTA_ABORT = 6,
  /**
   * A Rust panic was caught at the boundary.
   */
  SR_STATUS_INTERNAL = 7,
} SrStatus;

/**
 * Opaque pipeline handle.
 */
typedef struct SrPipeline SrPipeline;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Creates a pipeline from a JSON configuration.
 *
 * The object has a required `backends` member (`llm`, `search`,
 * `cache_dir`, `corpus`, `corpus_top_n`) and optional `run`,
 * `parallelism`, `prompt_dir` and `label` members.
 *
 * # Safety
 * `config_json` must be a NUL-terminated string and `out` a valid pointer.
 */
enum SrStatus sr_pipeline_new(const char *config_json, struct SrPipeline **out);

/**
 * Releases a pipeline. Null is ignored.
 *
 * # Safety
 * `pipeline` must come from [`sr_pipeline_new`] and not be used afterwards.
 */
void sr_pipeline_free(struct SrPipeline *pipeline);

/**
 * Runs one question given as a single dataset line and writes the full
 * trace as JSON to `out_json`.
 *
 * # Safety
 * All pointers must be valid; `out_json` receives a string to be released
 * with [`sr_string_free`].
 */
enum SrStatus sr_pipeline_run_question(const struct SrPipeline *pipeline,
                                       const char *question_json,
                                       char **out_json);

/**
 * Runs a JSONL dataset and writes the run report as JSON to `out_json`.
 *
 * # Safety
 * All pointers must be valid; `out_json` receives a string to be released
 * with [`sr_string_free`].
 */
enum SrStatus sr_pipeline_run_dataset(const struct SrPipeline *pipeline,
                                      const char *dataset_jsonl,
                                      char **out_json);

/**
 * Entropy in bits of `len` probabilities plus a residual bucket.
 *
 * # Safety
 * `probs` must point to `len` readable doubles (may be null when `len` is 0)
 * and `out` must be valid.
 */
enum SrStatus sr_entropy_bits(const double *probs, uintptr_t len, double residual, double *out);

/**
 * Releases a string returned by this library. Null is ignored.
 *
 * # Safety
 * `s` must come from this library and not be used afterwards.
 */
void sr_string_free(char *s);

/**
 * The last error recorded on the calling thread, or null if the most recent
 * call succeeded. Valid until the next call into this library on the thread.
 */
const char *sr_last_error_message(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *sr_version(void);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* SEARCHRAG_H */
