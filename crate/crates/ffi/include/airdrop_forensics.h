#ifndef AIRDROP_FORENSICS_H
#define AIRDROP_FORENSICS_H

/* Generated by cbindgen from crates/ffi. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum AfxAssortativity {
  AFX_ASSORTATIVITY_OUT_IN = 0,
  AFX_ASSORTATIVITY_TOTAL_TOTAL = 1,
} AfxAssortativity;

typedef enum AfxStage {
  AFX_STAGE_INGEST = 0,
  AFX_STAGE_GRAPH = 1,
  AFX_STAGE_CLUSTER = 2,
  AFX_STAGE_DETECT = 3,
  AFX_STAGE_ELIGIBILITY = 4,
  AFX_STAGE_STATS = 5,
  AFX_STAGE_REPORT = 6,
} AfxStage;

typedef enum AfxStatus {
  AFX_STATUS_OK = 0,
  AFX_STATUS_NULL_POINTER = 1,
  AFX_STATUS_INVALID_ARGUMENT = 2,
  AFX_STATUS_CONFIG_INVALID = 3,
  AFX_STATUS_MISSING_ARTIFACT = 4,
  AFX_STATUS_VALIDATION_FAILED = 5,
  /**
   * The metric is undefined on this input (no edges, zero variance).
   */
  AFX_STATUS_UNDEFINED = 6,
  AFX_STATUS_INTERNAL = 7,
  AFX_STATUS_PANIC = 8,
} AfxStatus;

/**
 * Directed graph over nodes `0..n`.
 */
typedef struct AfxGraph AfxGraph;

/**
 * Pipeline bound to one run configuration.
 */
typedef struct AfxPipeline AfxPipeline;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or NULL. The pointer
 * stays valid until the next call on the same thread.
 */
const char *afx_last_error_message(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *afx_version(void);

/**
 * Releases a string returned by this library. NULL is ignored.
 *
 * # Safety
 * `s` must come from this library and not be freed twice.
 */
void afx_string_free(char *s);

/**
 * Builds a graph from `m` edges `from[i] -> to[i]`. Self-loops and repeated
 * edges are dropped.
 *
 * # Safety
 * `from` and `to` must point to `m` readable values (may be NULL when `m` is 0).
 */
enum AfxStatus afx_graph_new(size_t n,
                             const uint32_t *from,
                             const uint32_t *to,
                             size_t m,
                             struct AfxGraph **graph);

/**
 * # Safety
 * `graph` must come from [`afx_graph_new`] and not be freed twice.
 */
void afx_graph_free(struct AfxGraph *graph);

/**
 * # Safety
 * `graph` must be a live handle; `edges` must be writable.
 */
enum AfxStatus afx_graph_edge_count(const struct AfxGraph *graph, size_t *edges);

/**
 * # Safety
 * `graph` must be a live handle; `value` must be writable.
 */
enum AfxStatus afx_graph_reciprocity(const struct AfxGraph *graph, double *value);

/**
 * # Safety
 * `graph` must be a live handle; `value` must be writable.
 */
enum AfxStatus afx_graph_assortativity(const struct AfxGraph *graph,
                                       enum AfxAssortativity variant,
                                       double *value);

/**
 * # Safety
 * `graph` must be a live handle; `count` must be writable.
 */
enum AfxStatus afx_graph_attracting_components(const struct AfxGraph *graph, size_t *count);

/**
 * Weighted cosine distance between two operation sets given as bitmasks
 * (bit 0 upward: buy, sell, lp_add, lp_remove, stake, unstake, send, receive).
 * `weights` points to 8 positive values, or is NULL for uniform weights.
 *
 * # Safety
 * `weights` must be NULL or point to 8 readable doubles; `value` must be writable.
 */
enum AfxStatus afx_cosine_distance(uint8_t a, uint8_t b, const double *weights, double *value);

/**
 * Generates a synthetic corpus from a JSON scenario into `dir`, along with
 * ground truth and a `run.toml` for [`afx_pipeline_open`].
 *
 * # Safety
 * Both arguments must be NUL-terminated strings.
 */
enum AfxStatus afx_synth_write(const char *spec_json, const char *dir);

/**
 * Opens a run configuration (TOML file).
 *
 * # Safety
 * `config_path` must be a NUL-terminated string; `pipeline` must be writable.
 */
enum AfxStatus afx_pipeline_open(const char *config_path, struct AfxPipeline **pipeline);

/**
 * # Safety
 * `pipeline` must come from [`afx_pipeline_open`] and not be freed twice.
 */
void afx_pipeline_free(struct AfxPipeline *pipeline);

/**
 * # Safety
 * `pipeline` must be a live handle; `dir` a NUL-terminated string.
 */
enum AfxStatus afx_pipeline_set_out_dir(struct AfxPipeline *pipeline, const char *dir);

/**
 * # Safety
 * `pipeline` must be a live handle.
 */
enum AfxStatus afx_pipeline_run_stage(const struct AfxPipeline *pipeline, enum AfxStage stage);

/**
 * # Safety
 * `pipeline` must be a live handle.
 */
enum AfxStatus afx_pipeline_run_all(const struct AfxPipeline *pipeline);

/**
 * Report assembled from the stage artifacts, as JSON. Free the string with
 * [`afx_string_free`].
 *
 * # Safety
 * `pipeline` must be a live handle; `json` must be writable.
 */
enum AfxStatus afx_pipeline_report_json(const struct AfxPipeline *pipeline, char **json);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* AIRDROP_FORENSICS_H */
