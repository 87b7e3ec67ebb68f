#ifndef XLNAV_H
#define XLNAV_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum XlnavStatus {
  XLNAV_STATUS_OK = 0,
  XLNAV_STATUS_NULL_POINTER = 1,
  XLNAV_STATUS_INVALID_ARGUMENT = 2,
  XLNAV_STATUS_IO = 3,
  XLNAV_STATUS_FORMAT = 4,
  XLNAV_STATUS_REGIME = 5,
  XLNAV_STATUS_PANIC = 6,
} XlnavStatus;

/**
 * Trained agent parameters.
 */
typedef struct XlnavCheckpoint XlnavCheckpoint;

/**
 * Worlds, splits and vocabulary read from a data directory.
 */
typedef struct XlnavContext XlnavContext;

/**
 * A navigation graph.
 */
typedef struct XlnavWorld XlnavWorld;

/**
 * Navigation metrics of one episode, or means over a split.
 */
typedef struct XlnavMetrics {
  double pl;
  double ne;
  double sr;
  double osr;
  double spl;
  double cls;
} XlnavMetrics;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version as a static NUL-terminated string.
 */
const char *xlnav_version(void);

/**
 * Message of the last failed call on this thread, or an empty string. The
 * pointer stays valid until the next xlnav call on the same thread.
 */
const char *xlnav_last_error_message(void);

/**
 * Generates a world; `n_viewpoints` of 0 keeps the default size.
 *
 * # Safety
 * `out` must be valid for writing one pointer.
 */
enum XlnavStatus xlnav_world_generate(uint64_t seed, size_t n_viewpoints, struct XlnavWorld **out);

/**
 * # Safety
 * `json` must be a NUL-terminated string; `out` valid for one pointer.
 */
enum XlnavStatus xlnav_world_from_json(const char *json, struct XlnavWorld **out);

/**
 * Serializes a world; release the string with `xlnav_string_free`.
 *
 * # Safety
 * `world` must come from this library; `out` valid for one pointer.
 */
enum XlnavStatus xlnav_world_to_json(const struct XlnavWorld *world, char **out);

/**
 * Number of viewpoints, 0 for a null handle.
 *
 * # Safety
 * `world` must be null or come from this library.
 */
size_t xlnav_world_num_viewpoints(const struct XlnavWorld *world);

/**
 * Shortest-path distance in meters.
 *
 * # Safety
 * `world` must come from this library; `out` valid for one double.
 */
enum XlnavStatus xlnav_world_distance(const struct XlnavWorld *world,
                                      size_t a,
                                      size_t b,
                                      double *out);

/**
 * Scores a predicted path against a reference path whose last viewpoint
 * is the goal.
 *
 * # Safety
 * The arrays must hold `n_predicted` and `n_reference` elements; `out`
 * must be valid for one `XlnavMetrics`.
 */
enum XlnavStatus xlnav_evaluate_path(const struct XlnavWorld *world,
                                     const size_t *predicted,
                                     size_t n_predicted,
                                     const size_t *reference,
                                     size_t n_reference,
                                     double radius,
                                     struct XlnavMetrics *out);

/**
 * # Safety
 * `world` must be null or come from this library, and not be used after.
 */
void xlnav_world_free(struct XlnavWorld *world);

/**
 * # Safety
 * `s` must be null or a string returned by this library.
 */
void xlnav_string_free(char *s);

/**
 * Loads a data directory written by `xlnav gen-data`, filling the
 * translation cache with the default translator when needed.
 *
 * # Safety
 * `dir` must be a NUL-terminated path; `out` valid for one pointer.
 */
enum XlnavStatus xlnav_context_load(const char *dir, struct XlnavContext **out);

/**
 * Number of trajectories in a split (`train`, `val_seen`, `val_unseen`).
 *
 * # Safety
 * `ctx` must come from this library; `split` a NUL-terminated string;
 * `out` valid for one `size_t`.
 */
enum XlnavStatus xlnav_context_split_len(const struct XlnavContext *ctx,
                                         const char *split,
                                         size_t *out);

/**
 * # Safety
 * `ctx` must be null or come from this library, and not be used after.
 */
void xlnav_context_free(struct XlnavContext *ctx);

/**
 * # Safety
 * `path` must be a NUL-terminated path; `out` valid for one pointer.
 */
enum XlnavStatus xlnav_checkpoint_load(const char *path, struct XlnavCheckpoint **out);

/**
 * Whether the checkpoint holds a dual-stream agent.
 *
 * # Safety
 * `ckpt` must come from this library; `out` valid for one bool.
 */
enum XlnavStatus xlnav_checkpoint_is_xli(const struct XlnavCheckpoint *ckpt, bool *out);

/**
 * Training iteration the checkpoint was taken at.
 *
 * # Safety
 * `ckpt` must come from this library; `out` valid for one `uint64_t`.
 */
enum XlnavStatus xlnav_checkpoint_iteration(const struct XlnavCheckpoint *ckpt, uint64_t *out);

/**
 * # Safety
 * `ckpt` must be null or come from this library, and not be used after.
 */
void xlnav_checkpoint_free(struct XlnavCheckpoint *ckpt);

/**
 * Greedy rollouts of a checkpoint over one split under the test side of
 * `regime`; writes the mean metrics.
 *
 * # Safety
 * Handles must come from this library; `split` and `regime` must be
 * NUL-terminated strings; `out` valid for one `XlnavMetrics`.
 */
enum XlnavStatus xlnav_evaluate(const struct XlnavCheckpoint *ckpt,
                                const struct XlnavContext *ctx,
                                const char *split,
                                const char *regime,
                                size_t max_actions,
                                struct XlnavMetrics *out);

#ifdef __cplusplus
} // extern "C"
#endif // __cplusplus

#endif /* XLNAV_H */
