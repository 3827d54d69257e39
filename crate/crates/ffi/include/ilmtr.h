#ifndef ILMTR_H
#define ILMTR_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result codes.
 */
typedef enum IlmtrStatus {
  ILMTR_STATUS_OK = 0,
  ILMTR_STATUS_NULL_ARGUMENT = 1,
  ILMTR_STATUS_INVALID_UTF8 = 2,
  ILMTR_STATUS_CONFIG = 3,
  ILMTR_STATUS_IO = 4,
  ILMTR_STATUS_FORMAT = 5,
  ILMTR_STATUS_BACKEND = 6,
  ILMTR_STATUS_INPUT = 7,
  ILMTR_STATUS_PANIC = 8,
} IlmtrStatus;

typedef enum IlmtrMode {
  ILMTR_MODE_SINGLE = 0,
  ILMTR_MODE_NO_LOOP = 1,
  ILMTR_MODE_FULL = 2,
} IlmtrMode;

/**
 * Opaque run configuration.
 */
typedef struct IlmtrConfig IlmtrConfig;

/**
 * Opaque, immutable retrieval index.
 */
typedef struct IlmtrIndex IlmtrIndex;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the last failed call on this thread, or null. The pointer
 * stays valid until the next `ilmtr_*` call on the same thread.
 */
const char *ilmtr_last_error(void);

/**
 * Parses a TOML config (null or empty for all defaults) into `*out`.
 *
 * # Safety
 * `toml` must be null or NUL-terminated; `out` must be writable.
 */
enum IlmtrStatus ilmtr_config_new(const char *toml, struct IlmtrConfig **out);

/**
 * Applies one `section.key=value` override.
 *
 * # Safety
 * `config` must come from `ilmtr_config_new`; `assignment` must be
 * NUL-terminated.
 */
enum IlmtrStatus ilmtr_config_set(struct IlmtrConfig *config, const char *assignment);

/**
 * Serializes the config to TOML into `*out` (free with
 * `ilmtr_string_free`).
 *
 * # Safety
 * `config` must be valid; `out` must be writable.
 */
enum IlmtrStatus ilmtr_config_to_toml(const struct IlmtrConfig *config, char **out);

/**
 * # Safety
 * `config` must be null or come from `ilmtr_config_new` and not be freed
 * already.
 */
void ilmtr_config_free(struct IlmtrConfig *config);

/**
 * Builds an index over `text`. With `use_mock` nonzero the offline mock
 * backends are used; otherwise the endpoints in `config`.
 *
 * # Safety
 * `config` must be valid, `text` NUL-terminated and `out` writable.
 */
enum IlmtrStatus ilmtr_build(const struct IlmtrConfig *config,
                             const char *text,
                             int32_t use_mock,
                             struct IlmtrIndex **out);

/**
 * # Safety
 * `index` must be valid; `path` NUL-terminated.
 */
enum IlmtrStatus ilmtr_index_save(const struct IlmtrIndex *index, const char *path);

/**
 * # Safety
 * `path` must be NUL-terminated; `out` writable.
 */
enum IlmtrStatus ilmtr_index_load(const char *path, struct IlmtrIndex **out);

/**
 * Number of nodes in the index; 0 for a null handle.
 *
 * # Safety
 * `index` must be null or valid.
 */
size_t ilmtr_index_len(const struct IlmtrIndex *index);

/**
 * # Safety
 * `index` must be null or come from `ilmtr_build`/`ilmtr_index_load` and
 * not be freed already.
 */
void ilmtr_index_free(struct IlmtrIndex *index);

/**
 * Retrieves for `query` and writes the assembled context text to `*out`.
 *
 * # Safety
 * Handles must be valid, `query` NUL-terminated, `out` writable.
 */
enum IlmtrStatus ilmtr_retrieve(const struct IlmtrIndex *index,
                                const struct IlmtrConfig *config,
                                const char *query,
                                int32_t use_mock,
                                char **out);

/**
 * Answers `question`. The final answer goes to `*answer_out`; the number
 * of rounds run goes to `*rounds_out` when that pointer is non-null. A
 * mid-loop backend failure returns `Backend` and leaves `*answer_out`
 * untouched.
 *
 * # Safety
 * Handles must be valid, `question` NUL-terminated, `answer_out` writable,
 * `rounds_out` null or writable.
 */
enum IlmtrStatus ilmtr_query(const struct IlmtrIndex *index,
                             const struct IlmtrConfig *config,
                             const char *question,
                             enum IlmtrMode mode,
                             int32_t use_mock,
                             char **answer_out,
                             uint32_t *rounds_out);

/**
 * Word-level normalized LCS between two texts; negative on bad input.
 *
 * # Safety
 * Both pointers must be NUL-terminated strings.
 */
double ilmtr_convergence_ratio(const char *prev, const char *curr);

/**
 * Rubric score (1, 3, 7 or 10) of `answer` against `n` keywords; 0 on bad
 * input.
 *
 * # Safety
 * `answer` must be NUL-terminated; `keywords` must point to `n`
 * NUL-terminated strings.
 */
uint32_t ilmtr_score_niah(const char *answer, const char *const *keywords, size_t n);

/**
 * Releases a string returned by this library.
 *
 * # Safety
 * `s` must be null or a string returned through an out-parameter of this
 * library, not freed already.
 */
void ilmtr_string_free(char *s);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* ILMTR_H */
