#ifndef SHORTCUT_H
#define SHORTCUT_H

/* Generated by cbindgen from src/lib.rs. Do not edit. */

#include <stdbool.h>
#include <stddef.h>

/**
 * Result codes. Zero is success.
 */
typedef enum ScStatus {
  SC_STATUS_OK = 0,
  SC_STATUS_NULL_ARGUMENT = 1,
  SC_STATUS_INVALID_UTF8 = 2,
  SC_STATUS_INVALID_JSON = 3,
  SC_STATUS_IO = 4,
  SC_STATUS_LOAD = 5,
  SC_STATUS_CONFIG = 6,
  SC_STATUS_CONTRACT = 7,
  SC_STATUS_TRANSPORT = 8,
  SC_STATUS_PROTOCOL = 9,
  SC_STATUS_PANIC = 10,
} ScStatus;

/**
 * Tokenized corpus with its trigger index.
 */
typedef struct ScCorpus ScCorpus;

/**
 * Toy lexicon classifier.
 */
typedef struct ScModel ScModel;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or NULL. The pointer stays
 * valid until the next failing call on the same thread.
 */
const char *sc_last_error(void);

/**
 * Library version as a static string.
 */
const char *sc_version(void);

/**
 * Releases a string returned by this library.
 *
 * # Safety
 * `s` must be NULL or a string returned by this library that has not been freed.
 */
void sc_string_free(char *s);

/**
 * Loads a toy model from a JSON weights file.
 *
 * # Safety
 * `path` must be a NUL-terminated string; `out` must be writable.
 */
enum ScStatus sc_model_load(const char *path, struct ScModel **out);

/**
 * Builds a toy model from the JSON text of a weights file.
 *
 * # Safety
 * `json` must be a NUL-terminated string; `out` must be writable.
 */
enum ScStatus sc_model_from_json(const char *json, struct ScModel **out);

/**
 * # Safety
 * `model` must be NULL or a live handle from `sc_model_*`.
 */
void sc_model_free(struct ScModel *model);

/**
 * Number of labels, or 0 for NULL.
 *
 * # Safety
 * `model` must be NULL or a live handle.
 */
size_t sc_model_label_count(const struct ScModel *model);

/**
 * Predicts `text`. Writes the label and, if `out_json` is non-NULL, a
 * `{"label": .., "probabilities": [..]}` object.
 *
 * # Safety
 * Pointers must be valid; `out_json` may be NULL.
 */
enum ScStatus sc_model_predict(const struct ScModel *model,
                               const char *text,
                               size_t *out_label,
                               char **out_json);

/**
 * Runs input reduction on `text` with gold label `gold`, returning the
 * extraction result as JSON.
 *
 * # Safety
 * Pointers must be valid.
 */
enum ScStatus sc_model_reduce(const struct ScModel *model,
                              const char *text,
                              size_t gold,
                              char **out_json);

/**
 * Loads a JSON-lines corpus, tokenizes it with `model` and indexes it.
 * `labels_json` is a JSON array of label names; `ood` selects the split tag.
 *
 * # Safety
 * Pointers must be valid.
 */
enum ScStatus sc_corpus_load(const char *path,
                             const char *labels_json,
                             bool ood,
                             const struct ScModel *model,
                             struct ScCorpus **out);

/**
 * # Safety
 * `corpus` must be NULL or a live handle from `sc_corpus_load`.
 */
void sc_corpus_free(struct ScCorpus *corpus);

/**
 * Number of examples, or 0 for NULL.
 *
 * # Safety
 * `corpus` must be NULL or a live handle.
 */
size_t sc_corpus_len(const struct ScCorpus *corpus);

/**
 * Finds all examples containing the trigger (a JSON array of tokens).
 * Returns the match set as JSON.
 *
 * # Safety
 * Pointers must be valid.
 */
enum ScStatus sc_corpus_find(const struct ScCorpus *corpus,
                             const char *trigger_json,
                             bool contiguous,
                             char **out_json);

/**
 * Containment test on JSON token arrays.
 *
 * # Safety
 * Pointers must be valid.
 */
enum ScStatus sc_contains(const char *tokens_json,
                          const char *trigger_json,
                          bool contiguous,
                          bool *out);

/**
 * Macro-F1 in percentage points over `n` prediction/gold pairs.
 *
 * # Safety
 * `predictions` and `golds` must point to `n` readable values.
 */
enum ScStatus sc_macro_f1(const size_t *predictions,
                          const size_t *golds,
                          size_t n,
                          size_t label_count,
                          double *out);

/**
 * Applies thresholds (JSON object; NULL for defaults) to the text of a
 * `stats.json` file and returns the report as JSON.
 *
 * # Safety
 * `stats_json` must be valid; `thresholds_json` may be NULL.
 */
enum ScStatus sc_identify(const char *stats_json, const char *thresholds_json, char **out_json);

/**
 * Runs mine, score and identify for a run config file, writing outputs to
 * its output directory, and returns the report as JSON.
 *
 * # Safety
 * Pointers must be valid.
 */
enum ScStatus sc_run_pipeline(const char *config_path, char **out_json);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* SHORTCUT_H */
