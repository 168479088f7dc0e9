/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#ifndef COMPATKG_H
#define COMPATKG_H

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result code of every fallible call.
 */
typedef enum CkgStatus {
  CKG_STATUS_OK = 0,
  CKG_STATUS_NULL_ARGUMENT = 1,
  CKG_STATUS_INVALID_UTF8 = 2,
  CKG_STATUS_IO = 3,
  CKG_STATUS_DATA = 4,
  CKG_STATUS_CONFIG = 5,
  CKG_STATUS_UNRECOGNIZED_QUERY = 6,
  CKG_STATUS_INVALID_VERSION = 7,
  CKG_STATUS_EMPTY_EVIDENCE = 8,
  CKG_STATUS_PANIC = 99,
} CkgStatus;

/**
 * Component dictionary plus the recognizer built from it.
 */
typedef struct CkgDictionary CkgDictionary;

/**
 * A loaded, immutable knowledge graph.
 */
typedef struct CkgGraph CkgGraph;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Creates a handle for the bundled component dictionary.
 *
 * # Safety
 * `out` must be a valid pointer to writable storage for one handle.
 */
enum CkgStatus ckg_dictionary_default(struct CkgDictionary **out);

/**
 * Loads a component dictionary from a JSON file.
 *
 * # Safety
 * `path` must be a NUL-terminated string; `out` must be writable.
 */
enum CkgStatus ckg_dictionary_load(const char *path, struct CkgDictionary **out);

/**
 * Releases a dictionary handle. Null is ignored.
 *
 * # Safety
 * `dict` must come from this library and not have been freed already.
 */
void ckg_dictionary_free(struct CkgDictionary *dict);

/**
 * Loads a graph file.
 *
 * # Safety
 * `path` must be a NUL-terminated string; `out` must be writable.
 */
enum CkgStatus ckg_graph_load(const char *path, struct CkgGraph **out);

/**
 * Releases a graph handle. Null is ignored.
 *
 * # Safety
 * `graph` must come from this library and not have been freed already.
 */
void ckg_graph_free(struct CkgGraph *graph);

/**
 * Number of versioned-component nodes; 0 for a null handle.
 *
 * # Safety
 * `graph` must be null or a live handle.
 */
uintptr_t ckg_graph_node_count(const struct CkgGraph *graph);

/**
 * Number of relations; 0 for a null handle.
 *
 * # Safety
 * `graph` must be null or a live handle.
 */
uintptr_t ckg_graph_link_count(const struct CkgGraph *graph);

/**
 * Answers a search query. On success `*out_json` holds the same document
 * the command line prints with `--format machine`.
 *
 * `dict` may be null to use the bundled dictionary.
 *
 * # Safety
 * `graph` must be a live handle, `dict` null or a live handle, `text`
 * NUL-terminated, `out_json` writable.
 */
enum CkgStatus ckg_query(const struct CkgGraph *graph,
                         const struct CkgDictionary *dict,
                         const char *text,
                         char **out_json);

/**
 * Checks environment text (one `name==version` or `name version [@layer]`
 * per line) against the graph. `*out_json` receives
 * `{schema_version, entries, issues, unknown_pairs, diagnostics}`.
 *
 * # Safety
 * As for [`ckg_query`].
 */
enum CkgStatus ckg_check_environment(const struct CkgGraph *graph,
                                     const struct CkgDictionary *dict,
                                     const char *env_text,
                                     char **out_json);

/**
 * Normalizes a version token (`v1.13` becomes `1.13`, `3.X` becomes `3.x`).
 *
 * # Safety
 * `raw` must be NUL-terminated; `out` writable.
 */
enum CkgStatus ckg_normalize_version(const char *raw, char **out);

/**
 * `(compatible - incompatible) / (compatible + incompatible)`.
 * Fails with [`CkgStatus::EmptyEvidence`] when both counts are zero.
 *
 * # Safety
 * `out` must be writable.
 */
enum CkgStatus ckg_confidence_score(uint64_t n_compatible, uint64_t n_incompatible, double *out);

/**
 * Copy of the last error message on this thread, or null when the last
 * call succeeded. Release with [`ckg_string_free`].
 */
char *ckg_last_error_message(void);

/**
 * Releases a string returned by this library. Null is ignored.
 *
 * # Safety
 * `s` must come from this library and not have been freed already.
 */
void ckg_string_free(char *s);

/**
 * Library version as a static string. Do not free.
 */
const char *ckg_version(void);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* COMPATKG_H */
