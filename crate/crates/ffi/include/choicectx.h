#ifndef CHOICECTX_H
#define CHOICECTX_H

#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>

typedef enum CcStatus {
  CC_STATUS_OK = 0,
  CC_STATUS_NULL_POINTER = 1,
  CC_STATUS_INVALID_UTF8 = 2,
  CC_STATUS_PARSE_ERROR = 3,
  CC_STATUS_UNKNOWN_ITEM = 4,
  CC_STATUS_INVALID_ARGUMENT = 5,
  CC_STATUS_DOMAIN_ERROR = 6,
  CC_STATUS_PANIC = 7,
} CcStatus;

typedef enum CcOutcome {
  CC_OUTCOME_UNCHANGED = 0,
  CC_OUTCOME_REVERSAL_TO_PRIOR_ITEM = 1,
  CC_OUTCOME_NEW_ITEM_CHOSEN = 2,
  CC_OUTCOME_OTHER_REVERSAL = 3,
} CcOutcome;

// Opaque utility matrix.
typedef struct CcMatrix CcMatrix;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Parses a matrix document `{"catalog": [...], "entries": [[...]]}`.
//
// # Safety
// `json` must be a NUL-terminated string; `out` must be valid for writes.
enum CcStatus cc_matrix_from_json(const char *json, struct CcMatrix **out);

// # Safety
// `m` must be null or a handle not yet freed.
void cc_matrix_free(struct CcMatrix *m);

// # Safety
// `m` must be a live handle; `out` must be valid for writes.
enum CcStatus cc_matrix_dimension(const struct CcMatrix *m, size_t *out);

// Utility of `item` within the comma-separated `space`.
//
// # Safety
// Pointers must be valid; strings NUL-terminated.
enum CcStatus cc_contextual_utility(const struct CcMatrix *m,
                                    const char *item_id,
                                    const char *space_csv,
                                    double *out);

// Winning item id; free with `cc_string_free`.
//
// # Safety
// Pointers must be valid; strings NUL-terminated.
enum CcStatus cc_best_choice(const struct CcMatrix *m, const char *space_csv, char **out);

// `{"item": utility, ...}` in catalog order; free with `cc_string_free`.
//
// # Safety
// Pointers must be valid; strings NUL-terminated.
enum CcStatus cc_utility_table_json(const struct CcMatrix *m, const char *space_csv, char **out);

// Reversal analysis report as JSON. A null `base_csv` means
// `{current, target}`; an empty `pool_csv` means no candidates.
//
// # Safety
// Pointers must be valid; strings NUL-terminated.
enum CcStatus cc_tipping_report_json(const struct CcMatrix *m,
                                     const char *current,
                                     const char *target,
                                     const char *base_csv,
                                     const char *pool_csv,
                                     bool validate_full,
                                     char **out);

// Outcome class of moving between two nested spaces. `target` may be null.
//
// # Safety
// Pointers must be valid; strings NUL-terminated.
enum CcStatus cc_classify_outcome(const struct CcMatrix *m,
                                  const char *old_csv,
                                  const char *new_csv,
                                  const char *target,
                                  enum CcOutcome *out);

// Fits an estimate to a JSONL choice log with default learner settings and
// writes the estimate JSON. `catalog_csv` may be null to infer the catalog.
//
// # Safety
// Pointers must be valid; strings NUL-terminated.
enum CcStatus cc_estimate_from_log(const char *log_jsonl, const char *catalog_csv, char **out);

// Message for the last failed call on this thread, or null. Valid until the
// next call into this library on the same thread.
const char *cc_last_error_message(void);

// # Safety
// `s` must be null or a string returned by this library, not yet freed.
void cc_string_free(char *s);

// Library version; static storage.
const char *cc_version(void);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* CHOICECTX_H */
