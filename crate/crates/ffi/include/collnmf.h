#ifndef COLLNMF_H
#define COLLNMF_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum CollnmfInit {
  COLLNMF_INIT_NNDSVD = 0,
  COLLNMF_INIT_RANDOM = 1,
} CollnmfInit;

// Result code of every fallible call.
typedef enum CollnmfStatus {
  COLLNMF_STATUS_OK = 0,
  COLLNMF_STATUS_NULL_POINTER = 1,
  COLLNMF_STATUS_INVALID_UTF8 = 2,
  COLLNMF_STATUS_PARSE = 3,
  COLLNMF_STATUS_CONFIG = 4,
  COLLNMF_STATUS_EMPTY = 5,
  COLLNMF_STATUS_DIMENSION = 6,
  COLLNMF_STATUS_SPARSENESS = 7,
  COLLNMF_STATUS_NUMERICAL = 8,
  COLLNMF_STATUS_QUERY = 9,
  COLLNMF_STATUS_ARTIFACT = 10,
  COLLNMF_STATUS_IO = 11,
  COLLNMF_STATUS_FORMAT = 12,
  COLLNMF_STATUS_BUFFER_TOO_SMALL = 13,
  COLLNMF_STATUS_PANIC = 14,
} CollnmfStatus;

typedef enum CollnmfWeighting {
  COLLNMF_WEIGHTING_UNIFORM = 0,
  COLLNMF_WEIGHTING_IDF = 1,
} CollnmfWeighting;

// Parsed collation (opaque).
typedef struct CollnmfCollation CollnmfCollation;

// Basis, mixture and statistics of one factorization (opaque).
typedef struct CollnmfFactorization CollnmfFactorization;

// Filtered, weighted readings-by-witnesses matrix (opaque).
typedef struct CollnmfMatrix CollnmfMatrix;

// Exclusion policy. Each `drop_*` flag removes cells in that state.
typedef struct CollnmfPolicy {
  bool drop_lacunose;
  bool drop_uncertain;
  bool drop_corrector;
  bool drop_overlapped;
  bool drop_singular_readings;
  size_t min_extant_readings;
} CollnmfPolicy;

// Factorization settings. `entry_bound <= 0` or non-finite means unbounded.
typedef struct CollnmfConfig {
  size_t k;
  size_t max_iter;
  double tol;
  enum CollnmfInit init;
  size_t runs;
  uint64_t seed;
  double entry_bound;
  size_t max_inner;
} CollnmfConfig;

// Summary of a finished factorization.
typedef struct CollnmfStats {
  size_t rows;
  size_t cols;
  size_t k;
  size_t n_iter;
  double dist;
  double evar;
  double w_sparseness;
  double h_sparseness;
  bool converged;
  size_t trace_len;
} CollnmfStats;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Library version as a static NUL-terminated string.
const char *collnmf_version(void);

// Message for the most recent failure on this thread, or NULL. The pointer
// stays valid until the next library call on the same thread.
const char *collnmf_last_error_message(void);

// The default exclusion policy: drop lacunose, uncertain, corrector and
// overlapped cells and singular readings; secondary below 300 readings.
struct CollnmfPolicy collnmf_policy_default(void);

// Default factorization settings for `k` clusters.
struct CollnmfConfig collnmf_config_default(size_t k);

// Parses a TSV or JSON collation from a NUL-terminated UTF-8 string.
//
// # Safety
// `text` must be NULL or a valid NUL-terminated string; `out` must be NULL
// or writable.
enum CollnmfStatus collnmf_collation_parse(const char *text, struct CollnmfCollation **out);

// # Safety
// `collation` must be NULL or a handle from `collnmf_collation_parse` that
// has not been freed.
void collnmf_collation_free(struct CollnmfCollation *collation);

// Number of witnesses, units and cells.
//
// # Safety
// `collation` must be a live handle; each out pointer must be NULL (skipped)
// or writable.
enum CollnmfStatus collnmf_collation_counts(const struct CollnmfCollation *collation,
                                            size_t *witnesses,
                                            size_t *units,
                                            size_t *cells);

// Applies the exclusion policy and weighting to build the primary matrix.
//
// # Safety
// `collation` and `policy` must be live; `out` must be writable.
enum CollnmfStatus collnmf_matrix_build(const struct CollnmfCollation *collation,
                                        const struct CollnmfPolicy *policy,
                                        enum CollnmfWeighting weighting,
                                        struct CollnmfMatrix **out);

// Wraps a row-major `rows x cols` non-negative matrix.
//
// # Safety
// `data` must point to `rows * cols` doubles; `out` must be writable.
enum CollnmfStatus collnmf_matrix_from_dense(size_t rows,
                                             size_t cols,
                                             const double *data,
                                             struct CollnmfMatrix **out);

// # Safety
// `matrix` must be NULL or a live handle.
void collnmf_matrix_free(struct CollnmfMatrix *matrix);

// Rows (readings), columns (primary witnesses) and stored entries.
//
// # Safety
// `matrix` must be live; each out pointer must be NULL (skipped) or writable.
enum CollnmfStatus collnmf_matrix_dims(const struct CollnmfMatrix *matrix,
                                       size_t *rows,
                                       size_t *cols,
                                       size_t *nnz);

// Factorizes `matrix` into basis `W` (rows x k) and mixture `H` (k x cols).
//
// # Safety
// `matrix` and `config` must be live; `out` must be writable.
enum CollnmfStatus collnmf_factorize(const struct CollnmfMatrix *matrix,
                                     const struct CollnmfConfig *config,
                                     struct CollnmfFactorization **out);

// # Safety
// `fit` must be NULL or a live handle.
void collnmf_factorization_free(struct CollnmfFactorization *fit);

// # Safety
// `fit` must be live; `out` must be writable.
enum CollnmfStatus collnmf_factorization_stats(const struct CollnmfFactorization *fit,
                                               struct CollnmfStats *out);

// Copies `W` row-major into `buf` (capacity `rows * k`).
//
// # Safety
// `fit` must be live; `buf` must have room for `capacity` doubles.
enum CollnmfStatus collnmf_factorization_copy_w(const struct CollnmfFactorization *fit,
                                                double *buf,
                                                size_t capacity);

// Copies `H` row-major into `buf` (capacity `k * cols`).
//
// # Safety
// `fit` must be live; `buf` must have room for `capacity` doubles.
enum CollnmfStatus collnmf_factorization_copy_h(const struct CollnmfFactorization *fit,
                                                double *buf,
                                                size_t capacity);

// Copies the objective trace (capacity `trace_len`).
//
// # Safety
// `fit` must be live; `buf` must have room for `capacity` doubles.
enum CollnmfStatus collnmf_factorization_copy_trace(const struct CollnmfFactorization *fit,
                                                    double *buf,
                                                    size_t capacity);

// Argmax cluster of every witness (0-based), or -1 when its mixture column
// is all zero. `labels` must hold `cols` entries.
//
// # Safety
// `fit` must be live; `labels` must have room for `capacity` values.
enum CollnmfStatus collnmf_factorization_assign(const struct CollnmfFactorization *fit,
                                                int64_t *labels,
                                                size_t capacity);

// Non-negative least-squares mixture of a reading vector against the basis.
//
// `readings` holds one value per matrix row. `extant` is NULL (every row is
// extant) or a per-row mask; only rows with a non-zero mask take part in the
// fit. `coefficients` receives `k` values.
//
// # Safety
// `fit` must be live; `readings` and (if non-NULL) `extant` must hold `rows`
// values; `coefficients` must have room for `capacity` doubles.
enum CollnmfStatus collnmf_classify(const struct CollnmfFactorization *fit,
                                    const double *readings,
                                    const uint8_t *extant,
                                    size_t rows,
                                    double *coefficients,
                                    size_t capacity);

// Hoyer sparseness of a vector of length at least 2 with a non-zero entry.
//
// # Safety
// `values` must hold `len` doubles; `out` must be writable.
enum CollnmfStatus collnmf_hoyer_sparseness(const double *values, size_t len, double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* COLLNMF_H */
