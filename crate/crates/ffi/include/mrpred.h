#ifndef MRPRED_H
#define MRPRED_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stddef.h>
#include <stdint.h>
#include <stdbool.h>

typedef enum MrpredStatus {
  MRPRED_STATUS_OK = 0,
  MRPRED_STATUS_NULL_POINTER = 1,
  MRPRED_STATUS_INVALID_ARGUMENT = 2,
  MRPRED_STATUS_PARSE_ERROR = 3,
  MRPRED_STATUS_DATA_ERROR = 4,
  MRPRED_STATUS_IO_ERROR = 5,
  MRPRED_STATUS_PANIC = 6,
} MrpredStatus;

/**
 * Loaded corpus: feature matrix plus the six label columns.
 */
typedef struct MrpredDataset MrpredDataset;

/**
 * Parsed and validated control-flow graph.
 */
typedef struct MrpredGraph MrpredGraph;

typedef struct MrpredLabelProp MrpredLabelProp;

typedef struct MrpredSvm MrpredSvm;

typedef struct MrpredTTest {
  double t_statistic;
  size_t degrees_of_freedom;
  double p_value;
  /**
   * Zero spread with a nonzero mean difference; t is infinite.
   */
  bool degenerate;
} MrpredTTest;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version as a static NUL-terminated string. Do not free.
 */
const char *mrpred_version(void);

/**
 * Copy of the calling thread's last error message, or NULL if there is
 * none. Free with `mrpred_string_free`.
 */
char *mrpred_last_error_message(void);

/**
 * # Safety
 * `s` must be NULL or a string returned by this library, not yet freed.
 */
void mrpred_string_free(char *s);

/**
 * Parses and validates a DOT digraph. Graphs with validation errors are
 * rejected with `MRPRED_STATUS_PARSE_ERROR`.
 *
 * # Safety
 * `dot` must be a NUL-terminated string and `out` a writable pointer.
 */
enum MrpredStatus mrpred_graph_parse(const char *dot, struct MrpredGraph **out);

/**
 * # Safety
 * `graph` must be NULL or a handle from `mrpred_graph_parse`, not yet freed.
 */
void mrpred_graph_free(struct MrpredGraph *graph);

/**
 * # Safety
 * `graph` must be a live handle and `out` a writable pointer.
 */
enum MrpredStatus mrpred_graph_node_count(const struct MrpredGraph *graph, size_t *out);

/**
 * Node and path features as `feature<TAB>count` lines in feature order.
 * Free the result with `mrpred_string_free`.
 *
 * # Safety
 * `graph` must be a live handle and `out` a writable pointer.
 */
enum MrpredStatus mrpred_graph_features(const struct MrpredGraph *graph, char **out);

/**
 * Applies the named relation's input transformation (`"addition"`,
 * `"multiplication"`, `"permutation"`, `"inclusion"`, `"exclusion"`,
 * `"inversion"`). `c` is ignored where the relation has no constant.
 * `out` must hold `len + 1` values; the written length goes to `out_len`.
 *
 * # Safety
 * `input` must point to `len` doubles, `out` to `out_capacity` doubles.
 */
enum MrpredStatus mrpred_transform(const char *mr,
                                   const double *input,
                                   size_t len,
                                   double c,
                                   double *out,
                                   size_t out_capacity,
                                   size_t *out_len);

/**
 * Fits a linear SVM (1000 epochs at most, tolerance 1e-4).
 *
 * # Safety
 * `x` must point to `rows * cols` doubles, `y` to `rows` bytes.
 */
enum MrpredStatus mrpred_svm_fit(const double *x,
                                 size_t rows,
                                 size_t cols,
                                 const uint8_t *y,
                                 double c,
                                 uint64_t seed,
                                 struct MrpredSvm **out);

/**
 * Writes one label per row of `x` into `out`.
 *
 * # Safety
 * `model` must be a live handle, `x` must point to `rows * cols` doubles
 * and `out` to `rows` writable bytes.
 */
enum MrpredStatus mrpred_svm_predict(const struct MrpredSvm *model,
                                     const double *x,
                                     size_t rows,
                                     size_t cols,
                                     uint8_t *out);

/**
 * # Safety
 * `model` must be NULL or a handle from `mrpred_svm_fit`, not yet freed.
 */
void mrpred_svm_free(struct MrpredSvm *model);

/**
 * Fits label propagation with a kNN kernel. `x_unlabeled` may be NULL when
 * `unlabeled_rows` is 0.
 *
 * # Safety
 * `x_labeled` must point to `labeled_rows * cols` doubles, `y_labeled` to
 * `labeled_rows` bytes, `x_unlabeled` to `unlabeled_rows * cols` doubles.
 */
enum MrpredStatus mrpred_labelprop_fit(const double *x_labeled,
                                       size_t labeled_rows,
                                       const uint8_t *y_labeled,
                                       const double *x_unlabeled,
                                       size_t unlabeled_rows,
                                       size_t cols,
                                       size_t n_neighbors,
                                       size_t max_iter,
                                       double tol,
                                       struct MrpredLabelProp **out);

/**
 * # Safety
 * Same contract as `mrpred_svm_predict`.
 */
enum MrpredStatus mrpred_labelprop_predict(const struct MrpredLabelProp *model,
                                           const double *x,
                                           size_t rows,
                                           size_t cols,
                                           uint8_t *out);

/**
 * # Safety
 * `model` must be NULL or a handle from `mrpred_labelprop_fit`, not yet
 * freed.
 */
void mrpred_labelprop_free(struct MrpredLabelProp *model);

/**
 * Two-tailed paired t-test on `a - b`.
 *
 * # Safety
 * `a` and `b` must each point to `len` doubles; `out` must be writable.
 */
enum MrpredStatus mrpred_paired_t_test(const double *a,
                                       const double *b,
                                       size_t len,
                                       struct MrpredTTest *out);

/**
 * Loads `<dot_dir>/<method_id>.dot` for every row of `labels_csv`.
 *
 * # Safety
 * Both paths must be NUL-terminated strings; `out` must be writable.
 */
enum MrpredStatus mrpred_corpus_load(const char *dot_dir,
                                     const char *labels_csv,
                                     struct MrpredDataset **out);

/**
 * # Safety
 * `dataset` must be a live handle and `out` a writable pointer.
 */
enum MrpredStatus mrpred_dataset_len(const struct MrpredDataset *dataset, size_t *out);

/**
 * # Safety
 * `dataset` must be NULL or a handle from `mrpred_corpus_load`, not yet
 * freed.
 */
void mrpred_dataset_free(struct MrpredDataset *dataset);

/**
 * Runs the SVM versus label propagation comparison on all six relations
 * with default settings and writes the JSON report to `out`. Free it with
 * `mrpred_string_free`.
 *
 * # Safety
 * `dataset` must be a live handle and `out` a writable pointer.
 */
enum MrpredStatus mrpred_compare(const struct MrpredDataset *dataset,
                                 uint64_t seed,
                                 size_t repeats,
                                 char **out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* MRPRED_H */
