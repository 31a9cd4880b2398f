#ifndef FEDROB_H
#define FEDROB_H

/* Generated by cbindgen; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum FedrobStatus {
  FEDROB_STATUS_OK = 0,
  FEDROB_STATUS_NULL_POINTER = 1,
  FEDROB_STATUS_INVALID_ARGUMENT = 2,
  FEDROB_STATUS_IO = 3,
  FEDROB_STATUS_RUNTIME = 4,
  FEDROB_STATUS_BUFFER_TOO_SMALL = 5,
  FEDROB_STATUS_PANIC = 6,
} FedrobStatus;

// Static aggregation rules exposed over the ABI.
typedef enum FedrobRule {
  FEDROB_RULE_MEAN = 0,
  FEDROB_RULE_CWTM = 1,
  FEDROB_RULE_CWMED = 2,
  FEDROB_RULE_GM = 3,
} FedrobRule;

// Opaque dataset handle.
typedef struct FedrobDataset FedrobDataset;

// Opaque DeepSet model handle.
typedef struct FedrobModel FedrobModel;

typedef struct FedrobCertificate {
  // Gap between the two largest coordinates of the mean probit.
  // Undefined when `margin_infinite` is set.
  double margin;
  // All coordinates of the mean probit are equal.
  bool margin_infinite;
  double sigma_x;
  double kappa;
  double bound;
  bool certified;
  bool degenerate;
} FedrobCertificate;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Library version as a static NUL-terminated string.
const char *fedrob_version(void);

// Message of the last failure on this thread, or null if none.
// The pointer stays valid until the next failing call on this thread.
const char *fedrob_last_error(void);

// Gap between the two largest coordinates of a probit vector of length `k`.
//
// # Safety
// `v` must point to `k` readable doubles; `out` and `infinite` must be
// writable.
enum FedrobStatus fedrob_margin(const double *v, size_t k, double *out, bool *infinite);

// Model dissimilarity of an `n x k` panel.
//
// # Safety
// `rows` must point to `n * k` readable doubles; `out` must be writable.
enum FedrobStatus fedrob_dissimilarity(const double *rows, size_t n, size_t k, double *out);

// Robustness coefficient of the coordinate-wise trimmed mean.
//
// # Safety
// `out` must be writable.
enum FedrobStatus fedrob_kappa(size_t n, size_t f, double *out);

// Applies a static rule to an `n x k` panel and writes `k` values to `out`.
// `f` is the trimming parameter and is ignored by the other rules.
//
// # Safety
// `rows` must point to `n * k` readable doubles; `out` to `out_len`
// writable doubles.
enum FedrobStatus fedrob_aggregate(enum FedrobRule rule,
                                   const double *rows,
                                   size_t n,
                                   size_t k,
                                   size_t f,
                                   double *out,
                                   size_t out_len);

// Margin certificate of an `n x k` panel against `f` adversarial clients.
//
// # Safety
// `rows` must point to `n * k` readable doubles; `out` must be writable.
enum FedrobStatus fedrob_certify(const double *rows,
                                 size_t n,
                                 size_t k,
                                 size_t f,
                                 struct FedrobCertificate *out);

// Generates a synthetic dataset; the other generator settings keep their
// defaults.
//
// # Safety
// `out` must be writable. The handle must be released with
// [`fedrob_dataset_free`].
enum FedrobStatus fedrob_dataset_generate(size_t n,
                                          size_t classes,
                                          double alpha,
                                          size_t samples,
                                          uint64_t seed,
                                          struct FedrobDataset **out);

// Reads a dataset file.
//
// # Safety
// `path` must be a NUL-terminated string; `out` must be writable.
enum FedrobStatus fedrob_dataset_load(const char *path, struct FedrobDataset **out);

// Writes a dataset file.
//
// # Safety
// `dataset` must be a live handle; `path` a NUL-terminated string.
enum FedrobStatus fedrob_dataset_save(const struct FedrobDataset *dataset, const char *path);

// Number of panels, clients per panel and classes.
//
// # Safety
// `dataset` must be a live handle; the out-pointers must be writable.
enum FedrobStatus fedrob_dataset_shape(const struct FedrobDataset *dataset,
                                       size_t *panels,
                                       size_t *n,
                                       size_t *classes);

// Copies panel `index` into `rows` (row-major, `n * classes` values) and
// its label into `label`.
//
// # Safety
// `dataset` must be a live handle; `rows` must point to `rows_len`
// writable doubles; `label` must be writable.
enum FedrobStatus fedrob_dataset_panel(const struct FedrobDataset *dataset,
                                       size_t index,
                                       double *rows,
                                       size_t rows_len,
                                       size_t *label);

// Releases a dataset handle. Null is ignored.
//
// # Safety
// `dataset` must be null or a handle not yet freed.
void fedrob_dataset_free(struct FedrobDataset *dataset);

// Reads a DeepSet checkpoint.
//
// # Safety
// `path` must be a NUL-terminated string; `out` must be writable. The
// handle must be released with [`fedrob_model_free`].
enum FedrobStatus fedrob_model_load(const char *path, struct FedrobModel **out);

// Number of classes the model was built for.
//
// # Safety
// `model` must be a live handle; `out` must be writable.
enum FedrobStatus fedrob_model_classes(const struct FedrobModel *model, size_t *out);

// Classifies an `n x k` panel with the DeepSet model. With `trimmed` set,
// pooling trims `f` values per side (DeepSet-TM); otherwise it averages.
// `probs` may be null; otherwise it receives the `k` output probabilities.
//
// # Safety
// `model` must be a live handle; `rows` must point to `n * k` readable
// doubles; `class_out` must be writable; `probs`, if non-null, must point to
// `probs_len` writable doubles.
enum FedrobStatus fedrob_model_classify(const struct FedrobModel *model,
                                        const double *rows,
                                        size_t n,
                                        size_t k,
                                        size_t f,
                                        bool trimmed,
                                        size_t *class_out,
                                        double *probs,
                                        size_t probs_len);

// Releases a model handle. Null is ignored.
//
// # Safety
// `model` must be null or a handle not yet freed.
void fedrob_model_free(struct FedrobModel *model);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* FEDROB_H */
