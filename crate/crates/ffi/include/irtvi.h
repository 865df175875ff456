#ifndef IRTVI_H
#define IRTVI_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result of every fallible call.
 */
typedef enum IrtviStatus {
  IRTVI_STATUS_OK = 0,
  IRTVI_STATUS_NULL_POINTER = 1,
  IRTVI_STATUS_INVALID_ARGUMENT = 2,
  IRTVI_STATUS_IO = 3,
  IRTVI_STATUS_PARSE = 4,
  IRTVI_STATUS_DATASET = 5,
  IRTVI_STATUS_SHAPE = 6,
  IRTVI_STATUS_NON_FINITE = 7,
  IRTVI_STATUS_CHECKPOINT = 8,
  IRTVI_STATUS_INDEX_OUT_OF_RANGE = 9,
  IRTVI_STATUS_PANIC = 10,
} IrtviStatus;

typedef enum IrtviFormat {
  /**
   * `student_id,question_id,class_id,marks_awarded,marks_available`
   */
  IRTVI_FORMAT_RAW = 0,
  /**
   * `student_id,question_id,class_id,y`
   */
  IRTVI_FORMAT_BINARY = 1,
} IrtviFormat;

typedef enum IrtviModelKind {
  IRTVI_MODEL_KIND_RASCH = 0,
  IRTVI_MODEL_KIND_INTERACTION = 1,
  IRTVI_MODEL_KIND_CLASS_INTERACTION = 2,
  IRTVI_MODEL_KIND_RASCH_VI = 3,
  IRTVI_MODEL_KIND_INTERACTION_VI = 4,
  IRTVI_MODEL_KIND_CLASS_INTERACTION_VI = 5,
} IrtviModelKind;

/**
 * Opaque dataset handle.
 */
typedef struct IrtviDataset IrtviDataset;

/**
 * Opaque model handle: parameters plus the id tables they index.
 */
typedef struct IrtviModel IrtviModel;

/**
 * Point-model optimizer settings; see [`irtvi_train_config_default`].
 */
typedef struct IrtviTrainConfig {
  double learning_rate;
  size_t epochs;
  size_t batch_size;
  double l2_penalty;
  uint64_t seed;
  double init_scale;
  double convergence_tol;
} IrtviTrainConfig;

/**
 * Variational optimizer settings; see [`irtvi_vi_config_default`].
 */
typedef struct IrtviViConfig {
  size_t m_samples;
  double sigma_init;
  double learning_rate;
  size_t epochs;
  size_t batch_students;
  uint64_t seed;
  double init_scale;
  double convergence_tol;
} IrtviViConfig;

typedef struct IrtviZTest {
  double p1;
  double p2;
  double p_hat;
  double se;
  double z;
  double p_value;
  /**
   * 1 when `p_value < alpha`.
   */
  int32_t significant;
} IrtviZTest;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version as a static NUL-terminated string; do not free.
 */
const char *irtvi_version(void);

/**
 * Message of the last failed call on this thread, or NULL if the last call
 * succeeded. Free with [`irtvi_string_free`].
 */
char *irtvi_last_error_message(void);

/**
 * Frees a string returned by this library. NULL is ignored.
 *
 * # Safety
 * `s` must come from this library and not have been freed already.
 */
void irtvi_string_free(char *s);

/**
 * Loads a CSV file into a new dataset handle.
 *
 * # Safety
 * `path` must be a NUL-terminated string; `out` must be writable.
 */
enum IrtviStatus irtvi_dataset_load(const char *path,
                                    enum IrtviFormat format,
                                    struct IrtviDataset **out);

/**
 * # Safety
 * `d` must be NULL or a handle from this library, freed at most once.
 */
void irtvi_dataset_free(struct IrtviDataset *d);

/**
 * Number of students, questions, classes and responses. Any output
 * pointer may be NULL.
 *
 * # Safety
 * `d` must be a live dataset handle; non-NULL outputs must be writable.
 */
enum IrtviStatus irtvi_dataset_counts(const struct IrtviDataset *d,
                                      size_t *students,
                                      size_t *questions,
                                      size_t *classes,
                                      size_t *responses);

/**
 * Stratified per-student train/test split into two new handles.
 *
 * # Safety
 * `d` must be a live dataset handle; `train` and `test` must be writable.
 */
enum IrtviStatus irtvi_dataset_split(const struct IrtviDataset *d,
                                     double test_fraction,
                                     uint64_t seed,
                                     struct IrtviDataset **train,
                                     struct IrtviDataset **test);

struct IrtviTrainConfig irtvi_train_config_default(void);

struct IrtviViConfig irtvi_vi_config_default(void);

/**
 * Fits a point model (`Rasch`, `Interaction` or `ClassInteraction`).
 * `config` may be NULL for defaults; `warm_start` may be NULL.
 *
 * # Safety
 * Handles must be live; `out` must be writable.
 */
enum IrtviStatus irtvi_model_train(const struct IrtviDataset *d,
                                   enum IrtviModelKind kind,
                                   size_t dims,
                                   const struct IrtviTrainConfig *config,
                                   const struct IrtviModel *warm_start,
                                   struct IrtviModel **out);

/**
 * Fits a variational model. `warm_start` may be NULL or a point model of
 * the matching kind; `config` may be NULL for defaults.
 *
 * # Safety
 * Handles must be live; `out` must be writable.
 */
enum IrtviStatus irtvi_model_train_vi(const struct IrtviDataset *d,
                                      enum IrtviModelKind kind,
                                      size_t dims,
                                      const struct IrtviViConfig *config,
                                      const struct IrtviModel *warm_start,
                                      struct IrtviModel **out);

/**
 * # Safety
 * `m` must be NULL or a handle from this library, freed at most once.
 */
void irtvi_model_free(struct IrtviModel *m);

/**
 * Probability that `student` answers `question` correctly, by dense index.
 * Variational models predict at their posterior means.
 *
 * # Safety
 * `m` must be live; `out` must be writable.
 */
enum IrtviStatus irtvi_model_predict(const struct IrtviModel *m,
                                     size_t student,
                                     size_t question,
                                     double *out);

/**
 * Thresholded accuracy on a dataset, matched to the model by id.
 *
 * # Safety
 * Handles must be live; `accuracy` must be writable.
 */
enum IrtviStatus irtvi_model_evaluate(const struct IrtviModel *m,
                                      const struct IrtviDataset *d,
                                      double threshold,
                                      double *accuracy);

/**
 * Writes the model as a JSON checkpoint.
 *
 * # Safety
 * `m` must be live; `path` must be a NUL-terminated string.
 */
enum IrtviStatus irtvi_model_save(const struct IrtviModel *m, const char *path);

/**
 * Reads a JSON checkpoint into a new model handle.
 *
 * # Safety
 * `path` must be a NUL-terminated string; `out` must be writable.
 */
enum IrtviStatus irtvi_model_load(const char *path, struct IrtviModel **out);

/**
 * Pooled two-proportion z-test, two-sided.
 *
 * # Safety
 * `out` must be writable.
 */
enum IrtviStatus irtvi_z_test(uint64_t x1,
                              uint64_t n1,
                              uint64_t x2,
                              uint64_t n2,
                              double alpha,
                              struct IrtviZTest *out);

/**
 * KL(N(mu1, sigma1²) || N(mu2, sigma2²)).
 *
 * # Safety
 * `out` must be writable.
 */
enum IrtviStatus irtvi_kl_gaussian(double mu1,
                                   double sigma1,
                                   double mu2,
                                   double sigma2,
                                   double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* IRTVI_H */
