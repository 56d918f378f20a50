#ifndef CVE_GNN_H
#define CVE_GNN_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Result codes.
typedef enum CveStatus {
  CVE_STATUS_OK = 0,
  CVE_STATUS_NULL_POINTER = 1,
  CVE_STATUS_INVALID_UTF8 = 2,
  CVE_STATUS_IO = 3,
  CVE_STATUS_PARSE = 4,
  CVE_STATUS_DATASET = 5,
  CVE_STATUS_CONFIG = 6,
  CVE_STATUS_NUMERIC = 7,
  CVE_STATUS_CHECKPOINT = 8,
  CVE_STATUS_PANIC = 9,
} CveStatus;

// Experiment settings, as key-value pairs.
typedef struct CveConfig CveConfig;

// A loaded or generated dataset.
typedef struct CveDataset CveDataset;

// Trained weights together with the metrics of the run that produced them.
typedef struct CveModel CveModel;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message for the most recent failure on this thread, or null. Valid until
// the next `cve_*` call on the same thread.
const char *cve_last_error(void);

// Library version as a static string.
const char *cve_version(void);

// Loads a dataset directory.
//
// # Safety
// `dir` must be a NUL-terminated string and `out` a valid pointer.
enum CveStatus cve_dataset_load(const char *dir, struct CveDataset **out_ds);

// Generates a stochastic block model dataset.
//
// # Safety
// `out` must be a valid pointer.
enum CveStatus cve_dataset_gen_sbm(size_t nodes,
                                   size_t blocks,
                                   double p_in,
                                   double p_out,
                                   size_t dim,
                                   uint64_t seed,
                                   struct CveDataset **out_ds);

// Writes a dataset directory.
//
// # Safety
// `ds` must come from this library; `dir` must be NUL-terminated.
enum CveStatus cve_dataset_save(const struct CveDataset *ds, const char *dir);

// Node count, or 0 for a null handle.
//
// # Safety
// `ds` must be null or come from this library.
size_t cve_dataset_num_nodes(const struct CveDataset *ds);

// # Safety
// `ds` must be null or come from this library.
size_t cve_dataset_num_features(const struct CveDataset *ds);

// # Safety
// `ds` must be null or come from this library.
size_t cve_dataset_num_classes(const struct CveDataset *ds);

// # Safety
// `ds` must be null or come from this library, and not be used afterwards.
void cve_dataset_free(struct CveDataset *ds);

// Empty settings; every key takes its default.
//
// # Safety
// `out` must be a valid pointer.
enum CveStatus cve_config_new(struct CveConfig **out_cfg);

// Reads a `key = value` configuration file.
//
// # Safety
// `path` must be NUL-terminated and `out` valid.
enum CveStatus cve_config_load(const char *path, struct CveConfig **out_cfg);

// Sets one key, as the matching command-line flag would.
//
// # Safety
// `cfg` must come from this library; `key` and `value` must be
// NUL-terminated.
enum CveStatus cve_config_set(struct CveConfig *cfg, const char *key, const char *value);

// Checks that the settings form a consistent experiment.
//
// # Safety
// `cfg` must come from this library.
enum CveStatus cve_config_validate(const struct CveConfig *cfg);

// # Safety
// `cfg` must be null or come from this library, and not be used afterwards.
void cve_config_free(struct CveConfig *cfg);

// Trains one run on `ds` with `cfg`.
//
// # Safety
// Handles must come from this library; `out` must be valid.
enum CveStatus cve_train(const struct CveDataset *ds,
                         const struct CveConfig *cfg,
                         struct CveModel **out_model);

// Writes the training metrics CSV.
//
// # Safety
// `model` must come from this library; `path` must be NUL-terminated.
enum CveStatus cve_model_write_metrics(const struct CveModel *model, const char *path);

// Number of metric rows recorded during training; 0 for loaded models.
//
// # Safety
// `model` must be null or come from this library.
size_t cve_model_num_records(const struct CveModel *model);

// Best test accuracy seen during training.
//
// # Safety
// `model` must come from this library; `acc` must be valid.
enum CveStatus cve_model_max_test_acc(const struct CveModel *model, double *acc);

// Train, validation and test accuracy of `model` on `ds`, written to
// `acc[0..3]`. An empty split reports 0.
//
// # Safety
// Handles must come from this library; `acc` must hold 3 doubles.
enum CveStatus cve_model_evaluate(const struct CveModel *model,
                                  const struct CveDataset *ds,
                                  double *acc);

// # Safety
// `model` must come from this library; `path` must be NUL-terminated.
enum CveStatus cve_model_save(const struct CveModel *model, const char *path);

// Loads a checkpoint. The resulting model has no metrics.
//
// # Safety
// `path` must be NUL-terminated and `out` valid.
enum CveStatus cve_model_load(const char *path, struct CveModel **out_model);

// # Safety
// `model` must be null or come from this library, and not be used
// afterwards.
void cve_model_free(struct CveModel *model);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* CVE_GNN_H */
