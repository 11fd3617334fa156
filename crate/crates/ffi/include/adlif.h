#ifndef ADLIF_H
#define ADLIF_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>

typedef enum AdlifStatus {
  ADLIF_STATUS_OK = 0,
  ADLIF_STATUS_NULL_POINTER = 1,
  ADLIF_STATUS_INVALID_ARGUMENT = 2,
  ADLIF_STATUS_SHAPE = 3,
  ADLIF_STATUS_IO = 4,
  ADLIF_STATUS_PARSE = 5,
  ADLIF_STATUS_FORMAT = 6,
  ADLIF_STATUS_CONFIG = 7,
  ADLIF_STATUS_NON_FINITE = 8,
  ADLIF_STATUS_BUFFER_TOO_SMALL = 9,
  ADLIF_STATUS_PANIC = 10,
} AdlifStatus;

/**
 * Binned dataset held in memory.
 */
typedef struct AdlifDataset AdlifDataset;

/**
 * Trained network.
 */
typedef struct AdlifNetwork AdlifNetwork;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or null after a success.
 * The pointer stays valid until the next call on the same thread.
 */
const char *adlif_last_error(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *adlif_version(void);

/**
 * Load a checkpoint written by `adlif train`.
 */
enum AdlifStatus adlif_network_load(const char *path, struct AdlifNetwork **out_net);

enum AdlifStatus adlif_network_save(const struct AdlifNetwork *net, const char *path);

/**
 * Release a network. Null is accepted.
 */
void adlif_network_free(struct AdlifNetwork *net);

/**
 * Input channels, class count and number of hidden layers.
 */
enum AdlifStatus adlif_network_shape(const struct AdlifNetwork *net,
                                     size_t *input_channels,
                                     size_t *classes,
                                     size_t *hidden_layers);

/**
 * Width of hidden layer `layer`.
 */
enum AdlifStatus adlif_network_hidden_width(const struct AdlifNetwork *net,
                                            size_t layer,
                                            size_t *width);

/**
 * Eval-mode forward pass over `batch` samples laid out as
 * `batch x timesteps x channels`, row-major. Writes `batch x classes`
 * scores; `seed` drives the initial neuron state.
 */
enum AdlifStatus adlif_network_forward(const struct AdlifNetwork *net,
                                       const double *input,
                                       size_t batch,
                                       size_t timesteps,
                                       size_t channels,
                                       uint64_t seed,
                                       double *scores,
                                       size_t scores_len);

/**
 * Accuracy and mean loss of `net` on a whole dataset.
 */
enum AdlifStatus adlif_network_evaluate(const struct AdlifNetwork *net,
                                        const struct AdlifDataset *dataset,
                                        size_t batch_size,
                                        uint64_t seed,
                                        double *accuracy,
                                        double *mean_loss);

/**
 * Mean cross-entropy of `batch x classes` scores against `labels`.
 */
enum AdlifStatus adlif_loss(const double *scores,
                            size_t batch,
                            size_t classes,
                            const size_t *labels,
                            double *value);

/**
 * Load a binned (`SNNB`) file or a text event file binned with the default
 * settings. `classes` of 0 takes the count from the file.
 */
enum AdlifStatus adlif_dataset_load(const char *path,
                                    size_t classes,
                                    struct AdlifDataset **out_dataset);

/**
 * Bin a text event file into a dataset handle. The raw channel count comes
 * from the file header.
 */
enum AdlifStatus adlif_bin_events(const char *path,
                                  size_t channel_factor,
                                  double bin_width,
                                  size_t timesteps,
                                  bool binarize,
                                  struct AdlifDataset **out_dataset);

enum AdlifStatus adlif_dataset_save(const struct AdlifDataset *dataset, const char *path);

/**
 * Release a dataset. Null is accepted.
 */
void adlif_dataset_free(struct AdlifDataset *dataset);

enum AdlifStatus adlif_dataset_info(const struct AdlifDataset *dataset,
                                    size_t *samples,
                                    size_t *timesteps,
                                    size_t *channels,
                                    size_t *classes);

/**
 * Copy sample `index` (`timesteps x channels`) into `values`.
 */
enum AdlifStatus adlif_dataset_sample(const struct AdlifDataset *dataset,
                                      size_t index,
                                      size_t *label,
                                      double *values,
                                      size_t values_len);

/**
 * Output spike count of one adaptive neuron driven by `weight * stimulus`
 * from a zero state.
 */
enum AdlifStatus adlif_count_spikes(const double *stimulus,
                                    size_t timesteps,
                                    double weight,
                                    double alpha,
                                    double beta,
                                    double a,
                                    double b,
                                    double theta,
                                    uint32_t *count);

/**
 * Regime map over the default (a, b) grid, or the grid in the TOML file at
 * `spec_path` when it is not null. Counts are written a-major into
 * `counts`; the grid sizes go to `a_steps` and `b_steps`.
 */
enum AdlifStatus adlif_regime_map(const char *spec_path,
                                  uint32_t *counts,
                                  size_t counts_len,
                                  size_t *a_steps,
                                  size_t *b_steps);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* ADLIF_H */
