#ifndef BEAMSCOPE_H
#define BEAMSCOPE_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/*
 Estimator selector for [`bs_count_multiplies`].
 */
typedef enum BsEstimator {
  BS_ESTIMATOR_OMP = 0,
  BS_ESTIMATOR_AMP = 1,
  BS_ESTIMATOR_LAMP = 2,
  BS_ESTIMATOR_GM_LAMP = 3,
} BsEstimator;

/*
 Result codes.
 */
typedef enum BsStatus {
  BS_STATUS_OK = 0,
  BS_STATUS_INVALID_ARGUMENT = 1,
  BS_STATUS_NULL_POINTER = 2,
  BS_STATUS_IO = 3,
  BS_STATUS_PARSE = 4,
  BS_STATUS_INTERNAL = 5,
} BsStatus;

/*
 Trained LAMP or GM-LAMP network.
 */
typedef struct BsNetwork BsNetwork;

/*
 Sensing system: the `M x N` selection matrix.
 */
typedef struct BsSensing BsSensing;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/*
 Message for the most recent failed call on this thread ("" after a success).
 The pointer stays valid until the next `bs_*` call on the same thread.
 */
const char *bs_last_error(void);

/*
 Draws an `m x n` ±1/√m selection matrix from `seed`.

 # Safety
 `out` must be a valid pointer to writable storage for one handle.
 */
enum BsStatus bs_sensing_new(size_t n, size_t m, uint64_t seed, struct BsSensing **out);

/*
 Loads a sensing matrix written by `beamscope generate`.

 # Safety
 `path` must be a NUL-terminated string and `out` a valid handle slot.
 */
enum BsStatus bs_sensing_load(const char *path, struct BsSensing **out);

/*
 # Safety
 `sys` must be null or a handle from `bs_sensing_new` / `bs_sensing_load`
 that has not been freed.
 */
void bs_sensing_free(struct BsSensing *sys);

/*
 Writes `n` and `m` of the sensing system.

 # Safety
 `sys` must be a live handle; `n` and `m` must be writable.
 */
enum BsStatus bs_sensing_dims(const struct BsSensing *sys, size_t *n, size_t *m);

/*
 Simulates `y = A h + A noise` at `snr_db` (`INFINITY` for noiseless).
 `h` holds `2N` doubles, `y_out` receives `2M`.

 # Safety
 `sys` must be a live handle and the arrays must have the stated lengths.
 */
enum BsStatus bs_measure(const struct BsSensing *sys,
                         const double *h,
                         double snr_db,
                         uint64_t seed,
                         double *y_out);

/*
 AMP estimate. `y` holds `2M` doubles, `h_out` receives `2N`.

 # Safety
 `sys` must be a live handle and the arrays must have the stated lengths.
 */
enum BsStatus bs_amp_estimate(const struct BsSensing *sys,
                              const double *y,
                              size_t iterations,
                              double lambda,
                              double *h_out);

/*
 OMP estimate with `sparsity` atoms. `y` holds `2M` doubles, `h_out` receives `2N`.

 # Safety
 `sys` must be a live handle and the arrays must have the stated lengths.
 */
enum BsStatus bs_omp_estimate(const struct BsSensing *sys,
                              const double *y,
                              size_t sparsity,
                              double *h_out);

/*
 Loads a network checkpoint written by `beamscope train`.

 # Safety
 `path` must be a NUL-terminated string and `out` a valid handle slot.
 */
enum BsStatus bs_network_load(const char *path, struct BsNetwork **out);

/*
 Untrained LAMP network with `B_t = Aᵀ` and a shared `lambda` (equivalent to AMP).

 # Safety
 `sys` must be a live handle and `out` a valid handle slot.
 */
enum BsStatus bs_network_lamp_from_amp(const struct BsSensing *sys,
                                       size_t layers,
                                       double lambda,
                                       struct BsNetwork **out);

/*
 Writes a network checkpoint.

 # Safety
 `net` must be a live handle and `path` a NUL-terminated string.
 */
enum BsStatus bs_network_save(const struct BsNetwork *net, const char *path);

/*
 # Safety
 `net` must be null or a live network handle.
 */
void bs_network_free(struct BsNetwork *net);

/*
 Layer count, or 0 for a null handle.

 # Safety
 `net` must be null or a live network handle.
 */
size_t bs_network_depth(const struct BsNetwork *net);

/*
 Forward pass of a LAMP / GM-LAMP network. `y` holds `2M` doubles, `h_out` receives `2N`.

 # Safety
 Handles must be live and the arrays must have the stated lengths.
 */
enum BsStatus bs_network_estimate(const struct BsNetwork *net,
                                  const struct BsSensing *sys,
                                  const double *y,
                                  double *h_out);

/*
 NMSE in dB of `count` estimates of length `n` (each array holds `2·n·count` doubles).

 # Safety
 The arrays must have the stated lengths and `out` must be writable.
 */
enum BsStatus bs_nmse_db(const double *estimates,
                         const double *truths,
                         size_t n,
                         size_t count,
                         double *out);

/*
 Complex multiplies per estimate; `depth` is `S` for OMP and `T` otherwise,
 `nc` is only used for GM-LAMP.
 */
uint64_t bs_count_multiplies(enum BsEstimator kind, size_t n, size_t m, size_t depth, size_t nc);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* BEAMSCOPE_H */
