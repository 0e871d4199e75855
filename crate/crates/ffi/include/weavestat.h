#ifndef WEAVESTAT_H
#define WEAVESTAT_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum WsStatus {
  WS_STATUS_OK = 0,
  WS_STATUS_NULL_POINTER = 1,
  WS_STATUS_INVALID_INPUT = 3,
  WS_STATUS_CONSISTENCY = 4,
  WS_STATUS_DOMAIN = 5,
  WS_STATUS_FORMAT = 6,
  WS_STATUS_IO = 7,
  WS_STATUS_REFUSED = 8,
  WS_STATUS_COVERAGE = 9,
  WS_STATUS_EMPTY = 10,
  WS_STATUS_BUFFER_TOO_SMALL = 11,
  WS_STATUS_PANIC = 99,
} WsStatus;

/**
 * Opaque two-point correlation field.
 */
typedef struct WsCorrelation WsCorrelation;

/**
 * Opaque segmented volume.
 */
typedef struct WsLabelVolume WsLabelVolume;

typedef struct WsNestingResult {
  double layer_thickness_mm;
  double layer_sigma_mm;
  double nesting_factor;
  double nesting_sigma;
  double peak_voxels;
} WsNestingResult;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread (empty if none).
 */
const char *ws_last_error(void);

/**
 * Copy `nz * ny * nx` labels into a new volume with isotropic `pitch_mm`.
 *
 * # Safety
 * `labels` must point to `nz * ny * nx` readable values.
 */
enum WsStatus ws_label_volume_new(const uint16_t *labels,
                                  size_t nz,
                                  size_t ny,
                                  size_t nx,
                                  double pitch_mm,
                                  struct WsLabelVolume **out);

/**
 * Load labels (or the argmax of masks) from an HDF5 bundle.
 *
 * # Safety
 * `path` must be a NUL-terminated string.
 */
enum WsStatus ws_label_volume_read_h5(const char *path,
                                      double pitch_mm,
                                      struct WsLabelVolume **out);

/**
 * # Safety
 * `vol` must be null or a handle from this library not yet freed.
 */
void ws_label_volume_free(struct WsLabelVolume *vol);

/**
 * Write `(nz, ny, nx)` into `shape`.
 *
 * # Safety
 * `shape` must point to three writable values.
 */
enum WsStatus ws_label_volume_shape(const struct WsLabelVolume *vol, size_t *shape);

/**
 * # Safety
 * `vol` must be a live handle.
 */
enum WsStatus ws_label_volume_num_classes(const struct WsLabelVolume *vol, size_t *out);

/**
 * Fraction of voxels per class, `num_classes` values.
 *
 * # Safety
 * `out` must point to `len` writable doubles.
 */
enum WsStatus ws_volume_fractions(const struct WsLabelVolume *vol, double *out, size_t len);

/**
 * Two-point correlation of `class`. Periodic output matches the volume
 * shape; aperiodic output is `2n - 1` per axis.
 *
 * # Safety
 * `vol` must be a live handle and `out` writable.
 */
enum WsStatus ws_s2(const struct WsLabelVolume *vol,
                    uint16_t class_,
                    bool periodic,
                    struct WsCorrelation **out);

/**
 * # Safety
 * `corr` must be null or a handle from this library not yet freed.
 */
void ws_correlation_free(struct WsCorrelation *corr);

/**
 * # Safety
 * `shape` must point to three writable values.
 */
enum WsStatus ws_correlation_shape(const struct WsCorrelation *corr, size_t *shape);

/**
 * Copy the field (zero lag at the center index) into `out`.
 *
 * # Safety
 * `out` must point to `len` writable doubles.
 */
enum WsStatus ws_correlation_values(const struct WsCorrelation *corr, double *out, size_t len);

/**
 * # Safety
 * `corr` must be a live handle.
 */
enum WsStatus ws_correlation_zero_lag(const struct WsCorrelation *corr, double *out);

/**
 * Samples along the z axis through the zero lag, `nz` values.
 *
 * # Safety
 * `out` must point to `len` writable doubles.
 */
enum WsStatus ws_correlation_z_spectrum(const struct WsCorrelation *corr, double *out, size_t len);

/**
 * Laminate thickness in mm for `layers` plies at fiber volume content `fvc`.
 *
 * # Safety
 * `out` must be writable.
 */
enum WsStatus ws_laminate_thickness(uint32_t layers,
                                    double areal_weight_gsm,
                                    double fiber_density_g_cm3,
                                    double fvc,
                                    double *out);

/**
 * Nesting factor from a known layer thickness `t_mm +- sigma_t_mm`.
 *
 * # Safety
 * `out` must be writable.
 */
enum WsStatus ws_nesting_factor(double t_mm,
                                double sigma_t_mm,
                                uint32_t layers,
                                double gap_mm,
                                struct WsNestingResult *out);

/**
 * Full chain on a volume: S2 of `class`, z-axis spectrum, peak, nesting factor.
 *
 * # Safety
 * `vol` must be a live handle and `out` writable.
 */
enum WsStatus ws_nesting_from_labels(const struct WsLabelVolume *vol,
                                     uint16_t class_,
                                     bool periodic,
                                     size_t interp_factor,
                                     uint32_t layers,
                                     double gap_mm,
                                     struct WsNestingResult *out);

/**
 * Number of sliding-window patches for `volume`, `patch` and `stride`
 * (each three values, `(z, y, x)`).
 *
 * # Safety
 * The three arrays must each hold three values.
 */
enum WsStatus ws_patch_grid_count(const size_t *volume,
                                  const size_t *patch,
                                  const size_t *stride,
                                  size_t *out);

/**
 * Synthetic plain-weave stack with the reference fabric geometry. A
 * non-zero `seed` shifts each layer in-plane at random.
 *
 * # Safety
 * `out` must be writable.
 */
enum WsStatus ws_synth_plain_weave(size_t layers,
                                   double pitch_mm,
                                   double interpenetration_mm,
                                   uint64_t seed,
                                   size_t nz,
                                   size_t ny,
                                   size_t nx,
                                   struct WsLabelVolume **out);

#ifdef __cplusplus
} // extern "C"
#endif // __cplusplus

#endif /* WEAVESTAT_H */
