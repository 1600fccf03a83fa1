#ifndef WGMIRROR_H
#define WGMIRROR_H

/* Generated with cbindgen:0.27.0 */

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>

/**
 * Dipole selector.
 */
typedef enum WgmDipole {
  WGM_DIPOLE_X = 0,
  WGM_DIPOLE_Y = 1,
  WGM_DIPOLE_AVERAGED_BOTH = 2,
} WgmDipole;

/**
 * Leaky-rate split between the two dipoles.
 */
typedef enum WgmLeakyModel {
  WGM_LEAKY_MODEL_SHARED = 0,
  WGM_LEAKY_MODEL_EQUAL_TOTAL = 1,
} WgmLeakyModel;

/**
 * Result code of every fallible call. `WGM_STATUS_OK` is zero.
 */
typedef enum WgmStatus {
  WGM_STATUS_OK = 0,
  WGM_STATUS_NULL_POINTER = 1,
  WGM_STATUS_INVALID_PARAMETER = 2,
  WGM_STATUS_NO_BOUND_MODE = 3,
  WGM_STATUS_GRID_TOO_COARSE = 4,
  WGM_STATUS_OUT_OF_RANGE = 5,
  WGM_STATUS_SINGULAR_MATRIX = 6,
  WGM_STATUS_REFLECTIVITY_OUT_OF_RANGE = 7,
  WGM_STATUS_ZERO_FIELD = 8,
  WGM_STATUS_DEGENERATE_RATES = 9,
  WGM_STATUS_OUT_OF_CALIBRATION = 10,
  WGM_STATUS_NON_IDENTIFIABLE = 11,
  WGM_STATUS_NOT_CONVERGED = 12,
  WGM_STATUS_INSUFFICIENT_PHASE_SPAN = 13,
  WGM_STATUS_INSUFFICIENT_FRINGES = 14,
  WGM_STATUS_BRANCH_AMBIGUITY = 15,
  WGM_STATUS_EMPTY_FEASIBLE_SET = 16,
  WGM_STATUS_MALFORMED_ROW = 17,
  WGM_STATUS_BUFFER_TOO_SMALL = 18,
  WGM_STATUS_INTERNAL = 99,
} WgmStatus;

/**
 * Opaque solved guided mode.
 */
typedef struct WgmMode WgmMode;

/**
 * Opaque voltage-to-phase map reconstructed from a reference sweep.
 */
typedef struct WgmPhaseMap WgmPhaseMap;

/**
 * Rectangular ridge waveguide. Lengths in nm.
 */
typedef struct WgmGeometry {
  double width_nm;
  double thickness_nm;
  double core_index;
  double clad_index;
  double wavelength_nm;
} WgmGeometry;

/**
 * Emitter position and rates. `k` is the guided propagation constant in rad/nm.
 */
typedef struct WgmScene {
  double y0_nm;
  double mirror_distance_nm;
  double k;
  double gamma_x0;
  double gamma_y0;
  double gamma_b;
  double gamma_nrad;
  enum WgmLeakyModel leaky;
} WgmScene;

/**
 * Periodic hole mirror.
 */
typedef struct WgmPhotonicCrystal {
  size_t n_holes;
  double pitch_nm;
  double hole_radius_nm;
  double n_unetched;
  double n_hole;
  double termination_index;
} WgmPhotonicCrystal;

/**
 * Bi-exponential decay fit `A_f exp(-gamma_f t) + A_s exp(-gamma_s t) + bg`.
 */
typedef struct WgmBiexpFit {
  double a_f;
  double gamma_f;
  double a_s;
  double gamma_s;
  double background;
  double sigma_gamma_f;
  double sigma_gamma_s;
  /**
   * Radiative rate `gamma_f - gamma_s`.
   */
  double gamma_rad;
  double sigma_gamma_rad;
  /**
   * Reduced deviance.
   */
  double goodness;
  size_t n_iter;
  bool converged;
} WgmBiexpFit;

/**
 * Fit of `m + amp cos(2 phi + theta)` and its visibility `nu = amp / |m|`.
 */
typedef struct WgmSinusoidFit {
  double mean;
  double amplitude;
  double theta;
  double nu;
  double sigma_mean;
  double sigma_amplitude;
  double sigma_nu;
  double goodness;
  /**
   * True when the data carry no modulation and `theta` is arbitrary.
   */
  bool theta_undefined;
} WgmSinusoidFit;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version as a static NUL-terminated string.
 */
const char *wgm_version(void);

/**
 * Message of the last failed call on this thread; empty after a success.
 * The pointer stays valid until the next library call on the same thread.
 */
const char *wgm_last_error(void);

/**
 * Solves the fundamental quasi-TE mode on `n_points` lateral samples.
 * On success `*out` owns a new handle; release it with [`wgm_mode_free`].
 *
 * # Safety
 * `geometry` must point to a valid struct and `out` must be writable.
 */
enum WgmStatus wgm_mode_solve(const struct WgmGeometry *geometry,
                              size_t n_points,
                              struct WgmMode **out);

/**
 * Releases a mode handle. Null is ignored.
 *
 * # Safety
 * `mode` must come from [`wgm_mode_solve`] and not have been freed.
 */
void wgm_mode_free(struct WgmMode *mode);

/**
 * Effective index and propagation constant (rad/nm).
 *
 * # Safety
 * `mode` must be a live handle; the out-pointers must be writable.
 */
enum WgmStatus wgm_mode_index(const struct WgmMode *mode, double *n_eff, double *k);

/**
 * Number of lateral samples in the profile.
 *
 * # Safety
 * `mode` must be a live handle or null (which yields 0).
 */
size_t wgm_mode_len(const struct WgmMode *mode);

/**
 * Copies the grid and both field components into caller buffers of length
 * `capacity`. Returns `BufferTooSmall` if `capacity < wgm_mode_len(mode)`.
 *
 * # Safety
 * Each buffer must be writable for `capacity` doubles.
 */
enum WgmStatus wgm_mode_profile(const struct WgmMode *mode,
                                double *y_nm,
                                double *e_x,
                                double *e_y,
                                size_t capacity);

/**
 * Normalised field weights `|e_x|^2, |e_y|^2` at lateral offset `y0_nm`.
 *
 * # Safety
 * `mode` must be a live handle; the out-pointers must be writable.
 */
enum WgmStatus wgm_mode_weights(const struct WgmMode *mode, double y0_nm, double *wx, double *wy);

/**
 * Intensity visibility of a single dipole, `2r / (1 + r^2)`.
 *
 * # Safety
 * `out` must be writable.
 */
enum WgmStatus wgm_visibility_intensity(double r_t, double *out);

/**
 * Intensity visibility with both dipoles excited at weights `(wx, wy)`.
 *
 * # Safety
 * `out` must be writable.
 */
enum WgmStatus wgm_visibility_intensity_mixed(double r_t, double wx, double wy, double *out);

/**
 * Decay-rate visibility of the averaged dipoles of `scene`.
 *
 * # Safety
 * `scene` must be valid; `out` must be writable.
 */
enum WgmStatus wgm_visibility_rate(const struct WgmScene *scene, double r_t, double *out);

/**
 * Smallest mirror reflectivity compatible with an intensity visibility.
 *
 * # Safety
 * `out` must be writable.
 */
enum WgmStatus wgm_r_t_lower_bound(double nu_i, double *out);

/**
 * Radiative decay rate (mirror-modified waveguide part plus leaky part) at
 * mirror phase `phi`.
 *
 * # Safety
 * `scene` must be valid; `out` must be writable.
 */
enum WgmStatus wgm_decay_rate(const struct WgmScene *scene,
                              double r_t,
                              double phi,
                              enum WgmDipole dipole,
                              double *out);

/**
 * Complex amplitude reflectivity of the hole mirror at one wavelength.
 *
 * # Safety
 * `spec` must be valid; the out-pointers must be writable.
 */
enum WgmStatus wgm_tmm_reflectivity(const struct WgmPhotonicCrystal *spec,
                                    double wavelength_nm,
                                    double *re,
                                    double *im);

/**
 * Poisson maximum-likelihood bi-exponential fit of `n` samples.
 *
 * # Safety
 * `t` and `counts` must hold `n` doubles; `out` must be writable.
 */
enum WgmStatus wgm_fit_biexponential(const double *t,
                                     const double *counts,
                                     size_t n,
                                     struct WgmBiexpFit *out);

/**
 * Weighted sinusoid fit in `2 phi`. `sigmas` may be null for uniform weights.
 *
 * # Safety
 * `phases` and `values` (and `sigmas` if non-null) must hold `n` doubles;
 * `out` must be writable.
 */
enum WgmStatus wgm_fit_sinusoid(const double *phases,
                                const double *values,
                                const double *sigmas,
                                size_t n,
                                struct WgmSinusoidFit *out);

/**
 * Reconstructs the voltage-to-phase map from a reference-line intensity sweep.
 * Release the handle with [`wgm_phase_map_free`].
 *
 * # Safety
 * `voltages` and `intensities` must hold `n` doubles; `out` must be writable.
 */
enum WgmStatus wgm_phase_map_reconstruct(const double *voltages,
                                         const double *intensities,
                                         size_t n,
                                         struct WgmPhaseMap **out);

/**
 * Releases a phase-map handle. Null is ignored.
 *
 * # Safety
 * `map` must come from [`wgm_phase_map_reconstruct`] and not have been freed.
 */
void wgm_phase_map_free(struct WgmPhaseMap *map);

/**
 * Mirror phase at `voltage`; `OutOfCalibration` outside the swept range.
 *
 * # Safety
 * `map` must be a live handle; `out` must be writable.
 */
enum WgmStatus wgm_phase_map_phase(const struct WgmPhaseMap *map, double voltage, double *out);

/**
 * Number of fringes covered by the sweep and whether the phase direction is
 * ambiguous.
 *
 * # Safety
 * `map` must be a live handle; the out-pointers must be writable.
 */
enum WgmStatus wgm_phase_map_info(const struct WgmPhaseMap *map,
                                  double *fringes,
                                  bool *reflection_ambiguous);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* WGMIRROR_H */
