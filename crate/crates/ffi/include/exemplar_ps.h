#ifndef EXEMPLAR_PS_H
#define EXEMPLAR_PS_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum EpsStatus {
  EPS_STATUS_OK = 0,
  EPS_STATUS_INVALID_ARGUMENT = 1,
  EPS_STATUS_CONFIG = 2,
  EPS_STATUS_FORMAT = 3,
  EPS_STATUS_NUMERIC = 4,
  EPS_STATUS_IO = 5,
  EPS_STATUS_NULL_POINTER = 6,
  EPS_STATUS_PANIC = 7,
} EpsStatus;

typedef struct EpsBank EpsBank;

typedef struct EpsDictionary EpsDictionary;

typedef struct EpsRig EpsRig;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or null. The pointer
 * stays valid until the next failing call on the same thread.
 */
const char *eps_last_error(void);

/**
 * Default 20-atom parametric dictionary on the grid with divisor `r`.
 *
 * # Safety
 * `out` must be a valid pointer.
 */
enum EpsStatus eps_dictionary_default(uint32_t divisor, struct EpsDictionary **out);

/**
 * # Safety
 * `path` must be a NUL-terminated string and `out` a valid pointer.
 */
enum EpsStatus eps_dictionary_load(const char *path, struct EpsDictionary **out);

/**
 * # Safety
 * `dict` must come from this library; `path` must be NUL-terminated.
 */
enum EpsStatus eps_dictionary_save(const struct EpsDictionary *dict, const char *path);

/**
 * Number of atoms, or 0 for a null handle.
 *
 * # Safety
 * `dict` must be null or come from this library.
 */
size_t eps_dictionary_len(const struct EpsDictionary *dict);

/**
 * # Safety
 * `dict` must be null or come from this library.
 */
size_t eps_dictionary_channels(const struct EpsDictionary *dict);

/**
 * # Safety
 * `dict` must be null or an unreleased handle from this library.
 */
void eps_dictionary_free(struct EpsDictionary *dict);

/**
 * Spiral rig of `q` unit-intensity lights with the view along +z.
 *
 * # Safety
 * `out` must be a valid pointer.
 */
enum EpsStatus eps_rig_hemisphere(size_t q, struct EpsRig **out);

/**
 * Rig from `q` light directions (`3q` doubles, normalized on input) and
 * optional per-light intensities (null for all ones).
 *
 * # Safety
 * `xyz` must hold `3q` doubles; `intensities` null or `q` doubles.
 */
enum EpsStatus eps_rig_new(const double *xyz,
                           const double *intensities,
                           size_t q,
                           struct EpsRig **out);

/**
 * # Safety
 * `rig` must be null or come from this library.
 */
size_t eps_rig_len(const struct EpsRig *rig);

/**
 * # Safety
 * `rig` must be null or an unreleased handle from this library.
 */
void eps_rig_free(struct EpsRig *rig);

/**
 * Renders the exemplar bank. `schedule` lists candidate spacings in
 * degrees, coarse to fine; pass null to use the default five levels.
 *
 * # Safety
 * Handles must come from this library; `schedule` null or `levels` doubles.
 */
enum EpsStatus eps_bank_build(const struct EpsDictionary *dict,
                              const struct EpsRig *rig,
                              const double *schedule,
                              size_t levels,
                              struct EpsBank **out);

/**
 * # Safety
 * `bank` must be null or an unreleased handle from this library.
 */
void eps_bank_free(struct EpsBank *bank);

/**
 * Estimates one pixel's normal from its profile (`C·Q` values, channel-major).
 *
 * Writes the unit normal to `normal_out[0..3]`, the abundances to
 * `abundances_out` (`C·M` entries, may be null when `abundances_len` is 0)
 * and the residual norm to `residual_out` (may be null).
 *
 * # Safety
 * All pointers must be valid for the stated lengths.
 */
enum EpsStatus eps_estimate_normal(const struct EpsBank *bank,
                                   const double *profile,
                                   size_t profile_len,
                                   int refine,
                                   double *normal_out,
                                   double *abundances_out,
                                   size_t abundances_len,
                                   double *residual_out);

/**
 * Non-negative sparse reflectance fit at a known normal.
 *
 * # Safety
 * `normal` must hold 3 doubles, `profile` `C·Q` and `out` `C·M`.
 */
enum EpsStatus eps_fit_pixel(const struct EpsDictionary *dict,
                             const struct EpsRig *rig,
                             const double *normal,
                             const double *profile,
                             size_t profile_len,
                             double lambda,
                             double *out,
                             size_t out_len);

/**
 * Renders the profile `B(n)·c` (`C·Q` values) for abundances `c` (`C·M`).
 *
 * # Safety
 * `normal` must hold 3 doubles, `coeffs` `C·M` and `out` `C·Q`.
 */
enum EpsStatus eps_render_profile(const struct EpsDictionary *dict,
                                  const struct EpsRig *rig,
                                  const double *normal,
                                  const double *coeffs,
                                  size_t coeffs_len,
                                  double *out,
                                  size_t out_len);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* EXEMPLAR_PS_H */
