#ifndef KFP_H
#define KFP_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

#define KFP_BACKEND_FOURIER_FACTORIZED 0

#define KFP_BACKEND_DIRECT_KERNEL 1

#define KFP_SPLITTING_STRANG 0

#define KFP_SPLITTING_LIE 1

#define KFP_INTERPOLATION_LINEAR 0

#define KFP_INTERPOLATION_CUBIC 1

typedef enum KfpStatus {
  KFP_STATUS_OK = 0,
  KFP_STATUS_NULL_POINTER = 1,
  KFP_STATUS_DOMAIN = 2,
  KFP_STATUS_CAPABILITY = 3,
  KFP_STATUS_GRID = 4,
  KFP_STATUS_DATA = 5,
  KFP_STATUS_CONFIG = 6,
  KFP_STATUS_FORMAT = 7,
  KFP_STATUS_IO = 8,
  KFP_STATUS_BUFFER_SIZE = 9,
  KFP_STATUS_PANIC = 10,
} KfpStatus;

// Opaque complex field on a grid.
typedef struct KfpField KfpField;

// Opaque phase-space grid.
typedef struct KfpGrid KfpGrid;

// Opaque splitting propagator: a plan, a potential and a prepared free step.
typedef struct KfpPropagator KfpPropagator;

// Scalar time functions of the free kernel at one time.
typedef struct KfpTimeProfile {
  double t;
  double sigma;
  double theta;
  double gamma;
  double omega;
} KfpTimeProfile;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Library version as a static NUL-terminated string.
const char *kfp_version(void);

// Message of the last failed call on this thread, empty after a success.
// The pointer stays valid until the next `kfp_` call on the same thread.
const char *kfp_last_error(void);

// # Safety
// `out` must be valid for one write.
enum KfpStatus kfp_time_profiles(double t, struct KfpTimeProfile *out);

// Exact `1 -> inf` norm of the free semigroup in dimension `n`.
//
// # Safety
// `out` must be valid for one write.
enum KfpStatus kfp_free_norm_1_to_inf(double t, size_t n, double *out);

// Uniform grid in dimension `n`, the same axis in every x and every v direction.
//
// # Safety
// `out` must be valid for one write; the handle is released with [`kfp_grid_free`].
enum KfpStatus kfp_grid_new(size_t n,
                            double x_half_width,
                            size_t x_points,
                            double v_half_width,
                            size_t v_points,
                            struct KfpGrid **out);

// # Safety
// `grid` must be null or a handle from [`kfp_grid_new`] not yet freed.
void kfp_grid_free(struct KfpGrid *grid);

// Number of grid cells, 0 for a null handle.
//
// # Safety
// `grid` must be null or a live handle.
size_t kfp_grid_len(const struct KfpGrid *grid);

// Field from row-major samples; `im` may be null for a real field.
//
// # Safety
// `re` (and `im` unless null) must point to `len` readable doubles.
enum KfpStatus kfp_field_from_values(const struct KfpGrid *grid,
                                     const double *re,
                                     const double *im,
                                     size_t len,
                                     struct KfpField **out);

// Square-root Maxwellian of `c <x>^-rho` on `grid`; `c = 0` gives the free one.
//
// # Safety
// `grid` must be a live handle and `out` valid for one write.
enum KfpStatus kfp_field_maxwellian(const struct KfpGrid *grid,
                                    double c,
                                    double rho,
                                    struct KfpField **out);

// # Safety
// `field` must be null or a live handle not yet freed.
void kfp_field_free(struct KfpField *field);

// Number of samples, 0 for a null handle.
//
// # Safety
// `field` must be null or a live handle.
size_t kfp_field_len(const struct KfpField *field);

// Copies the samples out; `im` may be null to skip imaginary parts.
//
// # Safety
// `re` (and `im` unless null) must point to `len` writable doubles.
enum KfpStatus kfp_field_values(const struct KfpField *field, double *re, double *im, size_t len);

// Discrete `L^p` norm; pass `INFINITY` for the grid maximum.
//
// # Safety
// `field` must be a live handle and `out` valid for one write.
enum KfpStatus kfp_field_norm(const struct KfpField *field, double p, double *out);

// Real part of the discrete pairing `<a, b>`.
//
// # Safety
// `a`, `b` must be live handles and `out` valid for one write.
enum KfpStatus kfp_field_pairing(const struct KfpField *a, const struct KfpField *b, double *out);

// Reads a binary field file.
//
// # Safety
// `path` must be a NUL-terminated string and `out` valid for one write.
enum KfpStatus kfp_field_read(const char *path, struct KfpField **out);

// Writes a binary field file atomically.
//
// # Safety
// `field` must be a live handle and `path` a NUL-terminated string.
enum KfpStatus kfp_field_write(const struct KfpField *field, const char *path);

// One free step `e^{-t P0}` into a new field.
//
// # Safety
// `field` must be a live handle and `out` valid for one write.
enum KfpStatus kfp_free_step(const struct KfpField *field,
                             double t,
                             uint32_t backend_code,
                             struct KfpField **out);

// Splitting propagator for the potential `c <x>^-rho` (`c = 0` for none).
//
// # Safety
// `grid` must be a live handle and `out` valid for one write; release the
// result with [`kfp_propagator_free`].
enum KfpStatus kfp_propagator_new(const struct KfpGrid *grid,
                                  double dt,
                                  double c,
                                  double rho,
                                  uint32_t backend_code,
                                  uint32_t splitting_code,
                                  uint32_t interpolation_code,
                                  struct KfpPropagator **out);

// # Safety
// `prop` must be null or a live handle not yet freed.
void kfp_propagator_free(struct KfpPropagator *prop);

// Advances `field` by `steps` splitting steps into a new field. The optional
// `shifted_out` receives the mass the drift pushed out of the velocity box.
//
// # Safety
// `prop` and `field` must be live handles, `out` valid for one write and
// `shifted_out` null or valid for one write.
enum KfpStatus kfp_propagator_advance(const struct KfpPropagator *prop,
                                      const struct KfpField *field,
                                      size_t steps,
                                      struct KfpField **out,
                                      double *shifted_out);

// Static lowercase name of a status code; `"unknown"` outside the enum.
const char *kfp_status_name(int32_t status);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* KFP_H */
