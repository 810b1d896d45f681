#ifndef ALPHA_DYNAMO_H
#define ALPHA_DYNAMO_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/*
 Status codes returned by every fallible function.
 */
typedef enum AdStatus {
  AD_STATUS_OK = 0,
  AD_STATUS_NULL_POINTER = 1,
  AD_STATUS_INVALID_INPUT = 2,
  AD_STATUS_NUMERICAL = 3,
  AD_STATUS_ACCEPTANCE_FAILED = 4,
  AD_STATUS_IO = 5,
  AD_STATUS_PANIC = 6,
} AdStatus;

/*
 Method selector for [`ad_alpha_compute`].
 */
typedef enum AdAlphaMethod {
  AD_ALPHA_METHOD_DIRECT = 0,
  AD_ALPHA_METHOD_SERIES = 1,
  AD_ALPHA_METHOD_ALPHA2 = 2,
} AdAlphaMethod;

/*
 Opaque alpha tensor.
 */
typedef struct AdAlpha AdAlpha;

/*
 Opaque Fourier vector field.
 */
typedef struct AdField AdField;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/*
 Copies the last error message of this thread into `buf` (NUL-terminated,
 truncated to `len`). Returns the full message length, or 0 if none.

 # Safety
 `buf` must be valid for `len` bytes or null.
 */
size_t ad_last_error(char *buf, size_t len);

/*
 Builds a named flow (`zero`, `abc-like`, `vfields(j)`) on the 2 pi cell.

 # Safety
 `name` must be a NUL-terminated string; `out` must be valid for writes.
 */
enum AdStatus ad_field_preset(const char *name, size_t trunc, struct AdField **out);

/*
 Parses a field from its JSON file format.

 # Safety
 `json` must be a NUL-terminated string; `out` must be valid for writes.
 */
enum AdStatus ad_field_from_json(const char *json, struct AdField **out);

/*
 Serializes a field; release the string with [`ad_string_free`].

 # Safety
 `field` must come from this library; `out` must be valid for writes.
 */
enum AdStatus ad_field_to_json(const struct AdField *field, char **out);

/*
 L2 norm (normalized measure); negative if `field` is null.

 # Safety
 `field` must come from this library or be null.
 */
double ad_field_norm_l2(const struct AdField *field);

/*
 # Safety
 `field` must come from this library or be null; it is invalid afterwards.
 */
void ad_field_free(struct AdField *field);

/*
 # Safety
 `s` must come from this library or be null.
 */
void ad_string_free(char *s);

/*
 Alpha tensor of `field` at `r_m` with truncation `trunc` (0 keeps the
 field's own); `terms` is used by the series method only.

 # Safety
 `field` must come from this library; `out` must be valid for writes.
 */
enum AdStatus ad_alpha_compute(const struct AdField *field,
                               double r_m,
                               enum AdAlphaMethod method,
                               size_t trunc,
                               size_t terms,
                               struct AdAlpha **out);

/*
 Writes the 3x3 tensor in row-major order.

 # Safety
 `alpha` must come from this library; `out9` must hold 9 doubles.
 */
enum AdStatus ad_alpha_entries(const struct AdAlpha *alpha, double *out9);

/*
 # Safety
 `alpha` must come from this library or be null; it is invalid afterwards.
 */
void ad_alpha_free(struct AdAlpha *alpha);

/*
 Growing large-scale mode: best direction `xi_out[3]` (angular, on the
 2 pi cell) and rate `rate_out[2]` (re, im).

 # Safety
 `alpha` must come from this library; outputs must hold 3 and 2 doubles.
 */
enum AdStatus ad_predict(const struct AdAlpha *alpha,
                         uint32_t qmax,
                         double *xi_out,
                         double *rate_out);

/*
 Bloch eigenvalue `mu_out[2]` of the induction operator at `eps * xi`,
 nearest to `guess_re + i guess_im`.

 # Safety
 `field` must come from this library; `xi` must hold 3 doubles and
 `mu_out` 2.
 */
enum AdStatus ad_bloch_eigenvalue(const struct AdField *field,
                                  double r_m,
                                  const double *xi,
                                  double eps,
                                  size_t trunc,
                                  double guess_re,
                                  double guess_im,
                                  double *mu_out);

/*
 Largest growth rate of the linearized MHD operator over the Bloch classes
 of the big torus `n[3]` times the cell.

 # Safety
 `field` must come from this library; `n` must hold 3 integers.
 */
enum AdStatus ad_estimate_rho(const struct AdField *field,
                              const int64_t *n,
                              size_t trunc,
                              double r_m,
                              double r_e,
                              double *rho_out);

/*
 Runs the full pipeline from a TOML configuration. `passed` receives 1
 when every check passed.

 # Safety
 `config_toml` must be a NUL-terminated string; `passed` valid or null.
 */
enum AdStatus ad_pipeline_run(const char *config_toml, int32_t *passed);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* ALPHA_DYNAMO_H */
