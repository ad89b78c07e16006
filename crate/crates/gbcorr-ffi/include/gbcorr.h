#ifndef GBCORR_H
#define GBCORR_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Status codes. 1–3 match the CLI exit codes.
 */
typedef enum GbcorrStatus {
  GBCORR_STATUS_OK = 0,
  GBCORR_STATUS_VALIDATION = 1,
  GBCORR_STATUS_NUMERICAL = 2,
  GBCORR_STATUS_VERIFICATION = 3,
  GBCORR_STATUS_NULL_POINTER = 4,
  GBCORR_STATUS_PANIC = 5,
} GbcorrStatus;

/**
 * Which scalar of a report to read.
 */
typedef enum GbcorrQuantity {
  GBCORR_QUANTITY_E_BOS_QUADRATURE = 0,
  /**
   * NaN when the trace path was not run.
   */
  GBCORR_QUANTITY_E_BOS_TRACE = 1,
  GBCORR_QUANTITY_E_EX = 2,
  GBCORR_QUANTITY_E_SECOND_ORDER = 3,
  /**
   * NaN when E_B6 was not computed.
   */
  GBCORR_QUANTITY_EB6 = 4,
  GBCORR_QUANTITY_TAIL_BOS = 5,
  GBCORR_QUANTITY_TAIL_EX = 6,
  GBCORR_QUANTITY_PARTICLE_COUNT = 7,
} GbcorrQuantity;

/**
 * Run configuration (defaults plus overrides).
 */
typedef struct GbcorrConfig GbcorrConfig;

/**
 * Correlation report for a single k_F.
 */
typedef struct GbcorrReport GbcorrReport;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or NULL. Valid until the next call.
 */
const char *gbcorr_last_error(void);

const char *gbcorr_version(void);

/**
 * New configuration with default values.
 */
struct GbcorrConfig *gbcorr_config_new(void);

/**
 * Parses flat `key = value` text into a new configuration.
 *
 * # Safety
 * `text` must be a NUL-terminated string; `out` must be writable.
 */
enum GbcorrStatus gbcorr_config_parse(const char *text, struct GbcorrConfig **out);

/**
 * Sets one key; the whole configuration is revalidated and left unchanged on error.
 *
 * # Safety
 * `cfg` must come from this library; `key` and `value` must be NUL-terminated.
 */
enum GbcorrStatus gbcorr_config_set(struct GbcorrConfig *cfg, const char *key, const char *value);

/**
 * # Safety
 * `cfg` must come from this library (or be NULL) and not be used afterwards.
 */
void gbcorr_config_free(struct GbcorrConfig *cfg);

/**
 * Full correlation report at one k_F using the configuration's model and cutoffs.
 *
 * # Safety
 * `cfg` must come from this library; `out` must be writable.
 */
enum GbcorrStatus gbcorr_compute(const struct GbcorrConfig *cfg,
                                 double k_f,
                                 struct GbcorrReport **out);

/**
 * # Safety
 * `r` must come from this library (or be NULL) and not be used afterwards.
 */
void gbcorr_report_free(struct GbcorrReport *r);

/**
 * # Safety
 * `r` must come from this library; `out` must be writable.
 */
enum GbcorrStatus gbcorr_report_get(const struct GbcorrReport *r,
                                    enum GbcorrQuantity q,
                                    double *out);

/**
 * Number of orbit rows in the report.
 *
 * # Safety
 * `r` must come from this library or be NULL.
 */
size_t gbcorr_report_orbit_count(const struct GbcorrReport *r);

/**
 * Report as JSON; free with `gbcorr_string_free`.
 *
 * # Safety
 * `r` must come from this library; `out` must be writable.
 */
enum GbcorrStatus gbcorr_report_json(const struct GbcorrReport *r, char **out);

/**
 * # Safety
 * `s` must come from this library (or be NULL) and not be used afterwards.
 */
void gbcorr_string_free(char *s);

/**
 * Runs a verification suite ("bounds", "fock", "onebody", "all") over the
 * configured k_F list. A failing suite returns `Verification` and sets
 * `*pass = false`; the failing check names are in `gbcorr_last_error`.
 * No files are written.
 *
 * # Safety
 * `cfg` must come from this library; `suite` NUL-terminated; `pass` writable.
 */
enum GbcorrStatus gbcorr_verify(const struct GbcorrConfig *cfg, const char *suite, bool *pass);

/**
 * ∫₀^∞ a/(a²+t²)·b/(b²+t²) dt by adaptive quadrature.
 *
 * # Safety
 * `out` must be writable.
 */
enum GbcorrStatus gbcorr_lorentzian_product_integral(double a, double b, double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* GBCORR_H */
