#ifndef IULEAK_H
#define IULEAK_H

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Opaque handle to a completed audit report.
 */
typedef struct IuleakReport IuleakReport;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Returns the library version as a static string; never freed by the caller.
 */
const char *iuleak_version(void);

/**
 * Returns the last error message on this thread, or NULL if none. The
 * caller owns the string and must release it with `iuleak_string_free`.
 */
char *iuleak_last_error(void);

/**
 * Runs a full audit from a TOML config file. On success writes a report
 * handle to `out_report` and returns 0; on failure returns a nonzero error
 * code (2 config, 3 data, 4 backend) and sets the thread error message.
 *
 * # Safety
 * `config_path` must be a valid NUL-terminated string and `out_report` a
 * valid pointer.
 */
int iuleak_run(const char *config_path, struct IuleakReport **out_report);

/**
 * Serializes a report handle to pretty-printed JSON. The caller owns the
 * returned string and must release it with `iuleak_string_free`.
 *
 * # Safety
 * `report` must be a live handle from `iuleak_run`.
 */
char *iuleak_report_to_json(const struct IuleakReport *report);

/**
 * Releases a report handle. NULL is a no-op.
 *
 * # Safety
 * `report` must be NULL or a handle from `iuleak_run`, released once.
 */
void iuleak_report_free(struct IuleakReport *report);

/**
 * Releases a string returned by this library. NULL is a no-op.
 *
 * # Safety
 * `s` must be NULL or a string returned by this library, released once.
 */
void iuleak_string_free(char *s);

/**
 * Computes average IPS over row-major `n_samples` x `n_units` arrays:
 * `membership` holds 0/1 prompt presence, `contributions` the per-IU
 * contribution scores. Samples with no present IU are excluded from the
 * mean. Returns 0 and writes the value to `out_value`.
 *
 * # Safety
 * Both arrays must hold `n_samples * n_units` elements.
 */
int iuleak_ips_avg(const uint8_t *membership,
                   const double *contributions,
                   uintptr_t n_samples,
                   uintptr_t n_units,
                   double *out_value);

/**
 * Computes average ECS, the complement of `iuleak_ips_avg`: the fraction of
 * prompt-absent IUs with nonzero contribution, averaged over samples with
 * at least one absent IU.
 *
 * # Safety
 * Both arrays must hold `n_samples * n_units` elements.
 */
int iuleak_ecs_avg(const uint8_t *membership,
                   const double *contributions,
                   uintptr_t n_samples,
                   uintptr_t n_units,
                   double *out_value);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* IULEAK_H */
