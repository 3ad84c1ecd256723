#ifndef TROJAN_KEYRATE_H
#define TROJAN_KEYRATE_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum TkMethod {
  TK_METHOD_NUMERICAL = 0,
  TK_METHOD_GLLP = 1,
  TK_METHOD_BOTH = 2,
} TkMethod;

typedef enum TkProtocol {
  TK_PROTOCOL_BB84 = 0,
  TK_PROTOCOL_MDI = 1,
} TkProtocol;

typedef enum TkStatus {
  TK_STATUS_OK = 0,
  TK_STATUS_NULL_POINTER = 1,
  TK_STATUS_INVALID_ARGUMENT = 2,
  TK_STATUS_INFEASIBLE = 3,
  TK_STATUS_NUMERICAL = 4,
  TK_STATUS_IO = 5,
  TK_STATUS_PANIC = 6,
} TkStatus;

/**
 * Opaque run configuration.
 */
typedef struct TkConfig TkConfig;

/**
 * Opaque list of reports.
 */
typedef struct TkScan TkScan;

/**
 * One method's result at one distance. Absent values are NaN; `iterations` is -1 when absent.
 */
typedef struct TkReport {
  double distance_km;
  enum TkMethod method;
  double mu_signal;
  double rate;
  double p1;
  double p_pass;
  double leak_ec;
  double f_lower;
  double f_upper;
  double gap;
  int64_t iterations;
  bool below_gllp;
  bool all_zero;
  /**
   * False when the point failed; see `tk_scan_status` for the reason.
   */
  bool ok;
  uint64_t stats_fingerprint;
} TkReport;

/**
 * Inputs of the analytic bound; see the library's `GllpInputs`.
 */
typedef struct TkGllpInputs {
  double q_signal;
  double e_signal;
  double p1;
  double y1;
  double y_delta;
  double e_x;
  double p_z;
  double f_ec;
} TkGllpInputs;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread; empty after a success.
 * Valid until the next call into the library on this thread.
 */
const char *tk_last_error_message(void);

/**
 * Library version, a static string.
 */
const char *tk_version(void);

/**
 * Default parameter set for `protocol`.
 */
enum TkStatus tk_config_new(enum TkProtocol protocol, struct TkConfig **out);

/**
 * Named parameter set, e.g. `"table1-case1"`.
 *
 * # Safety
 * `name` must be a NUL-terminated string.
 */
enum TkStatus tk_config_preset(const char *name, struct TkConfig **out);

/**
 * Configuration from TOML text.
 *
 * # Safety
 * `toml` must be a NUL-terminated string.
 */
enum TkStatus tk_config_from_toml(const char *toml, struct TkConfig **out);

/**
 * # Safety
 * `cfg` must come from a `tk_config_*` constructor or be null.
 */
void tk_config_free(struct TkConfig *cfg);

/**
 * # Safety
 * `cfg` must be a live handle.
 */
enum TkStatus tk_config_set_method(struct TkConfig *cfg, enum TkMethod method);

/**
 * Leaked intensities; `mu_out_b` is Bob's (MDI) and NaN means "same as Alice".
 *
 * # Safety
 * `cfg` must be a live handle.
 */
enum TkStatus tk_config_set_mu_out(struct TkConfig *cfg, double mu_out, double mu_out_b);

/**
 * # Safety
 * `cfg` must be a live handle.
 */
enum TkStatus tk_config_set_intensities(struct TkConfig *cfg, double mu, double nu1, double nu2);

/**
 * # Safety
 * `cfg` must be a live handle.
 */
enum TkStatus tk_config_set_optimize_mu(struct TkConfig *cfg, bool enabled);

/**
 * # Safety
 * `cfg` must be a live handle.
 */
enum TkStatus tk_config_set_p_z(struct TkConfig *cfg, double p_z);

/**
 * # Safety
 * `cfg` must be a live handle and `km` must point to `len` values.
 */
enum TkStatus tk_config_set_distances(struct TkConfig *cfg, const double *km, size_t len);

/**
 * Configuration serialized as TOML. Free the string with `tk_string_free`.
 *
 * # Safety
 * `cfg` must be a live handle.
 */
enum TkStatus tk_config_to_toml(const struct TkConfig *cfg, char **out);

/**
 * # Safety
 * `s` must come from this library or be null.
 */
void tk_string_free(char *s);

/**
 * Reports for every configured method at one distance.
 *
 * # Safety
 * `cfg` must be a live handle.
 */
enum TkStatus tk_compute_keyrate(const struct TkConfig *cfg,
                                 double distance_km,
                                 struct TkScan **out);

/**
 * Reports over the configured distance grid. Per-point failures are
 * reported with `ok = false` rather than failing the call.
 *
 * # Safety
 * `cfg` must be a live handle.
 */
enum TkStatus tk_scan(const struct TkConfig *cfg, struct TkScan **out);

/**
 * Number of reports; 0 for a null handle.
 *
 * # Safety
 * `scan` must be a live handle or null.
 */
size_t tk_scan_len(const struct TkScan *scan);

/**
 * # Safety
 * `scan` must be a live handle.
 */
enum TkStatus tk_scan_get(const struct TkScan *scan, size_t index, struct TkReport *out);

/**
 * Status text of one report, owned by the scan; null when out of range.
 *
 * # Safety
 * `scan` must be a live handle or null.
 */
const char *tk_scan_status(const struct TkScan *scan, size_t index);

/**
 * # Safety
 * `scan` must come from `tk_scan` / `tk_compute_keyrate` or be null.
 */
void tk_scan_free(struct TkScan *scan);

/**
 * Analytic BB84 rate bound.
 *
 * # Safety
 * `inputs` and `out` must be valid pointers.
 */
enum TkStatus tk_gllp_bb84_rate(const struct TkGllpInputs *inputs, double mu_out, double *out);

/**
 * Analytic MDI rate bound.
 *
 * # Safety
 * `inputs` and `out` must be valid pointers.
 */
enum TkStatus tk_gllp_mdi_rate(const struct TkGllpInputs *inputs,
                               double mu_out_a,
                               double mu_out_b,
                               double *out);

/**
 * # Safety
 * `out` must be a valid pointer.
 */
enum TkStatus tk_binary_entropy(double x, double *out);

/**
 * Leak-induced state deviation for one party; NaN for invalid input.
 */
double tk_delta_bloch(double mu_out);

/**
 * Two-party version of [`tk_delta_bloch`].
 */
double tk_delta_bloch_mdi(double mu_out_a, double mu_out_b);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* TROJAN_KEYRATE_H */
