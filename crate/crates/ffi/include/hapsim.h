/* C ABI for the hapsim link-level simulator. */

#ifndef HAPSIM_H
#define HAPSIM_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Result of a fallible call. Zero means success; anything else means the
// out-parameters were left untouched and `hapsim_last_error()` carries a
// message describing what went wrong.
typedef enum HapsimStatus {
  // The call succeeded.
  HAPSIM_STATUS_OK = 0,
  // A required pointer argument was null.
  HAPSIM_STATUS_NULL_ARGUMENT = 1,
  // An argument value (grid, index, name, length, parameter) was
  // rejected.
  HAPSIM_STATUS_INVALID_ARGUMENT = 2,
  // Scenario text failed to parse or validate.
  HAPSIM_STATUS_CONFIG_ERROR = 3,
  // The simulation itself failed (numerical or internal condition).
  HAPSIM_STATUS_RUNTIME_ERROR = 4,
  // A panic was caught at the boundary; state may be inconsistent.
  HAPSIM_STATUS_INTERNAL_PANIC = 5,
} HapsimStatus;

// Opaque scenario handle; create with `hapsim_scenario_default` or
// `hapsim_scenario_from_toml`, release with `hapsim_scenario_free`.
typedef struct HapsimScenario HapsimScenario;

// Opaque sweep-result handle; produced by the `hapsim_run_*` and
// `hapsim_*_sweep` functions, released with `hapsim_series_free`.
typedef struct HapsimSeries HapsimSeries;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Last error message for the calling thread, or null if no call on this
// thread has failed yet.
//
// The pointer borrows thread-local storage: it stays valid until the next
// failing hapsim call on the same thread and must not be freed.
const char *hapsim_last_error(void);

// Library version as a static NUL-terminated string; never freed.
const char *hapsim_version(void);

// Releases a string allocated by this library.
//
// # Safety
//
// `s` must be a pointer previously written to a `char **out` parameter by
// a hapsim function (or null, in which case this is a no-op), and it must
// not be used or freed again afterwards.
void hapsim_string_free(char *s);

// Creates a scenario with the built-in defaults. Never fails; the caller
// owns the handle and must release it with `hapsim_scenario_free`.
struct HapsimScenario *hapsim_scenario_default(void);

// Parses and validates scenario TOML text into a new handle.
//
// Unknown keys and invalid field values are rejected with
// `HAPSIM_STATUS_CONFIG_ERROR`. On success `*out` owns the handle.
//
// # Safety
//
// `text` must point to a NUL-terminated string and `out` to writable
// storage for one pointer; both stay borrowed only for the duration of
// the call.
enum HapsimStatus hapsim_scenario_from_toml(const char *text, struct HapsimScenario **out);

// Serializes the scenario back to TOML; `*out` must be released with
// `hapsim_string_free`.
//
// # Safety
//
// `scenario` must be a live handle from this library and `out` writable
// storage for one pointer.
enum HapsimStatus hapsim_scenario_to_toml(const struct HapsimScenario *scenario, char **out);

// Sets the Monte Carlo master seed.
//
// # Safety
//
// `scenario` must be a live handle with no concurrent use.
enum HapsimStatus hapsim_scenario_set_seed(struct HapsimScenario *scenario, uint64_t seed);

// Sets the Monte Carlo trial count (must be at least 1).
//
// # Safety
//
// `scenario` must be a live handle with no concurrent use.
enum HapsimStatus hapsim_scenario_set_trials(struct HapsimScenario *scenario, size_t n_trials);

// Releases a scenario handle.
//
// # Safety
//
// `scenario` must be a handle from this library that has not been freed
// (or null, in which case this is a no-op).
void hapsim_scenario_free(struct HapsimScenario *scenario);

// Runs the sum-rate / energy-efficiency sweep over a strictly increasing
// grid of transmit-power budgets in watts. On success `*out` owns the
// series handle.
//
// # Safety
//
// `scenario` must be a live handle, `budget_grid_w` must point to
// `n_points` doubles, and `out` must be writable storage for one pointer.
enum HapsimStatus hapsim_run_sum_rate_sweep(const struct HapsimScenario *scenario,
                                            const double *budget_grid_w,
                                            size_t n_points,
                                            struct HapsimSeries **out);

// Runs the sum-rate sweep over a nondecreasing grid of per-user rate
// floors (bits/s/Hz) at the scenario's fixed transmit power. On success
// `*out` owns the series handle.
//
// # Safety
//
// `scenario` must be a live handle, `r_min_grid` must point to `n_points`
// doubles, and `out` must be writable storage for one pointer.
enum HapsimStatus hapsim_run_qos_sweep(const struct HapsimScenario *scenario,
                                       const double *r_min_grid,
                                       size_t n_points,
                                       struct HapsimSeries **out);

// Computes the deterministic steering-vector correlation between a user
// fixed at `fixed_azimuth_deg` and a user swept over `azimuth_grid_deg`,
// for both platform presets, on an `antennas`-element panel. On success
// `*out` owns the series handle.
//
// # Safety
//
// `scenario` must be a live handle, `azimuth_grid_deg` must point to
// `n_points` doubles, and `out` must be writable storage for one pointer.
enum HapsimStatus hapsim_correlation_sweep(const struct HapsimScenario *scenario,
                                           size_t antennas,
                                           double fixed_azimuth_deg,
                                           const double *azimuth_grid_deg,
                                           size_t n_points,
                                           struct HapsimSeries **out);

// Estimates the favorable-propagation variance (normalized inner product
// of two users' channels) versus the second user's azimuth, using
// `mc_trials` Monte Carlo channel pairs per grid point (at least 100).
// On success `*out` owns the series handle.
//
// # Safety
//
// `scenario` must be a live handle, `azimuth_grid_deg` must point to
// `n_points` doubles, and `out` must be writable storage for one pointer.
enum HapsimStatus hapsim_favprop_sweep(const struct HapsimScenario *scenario,
                                       size_t antennas,
                                       const double *azimuth_grid_deg,
                                       size_t n_points,
                                       size_t mc_trials,
                                       struct HapsimSeries **out);

// Number of grid points in the series; 0 if `series` is null.
//
// # Safety
//
// `series` must be a live handle from this library or null.
size_t hapsim_series_n_points(const struct HapsimSeries *series);

// Number of metric columns (excluding the x-axis); 0 if `series` is null.
//
// # Safety
//
// `series` must be a live handle from this library or null.
size_t hapsim_series_n_columns(const struct HapsimSeries *series);

// Copies the x-axis label into a new string; release with
// `hapsim_string_free`.
//
// # Safety
//
// `series` must be a live handle and `out` writable storage for one
// pointer.
enum HapsimStatus hapsim_series_x_label(const struct HapsimSeries *series, char **out);

// Copies the name of column `index` (0-based, in emission order) into a
// new string; release with `hapsim_string_free`.
//
// # Safety
//
// `series` must be a live handle and `out` writable storage for one
// pointer.
enum HapsimStatus hapsim_series_column_name(const struct HapsimSeries *series,
                                            size_t index,
                                            char **out);

// Copies the x-axis values into `buf`, which must hold exactly
// `hapsim_series_n_points(series)` doubles.
//
// # Safety
//
// `series` must be a live handle and `buf` must point to `len` writable
// doubles.
enum HapsimStatus hapsim_series_x_values(const struct HapsimSeries *series,
                                         double *buf,
                                         size_t len);

// Copies the values of the column named `name` into `buf`, which must
// hold exactly `hapsim_series_n_points(series)` doubles. Undefined points
// are NaN.
//
// # Safety
//
// `series` must be a live handle, `name` a NUL-terminated string, and
// `buf` must point to `len` writable doubles.
enum HapsimStatus hapsim_series_column_values(const struct HapsimSeries *series,
                                              const char *name,
                                              double *buf,
                                              size_t len);

// Renders the series as CSV text; release `*out` with
// `hapsim_string_free`.
//
// # Safety
//
// `series` must be a live handle and `out` writable storage for one
// pointer.
enum HapsimStatus hapsim_series_to_csv(const struct HapsimSeries *series, char **out);

// Renders the series as pretty-printed JSON (undefined points become
// nulls); release `*out` with `hapsim_string_free`.
//
// # Safety
//
// `series` must be a live handle and `out` writable storage for one
// pointer.
enum HapsimStatus hapsim_series_to_json(const struct HapsimSeries *series, char **out);

// Releases a series handle.
//
// # Safety
//
// `series` must be a handle from this library that has not been freed
// (or null, in which case this is a no-op).
void hapsim_series_free(struct HapsimSeries *series);

// Converts a power in dBm to watts. Pure; never fails.
double hapsim_dbm_to_watts(double dbm);

// Converts a power in watts to dBm. Pure; NaN for nonpositive input.
double hapsim_watts_to_dbm(double watts);

// Free-space path loss in dB at `distance_m` and `carrier_freq_hz`, plus
// the shadow-fading term `shadow_db`; writes the result to `*out`.
//
// # Safety
//
// `out` must be writable storage for one double.
enum HapsimStatus hapsim_path_loss_db(double distance_m,
                                      double carrier_freq_hz,
                                      double shadow_db,
                                      double *out);

// Line-of-sight probability at `elevation_deg` with environment
// parameters `(kappa, omega)`; writes the result to `*out`.
//
// # Safety
//
// `out` must be writable storage for one double.
enum HapsimStatus hapsim_los_probability(double elevation_deg,
                                         double kappa,
                                         double omega,
                                         double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* HAPSIM_H */
