//! C ABI for the hapsim link-level simulator.
//!
//! The surface is deliberately small: an opaque scenario handle built from
//! defaults or TOML text, the four sweep operations producing an opaque
//! metric-series handle, accessors that copy series data out, and a few
//! scalar helpers. The generated header lands in `include/hapsim.h`.
//!
//! # Conventions
//!
//! * Every fallible function returns a [`HapsimStatus`]; `HAPSIM_STATUS_OK`
//!   is zero. Results travel through `out` pointers that are written only
//!   on success.
//! * On failure a thread-local message is recorded; [`hapsim_last_error`]
//!   returns a pointer to it that stays valid until the next failing call
//!   on the same thread.
//! * Handles are opaque. Free a scenario with [`hapsim_scenario_free`], a
//!   series with [`hapsim_series_free`], exactly once each.
//! * `char*` values returned through out-pointers are owned by the caller
//!   and must be released with [`hapsim_string_free`]. `const char*`
//!   returns ([`hapsim_version`], [`hapsim_last_error`]) are borrowed and
//!   must not be freed.
//! * Panics never unwind across the boundary: they are caught and reported
//!   as `HAPSIM_STATUS_INTERNAL_PANIC`.
//! * Handles may be shared across threads for read-only use, but the
//!   mutating calls (`set_seed`, `set_trials`, the `_free` functions)
//!   must not race with any other use of the same handle.

use std::cell::RefCell;
use std::ffi::{CStr, CString};
use std::os::raw::c_char;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use hapsim_core::channel::{los_probability, path_loss_db};
use hapsim_core::experiments::{
    correlation_sweep, dbm_to_watts, favprop_sweep, run_qos_sweep, run_sum_rate_sweep,
    watts_to_dbm, ConfigError, ExperimentError, MetricSeries, ScenarioConfig,
};

// ---------- Status codes and the thread-local error message ----------

/// Result of a fallible call. Zero means success; anything else means the
/// out-parameters were left untouched and `hapsim_last_error()` carries a
/// message describing what went wrong.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HapsimStatus {
    /// The call succeeded.
    Ok = 0,
    /// A required pointer argument was null.
    NullArgument = 1,
    /// An argument value (grid, index, name, length, parameter) was
    /// rejected.
    InvalidArgument = 2,
    /// Scenario text failed to parse or validate.
    ConfigError = 3,
    /// The simulation itself failed (numerical or internal condition).
    RuntimeError = 4,
    /// A panic was caught at the boundary; state may be inconsistent.
    InternalPanic = 5,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

/// Records `msg` as the calling thread's last error.
fn set_error(msg: &str) {
    // CString cannot hold interior NULs; map them away rather than fail
    // inside the error path.
    let clean: String = msg.replace('\0', "?");
    LAST_ERROR.with(|slot| {
        *slot.borrow_mut() = Some(CString::new(clean).expect("NULs removed"));
    });
}

/// Sets the error message and passes the status through, so failure sites
/// read as one expression.
fn fail(status: HapsimStatus, msg: &str) -> HapsimStatus {
    set_error(msg);
    status
}

fn null_arg(name: &str) -> HapsimStatus {
    fail(
        HapsimStatus::NullArgument,
        &format!("argument `{name}` must not be null"),
    )
}

/// Maps a core experiment error onto the coarse C status.
fn experiment_status(err: &ExperimentError) -> HapsimStatus {
    match err {
        ExperimentError::Config(_) => HapsimStatus::ConfigError,
        ExperimentError::Domain(_) => HapsimStatus::InvalidArgument,
        _ => HapsimStatus::RuntimeError,
    }
}

fn config_fail(err: &ConfigError) -> HapsimStatus {
    fail(HapsimStatus::ConfigError, &err.to_string())
}

fn experiment_fail(err: &ExperimentError) -> HapsimStatus {
    fail(experiment_status(err), &err.to_string())
}

/// Runs `f` with panics confined to this side of the boundary.
fn guarded<F: FnOnce() -> HapsimStatus>(f: F) -> HapsimStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(status) => status,
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| (*s).to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic payload".to_string());
            fail(
                HapsimStatus::InternalPanic,
                &format!("internal panic: {msg}"),
            )
        }
    }
}

/// Hands `s` to the caller as an owned, NUL-terminated C string.
fn out_string(out: *mut *mut c_char, s: String) -> HapsimStatus {
    let clean: String = s.replace('\0', "?");
    let raw = CString::new(clean).expect("NULs removed").into_raw();
    // Safety contract for `out` is checked by the callers before this.
    unsafe { *out = raw };
    HapsimStatus::Ok
}

/// Last error message for the calling thread, or null if no call on this
/// thread has failed yet.
///
/// The pointer borrows thread-local storage: it stays valid until the next
/// failing hapsim call on the same thread and must not be freed.
#[no_mangle]
pub extern "C" fn hapsim_last_error() -> *const c_char {
    LAST_ERROR.with(|slot| {
        slot.borrow()
            .as_ref()
            .map_or(ptr::null(), |msg| msg.as_ptr())
    })
}

/// Library version as a static NUL-terminated string; never freed.
#[no_mangle]
pub extern "C" fn hapsim_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr() as *const c_char
}

/// Releases a string allocated by this library.
///
/// # Safety
///
/// `s` must be a pointer previously written to a `char **out` parameter by
/// a hapsim function (or null, in which case this is a no-op), and it must
/// not be used or freed again afterwards.
#[no_mangle]
pub unsafe extern "C" fn hapsim_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

// ---------- Scenario handle ----------

/// Opaque scenario handle; create with `hapsim_scenario_default` or
/// `hapsim_scenario_from_toml`, release with `hapsim_scenario_free`.
pub struct HapsimScenario {
    inner: ScenarioConfig,
}

/// Opaque sweep-result handle; produced by the `hapsim_run_*` and
/// `hapsim_*_sweep` functions, released with `hapsim_series_free`.
pub struct HapsimSeries {
    inner: MetricSeries,
}

/// Creates a scenario with the built-in defaults. Never fails; the caller
/// owns the handle and must release it with `hapsim_scenario_free`.
#[no_mangle]
pub extern "C" fn hapsim_scenario_default() -> *mut HapsimScenario {
    Box::into_raw(Box::new(HapsimScenario {
        inner: ScenarioConfig::default(),
    }))
}

/// Parses and validates scenario TOML text into a new handle.
///
/// Unknown keys and invalid field values are rejected with
/// `HAPSIM_STATUS_CONFIG_ERROR`. On success `*out` owns the handle.
///
/// # Safety
///
/// `text` must point to a NUL-terminated string and `out` to writable
/// storage for one pointer; both stay borrowed only for the duration of
/// the call.
#[no_mangle]
pub unsafe extern "C" fn hapsim_scenario_from_toml(
    text: *const c_char,
    out: *mut *mut HapsimScenario,
) -> HapsimStatus {
    guarded(|| {
        if text.is_null() {
            return null_arg("text");
        }
        if out.is_null() {
            return null_arg("out");
        }
        let text = match CStr::from_ptr(text).to_str() {
            Ok(t) => t,
            Err(e) => {
                return fail(
                    HapsimStatus::InvalidArgument,
                    &format!("scenario text is not UTF-8: {e}"),
                )
            }
        };
        match ScenarioConfig::from_toml_str(text) {
            Ok(cfg) => {
                *out = Box::into_raw(Box::new(HapsimScenario { inner: cfg }));
                HapsimStatus::Ok
            }
            Err(e) => config_fail(&e),
        }
    })
}

/// Serializes the scenario back to TOML; `*out` must be released with
/// `hapsim_string_free`.
///
/// # Safety
///
/// `scenario` must be a live handle from this library and `out` writable
/// storage for one pointer.
#[no_mangle]
pub unsafe extern "C" fn hapsim_scenario_to_toml(
    scenario: *const HapsimScenario,
    out: *mut *mut c_char,
) -> HapsimStatus {
    guarded(|| {
        if scenario.is_null() {
            return null_arg("scenario");
        }
        if out.is_null() {
            return null_arg("out");
        }
        out_string(out, (*scenario).inner.to_toml_string())
    })
}

/// Sets the Monte Carlo master seed.
///
/// # Safety
///
/// `scenario` must be a live handle with no concurrent use.
#[no_mangle]
pub unsafe extern "C" fn hapsim_scenario_set_seed(
    scenario: *mut HapsimScenario,
    seed: u64,
) -> HapsimStatus {
    guarded(|| {
        if scenario.is_null() {
            return null_arg("scenario");
        }
        (*scenario).inner.seed = seed;
        HapsimStatus::Ok
    })
}

/// Sets the Monte Carlo trial count (must be at least 1).
///
/// # Safety
///
/// `scenario` must be a live handle with no concurrent use.
#[no_mangle]
pub unsafe extern "C" fn hapsim_scenario_set_trials(
    scenario: *mut HapsimScenario,
    n_trials: usize,
) -> HapsimStatus {
    guarded(|| {
        if scenario.is_null() {
            return null_arg("scenario");
        }
        if n_trials == 0 {
            return fail(
                HapsimStatus::InvalidArgument,
                "n_trials must be at least 1",
            );
        }
        (*scenario).inner.n_trials = n_trials;
        HapsimStatus::Ok
    })
}

/// Releases a scenario handle.
///
/// # Safety
///
/// `scenario` must be a handle from this library that has not been freed
/// (or null, in which case this is a no-op).
#[no_mangle]
pub unsafe extern "C" fn hapsim_scenario_free(scenario: *mut HapsimScenario) {
    if !scenario.is_null() {
        drop(Box::from_raw(scenario));
    }
}

// ---------- Sweep operations ----------

/// Borrows a C array as a slice after the null/length checks.
unsafe fn grid_slice<'a>(
    ptr: *const f64,
    len: usize,
    name: &str,
) -> Result<&'a [f64], HapsimStatus> {
    if ptr.is_null() {
        return Err(null_arg(name));
    }
    if len == 0 {
        return Err(fail(
            HapsimStatus::InvalidArgument,
            &format!("`{name}` must contain at least one point"),
        ));
    }
    Ok(std::slice::from_raw_parts(ptr, len))
}

/// Boxes a sweep result into `*out`.
unsafe fn out_series(
    out: *mut *mut HapsimSeries,
    result: Result<MetricSeries, ExperimentError>,
) -> HapsimStatus {
    match result {
        Ok(series) => {
            *out = Box::into_raw(Box::new(HapsimSeries { inner: series }));
            HapsimStatus::Ok
        }
        Err(e) => experiment_fail(&e),
    }
}

/// Runs the sum-rate / energy-efficiency sweep over a strictly increasing
/// grid of transmit-power budgets in watts. On success `*out` owns the
/// series handle.
///
/// # Safety
///
/// `scenario` must be a live handle, `budget_grid_w` must point to
/// `n_points` doubles, and `out` must be writable storage for one pointer.
#[no_mangle]
pub unsafe extern "C" fn hapsim_run_sum_rate_sweep(
    scenario: *const HapsimScenario,
    budget_grid_w: *const f64,
    n_points: usize,
    out: *mut *mut HapsimSeries,
) -> HapsimStatus {
    guarded(|| {
        if scenario.is_null() {
            return null_arg("scenario");
        }
        if out.is_null() {
            return null_arg("out");
        }
        let grid = match grid_slice(budget_grid_w, n_points, "budget_grid_w") {
            Ok(g) => g,
            Err(status) => return status,
        };
        out_series(out, run_sum_rate_sweep(&(*scenario).inner, grid))
    })
}

/// Runs the sum-rate sweep over a nondecreasing grid of per-user rate
/// floors (bits/s/Hz) at the scenario's fixed transmit power. On success
/// `*out` owns the series handle.
///
/// # Safety
///
/// `scenario` must be a live handle, `r_min_grid` must point to `n_points`
/// doubles, and `out` must be writable storage for one pointer.
#[no_mangle]
pub unsafe extern "C" fn hapsim_run_qos_sweep(
    scenario: *const HapsimScenario,
    r_min_grid: *const f64,
    n_points: usize,
    out: *mut *mut HapsimSeries,
) -> HapsimStatus {
    guarded(|| {
        if scenario.is_null() {
            return null_arg("scenario");
        }
        if out.is_null() {
            return null_arg("out");
        }
        let grid = match grid_slice(r_min_grid, n_points, "r_min_grid") {
            Ok(g) => g,
            Err(status) => return status,
        };
        out_series(out, run_qos_sweep(&(*scenario).inner, grid))
    })
}

/// Computes the deterministic steering-vector correlation between a user
/// fixed at `fixed_azimuth_deg` and a user swept over `azimuth_grid_deg`,
/// for both platform presets, on an `antennas`-element panel. On success
/// `*out` owns the series handle.
///
/// # Safety
///
/// `scenario` must be a live handle, `azimuth_grid_deg` must point to
/// `n_points` doubles, and `out` must be writable storage for one pointer.
#[no_mangle]
pub unsafe extern "C" fn hapsim_correlation_sweep(
    scenario: *const HapsimScenario,
    antennas: usize,
    fixed_azimuth_deg: f64,
    azimuth_grid_deg: *const f64,
    n_points: usize,
    out: *mut *mut HapsimSeries,
) -> HapsimStatus {
    guarded(|| {
        if scenario.is_null() {
            return null_arg("scenario");
        }
        if out.is_null() {
            return null_arg("out");
        }
        let grid = match grid_slice(azimuth_grid_deg, n_points, "azimuth_grid_deg") {
            Ok(g) => g,
            Err(status) => return status,
        };
        out_series(
            out,
            correlation_sweep(&(*scenario).inner, antennas, fixed_azimuth_deg, grid),
        )
    })
}

/// Estimates the favorable-propagation variance (normalized inner product
/// of two users' channels) versus the second user's azimuth, using
/// `mc_trials` Monte Carlo channel pairs per grid point (at least 100).
/// On success `*out` owns the series handle.
///
/// # Safety
///
/// `scenario` must be a live handle, `azimuth_grid_deg` must point to
/// `n_points` doubles, and `out` must be writable storage for one pointer.
#[no_mangle]
pub unsafe extern "C" fn hapsim_favprop_sweep(
    scenario: *const HapsimScenario,
    antennas: usize,
    azimuth_grid_deg: *const f64,
    n_points: usize,
    mc_trials: usize,
    out: *mut *mut HapsimSeries,
) -> HapsimStatus {
    guarded(|| {
        if scenario.is_null() {
            return null_arg("scenario");
        }
        if out.is_null() {
            return null_arg("out");
        }
        let grid = match grid_slice(azimuth_grid_deg, n_points, "azimuth_grid_deg") {
            Ok(g) => g,
            Err(status) => return status,
        };
        out_series(
            out,
            favprop_sweep(&(*scenario).inner, antennas, grid, mc_trials),
        )
    })
}

// ---------- Series accessors ----------

/// Number of grid points in the series; 0 if `series` is null.
///
/// # Safety
///
/// `series` must be a live handle from this library or null.
#[no_mangle]
pub unsafe extern "C" fn hapsim_series_n_points(series: *const HapsimSeries) -> usize {
    if series.is_null() {
        0
    } else {
        (*series).inner.x_values.len()
    }
}

/// Number of metric columns (excluding the x-axis); 0 if `series` is null.
///
/// # Safety
///
/// `series` must be a live handle from this library or null.
#[no_mangle]
pub unsafe extern "C" fn hapsim_series_n_columns(series: *const HapsimSeries) -> usize {
    if series.is_null() {
        0
    } else {
        (*series).inner.columns.len()
    }
}

/// Copies the x-axis label into a new string; release with
/// `hapsim_string_free`.
///
/// # Safety
///
/// `series` must be a live handle and `out` writable storage for one
/// pointer.
#[no_mangle]
pub unsafe extern "C" fn hapsim_series_x_label(
    series: *const HapsimSeries,
    out: *mut *mut c_char,
) -> HapsimStatus {
    guarded(|| {
        if series.is_null() {
            return null_arg("series");
        }
        if out.is_null() {
            return null_arg("out");
        }
        out_string(out, (*series).inner.x_label.clone())
    })
}

/// Copies the name of column `index` (0-based, in emission order) into a
/// new string; release with `hapsim_string_free`.
///
/// # Safety
///
/// `series` must be a live handle and `out` writable storage for one
/// pointer.
#[no_mangle]
pub unsafe extern "C" fn hapsim_series_column_name(
    series: *const HapsimSeries,
    index: usize,
    out: *mut *mut c_char,
) -> HapsimStatus {
    guarded(|| {
        if series.is_null() {
            return null_arg("series");
        }
        if out.is_null() {
            return null_arg("out");
        }
        match (&(*series).inner.columns).get(index) {
            Some(col) => out_string(out, col.name.clone()),
            None => fail(
                HapsimStatus::InvalidArgument,
                &format!(
                    "column index {index} out of range for {} columns",
                    (*series).inner.columns.len()
                ),
            ),
        }
    })
}

/// Copies one f64 slice into a caller buffer that must hold exactly
/// `n_points` values.
unsafe fn copy_values(values: &[f64], buf: *mut f64, len: usize) -> HapsimStatus {
    if buf.is_null() {
        return null_arg("buf");
    }
    if len != values.len() {
        return fail(
            HapsimStatus::InvalidArgument,
            &format!("buffer holds {len} values but the series has {}", values.len()),
        );
    }
    ptr::copy_nonoverlapping(values.as_ptr(), buf, len);
    HapsimStatus::Ok
}

/// Copies the x-axis values into `buf`, which must hold exactly
/// `hapsim_series_n_points(series)` doubles.
///
/// # Safety
///
/// `series` must be a live handle and `buf` must point to `len` writable
/// doubles.
#[no_mangle]
pub unsafe extern "C" fn hapsim_series_x_values(
    series: *const HapsimSeries,
    buf: *mut f64,
    len: usize,
) -> HapsimStatus {
    guarded(|| {
        if series.is_null() {
            return null_arg("series");
        }
        copy_values(&(*series).inner.x_values, buf, len)
    })
}

/// Copies the values of the column named `name` into `buf`, which must
/// hold exactly `hapsim_series_n_points(series)` doubles. Undefined points
/// are NaN.
///
/// # Safety
///
/// `series` must be a live handle, `name` a NUL-terminated string, and
/// `buf` must point to `len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn hapsim_series_column_values(
    series: *const HapsimSeries,
    name: *const c_char,
    buf: *mut f64,
    len: usize,
) -> HapsimStatus {
    guarded(|| {
        if series.is_null() {
            return null_arg("series");
        }
        if name.is_null() {
            return null_arg("name");
        }
        let name = match CStr::from_ptr(name).to_str() {
            Ok(n) => n,
            Err(e) => {
                return fail(
                    HapsimStatus::InvalidArgument,
                    &format!("column name is not UTF-8: {e}"),
                )
            }
        };
        match (*series).inner.column(name) {
            Some(values) => copy_values(values, buf, len),
            None => fail(
                HapsimStatus::InvalidArgument,
                &format!("no column named `{name}`"),
            ),
        }
    })
}

/// Renders the series as CSV text; release `*out` with
/// `hapsim_string_free`.
///
/// # Safety
///
/// `series` must be a live handle and `out` writable storage for one
/// pointer.
#[no_mangle]
pub unsafe extern "C" fn hapsim_series_to_csv(
    series: *const HapsimSeries,
    out: *mut *mut c_char,
) -> HapsimStatus {
    guarded(|| {
        if series.is_null() {
            return null_arg("series");
        }
        if out.is_null() {
            return null_arg("out");
        }
        out_string(out, (*series).inner.to_csv())
    })
}

/// Renders the series as pretty-printed JSON (undefined points become
/// nulls); release `*out` with `hapsim_string_free`.
///
/// # Safety
///
/// `series` must be a live handle and `out` writable storage for one
/// pointer.
#[no_mangle]
pub unsafe extern "C" fn hapsim_series_to_json(
    series: *const HapsimSeries,
    out: *mut *mut c_char,
) -> HapsimStatus {
    guarded(|| {
        if series.is_null() {
            return null_arg("series");
        }
        if out.is_null() {
            return null_arg("out");
        }
        out_string(out, (*series).inner.to_json())
    })
}

/// Releases a series handle.
///
/// # Safety
///
/// `series` must be a handle from this library that has not been freed
/// (or null, in which case this is a no-op).
#[no_mangle]
pub unsafe extern "C" fn hapsim_series_free(series: *mut HapsimSeries) {
    if !series.is_null() {
        drop(Box::from_raw(series));
    }
}

// ---------- Scalar helpers ----------

/// Converts a power in dBm to watts. Pure; never fails.
#[no_mangle]
pub extern "C" fn hapsim_dbm_to_watts(dbm: f64) -> f64 {
    dbm_to_watts(dbm)
}

/// Converts a power in watts to dBm. Pure; NaN for nonpositive input.
#[no_mangle]
pub extern "C" fn hapsim_watts_to_dbm(watts: f64) -> f64 {
    watts_to_dbm(watts)
}

/// Free-space path loss in dB at `distance_m` and `carrier_freq_hz`, plus
/// the shadow-fading term `shadow_db`; writes the result to `*out`.
///
/// # Safety
///
/// `out` must be writable storage for one double.
#[no_mangle]
pub unsafe extern "C" fn hapsim_path_loss_db(
    distance_m: f64,
    carrier_freq_hz: f64,
    shadow_db: f64,
    out: *mut f64,
) -> HapsimStatus {
    guarded(|| {
        if out.is_null() {
            return null_arg("out");
        }
        match path_loss_db(distance_m, carrier_freq_hz, shadow_db) {
            Ok(v) => {
                *out = v;
                HapsimStatus::Ok
            }
            Err(e) => fail(HapsimStatus::InvalidArgument, &e.to_string()),
        }
    })
}

/// Line-of-sight probability at `elevation_deg` with environment
/// parameters `(kappa, omega)`; writes the result to `*out`.
///
/// # Safety
///
/// `out` must be writable storage for one double.
#[no_mangle]
pub unsafe extern "C" fn hapsim_los_probability(
    elevation_deg: f64,
    kappa: f64,
    omega: f64,
    out: *mut f64,
) -> HapsimStatus {
    guarded(|| {
        if out.is_null() {
            return null_arg("out");
        }
        match los_probability(elevation_deg, kappa, omega) {
            Ok(v) => {
                *out = v;
                HapsimStatus::Ok
            }
            Err(e) => fail(HapsimStatus::InvalidArgument, &e.to_string()),
        }
    })
}

// ---------- Tests ----------
