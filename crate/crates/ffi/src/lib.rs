//! C ABI over the audit pipeline: run a config, pull the report as JSON, and
//! compute IPS/ECS over caller-supplied arrays. Errors return the same codes
//! the CLI exits with (0 ok, 2 config, 3 data, 4 backend); the last error
//! message is kept per thread and retrieved with `iuleak_last_error`.

use std::cell::RefCell;
use std::ffi::{c_char, c_int, CStr, CString};
use std::path::Path;

use iuleak_core::attribution::{ContributionTable, Space};
use iuleak_core::config::RunConfig;
use iuleak_core::corpus::PromptVariant;
use iuleak_core::iu::MembershipMatrix;
use iuleak_core::metrics::{ecs_avg, ips_avg};
use iuleak_core::pipeline::run_audit;
use iuleak_core::report::AuditReport;
use iuleak_core::Error;

/// Opaque handle to a completed audit report.
pub struct IuleakReport {
    report: AuditReport,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(message: String) {
    let c = CString::new(message).unwrap_or_else(|_| CString::new("invalid error text").unwrap());
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn code_of(error: &Error) -> c_int {
    error.exit_code() as c_int
}

/// Returns the library version as a static string; never freed by the caller.
#[no_mangle]
pub extern "C" fn iuleak_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr() as *const c_char
}

/// Returns the last error message on this thread, or NULL if none. The
/// caller owns the string and must release it with `iuleak_string_free`.
#[no_mangle]
pub extern "C" fn iuleak_last_error() -> *mut c_char {
    LAST_ERROR.with(|e| match e.borrow().as_ref() {
        Some(c) => c.clone().into_raw(),
        None => std::ptr::null_mut(),
    })
}

/// Runs a full audit from a TOML config file. On success writes a report
/// handle to `out_report` and returns 0; on failure returns a nonzero error
/// code (2 config, 3 data, 4 backend) and sets the thread error message.
///
/// # Safety
/// `config_path` must be a valid NUL-terminated string and `out_report` a
/// valid pointer.
#[no_mangle]
pub unsafe extern "C" fn iuleak_run(
    config_path: *const c_char,
    out_report: *mut *mut IuleakReport,
) -> c_int {
    if config_path.is_null() || out_report.is_null() {
        set_error("null pointer argument".into());
        return 2;
    }
    let path = match CStr::from_ptr(config_path).to_str() {
        Ok(s) => s,
        Err(_) => {
            set_error("config path is not valid UTF-8".into());
            return 2;
        }
    };
    let config = match RunConfig::from_file(Path::new(path)) {
        Ok(c) => c,
        Err(e) => {
            let code = code_of(&e);
            set_error(e.to_string());
            return code;
        }
    };
    match run_audit(&config) {
        Ok(outcome) => {
            *out_report = Box::into_raw(Box::new(IuleakReport { report: outcome.report }));
            0
        }
        Err(e) => {
            let code = code_of(&e);
            set_error(e.to_string());
            code
        }
    }
}

/// Serializes a report handle to pretty-printed JSON. The caller owns the
/// returned string and must release it with `iuleak_string_free`.
///
/// # Safety
/// `report` must be a live handle from `iuleak_run`.
#[no_mangle]
pub unsafe extern "C" fn iuleak_report_to_json(report: *const IuleakReport) -> *mut c_char {
    if report.is_null() {
        set_error("null report handle".into());
        return std::ptr::null_mut();
    }
    let json = (*report).report.to_json();
    CString::new(json).map(CString::into_raw).unwrap_or(std::ptr::null_mut())
}

/// Releases a report handle. NULL is a no-op.
///
/// # Safety
/// `report` must be NULL or a handle from `iuleak_run`, released once.
#[no_mangle]
pub unsafe extern "C" fn iuleak_report_free(report: *mut IuleakReport) {
    if !report.is_null() {
        drop(Box::from_raw(report));
    }
}

/// Releases a string returned by this library. NULL is a no-op.
///
/// # Safety
/// `s` must be NULL or a string returned by this library, released once.
#[no_mangle]
pub unsafe extern "C" fn iuleak_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

unsafe fn propagation_ffi(
    membership: *const u8,
    contributions: *const f64,
    n_samples: usize,
    n_units: usize,
    out_value: *mut f64,
    present: bool,
) -> c_int {
    if membership.is_null() || contributions.is_null() || out_value.is_null() {
        set_error("null pointer argument".into());
        return 2;
    }
    let len = n_samples * n_units;
    let member_values: Vec<bool> =
        std::slice::from_raw_parts(membership, len).iter().map(|v| *v != 0).collect();
    let contrib_values = std::slice::from_raw_parts(contributions, len).to_vec();
    let rows: Vec<String> = (0..n_samples).map(|i| format!("s{i}")).collect();
    let columns: Vec<String> = (0..n_units).map(|j| format!("iu{j}")).collect();
    let matrix = MembershipMatrix { rows: rows.clone(), columns: columns.clone(), values: member_values };
    let table = ContributionTable {
        rows,
        columns,
        values: contrib_values,
        space: Space::Output,
        variant: PromptVariant::Original,
    };
    let result = if present { ips_avg(&matrix, &table) } else { ecs_avg(&matrix, &table) };
    match result {
        Ok(r) => {
            *out_value = r.value;
            0
        }
        Err(e) => {
            let code = code_of(&e);
            set_error(e.to_string());
            code
        }
    }
}

/// Computes average IPS over row-major `n_samples` x `n_units` arrays:
/// `membership` holds 0/1 prompt presence, `contributions` the per-IU
/// contribution scores. Samples with no present IU are excluded from the
/// mean. Returns 0 and writes the value to `out_value`.
///
/// # Safety
/// Both arrays must hold `n_samples * n_units` elements.
#[no_mangle]
pub unsafe extern "C" fn iuleak_ips_avg(
    membership: *const u8,
    contributions: *const f64,
    n_samples: usize,
    n_units: usize,
    out_value: *mut f64,
) -> c_int {
    propagation_ffi(membership, contributions, n_samples, n_units, out_value, true)
}

/// Computes average ECS, the complement of `iuleak_ips_avg`: the fraction of
/// prompt-absent IUs with nonzero contribution, averaged over samples with
/// at least one absent IU.
///
/// # Safety
/// Both arrays must hold `n_samples * n_units` elements.
#[no_mangle]
pub unsafe extern "C" fn iuleak_ecs_avg(
    membership: *const u8,
    contributions: *const f64,
    n_samples: usize,
    n_units: usize,
    out_value: *mut f64,
) -> c_int {
    propagation_ffi(membership, contributions, n_samples, n_units, out_value, false)
}
