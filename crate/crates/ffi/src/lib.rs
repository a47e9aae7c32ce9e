//! C ABI over the klyz simulator.
//!
//! A run is configured from TOML text, integrated in memory, and exposed
//! through an opaque handle. Every call returns a [`KlyzStatus`]; the message
//! of the last failure on the calling thread is available from
//! [`klyz_last_error`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr};
use std::ptr;

use klyz_core::flow::{run, FlowState, RunRecord};
use klyz_core::io::{parse_config, validate_config};

/// Result of every call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KlyzStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    InvalidConfig = 3,
    FlowFailed = 4,
    OutOfRange = 5,
    BufferTooSmall = 6,
}

/// Diagnostics of one recorded sample.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct KlyzSample {
    pub t: f64,
    pub sup_rm: f64,
    pub sup_ric: f64,
    pub sup_alpha: f64,
    pub sup_scalar: f64,
    pub area: f64,
    pub min_metric_eigenvalue: f64,
}

/// A finished run; opaque to C.
pub struct KlyzRun {
    record: RunRecord,
    snapshots: Vec<FlowState>,
}

thread_local! {
    static LAST_ERROR: RefCell<String> = const { RefCell::new(String::new()) };
}

fn fail(status: KlyzStatus, message: impl Into<String>) -> KlyzStatus {
    LAST_ERROR.with(|e| *e.borrow_mut() = message.into());
    status
}

/// Validate `config_toml`, integrate it, and store a new handle in `out`.
/// Nothing is written to disk.
///
/// # Safety
/// `config_toml` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn klyz_run_from_toml(config_toml: *const c_char, out: *mut *mut KlyzRun) -> KlyzStatus {
    if config_toml.is_null() || out.is_null() {
        return fail(KlyzStatus::NullPointer, "null argument");
    }
    *out = ptr::null_mut();
    let Ok(text) = CStr::from_ptr(config_toml).to_str() else {
        return fail(KlyzStatus::InvalidUtf8, "configuration is not UTF-8");
    };
    let table = match text.parse::<toml::Table>() {
        Ok(t) => t,
        Err(e) => return fail(KlyzStatus::InvalidConfig, e.to_string()),
    };
    let cfg = match parse_config(table) {
        Ok(c) => c,
        Err(e) => return fail(KlyzStatus::InvalidConfig, e.to_string()),
    };
    let cfg = match validate_config(&cfg) {
        Ok(c) => c,
        Err(d) => {
            let msg = d.iter().map(|x| x.to_string()).collect::<Vec<_>>().join("\n");
            return fail(KlyzStatus::InvalidConfig, msg);
        }
    };
    let result = cfg.build().and_then(|(flow, initial)| run(&flow, initial, &cfg.settings()));
    match result {
        Ok(o) => {
            *out = Box::into_raw(Box::new(KlyzRun {
                record: o.record,
                snapshots: o.snapshots,
            }));
            KlyzStatus::Ok
        }
        Err(e) => fail(KlyzStatus::FlowFailed, e.to_string()),
    }
}

/// Release a handle. Null is ignored.
///
/// # Safety
/// `run` must come from [`klyz_run_from_toml`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn klyz_run_free(run: *mut KlyzRun) {
    if !run.is_null() {
        drop(Box::from_raw(run));
    }
}

unsafe fn handle<'a>(run: *const KlyzRun) -> Result<&'a KlyzRun, KlyzStatus> {
    run.as_ref().ok_or_else(|| fail(KlyzStatus::NullPointer, "null handle"))
}

macro_rules! try_status {
    ($e:expr) => {
        match $e {
            Ok(v) => v,
            Err(s) => return s,
        }
    };
}

/// Process exit code of the run: 0 reached the final time, 3 positivity
/// lost, 4 blow-up threshold, 5 non-finite values.
///
/// # Safety
/// `run` must be a live handle and `code` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn klyz_run_exit_code(run: *const KlyzRun, code: *mut i32) -> KlyzStatus {
    let r = try_status!(handle(run));
    if code.is_null() {
        return fail(KlyzStatus::NullPointer, "null output");
    }
    *code = r.record.termination.exit_code();
    KlyzStatus::Ok
}

/// Number of recorded samples.
///
/// # Safety
/// `run` must be a live handle and `count` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn klyz_run_sample_count(run: *const KlyzRun, count: *mut usize) -> KlyzStatus {
    let r = try_status!(handle(run));
    if count.is_null() {
        return fail(KlyzStatus::NullPointer, "null output");
    }
    *count = r.record.samples.len();
    KlyzStatus::Ok
}

/// Diagnostics of sample `index`.
///
/// # Safety
/// `run` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn klyz_run_sample(run: *const KlyzRun, index: usize, out: *mut KlyzSample) -> KlyzStatus {
    let r = try_status!(handle(run));
    if out.is_null() {
        return fail(KlyzStatus::NullPointer, "null output");
    }
    let Some(s) = r.record.samples.get(index) else {
        return fail(KlyzStatus::OutOfRange, format!("sample {index} of {}", r.record.samples.len()));
    };
    *out = KlyzSample {
        t: s.t,
        sup_rm: s.sup_rm,
        sup_ric: s.sup_ric,
        sup_alpha: s.sup_alpha,
        sup_scalar: s.sup_scalar,
        area: s.area,
        min_metric_eigenvalue: s.min_metric_eigenvalue,
    };
    KlyzStatus::Ok
}

/// Copy field `field` (0 or 1) of sample `index` into `buf`. The field has
/// as many values as grid points, row-major. With a null `buf` only `len`
/// is set to the required length.
///
/// # Safety
/// `run` must be a live handle, `len` a valid pointer, and `buf` null or
/// valid for `*len` doubles.
#[no_mangle]
pub unsafe extern "C" fn klyz_run_field(run: *const KlyzRun, index: usize, field: u32, buf: *mut f64, len: *mut usize) -> KlyzStatus {
    let r = try_status!(handle(run));
    if len.is_null() {
        return fail(KlyzStatus::NullPointer, "null length");
    }
    let Some(state) = r.snapshots.get(index) else {
        return fail(KlyzStatus::OutOfRange, format!("sample {index} of {}", r.snapshots.len()));
    };
    let Some(values) = state.u.get(field as usize) else {
        return fail(KlyzStatus::OutOfRange, format!("field {field} of 2"));
    };
    let capacity = *len;
    *len = values.len();
    if buf.is_null() {
        return KlyzStatus::Ok;
    }
    if capacity < values.len() {
        return fail(KlyzStatus::BufferTooSmall, format!("need {} values, got {capacity}", values.len()));
    }
    ptr::copy_nonoverlapping(values.as_ptr(), buf, values.len());
    KlyzStatus::Ok
}

/// Copy the last error message of this thread into `buf` as a
/// NUL-terminated string, truncating to `len` bytes. Returns the full
/// message length without the terminator.
///
/// # Safety
/// `buf` must be null or valid for `len` bytes.
#[no_mangle]
pub unsafe extern "C" fn klyz_last_error(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| {
        let msg = e.borrow();
        if !buf.is_null() && len > 0 {
            let n = msg.len().min(len - 1);
            ptr::copy_nonoverlapping(msg.as_ptr().cast::<c_char>(), buf, n);
            *buf.add(n) = 0;
        }
        msg.len()
    })
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn klyz_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}
