//! C interface to the priomac simulator.
//!
//! Handles are opaque and owned by the caller: every `*_new` or `pm_run`
//! result must be released with the matching `*_free`. Functions return a
//! [`PmStatus`]; on failure a description is available from
//! [`pm_last_error_message`] on the same thread.

#![allow(clippy::missing_safety_doc)]

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use priomac::harness::{run_scenario, Scenario};
use priomac::metrics::{to_csv, ClassStats, Protocol, ScenarioResult};
use priomac::traffic::PriorityClass;
use priomac::{HarnessError, SimConfig};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PmStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    InvalidConfig = 3,
    SimulationError = 4,
    Utf8 = 5,
    Panic = 6,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PmProtocol {
    Ssmac = 0,
    Frogmac = 1,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PmClass {
    Urgent = 0,
    Normal = 1,
}

/// Per-class outcome of one run. Delay fields are meaningful only when
/// `has_delay` is nonzero.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct PmClassStats {
    pub generated: u64,
    pub delivered: u64,
    pub dropped_deadline: u64,
    pub dropped_retry: u64,
    pub dropped_overflow: u64,
    pub has_delay: u8,
    pub mean_delay_us: f64,
    pub p95_delay_us: u64,
    pub max_delay_us: u64,
}

/// Opaque run configuration.
pub struct PmConfig {
    inner: SimConfig,
}

/// Opaque result of one run.
pub struct PmResult {
    inner: ScenarioResult,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    let c = CString::new(msg).expect("interior nul removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn clear_error() {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
}

fn fail(status: PmStatus, msg: impl Into<String>) -> PmStatus {
    set_error(msg);
    status
}

/// Runs `f`, turning a panic into [`PmStatus::Panic`].
fn guard(f: impl FnOnce() -> PmStatus) -> PmStatus {
    clear_error();
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(status) => status,
        Err(p) => {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panic".to_string());
            fail(PmStatus::Panic, format!("internal panic: {msg}"))
        }
    }
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, PmStatus> {
    if p.is_null() {
        return Err(fail(PmStatus::NullPointer, format!("{what} is null")));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| fail(PmStatus::Utf8, format!("{what} is not valid UTF-8")))
}

fn class_stats(c: &ClassStats) -> PmClassStats {
    PmClassStats {
        generated: c.generated,
        delivered: c.delivered,
        dropped_deadline: c.dropped_deadline,
        dropped_retry: c.dropped_retry,
        dropped_overflow: c.dropped_overflow,
        has_delay: u8::from(c.mean_delay_us.is_some()),
        mean_delay_us: c.mean_delay_us.unwrap_or(0.0),
        p95_delay_us: c.p95_delay_us.unwrap_or(0),
        max_delay_us: c.max_delay_us.unwrap_or(0),
    }
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn pm_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Message for the last failed call on this thread, or null. The pointer is
/// valid until the next `pm_*` call on the same thread.
#[no_mangle]
pub extern "C" fn pm_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// New configuration with the default parameters.
#[no_mangle]
pub extern "C" fn pm_config_new() -> *mut PmConfig {
    Box::into_raw(Box::new(PmConfig {
        inner: SimConfig::default(),
    }))
}

#[no_mangle]
pub unsafe extern "C" fn pm_config_free(config: *mut PmConfig) {
    if !config.is_null() {
        drop(Box::from_raw(config));
    }
}

/// Sets one parameter using the same keys and value syntax as the
/// configuration files.
#[no_mangle]
pub unsafe extern "C" fn pm_config_set(
    config: *mut PmConfig,
    key: *const c_char,
    value: *const c_char,
) -> PmStatus {
    guard(|| {
        let Some(config) = config.as_mut() else {
            return fail(PmStatus::NullPointer, "config is null");
        };
        let key = match str_arg(key, "key") {
            Ok(k) => k,
            Err(s) => return s,
        };
        let value = match str_arg(value, "value") {
            Ok(v) => v,
            Err(s) => return s,
        };
        match config.inner.set(key.trim(), value.trim()) {
            Ok(true) => PmStatus::Ok,
            Ok(false) => fail(PmStatus::InvalidArgument, format!("unknown key {key:?}")),
            Err(e) => fail(PmStatus::InvalidConfig, e.to_string()),
        }
    })
}

/// Checks the configuration as a whole without running it.
#[no_mangle]
pub unsafe extern "C" fn pm_config_validate(
    config: *const PmConfig,
    protocol: PmProtocol,
) -> PmStatus {
    guard(|| {
        let Some(config) = config.as_ref() else {
            return fail(PmStatus::NullPointer, "config is null");
        };
        match Scenario::new("ffi", protocol.into(), config.inner.clone()).validate() {
            Ok(()) => PmStatus::Ok,
            Err(e) => fail(PmStatus::InvalidConfig, e.to_string()),
        }
    })
}

impl From<PmProtocol> for Protocol {
    fn from(p: PmProtocol) -> Self {
        match p {
            PmProtocol::Ssmac => Protocol::SsMac,
            PmProtocol::Frogmac => Protocol::FrogMac,
        }
    }
}

/// Runs one scenario. On success `*out` receives a result handle to be
/// released with [`pm_result_free`].
#[no_mangle]
pub unsafe extern "C" fn pm_run(
    config: *const PmConfig,
    protocol: PmProtocol,
    out: *mut *mut PmResult,
) -> PmStatus {
    guard(|| {
        if out.is_null() {
            return fail(PmStatus::NullPointer, "out is null");
        }
        *out = ptr::null_mut();
        let Some(config) = config.as_ref() else {
            return fail(PmStatus::NullPointer, "config is null");
        };
        let scenario = Scenario::new("ffi", protocol.into(), config.inner.clone());
        match run_scenario(&scenario) {
            Ok(report) => {
                *out = Box::into_raw(Box::new(PmResult {
                    inner: report.result,
                }));
                PmStatus::Ok
            }
            Err(HarnessError::Config(e)) => fail(PmStatus::InvalidConfig, e.to_string()),
            Err(e) => fail(PmStatus::SimulationError, e.to_string()),
        }
    })
}

#[no_mangle]
pub unsafe extern "C" fn pm_result_free(result: *mut PmResult) {
    if !result.is_null() {
        drop(Box::from_raw(result));
    }
}

#[no_mangle]
pub unsafe extern "C" fn pm_result_class_stats(
    result: *const PmResult,
    class: PmClass,
    out: *mut PmClassStats,
) -> PmStatus {
    guard(|| {
        let (Some(result), Some(out)) = (result.as_ref(), out.as_mut()) else {
            return fail(PmStatus::NullPointer, "result or out is null");
        };
        let class = match class {
            PmClass::Urgent => PriorityClass::Urgent,
            PmClass::Normal => PriorityClass::Normal,
        };
        *out = class_stats(result.inner.class(class));
        PmStatus::Ok
    })
}

/// The result as CSV (header plus one row per class). Returns null on
/// failure; release the string with [`pm_string_free`].
#[no_mangle]
pub unsafe extern "C" fn pm_result_to_csv(result: *const PmResult) -> *mut c_char {
    let mut text = ptr::null_mut();
    guard(|| {
        let Some(result) = result.as_ref() else {
            return fail(PmStatus::NullPointer, "result is null");
        };
        let csv = to_csv(std::slice::from_ref(&result.inner));
        match CString::new(csv) {
            Ok(c) => {
                text = c.into_raw();
                PmStatus::Ok
            }
            Err(_) => fail(PmStatus::Utf8, "CSV contains a NUL byte"),
        }
    });
    text
}

#[no_mangle]
pub unsafe extern "C" fn pm_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}
