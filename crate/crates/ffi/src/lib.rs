//! C ABI over `uav-coop`.
//!
//! Every entry point returns a [`UavStatus`] code; on failure the message is
//! kept per thread and read back with [`uav_last_error_message`]. Scenarios and
//! results are opaque handles released with their `_free` function. Strings
//! handed out by the library are released with [`uav_string_free`].

use std::cell::RefCell;
use std::ffi::{CStr, CString};
use std::os::raw::c_char;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use uav_coop::baselines::{baseline4_trajectory, baseline4_trajectory_capped, BaselineId};
use uav_coop::ccp::{CcpSettings, CcpTrace, Tolerance};
use uav_coop::harness::{run_scheme, Scheme};
use uav_coop::model::{objective, Plan};
use uav_coop::scenario::{
    generate_scenario, load_scenario, scenario_from_str, scenario_to_string, Layout, Scenario,
    SimParams,
};
use uav_coop::Error;

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum UavStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Io = 3,
    Parse = 4,
    Infeasible = 5,
    Solver = 6,
    Numerical = 7,
    BufferTooSmall = 8,
    Panic = 9,
}

impl From<&Error> for UavStatus {
    fn from(e: &Error) -> Self {
        match e {
            Error::InvalidParams(_) | Error::Config(_) | Error::Placement { .. } => {
                UavStatus::InvalidArgument
            }
            Error::Io(_) => UavStatus::Io,
            Error::Parse { .. } | Error::Csv(_) | Error::Json(_) => UavStatus::Parse,
            Error::Infeasible(_) | Error::Assignment(_) | Error::Initialization { .. } => {
                UavStatus::Infeasible
            }
            Error::Solver(_) | Error::Capability(_) | Error::MalformedProgram(_) => {
                UavStatus::Solver
            }
            Error::Singularity
            | Error::Domain(_)
            | Error::Dimension(_)
            | Error::LinearizationPoint(_)
            | Error::RankOne { .. } => UavStatus::Numerical,
        }
    }
}

/// Opaque scenario handle.
pub struct UavScenario {
    inner: Scenario,
}

/// Opaque result of one planned block.
pub struct UavResult {
    scenario: Scenario,
    plan: Plan,
    trace: CcpTrace,
}

/// Solver knobs. Obtain defaults from [`uav_ccp_settings_default`].
#[repr(C)]
#[derive(Clone, Copy, Debug)]
pub struct UavCcpSettings {
    /// Stopping tolerance; relative to the first objective unless `epsilon_absolute`.
    pub epsilon: f64,
    pub epsilon_absolute: bool,
    pub max_iters: u32,
    /// Penalty weight; `<= 0` keeps the scenario's value.
    pub beta: f64,
    pub polish: bool,
}

/// Power figures of a planned block, in watts.
#[repr(C)]
#[derive(Clone, Copy, Debug, Default)]
pub struct UavPowerSummary {
    pub weighted_total: f64,
    pub bs_total: f64,
    pub uav_tx_total: f64,
    pub uav_nav_total: f64,
    pub per_uav_avg: f64,
    pub iterations: u32,
    pub converged: bool,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    let c = CString::new(msg).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn clear_error() {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
}

fn fail(status: UavStatus, msg: impl Into<String>) -> UavStatus {
    set_error(msg);
    status
}

fn fail_with(e: Error) -> UavStatus {
    let status = UavStatus::from(&e);
    fail(status, e.to_string())
}

fn guard(f: impl FnOnce() -> UavStatus) -> UavStatus {
    clear_error();
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(s) => s,
        Err(p) => {
            let msg = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            fail(UavStatus::Panic, format!("panic: {msg}"))
        }
    }
}

unsafe fn read_str<'a>(p: *const c_char, what: &str) -> Result<&'a str, UavStatus> {
    if p.is_null() {
        return Err(fail(UavStatus::NullPointer, format!("{what} is null")));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| fail(UavStatus::InvalidArgument, format!("{what} is not valid UTF-8")))
}

fn hand_out_string(s: String, out: *mut *mut c_char) -> UavStatus {
    match CString::new(s) {
        Ok(c) => {
            unsafe { *out = c.into_raw() };
            UavStatus::Ok
        }
        Err(_) => fail(UavStatus::Numerical, "string contains an interior NUL"),
    }
}

macro_rules! non_null {
    ($($p:ident),+) => {
        $(if $p.is_null() {
            return fail(UavStatus::NullPointer, concat!(stringify!($p), " is null"));
        })+
    };
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn uav_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr() as *const c_char
}

/// Message of the last failed call on this thread, or null when it succeeded.
/// The pointer stays valid until the next library call on the same thread.
#[no_mangle]
pub extern "C" fn uav_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// # Safety
/// `s` must come from this library and not have been freed already.
#[no_mangle]
pub unsafe extern "C" fn uav_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

#[no_mangle]
pub extern "C" fn uav_ccp_settings_default() -> UavCcpSettings {
    let d = CcpSettings::default();
    let (epsilon, epsilon_absolute) = match d.epsilon {
        Tolerance::Relative(v) => (v, false),
        Tolerance::Absolute(v) => (v, true),
    };
    UavCcpSettings {
        epsilon,
        epsilon_absolute,
        max_iters: d.max_iters as u32,
        beta: d.beta.unwrap_or(0.0),
        polish: d.polish,
    }
}

fn to_settings(c: &UavCcpSettings) -> Result<CcpSettings, UavStatus> {
    if !(c.epsilon.is_finite() && c.epsilon > 0.0) {
        return Err(fail(UavStatus::InvalidArgument, "epsilon must be positive"));
    }
    if c.max_iters == 0 {
        return Err(fail(UavStatus::InvalidArgument, "max_iters must be at least 1"));
    }
    Ok(CcpSettings {
        epsilon: if c.epsilon_absolute {
            Tolerance::Absolute(c.epsilon)
        } else {
            Tolerance::Relative(c.epsilon)
        },
        max_iters: c.max_iters as usize,
        beta: (c.beta > 0.0).then_some(c.beta),
        polish: c.polish,
        ..CcpSettings::default()
    })
}

/// Samples a desk-scale scenario. Zero counts keep the desk defaults;
/// `r_min_bps <= 0` keeps the default rate target.
///
/// # Safety
/// `out` must be a valid pointer to writable storage for one handle.
#[no_mangle]
pub unsafe extern "C" fn uav_scenario_generate(
    num_uavs: u32,
    num_users: u32,
    r_min_bps: f64,
    seed: u64,
    out: *mut *mut UavScenario,
) -> UavStatus {
    guard(|| {
        non_null!(out);
        let mut p = SimParams::desk();
        if num_uavs > 0 {
            p = p.with_uavs(num_uavs as usize);
        }
        if num_users > 0 {
            p.num_users = num_users as usize;
        }
        if r_min_bps > 0.0 {
            p.r_min_bps = r_min_bps;
        }
        match generate_scenario(&p, &Layout::default(), seed) {
            Ok(s) => {
                *out = Box::into_raw(Box::new(UavScenario { inner: s }));
                UavStatus::Ok
            }
            Err(e) => fail_with(e),
        }
    })
}

/// Loads a scenario file.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn uav_scenario_load(
    path: *const c_char,
    out: *mut *mut UavScenario,
) -> UavStatus {
    guard(|| {
        non_null!(out);
        let path = match read_str(path, "path") {
            Ok(p) => p,
            Err(s) => return s,
        };
        match load_scenario(path) {
            Ok(s) => {
                *out = Box::into_raw(Box::new(UavScenario { inner: s }));
                UavStatus::Ok
            }
            Err(e) => fail_with(e),
        }
    })
}

/// Parses a scenario from its text form.
///
/// # Safety
/// `text` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn uav_scenario_parse(
    text: *const c_char,
    out: *mut *mut UavScenario,
) -> UavStatus {
    guard(|| {
        non_null!(out);
        let text = match read_str(text, "text") {
            Ok(t) => t,
            Err(s) => return s,
        };
        match scenario_from_str(text) {
            Ok(s) => {
                *out = Box::into_raw(Box::new(UavScenario { inner: s }));
                UavStatus::Ok
            }
            Err(e) => fail_with(e),
        }
    })
}

/// Serializes a scenario; free the string with [`uav_string_free`].
///
/// # Safety
/// `scenario` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn uav_scenario_to_string(
    scenario: *const UavScenario,
    out: *mut *mut c_char,
) -> UavStatus {
    guard(|| {
        non_null!(scenario, out);
        match scenario_to_string(&(*scenario).inner) {
            Ok(text) => hand_out_string(text, out),
            Err(e) => fail_with(e),
        }
    })
}

/// Writes the UAV, user and slot counts; any of the outputs may be null.
///
/// # Safety
/// `scenario` must be a live handle; non-null outputs must be writable.
#[no_mangle]
pub unsafe extern "C" fn uav_scenario_dims(
    scenario: *const UavScenario,
    num_uavs: *mut usize,
    num_users: *mut usize,
    num_slots: *mut usize,
) -> UavStatus {
    guard(|| {
        non_null!(scenario);
        let s = &(*scenario).inner;
        for (p, v) in [
            (num_uavs, s.num_uavs()),
            (num_users, s.num_users()),
            (num_slots, s.num_slots()),
        ] {
            if !p.is_null() {
                *p = v;
            }
        }
        UavStatus::Ok
    })
}

/// # Safety
/// `scenario` must come from this library and not have been freed already.
#[no_mangle]
pub unsafe extern "C" fn uav_scenario_free(scenario: *mut UavScenario) {
    if !scenario.is_null() {
        drop(Box::from_raw(scenario));
    }
}

/// Plans one block with the named scheme (`proposed`, `baseline1` .. `baseline4`).
/// `settings` may be null for the defaults.
///
/// # Safety
/// `scenario` must be a live handle, `scheme` a NUL-terminated string,
/// `settings` null or valid, and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn uav_plan_block(
    scenario: *const UavScenario,
    block_index: u32,
    scheme: *const c_char,
    settings: *const UavCcpSettings,
    out: *mut *mut UavResult,
) -> UavStatus {
    guard(|| {
        non_null!(scenario, out);
        let s = &(*scenario).inner;
        let scheme: Scheme = match read_str(scheme, "scheme").map(str::parse) {
            Ok(Ok(v)) => v,
            Ok(Err(e)) => return fail_with(e),
            Err(st) => return st,
        };
        if block_index as usize >= s.params.num_blocks {
            return fail(
                UavStatus::InvalidArgument,
                format!("block {block_index} out of range (0..{})", s.params.num_blocks),
            );
        }
        let cfg = if settings.is_null() {
            CcpSettings::default()
        } else {
            match to_settings(&*settings) {
                Ok(c) => c,
                Err(st) => return st,
            }
        };
        let flight = (scheme == Scheme::Baseline(BaselineId::FixedTrajectory))
            .then(|| baseline4_trajectory(s).unwrap_or_else(|_| baseline4_trajectory_capped(s)));
        match run_scheme(scheme, s, block_index as usize, &cfg, flight.as_deref()) {
            Ok((plan, trace)) => {
                *out = Box::into_raw(Box::new(UavResult {
                    scenario: s.clone(),
                    plan,
                    trace,
                }));
                UavStatus::Ok
            }
            Err(e) => fail_with(e),
        }
    })
}

/// # Safety
/// `result` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn uav_result_summary(
    result: *const UavResult,
    out: *mut UavPowerSummary,
) -> UavStatus {
    guard(|| {
        non_null!(result, out);
        let r = &*result;
        let rep = objective(&r.plan, &r.scenario);
        *out = UavPowerSummary {
            weighted_total: rep.weighted_total,
            bs_total: rep.bs_total,
            uav_tx_total: rep.per_slot_uav_tx.iter().flatten().sum(),
            uav_nav_total: rep.per_slot_uav_nav.iter().flatten().sum(),
            per_uav_avg: rep.per_uav_avg,
            iterations: r.trace.iterations() as u32,
            converged: r.trace.converged(),
        };
        UavStatus::Ok
    })
}

/// Copies the trajectory as `[l][t][xyz]` doubles, `t = 0..=T`.
/// Pass a null buffer to query the length through `len_out`.
///
/// # Safety
/// `result` must be a live handle; `buf` null or valid for `len` doubles;
/// `len_out` null or writable.
#[no_mangle]
pub unsafe extern "C" fn uav_result_trajectory(
    result: *const UavResult,
    buf: *mut f64,
    len: usize,
    len_out: *mut usize,
) -> UavStatus {
    guard(|| {
        non_null!(result);
        let flat: Vec<f64> = (*result)
            .plan
            .trajectory
            .iter()
            .flatten()
            .flat_map(|p| [p.x, p.y, p.z])
            .collect();
        copy_out(&flat, buf, len, len_out)
    })
}

/// Copies the cooperation indicators as `[l][k]` bytes (0 or 1).
///
/// # Safety
/// Same contract as [`uav_result_trajectory`].
#[no_mangle]
pub unsafe extern "C" fn uav_result_coop(
    result: *const UavResult,
    buf: *mut u8,
    len: usize,
    len_out: *mut usize,
) -> UavStatus {
    guard(|| {
        non_null!(result);
        let flat: Vec<u8> = (*result)
            .plan
            .coop
            .iter()
            .flatten()
            .map(|&b| b as u8)
            .collect();
        copy_out(&flat, buf, len, len_out)
    })
}

unsafe fn copy_out<T: Copy>(src: &[T], buf: *mut T, len: usize, len_out: *mut usize) -> UavStatus {
    if !len_out.is_null() {
        *len_out = src.len();
    }
    if buf.is_null() {
        return UavStatus::Ok;
    }
    if len < src.len() {
        return fail(
            UavStatus::BufferTooSmall,
            format!("buffer holds {len}, need {}", src.len()),
        );
    }
    ptr::copy_nonoverlapping(src.as_ptr(), buf, src.len());
    UavStatus::Ok
}

/// Per-iteration trace as CSV; free with [`uav_string_free`].
///
/// # Safety
/// `result` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn uav_result_trace_csv(
    result: *const UavResult,
    out: *mut *mut c_char,
) -> UavStatus {
    guard(|| {
        non_null!(result, out);
        match (*result).trace.to_csv_string() {
            Ok(text) => hand_out_string(text, out),
            Err(e) => fail_with(e),
        }
    })
}

/// # Safety
/// `result` must come from this library and not have been freed already.
#[no_mangle]
pub unsafe extern "C" fn uav_result_free(result: *mut UavResult) {
    if !result.is_null() {
        drop(Box::from_raw(result));
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn error_mapping_covers_common_cases() {
        assert_eq!(UavStatus::from(&Error::Config("x".into())), UavStatus::InvalidArgument);
        assert_eq!(UavStatus::from(&Error::Infeasible("x".into())), UavStatus::Infeasible);
        assert_eq!(UavStatus::from(&Error::RankOne { ratio: 0.1 }), UavStatus::Numerical);
        let io = std::io::Error::new(std::io::ErrorKind::NotFound, "gone");
        assert_eq!(UavStatus::from(&Error::Io(io)), UavStatus::Io);
    }

    #[test]
    fn guard_turns_panics_into_status() {
        let st = guard(|| panic!("boom"));
        assert_eq!(st, UavStatus::Panic);
        let msg = unsafe { CStr::from_ptr(uav_last_error_message()) };
        assert!(msg.to_str().unwrap().contains("boom"));
        assert_eq!(guard(|| UavStatus::Ok), UavStatus::Ok);
        assert!(uav_last_error_message().is_null());
    }

    #[test]
    fn settings_roundtrip_defaults() {
        let c = uav_ccp_settings_default();
        let s = to_settings(&c).unwrap();
        assert_eq!(s.max_iters, CcpSettings::default().max_iters);
        assert!(matches!(s.epsilon, Tolerance::Relative(_)));
        let bad = UavCcpSettings { max_iters: 0, ..c };
        assert_eq!(to_settings(&bad).unwrap_err(), UavStatus::InvalidArgument);
    }
}
