//! C ABI over `stt-core`.
//!
//! Scenarios and traces cross the boundary as opaque handles. Every fallible
//! call returns an [`SttStatus`]; on failure the message is kept per thread and
//! read back with [`stt_last_error`]. Handles are released with their `_free`
//! function and are not shared across threads.

use std::cell::RefCell;
use std::ffi::{c_char, CStr};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use stt_core::monitors::{run_monitors, MonitorOptions};
use stt_core::sim::{annotate, run_simulation, SimConfig, SimTrace};
use stt_core::tube;
use stt_core::{parse_scenario, validate_scenario, Error, Scenario};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SttStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    /// Malformed scenario document.
    Parse = 3,
    /// Hard validation checks failed; the run was refused.
    Invalid = 4,
    /// Bad simulation configuration.
    Config = 5,
    /// The simulation reached a non-finite state.
    Aborted = 6,
    Io = 7,
    /// Index or buffer length out of range.
    OutOfRange = 8,
    Panic = 9,
}

/// Parsed scenario.
pub struct SttScenario {
    inner: Scenario,
}

/// Recorded run.
pub struct SttTrace {
    inner: SimTrace,
}

thread_local! {
    static LAST_ERROR: RefCell<String> = const { RefCell::new(String::new()) };
}

fn set_error(msg: impl Into<String>) {
    LAST_ERROR.with(|e| *e.borrow_mut() = msg.into());
}

fn status_of(err: &Error) -> SttStatus {
    match err {
        Error::Yaml(_) | Error::Field { .. } | Error::Dimension { .. } => SttStatus::Parse,
        Error::Invalid(_) => SttStatus::Invalid,
        Error::Config(_) => SttStatus::Config,
        Error::Aborted { .. } => SttStatus::Aborted,
        Error::Io { .. } | Error::Trace(_) | Error::Json(_) | Error::Plot(_) => SttStatus::Io,
    }
}

fn guard<F>(f: F) -> SttStatus
where
    F: FnOnce() -> Result<(), SttStatus>,
{
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => SttStatus::Ok,
        Ok(Err(status)) => status,
        Err(_) => {
            set_error("panic inside stt");
            SttStatus::Panic
        }
    }
}

fn fail(err: Error) -> SttStatus {
    let status = status_of(&err);
    set_error(err.to_string());
    status
}

fn null(what: &str) -> SttStatus {
    set_error(format!("{what} is null"));
    SttStatus::NullPointer
}

unsafe fn read_str<'a>(p: *const c_char, what: &str) -> Result<&'a str, SttStatus> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p).to_str().map_err(|_| {
        set_error(format!("{what} is not UTF-8"));
        SttStatus::InvalidUtf8
    })
}

unsafe fn handle<'a, T>(p: *const T, what: &str) -> Result<&'a T, SttStatus> {
    p.as_ref().ok_or_else(|| null(what))
}

fn out_of_range(msg: String) -> SttStatus {
    set_error(msg);
    SttStatus::OutOfRange
}

/// Copies the last error message of this thread into `buf` as a
/// NUL-terminated string, truncating to `len - 1` bytes. Returns the full
/// message length in bytes, excluding the terminator.
///
/// # Safety
/// `buf` must be null or point to `len` writable bytes.
#[no_mangle]
pub unsafe extern "C" fn stt_last_error(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| {
        let msg = e.borrow();
        if !buf.is_null() && len > 0 {
            let n = msg.len().min(len - 1);
            ptr::copy_nonoverlapping(msg.as_ptr(), buf.cast::<u8>(), n);
            *buf.add(n) = 0;
        }
        msg.len()
    })
}

/// Parses a YAML scenario document.
///
/// # Safety
/// `yaml` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn stt_scenario_parse(yaml: *const c_char, out: *mut *mut SttScenario) -> SttStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let text = read_str(yaml, "yaml")?;
        let inner = parse_scenario(text).map_err(fail)?;
        *out = Box::into_raw(Box::new(SttScenario { inner }));
        Ok(())
    })
}

/// Reads and parses a scenario file.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn stt_scenario_load(path: *const c_char, out: *mut *mut SttScenario) -> SttStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let path = read_str(path, "path")?;
        let text = std::fs::read_to_string(path).map_err(|e| fail(Error::Io {
            path: Path::new(path).to_path_buf(),
            source: e,
        }))?;
        let inner = parse_scenario(&text).map_err(fail)?;
        *out = Box::into_raw(Box::new(SttScenario { inner }));
        Ok(())
    })
}

/// # Safety
/// `sc` must be null or a handle from `stt_scenario_parse`/`stt_scenario_load`
/// not yet freed.
#[no_mangle]
pub unsafe extern "C" fn stt_scenario_free(sc: *mut SttScenario) {
    if !sc.is_null() {
        drop(Box::from_raw(sc));
    }
}

/// Workspace dimension, or 0 for a null handle.
///
/// # Safety
/// `sc` must be null or a live scenario handle.
#[no_mangle]
pub unsafe extern "C" fn stt_scenario_dimension(sc: *const SttScenario) -> usize {
    sc.as_ref().map_or(0, |s| s.inner.dimension)
}

/// Number of agents, or 0 for a null handle.
///
/// # Safety
/// `sc` must be null or a live scenario handle.
#[no_mangle]
pub unsafe extern "C" fn stt_scenario_agent_count(sc: *const SttScenario) -> usize {
    sc.as_ref().map_or(0, |s| s.inner.agents.len())
}

/// Runs the scenario checks. `hard_failures` receives the number of failed
/// hard checks.
///
/// # Safety
/// `sc` must be a live scenario handle; `hard_failures` must be writable.
#[no_mangle]
pub unsafe extern "C" fn stt_scenario_validate(sc: *const SttScenario, hard_failures: *mut usize) -> SttStatus {
    guard(|| {
        let sc = handle(sc, "scenario")?;
        if hard_failures.is_null() {
            return Err(null("hard_failures"));
        }
        *hard_failures = validate_scenario(&sc.inner).hard_failures().count();
        Ok(())
    })
}

/// Simulates a validated scenario. Non-positive `dt` or `t_end` select the
/// scenario's own values.
///
/// # Safety
/// `sc` must be a live scenario handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn stt_simulate(sc: *const SttScenario, dt: f64, t_end: f64, out: *mut *mut SttTrace) -> SttStatus {
    guard(|| {
        let sc = handle(sc, "scenario")?;
        if out.is_null() {
            return Err(null("out"));
        }
        let mut cfg = SimConfig::for_scenario(&sc.inner);
        if dt > 0.0 {
            cfg.dt = dt;
        }
        if t_end > 0.0 {
            cfg.t_end = t_end;
        }
        let mut inner = run_simulation(&sc.inner, &cfg).map_err(fail)?;
        annotate(&mut inner, &sc.inner);
        *out = Box::into_raw(Box::new(SttTrace { inner }));
        Ok(())
    })
}

/// # Safety
/// `tr` must be null or a handle from `stt_simulate` not yet freed.
#[no_mangle]
pub unsafe extern "C" fn stt_trace_free(tr: *mut SttTrace) {
    if !tr.is_null() {
        drop(Box::from_raw(tr));
    }
}

/// Number of grid rows, or 0 for a null handle.
///
/// # Safety
/// `tr` must be null or a live trace handle.
#[no_mangle]
pub unsafe extern "C" fn stt_trace_rows(tr: *const SttTrace) -> usize {
    tr.as_ref().map_or(0, |t| t.inner.rows())
}

unsafe fn row_check<'a>(tr: *const SttTrace, agent: usize, row: usize) -> Result<&'a SimTrace, SttStatus> {
    let t = &handle(tr, "trace")?.inner;
    if agent >= t.agents.len() {
        return Err(out_of_range(format!("agent {agent} of {}", t.agents.len())));
    }
    if row >= t.rows() {
        return Err(out_of_range(format!("row {row} of {}", t.rows())));
    }
    Ok(t)
}

unsafe fn write_vec(values: &[f64], out: *mut f64, len: usize) -> Result<(), SttStatus> {
    if out.is_null() {
        return Err(null("out"));
    }
    if len < values.len() {
        return Err(out_of_range(format!("buffer of {len} for {} values", values.len())));
    }
    ptr::copy_nonoverlapping(values.as_ptr(), out, values.len());
    Ok(())
}

/// Time of grid row `row`.
///
/// # Safety
/// `tr` must be a live trace handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn stt_trace_time(tr: *const SttTrace, row: usize, out: *mut f64) -> SttStatus {
    guard(|| {
        let t = row_check(tr, 0, row)?;
        write_vec(&[t.times[row]], out, 1)
    })
}

/// Tube centre of `agent` at `row` into `out[0..dimension]`.
///
/// # Safety
/// `tr` must be a live trace handle; `out` must hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn stt_trace_center(tr: *const SttTrace, agent: usize, row: usize, out: *mut f64, len: usize) -> SttStatus {
    guard(|| {
        let t = row_check(tr, agent, row)?;
        write_vec(t.sigma(agent, row), out, len)
    })
}

/// Output `y = x_1` of `agent` at `row` into `out[0..dimension]`.
///
/// # Safety
/// `tr` must be a live trace handle; `out` must hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn stt_trace_output(tr: *const SttTrace, agent: usize, row: usize, out: *mut f64, len: usize) -> SttStatus {
    guard(|| {
        let t = row_check(tr, agent, row)?;
        write_vec(t.output(agent, row), out, len)
    })
}

/// Tube radius of `agent` at `row`.
///
/// # Safety
/// `tr` must be a live trace handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn stt_trace_radius(tr: *const SttTrace, agent: usize, row: usize, out: *mut f64) -> SttStatus {
    guard(|| {
        let t = row_check(tr, agent, row)?;
        write_vec(&[t.rho(agent, row)], out, 1)
    })
}

/// Runs every monitor. `tras_pass` receives 1 when every agent satisfies the
/// reach-avoid-stay verdict, else 0.
///
/// # Safety
/// `sc` and `tr` must be live handles of the same run; `tras_pass` must be writable.
#[no_mangle]
pub unsafe extern "C" fn stt_check(sc: *const SttScenario, tr: *const SttTrace, tras_pass: *mut i32) -> SttStatus {
    guard(|| {
        let sc = handle(sc, "scenario")?;
        let tr = handle(tr, "trace")?;
        if tras_pass.is_null() {
            return Err(null("tras_pass"));
        }
        if sc.inner.agents.len() != tr.inner.agents.len() {
            return Err(out_of_range("trace does not match the scenario".into()));
        }
        let report = run_monitors(&tr.inner, &sc.inner, &MonitorOptions::default());
        *tras_pass = i32::from(report.tras_pass());
        Ok(())
    })
}

/// Log-sum-exp smooth minimum of `values[0..len]`; `+∞` when `len` is 0 and
/// NaN for a null pointer with positive length.
///
/// # Safety
/// `values` must point to `len` readable doubles.
#[no_mangle]
pub unsafe extern "C" fn stt_smooth_min(values: *const f64, len: usize, nu: f64) -> f64 {
    if len == 0 {
        return f64::INFINITY;
    }
    if values.is_null() {
        return f64::NAN;
    }
    tube::smooth_min(std::slice::from_raw_parts(values, len), nu)
}

/// Tube radius `smooth_min(ρ_max, d1, d2)`.
#[no_mangle]
pub extern "C" fn stt_radius_closed_form(d1: f64, d2: f64, rho_max: f64, nu: f64) -> f64 {
    tube::radius_closed_form(d1, d2, rho_max, nu)
}

/// Lower bound `−(1/ν)·ln(e^{−ν·ρ_max} + 2e^{−ν·ρ_min})` on the tube radius.
#[no_mangle]
pub extern "C" fn stt_radius_lower_bound(rho_min: f64, rho_max: f64, nu: f64) -> f64 {
    tube::radius_lower_bound(rho_min, rho_max, nu)
}

/// Social interaction function of agent k towards agent l.
#[no_mangle]
pub extern "C" fn stt_sif(s_k: f64, s_l: f64, t: f64, t_c_k: f64, b: f64) -> f64 {
    tube::sif(s_k, s_l, t, t_c_k, b)
}
