//! C interface to the semiclassical crate.
//!
//! Every object crosses the boundary as an opaque pointer created by a
//! `*_new`/`*_load` function and released by the matching `*_free`.
//! Functions return an [`ScStatus`]; on failure the message is available
//! from [`sc_last_error_message`] on the same thread.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;

use semiclassical::coherent::CoherentState;
use semiclassical::experiments::{run_to_dir, Scenario};
use semiclassical::solver::{Propagator, PropagatorConfig};
use semiclassical::{Grid, WaveField};

/// Result codes.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidString = 2,
    /// Bad scenario or parameter.
    Config = 3,
    /// Failure while running.
    Runtime = 4,
    BufferTooSmall = 5,
    Panic = 6,
}

/// Parsed scenario.
pub struct ScScenario {
    inner: Scenario,
}

/// Closed-form oscillator coherent state.
pub struct ScCoherent {
    inner: CoherentState,
}

/// Wave function on a grid together with its propagator.
pub struct ScWave {
    propagator: Propagator,
    psi: WaveField,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(message: impl Into<String>) {
    let text = message.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(text).ok());
}

fn fail(status: ScStatus, message: impl Into<String>) -> ScStatus {
    set_error(message);
    status
}

fn guard(f: impl FnOnce() -> ScStatus) -> ScStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(s) => s,
        Err(p) => {
            let msg = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            fail(ScStatus::Panic, msg)
        }
    }
}

unsafe fn read_str<'a>(p: *const c_char) -> Result<&'a str, ScStatus> {
    if p.is_null() {
        return Err(fail(ScStatus::NullPointer, "null string"));
    }
    CStr::from_ptr(p).to_str().map_err(|_| fail(ScStatus::InvalidString, "string is not valid UTF-8"))
}

unsafe fn read_point(p: *const f64, dim: usize) -> Result<[f64; 2], ScStatus> {
    if p.is_null() {
        return Err(fail(ScStatus::NullPointer, "null coordinate pointer"));
    }
    let mut out = [0.0; 2];
    out[..dim].copy_from_slice(std::slice::from_raw_parts(p, dim));
    Ok(out)
}

macro_rules! try_ffi {
    ($e:expr) => {
        match $e {
            Ok(v) => v,
            Err(s) => return s,
        }
    };
}

macro_rules! non_null {
    ($($p:ident),+) => {
        $(if $p.is_null() {
            return fail(ScStatus::NullPointer, concat!("`", stringify!($p), "` is null"));
        })+
    };
}

/// Copies the last error message of this thread into `buf` (NUL
/// terminated, truncated to `len`). Returns the full message length plus
/// one, or 0 when there is no error.
///
/// # Safety
/// `buf` must be null or point to `len` writable bytes.
#[no_mangle]
pub unsafe extern "C" fn sc_last_error_message(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| match e.borrow().as_ref() {
        None => 0,
        Some(msg) => {
            let bytes = msg.as_bytes_with_nul();
            if !buf.is_null() && len > 0 {
                let n = bytes.len().min(len);
                ptr::copy_nonoverlapping(bytes.as_ptr() as *const c_char, buf, n);
                *buf.add(n - 1) = 0;
            }
            bytes.len()
        }
    })
}

// ------------------------------------------------------------------ scenario

unsafe fn parse_scenario(text: &str, overrides: *const *const c_char, n: usize, out: *mut *mut ScScenario) -> ScStatus {
    let mut list = Vec::with_capacity(n);
    if n > 0 {
        non_null!(overrides);
        for &p in std::slice::from_raw_parts(overrides, n) {
            list.push(try_ffi!(read_str(p)).to_string());
        }
    }
    match Scenario::from_toml(text, &list) {
        Ok(s) => {
            *out = Box::into_raw(Box::new(ScScenario { inner: s }));
            ScStatus::Ok
        }
        Err(e) => fail(ScStatus::Config, e.to_string()),
    }
}

/// Parses scenario TOML text with `n` `key=value` overrides.
///
/// # Safety
/// `text` must be a NUL-terminated string, `overrides` an array of `n`
/// such strings (may be null when `n == 0`), `out` writable.
#[no_mangle]
pub unsafe extern "C" fn sc_scenario_parse(
    text: *const c_char,
    overrides: *const *const c_char,
    n: usize,
    out: *mut *mut ScScenario,
) -> ScStatus {
    guard(|| {
        non_null!(out);
        let text = try_ffi!(read_str(text));
        parse_scenario(text, overrides, n, out)
    })
}

/// Reads and parses a scenario file.
///
/// # Safety
/// As [`sc_scenario_parse`], with `path` a NUL-terminated path.
#[no_mangle]
pub unsafe extern "C" fn sc_scenario_load(
    path: *const c_char,
    overrides: *const *const c_char,
    n: usize,
    out: *mut *mut ScScenario,
) -> ScStatus {
    guard(|| {
        non_null!(out);
        let path = try_ffi!(read_str(path));
        let text = match std::fs::read_to_string(path) {
            Ok(t) => t,
            Err(e) => return fail(ScStatus::Config, format!("{path}: {e}")),
        };
        parse_scenario(&text, overrides, n, out)
    })
}

/// Number of ħ rungs the scenario will run.
///
/// # Safety
/// `scenario` must come from this library; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn sc_scenario_rung_count(scenario: *const ScScenario, out: *mut usize) -> ScStatus {
    guard(|| {
        non_null!(scenario, out);
        *out = (*scenario).inner.divisors.len();
        ScStatus::Ok
    })
}

/// Runs the full sweep and writes the run directory `out_dir`.
/// `jobs == 0` uses every core.
///
/// # Safety
/// `scenario` must come from this library; `out_dir` must be a
/// NUL-terminated path.
#[no_mangle]
pub unsafe extern "C" fn sc_scenario_run(scenario: *const ScScenario, out_dir: *const c_char, jobs: usize) -> ScStatus {
    guard(|| {
        non_null!(scenario);
        let dir = PathBuf::from(try_ffi!(read_str(out_dir)));
        let s = &(*scenario).inner;
        match run_to_dir(&dir, s, jobs) {
            Ok(_) => ScStatus::Ok,
            Err(e) if e.is_config() => fail(ScStatus::Config, e.to_string()),
            Err(e) => fail(ScStatus::Runtime, e.to_string()),
        }
    })
}

/// # Safety
/// `scenario` must come from this library (or be null) and not be used
/// afterwards.
#[no_mangle]
pub unsafe extern "C" fn sc_scenario_free(scenario: *mut ScScenario) {
    if !scenario.is_null() {
        drop(Box::from_raw(scenario));
    }
}

// ------------------------------------------------------------ coherent state

/// Coherent state centred at `x0` with velocity `v0` (`dim` entries each).
///
/// # Safety
/// `x0` and `v0` must point to `dim` doubles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn sc_coherent_new(
    dim: usize,
    omega: f64,
    mass: f64,
    hbar: f64,
    x0: *const f64,
    v0: *const f64,
    out: *mut *mut ScCoherent,
) -> ScStatus {
    guard(|| {
        non_null!(out);
        if dim != 1 && dim != 2 {
            return fail(ScStatus::Config, format!("dimension must be 1 or 2, got {dim}"));
        }
        let x0 = try_ffi!(read_point(x0, dim));
        let v0 = try_ffi!(read_point(v0, dim));
        match CoherentState::new(dim, omega, mass, hbar, x0, v0) {
            Ok(cs) => {
                *out = Box::into_raw(Box::new(ScCoherent { inner: cs }));
                ScStatus::Ok
            }
            Err(e) => fail(ScStatus::Config, e.to_string()),
        }
    })
}

unsafe fn coherent_eval(cs: *const ScCoherent, x: *const f64, out: *mut f64, f: impl FnOnce(&CoherentState, [f64; 2]) -> f64) -> ScStatus {
    guard(|| {
        non_null!(cs, out);
        let cs = &(*cs).inner;
        let x = try_ffi!(read_point(x, cs.dim));
        *out = f(cs, x);
        ScStatus::Ok
    })
}

/// `|ψ(x, t)|²`.
///
/// # Safety
/// `cs` from this library, `x` pointing to `dim` doubles, `out` writable.
#[no_mangle]
pub unsafe extern "C" fn sc_coherent_density(cs: *const ScCoherent, x: *const f64, t: f64, out: *mut f64) -> ScStatus {
    coherent_eval(cs, x, out, |c, p| c.density(p, t))
}

/// Phase action `S(x, t)`.
///
/// # Safety
/// As [`sc_coherent_density`].
#[no_mangle]
pub unsafe extern "C" fn sc_coherent_action(cs: *const ScCoherent, x: *const f64, t: f64, out: *mut f64) -> ScStatus {
    coherent_eval(cs, x, out, |c, p| c.action(p, t))
}

/// Quantum potential `Q(x, t)`.
///
/// # Safety
/// As [`sc_coherent_density`].
#[no_mangle]
pub unsafe extern "C" fn sc_coherent_quantum_potential(cs: *const ScCoherent, x: *const f64, t: f64, out: *mut f64) -> ScStatus {
    coherent_eval(cs, x, out, |c, p| c.quantum_potential(p, t))
}

/// Classical centre `ξ(t)`, written to `out[0..dim]`.
///
/// # Safety
/// `cs` from this library, `out` pointing to `dim` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn sc_coherent_center(cs: *const ScCoherent, t: f64, out: *mut f64) -> ScStatus {
    guard(|| {
        non_null!(cs, out);
        let cs = &(*cs).inner;
        let c = cs.center(t);
        std::slice::from_raw_parts_mut(out, cs.dim).copy_from_slice(&c[..cs.dim]);
        ScStatus::Ok
    })
}

/// # Safety
/// `cs` must come from this library (or be null) and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn sc_coherent_free(cs: *mut ScCoherent) {
    if !cs.is_null() {
        drop(Box::from_raw(cs));
    }
}

// ---------------------------------------------------------------- wave field

/// Samples `cs` at `t = 0` on a periodic grid (`extent` and `points` hold
/// `dim` entries) and prepares a split-step propagator with step `dt`.
///
/// # Safety
/// `cs` from this library, `extent`/`points` pointing to `dim` values,
/// `out` writable.
#[no_mangle]
pub unsafe extern "C" fn sc_wave_from_coherent(
    cs: *const ScCoherent,
    extent: *const f64,
    points: *const usize,
    dt: f64,
    out: *mut *mut ScWave,
) -> ScStatus {
    guard(|| {
        non_null!(cs, extent, points, out);
        let cs = &(*cs).inner;
        let extent = std::slice::from_raw_parts(extent, cs.dim);
        let points = std::slice::from_raw_parts(points, cs.dim);
        let grid = match Grid::new(cs.dim, extent, points) {
            Ok(g) => g,
            Err(e) => return fail(ScStatus::Config, e.to_string()),
        };
        let built = (|| -> Result<ScWave, String> {
            let spec = cs.potential().map_err(|e| e.to_string())?;
            let cfg = PropagatorConfig::new(dt, 1).map_err(|e| e.to_string())?;
            let propagator = Propagator::new(grid, &spec, cs.hbar, &cfg).map_err(|e| e.to_string())?;
            let mut psi = cs.wave_field(&grid, 0.0).map_err(|e| e.to_string())?;
            psi.normalize();
            Ok(ScWave { propagator, psi })
        })();
        match built {
            Ok(w) => {
                *out = Box::into_raw(Box::new(w));
                ScStatus::Ok
            }
            Err(m) => fail(ScStatus::Config, m),
        }
    })
}

/// Advances by `steps` split steps.
///
/// # Safety
/// `wave` must come from this library.
#[no_mangle]
pub unsafe extern "C" fn sc_wave_step(wave: *mut ScWave, steps: usize) -> ScStatus {
    guard(|| {
        non_null!(wave);
        let w = &mut *wave;
        let t0 = w.psi.time();
        for k in 1..=steps {
            w.propagator.step_in_place(&mut w.psi);
            w.psi.set_time(t0 + k as f64 * w.propagator.dt());
        }
        ScStatus::Ok
    })
}

/// Number of grid nodes.
///
/// # Safety
/// `wave` from this library, `out` writable.
#[no_mangle]
pub unsafe extern "C" fn sc_wave_len(wave: *const ScWave, out: *mut usize) -> ScStatus {
    guard(|| {
        non_null!(wave, out);
        *out = (*wave).psi.grid().len();
        ScStatus::Ok
    })
}

/// Current time.
///
/// # Safety
/// `wave` from this library, `out` writable.
#[no_mangle]
pub unsafe extern "C" fn sc_wave_time(wave: *const ScWave, out: *mut f64) -> ScStatus {
    guard(|| {
        non_null!(wave, out);
        *out = (*wave).psi.time();
        ScStatus::Ok
    })
}

/// `∫|ψ|²` on the grid.
///
/// # Safety
/// `wave` from this library, `out` writable.
#[no_mangle]
pub unsafe extern "C" fn sc_wave_norm(wave: *const ScWave, out: *mut f64) -> ScStatus {
    guard(|| {
        non_null!(wave, out);
        *out = (*wave).psi.norm();
        ScStatus::Ok
    })
}

/// Copies `|ψ|²` (row-major, last axis fastest) into `buf`.
///
/// # Safety
/// `wave` from this library, `buf` pointing to `len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn sc_wave_density(wave: *const ScWave, buf: *mut f64, len: usize) -> ScStatus {
    guard(|| {
        non_null!(wave, buf);
        let rho = (*wave).psi.density();
        let values = rho.values();
        if len < values.len() {
            return fail(ScStatus::BufferTooSmall, format!("need {} values, got {len}", values.len()));
        }
        std::slice::from_raw_parts_mut(buf, values.len()).copy_from_slice(values);
        ScStatus::Ok
    })
}

/// # Safety
/// `wave` must come from this library (or be null) and not be used
/// afterwards.
#[no_mangle]
pub unsafe extern "C" fn sc_wave_free(wave: *mut ScWave) {
    if !wave.is_null() {
        drop(Box::from_raw(wave));
    }
}
