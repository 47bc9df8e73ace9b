//! C ABI for the bohmflow simulator.
//!
//! Scenarios and ensembles are opaque handles owned by the caller and released
//! with their `_free` functions. Every fallible call returns a [`BfStatus`];
//! the message of the most recent failure on the calling thread is available
//! from [`bf_last_error`].
#![allow(clippy::missing_safety_doc)]

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use bohmflow::analysis::{plane_flux, PlaneGrid};
use bohmflow::config::RunConfig;
use bohmflow::dynamics::{run_scenario_ensemble, EnsembleSpec, Termination, Trajectory, TrajectoryOptions};
use bohmflow::fields::{density, quantum_potential_total, velocity_all};
use bohmflow::scenarios::{build, Scenario};
use bohmflow::wavepacket::ConfigPoint;
use bohmflow::Error;

/// Result of every fallible call.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BfStatus {
    Ok = 0,
    /// Null pointer, bad length or index out of range.
    InvalidArgument = 1,
    /// Configuration text rejected; the message names the key.
    Config = 2,
    /// The point sits on a node of the wavefunction.
    Degenerate = 3,
    /// Sampling or quadrature could not reach its tolerance.
    Numeric = 4,
    /// A Rust panic was caught at the boundary.
    Panic = 5,
}

/// Region-I timing of a scenario.
#[repr(C)]
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct BfWindow {
    pub t_in: f64,
    pub t_cross: f64,
    pub t_out: f64,
    pub t_readout: f64,
}

/// Opaque scenario handle.
pub struct BfScenario {
    inner: Scenario,
}

/// Opaque ensemble handle: the endpoints of one integrated ensemble.
pub struct BfEnsemble {
    dim: usize,
    trajectories: Vec<Trajectory>,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> BfStatus {
    match e {
        Error::Config { .. } | Error::Io(_) => BfStatus::Config,
        Error::InvalidParameter(_) | Error::UnsupportedLayout(_) | Error::OutOfDomain { .. } => {
            BfStatus::InvalidArgument
        }
        Error::NodeDegeneracy { .. } => BfStatus::Degenerate,
        Error::SamplerFailure { .. } | Error::Refinement { .. } | Error::InsufficientStatistics(_) => {
            BfStatus::Numeric
        }
    }
}

/// Run `f`, translating errors and panics into status codes.
fn guard(f: impl FnOnce() -> Result<(), (BfStatus, String)>) -> BfStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => BfStatus::Ok,
        Ok(Err((status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("panic inside bohmflow".into());
            BfStatus::Panic
        }
    }
}

fn lib(e: Error) -> (BfStatus, String) {
    (status_of(&e), e.to_string())
}

fn bad(msg: &str) -> (BfStatus, String) {
    (BfStatus::InvalidArgument, msg.to_string())
}

unsafe fn scenario<'a>(s: *const BfScenario) -> Result<&'a Scenario, (BfStatus, String)> {
    s.as_ref().map(|s| &s.inner).ok_or_else(|| bad("null scenario handle"))
}

unsafe fn point(s: &Scenario, q: *const f64, dim: usize) -> Result<ConfigPoint, (BfStatus, String)> {
    let expected = s.components[0].state.dim();
    if q.is_null() || dim != expected {
        return Err(bad(&format!("expected {expected} coordinates")));
    }
    ConfigPoint::from_slice(std::slice::from_raw_parts(q, dim)).map_err(lib)
}

unsafe fn write<T>(out: *mut T, value: T) -> Result<(), (BfStatus, String)> {
    if out.is_null() {
        return Err(bad("null output pointer"));
    }
    out.write(value);
    Ok(())
}

/// Message of the last failure on this thread, or null. Valid until the next
/// failing call on the same thread.
#[no_mangle]
pub extern "C" fn bf_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn bf_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Build a scenario from configuration text (the same TOML the CLI reads).
#[no_mangle]
pub unsafe extern "C" fn bf_scenario_from_config(config: *const c_char, out: *mut *mut BfScenario) -> BfStatus {
    guard(|| {
        if config.is_null() || out.is_null() {
            return Err(bad("null argument"));
        }
        let text = CStr::from_ptr(config)
            .to_str()
            .map_err(|_| (BfStatus::Config, "configuration is not UTF-8".to_string()))?;
        let cfg = RunConfig::parse(text).map_err(lib)?;
        let inner = build(&cfg.kind, &cfg.geometry).map_err(lib)?;
        out.write(Box::into_raw(Box::new(BfScenario { inner })));
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn bf_scenario_free(s: *mut BfScenario) {
    if !s.is_null() {
        drop(Box::from_raw(s));
    }
}

/// Number of configuration-space coordinates (2 plus the device coordinates).
#[no_mangle]
pub unsafe extern "C" fn bf_scenario_dim(s: *const BfScenario, out: *mut usize) -> BfStatus {
    guard(|| write(out, scenario(s)?.components[0].state.dim()))
}

/// Number of mixture components (1 for pure states).
#[no_mangle]
pub unsafe extern "C" fn bf_scenario_components(s: *const BfScenario, out: *mut usize) -> BfStatus {
    guard(|| write(out, scenario(s)?.components.len()))
}

#[no_mangle]
pub unsafe extern "C" fn bf_scenario_window(s: *const BfScenario, out: *mut BfWindow) -> BfStatus {
    guard(|| {
        let s = scenario(s)?;
        let w = s.window;
        write(
            out,
            BfWindow {
                t_in: w.t_in,
                t_cross: w.t_cross,
                t_out: w.t_out,
                t_readout: s.t_readout(),
            },
        )
    })
}

#[no_mangle]
pub unsafe extern "C" fn bf_detector_probabilities(s: *const BfScenario, p_d1: *mut f64, p_d2: *mut f64) -> BfStatus {
    guard(|| {
        let (a, b) = scenario(s)?.detector_probabilities();
        write(p_d1, a)?;
        write(p_d2, b)
    })
}

/// Probability density at `q` (weighted over mixture components).
#[no_mangle]
pub unsafe extern "C" fn bf_density(s: *const BfScenario, q: *const f64, dim: usize, t: f64, out: *mut f64) -> BfStatus {
    guard(|| {
        let s = scenario(s)?;
        let q = point(s, q, dim)?;
        let mut p = 0.0;
        for c in &s.components {
            p += c.weight * density(&c.state, &q, t).map_err(lib)?;
        }
        write(out, p)
    })
}

unsafe fn component<'a>(s: &'a Scenario, k: usize) -> Result<&'a bohmflow::scenarios::Component, (BfStatus, String)> {
    s.components.get(k).ok_or_else(|| bad("component index out of range"))
}

/// Guidance velocity of mixture component `k`; writes `dim` values.
#[no_mangle]
pub unsafe extern "C" fn bf_velocity(
    s: *const BfScenario,
    k: usize,
    q: *const f64,
    dim: usize,
    t: f64,
    v_out: *mut f64,
) -> BfStatus {
    guard(|| {
        let s = scenario(s)?;
        let q = point(s, q, dim)?;
        if v_out.is_null() {
            return Err(bad("null output pointer"));
        }
        let v = velocity_all(&component(s, k)?.state, &q, t).map_err(lib)?;
        ptr::copy_nonoverlapping(v.as_ptr(), v_out, dim);
        Ok(())
    })
}

/// Total quantum potential of mixture component `k`.
#[no_mangle]
pub unsafe extern "C" fn bf_quantum_potential(
    s: *const BfScenario,
    k: usize,
    q: *const f64,
    dim: usize,
    t: f64,
    out: *mut f64,
) -> BfStatus {
    guard(|| {
        let s = scenario(s)?;
        let q = point(s, q, dim)?;
        let v = quantum_potential_total(&component(s, k)?.state, &q, t).map_err(lib)?;
        write(out, v)
    })
}

/// Net probability flux across the plane z = 0 at time `t`.
#[no_mangle]
pub unsafe extern "C" fn bf_plane_flux(s: *const BfScenario, t: f64, out: *mut f64) -> BfStatus {
    guard(|| {
        let s = scenario(s)?;
        let f = plane_flux(s, t, &PlaneGrid::covering(s, t)).map_err(lib)?;
        write(out, f)
    })
}

/// Born-sample `n` trajectories at `t_start` and integrate them to `t_end`.
#[no_mangle]
pub unsafe extern "C" fn bf_ensemble_run(
    s: *const BfScenario,
    n: usize,
    seed: u64,
    t_start: f64,
    t_end: f64,
    dt: f64,
    out: *mut *mut BfEnsemble,
) -> BfStatus {
    guard(|| {
        let s = scenario(s)?;
        if out.is_null() || n == 0 {
            return Err(bad("need an output pointer and n > 0"));
        }
        let opts = TrajectoryOptions {
            record_stride: usize::MAX,
            bounds: Some(s.bounds(t_end)),
            ..Default::default()
        };
        let trajectories =
            run_scenario_ensemble(s, &EnsembleSpec::new(n, seed), t_start, t_end, dt, &opts).map_err(lib)?;
        let dim = s.components[0].state.dim();
        out.write(Box::into_raw(Box::new(BfEnsemble { dim, trajectories })));
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn bf_ensemble_free(e: *mut BfEnsemble) {
    if !e.is_null() {
        drop(Box::from_raw(e));
    }
}

#[no_mangle]
pub unsafe extern "C" fn bf_ensemble_len(e: *const BfEnsemble, out: *mut usize) -> BfStatus {
    guard(|| {
        let e = e.as_ref().ok_or_else(|| bad("null ensemble handle"))?;
        write(out, e.trajectories.len())
    })
}

/// Final point of trajectory `i` (`dim` values), its component and a
/// termination code: 0 completed, 1 node, 2 left the domain.
#[no_mangle]
pub unsafe extern "C" fn bf_ensemble_endpoint(
    e: *const BfEnsemble,
    i: usize,
    q_out: *mut f64,
    dim: usize,
    component: *mut usize,
    termination: *mut u32,
) -> BfStatus {
    guard(|| {
        let e = e.as_ref().ok_or_else(|| bad("null ensemble handle"))?;
        let tr = e.trajectories.get(i).ok_or_else(|| bad("trajectory index out of range"))?;
        if q_out.is_null() || dim != e.dim {
            return Err(bad(&format!("expected {} coordinates", e.dim)));
        }
        ptr::copy_nonoverlapping(tr.last().q.as_slice().as_ptr(), q_out, dim);
        write(component, tr.component)?;
        let code = match tr.termination {
            Termination::Completed => 0,
            Termination::NodeDegenerate => 1,
            Termination::LeftDomain => 2,
        };
        write(termination, code)
    })
}
