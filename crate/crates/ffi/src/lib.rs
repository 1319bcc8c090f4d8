//! C ABI over `voigt-core`.
//!
//! A simulation is an opaque `VoigtSim` built from TOML text. Every fallible
//! call returns a `VoigtStatus`; on failure the message is kept per thread and
//! read with `voigt_last_error_message`. Panics never cross the boundary.

use std::cell::RefCell;
use std::ffi::{c_char, CStr};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;

use voigt_core::config::SimConfig;
use voigt_core::galerkin::{Galerkin, GalerkinState};
use voigt_core::harness::prepare;
use voigt_core::Error;

/// Status codes returned by every fallible function.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum VoigtStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    Config = 3,
    Validation = 4,
    Cfl = 5,
    Degenerate = 6,
    NonFinite = 7,
    Io = 8,
    BufferTooSmall = 9,
    Solver = 10,
    Panic = 11,
}

/// Opaque simulation handle.
pub struct VoigtSim {
    solver: Galerkin,
    state: GalerkinState,
    dt: f64,
}

thread_local! {
    static LAST_ERROR: RefCell<String> = const { RefCell::new(String::new()) };
}

fn set_error(msg: String) {
    LAST_ERROR.with(|e| *e.borrow_mut() = msg);
}

fn status_of(err: &Error) -> VoigtStatus {
    match err.root() {
        Error::Config { .. } => VoigtStatus::Config,
        Error::Validation(_) | Error::Capacity { .. } | Error::InvalidGrid(_) | Error::KernelTooNarrow { .. } => {
            VoigtStatus::Validation
        }
        Error::Cfl { .. } => VoigtStatus::Cfl,
        Error::Degenerate { .. } => VoigtStatus::Degenerate,
        Error::NonFinite { .. } => VoigtStatus::NonFinite,
        Error::Io(_) => VoigtStatus::Io,
        _ => VoigtStatus::Solver,
    }
}

fn guard(f: impl FnOnce() -> Result<(), (VoigtStatus, String)>) -> VoigtStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => VoigtStatus::Ok,
        Ok(Err((status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic".into());
            VoigtStatus::Panic
        }
    }
}

fn core_err(e: Error) -> (VoigtStatus, String) {
    (status_of(&e), e.to_string())
}

fn null(what: &str) -> (VoigtStatus, String) {
    (VoigtStatus::NullPointer, format!("{what} is null"))
}

unsafe fn sim_ref<'a>(sim: *const VoigtSim) -> Result<&'a VoigtSim, (VoigtStatus, String)> {
    sim.as_ref().ok_or_else(|| null("simulation handle"))
}

unsafe fn write_out<T>(out: *mut T, value: T) -> Result<(), (VoigtStatus, String)> {
    if out.is_null() {
        return Err(null("output pointer"));
    }
    out.write(value);
    Ok(())
}

unsafe fn copy_into(src: &[f64], buf: *mut f64, len: usize) -> Result<(), (VoigtStatus, String)> {
    if buf.is_null() {
        return Err(null("buffer"));
    }
    if len < src.len() {
        return Err((
            VoigtStatus::BufferTooSmall,
            format!("buffer holds {len} values, {} needed", src.len()),
        ));
    }
    std::ptr::copy_nonoverlapping(src.as_ptr(), buf, src.len());
    Ok(())
}

/// Builds a simulation from a TOML config. `base_dir` (nullable) resolves
/// relative file paths such as tabulated forcing. On success `*out` owns a
/// handle to release with `voigt_sim_free`.
///
/// # Safety
/// `config_toml` and a non-null `base_dir` must be NUL-terminated strings;
/// `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn voigt_sim_new(
    config_toml: *const c_char,
    base_dir: *const c_char,
    out: *mut *mut VoigtSim,
) -> VoigtStatus {
    guard(|| {
        if config_toml.is_null() {
            return Err(null("config text"));
        }
        if out.is_null() {
            return Err(null("output pointer"));
        }
        let text = CStr::from_ptr(config_toml)
            .to_str()
            .map_err(|_| (VoigtStatus::InvalidUtf8, "config text is not UTF-8".to_string()))?;
        let base = if base_dir.is_null() {
            ".".to_string()
        } else {
            CStr::from_ptr(base_dir)
                .to_str()
                .map_err(|_| (VoigtStatus::InvalidUtf8, "base directory is not UTF-8".to_string()))?
                .to_string()
        };
        let cfg = SimConfig::from_toml(text).map_err(core_err)?;
        cfg.validate(Some(text), Some(Path::new(&base))).map_err(core_err)?;
        let p = prepare(&cfg, Path::new(&base), cfg.galerkin.modes, cfg.initial.n).map_err(core_err)?;
        let sim = Box::new(VoigtSim {
            solver: p.solver,
            state: p.initial,
            dt: cfg.time.dt,
        });
        out.write(Box::into_raw(sim));
        Ok(())
    })
}

/// Releases a handle. Null is ignored.
///
/// # Safety
/// `sim` must come from `voigt_sim_new` and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn voigt_sim_free(sim: *mut VoigtSim) {
    if !sim.is_null() {
        drop(Box::from_raw(sim));
    }
}

/// Advances `steps` steps of the configured `dt`. On error the state is left
/// at the last successful step.
///
/// # Safety
/// `sim` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn voigt_sim_step(sim: *mut VoigtSim, steps: usize) -> VoigtStatus {
    guard(|| {
        let sim = sim.as_mut().ok_or_else(|| null("simulation handle"))?;
        for _ in 0..steps {
            sim.state = sim.solver.step(&sim.state, sim.dt).map_err(core_err)?;
        }
        Ok(())
    })
}

/// # Safety
/// `sim` must be a live handle and `out` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn voigt_sim_time(sim: *const VoigtSim, out: *mut f64) -> VoigtStatus {
    guard(|| write_out(out, sim_ref(sim)?.state.time))
}

/// Number of Galerkin coefficients.
///
/// # Safety
/// `sim` must be a live handle and `out` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn voigt_sim_mode_count(sim: *const VoigtSim, out: *mut usize) -> VoigtStatus {
    guard(|| write_out(out, sim_ref(sim)?.state.coeffs.len()))
}

/// Number of grid nodes, the length of the density buffer.
///
/// # Safety
/// `sim` must be a live handle and `out` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn voigt_sim_node_count(sim: *const VoigtSim, out: *mut usize) -> VoigtStatus {
    guard(|| write_out(out, sim_ref(sim)?.state.rho.values().len()))
}

/// Copies the Galerkin coefficients into `buf` of capacity `len`.
///
/// # Safety
/// `sim` must be a live handle and `buf` valid for `len` writes.
#[no_mangle]
pub unsafe extern "C" fn voigt_sim_coefficients(sim: *const VoigtSim, buf: *mut f64, len: usize) -> VoigtStatus {
    guard(|| copy_into(&sim_ref(sim)?.state.coeffs, buf, len))
}

/// Copies the nodal density (row-major) into `buf` of capacity `len`.
///
/// # Safety
/// `sim` must be a live handle and `buf` valid for `len` writes.
#[no_mangle]
pub unsafe extern "C" fn voigt_sim_density(sim: *const VoigtSim, buf: *mut f64, len: usize) -> VoigtStatus {
    guard(|| copy_into(sim_ref(sim)?.state.rho.values(), buf, len))
}

/// # Safety
/// `sim` must be a live handle; `min` and `max` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn voigt_sim_density_bounds(sim: *const VoigtSim, min: *mut f64, max: *mut f64) -> VoigtStatus {
    guard(|| {
        let rho = &sim_ref(sim)?.state.rho;
        write_out(min, rho.min())?;
        write_out(max, rho.max())
    })
}

/// Kinetic plus Voigt energy plus accumulated dissipation; constant in time
/// for unforced runs up to integrator error.
///
/// # Safety
/// `sim` must be a live handle and `out` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn voigt_sim_energy(sim: *const VoigtSim, out: *mut f64) -> VoigtStatus {
    guard(|| {
        let sim = sim_ref(sim)?;
        write_out(out, sim.solver.energy_functional(&sim.state))
    })
}

/// Copies this thread's last error message, NUL-terminated and truncated
/// to fit, into `buf`. Returns the full message length without the NUL, so
/// a call with `len = 0` sizes the buffer.
///
/// # Safety
/// A non-null `buf` must be valid for `len` writes.
#[no_mangle]
pub unsafe extern "C" fn voigt_last_error_message(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| {
        let msg = e.borrow();
        if !buf.is_null() && len > 0 {
            let n = msg.len().min(len - 1);
            std::ptr::copy_nonoverlapping(msg.as_ptr().cast::<c_char>(), buf, n);
            buf.add(n).write(0);
        }
        msg.len()
    })
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn voigt_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}
