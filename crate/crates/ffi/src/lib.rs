//! C interface to `kerrphase`.
//!
//! Objects cross the boundary as opaque handles that the caller releases with
//! the matching `_free` function. Every fallible call returns a [`KpStatus`];
//! on failure, [`kp_last_error_message`] describes what went wrong on the
//! calling thread.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use kerrphase::experiment::meanfield_nonlinear_phase;
use kerrphase::meanfield::{integrate, IntegrateOptions, MeanFieldTrajectory};
use kerrphase::ode::Tolerances;
use kerrphase::spectral::{Baseline, WindowPolicy};
use kerrphase::{ErrorKind, PulseParams, SystemConfig};

/// Result of every fallible call. Codes 2 to 4 match the CLI exit codes.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KpStatus {
    Ok = 0,
    /// Null pointer, bad UTF-8 or a buffer of the wrong length.
    InvalidArgument = 1,
    Config = 2,
    Solver = 3,
    Validation = 4,
    /// The library panicked. The handle arguments should be considered lost.
    Internal = 5,
}

/// Which reference run the nonlinear phase is measured against.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KpBaseline {
    Harmonic = 0,
    Weak = 1,
}

/// Opaque system configuration.
pub struct KpConfig(SystemConfig);

/// Opaque mean-field trajectory.
pub struct KpTrajectory(MeanFieldTrajectory);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn clear_error() {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
}

enum Fail {
    Arg(&'static str),
    Lib(kerrphase::Error),
}

impl From<kerrphase::Error> for Fail {
    fn from(e: kerrphase::Error) -> Self {
        Fail::Lib(e)
    }
}

fn guard(f: impl FnOnce() -> Result<(), Fail>) -> KpStatus {
    clear_error();
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => KpStatus::Ok,
        Ok(Err(Fail::Arg(msg))) => {
            set_error(msg.to_string());
            KpStatus::InvalidArgument
        }
        Ok(Err(Fail::Lib(e))) => {
            set_error(e.to_string());
            match e.kind() {
                ErrorKind::Config => KpStatus::Config,
                ErrorKind::Solver => KpStatus::Solver,
                ErrorKind::Validation => KpStatus::Validation,
            }
        }
        Err(_) => {
            set_error("internal panic".to_string());
            KpStatus::Internal
        }
    }
}

unsafe fn deref<'a, T>(p: *const T, what: &'static str) -> Result<&'a T, Fail> {
    p.as_ref().ok_or(Fail::Arg(what))
}

unsafe fn out<'a, T>(p: *mut T, what: &'static str) -> Result<&'a mut T, Fail> {
    p.as_mut().ok_or(Fail::Arg(what))
}

/// Message for the most recent failure on this thread, or null after a
/// successful call. The pointer stays valid until the next call on the thread.
#[no_mangle]
pub extern "C" fn kp_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Parses a TOML system description.
///
/// # Safety
/// `toml` must be a NUL-terminated string and `out_config` writable.
#[no_mangle]
pub unsafe extern "C" fn kp_config_from_toml(toml: *const c_char, out_config: *mut *mut KpConfig) -> KpStatus {
    guard(|| {
        let slot = out(out_config, "out_config is null")?;
        *slot = ptr::null_mut();
        if toml.is_null() {
            return Err(Fail::Arg("toml is null"));
        }
        let text = CStr::from_ptr(toml).to_str().map_err(|_| Fail::Arg("toml is not UTF-8"))?;
        let cfg = SystemConfig::from_toml_str(text)?;
        *slot = Box::into_raw(Box::new(KpConfig(cfg)));
        Ok(())
    })
}

/// `n` identical wells driven by a Gaussian pulse at `omega0`.
/// Rates in rad/ps, times in ps. `sqrt_n_g` is the collective coupling √N·g.
///
/// # Safety
/// `out_config` must be writable.
#[no_mangle]
#[allow(clippy::too_many_arguments)]
pub unsafe extern "C" fn kp_config_homogeneous(
    n: usize,
    omega0: f64,
    kappa: f64,
    gamma: f64,
    anharmonicity: f64,
    sqrt_n_g: f64,
    amplitude: f64,
    center: f64,
    duration: f64,
    out_config: *mut *mut KpConfig,
) -> KpStatus {
    guard(|| {
        let slot = out(out_config, "out_config is null")?;
        *slot = ptr::null_mut();
        let pulse = PulseParams::new(amplitude, omega0, center, duration)?;
        let cfg = SystemConfig::homogeneous(n, omega0, kappa, gamma, anharmonicity, sqrt_n_g, pulse)?;
        *slot = Box::into_raw(Box::new(KpConfig(cfg)));
        Ok(())
    })
}

/// Sets one parameter by dotted key, e.g. `dipoles[1].gamma`.
/// On failure the configuration is unchanged.
///
/// # Safety
/// `config` must come from this library; `key` must be NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn kp_config_set(config: *mut KpConfig, key: *const c_char, value: f64) -> KpStatus {
    guard(|| {
        let cfg = out(config, "config is null")?;
        if key.is_null() {
            return Err(Fail::Arg("key is null"));
        }
        let key = CStr::from_ptr(key).to_str().map_err(|_| Fail::Arg("key is not UTF-8"))?;
        cfg.0.set(key, value)?;
        Ok(())
    })
}

/// Number of dipoles in the configuration, or 0 for a null handle.
///
/// # Safety
/// `config` must be null or come from this library.
#[no_mangle]
pub unsafe extern "C" fn kp_config_well_count(config: *const KpConfig) -> usize {
    config.as_ref().map_or(0, |c| c.0.dipoles.len())
}

/// # Safety
/// `config` must be null or come from this library, and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn kp_config_free(config: *mut KpConfig) {
    if !config.is_null() {
        drop(Box::from_raw(config));
    }
}

/// Integrates the mean-field equations with default options.
///
/// # Safety
/// `config` must come from this library and `out_trajectory` be writable.
#[no_mangle]
pub unsafe extern "C" fn kp_simulate_meanfield(
    config: *const KpConfig,
    out_trajectory: *mut *mut KpTrajectory,
) -> KpStatus {
    guard(|| {
        let slot = out(out_trajectory, "out_trajectory is null")?;
        *slot = ptr::null_mut();
        let cfg = &deref(config, "config is null")?.0;
        let traj = integrate(cfg, &IntegrateOptions::for_config(cfg))?;
        *slot = Box::into_raw(Box::new(KpTrajectory(traj)));
        Ok(())
    })
}

/// Number of samples, or 0 for a null handle.
///
/// # Safety
/// `trajectory` must be null or come from this library.
#[no_mangle]
pub unsafe extern "C" fn kp_trajectory_len(trajectory: *const KpTrajectory) -> usize {
    trajectory.as_ref().map_or(0, |t| t.0.len())
}

/// Copies sample times (ps) into `times`, which must hold exactly
/// `kp_trajectory_len` values.
///
/// # Safety
/// `times` must point to `len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn kp_trajectory_times(trajectory: *const KpTrajectory, times: *mut f64, len: usize) -> KpStatus {
    guard(|| {
        let t = &deref(trajectory, "trajectory is null")?.0;
        if times.is_null() || len != t.len() {
            return Err(Fail::Arg("times buffer is null or has the wrong length"));
        }
        std::slice::from_raw_parts_mut(times, len).copy_from_slice(&t.times);
        Ok(())
    })
}

/// Copies the cavity amplitude ⟨a⟩ in the rotating frame as separate real
/// and imaginary parts.
///
/// # Safety
/// `re` and `im` must each point to `len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn kp_trajectory_field(
    trajectory: *const KpTrajectory,
    re: *mut f64,
    im: *mut f64,
    len: usize,
) -> KpStatus {
    guard(|| {
        let t = &deref(trajectory, "trajectory is null")?.0;
        if re.is_null() || im.is_null() || len != t.len() {
            return Err(Fail::Arg("field buffers are null or have the wrong length"));
        }
        let (re, im) = (std::slice::from_raw_parts_mut(re, len), std::slice::from_raw_parts_mut(im, len));
        for (k, z) in t.field().into_iter().enumerate() {
            re[k] = z.re;
            im[k] = z.im;
        }
        Ok(())
    })
}

/// # Safety
/// `trajectory` must be null or come from this library, and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn kp_trajectory_free(trajectory: *mut KpTrajectory) {
    if !trajectory.is_null() {
        drop(Box::from_raw(trajectory));
    }
}

/// Mean-field nonlinear phase at the reference well frequency, read from the
/// cavity and dipole decays (rad).
///
/// # Safety
/// `config` must come from this library; the output pointers must be writable.
#[no_mangle]
pub unsafe extern "C" fn kp_nonlinear_phase(
    config: *const KpConfig,
    baseline: KpBaseline,
    out_cavity: *mut f64,
    out_dipole: *mut f64,
) -> KpStatus {
    guard(|| {
        let cfg = &deref(config, "config is null")?.0;
        let cav = out(out_cavity, "out_cavity is null")?;
        let dip = out(out_dipole, "out_dipole is null")?;
        let baseline = match baseline {
            KpBaseline::Harmonic => Baseline::Harmonic,
            KpBaseline::Weak => Baseline::Weak,
        };
        let (p, _) = meanfield_nonlinear_phase(cfg, baseline, &WindowPolicy::default(), &Tolerances::default())?;
        *cav = p.cavity;
        *dip = p.dipole;
        Ok(())
    })
}
