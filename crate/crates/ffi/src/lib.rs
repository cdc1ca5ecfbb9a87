//! C interface to the `qems` library.
//!
//! Objects are opaque handles created and destroyed through this API. Every
//! fallible call returns a [`QemsStatus`]; after a non-zero status,
//! [`qems_last_error_message`] describes the failure on the calling thread.
//! Frequencies and rates cross the boundary in Hz.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::f64::consts::PI;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use qems::adiabatic::{induced_rates, steady_occupations};
use qems::cli::{parse_config, run, Command, Method};
use qems::hilbert::SpaceLayout;
use qems::model::{regime_report, Frame, SystemParams};
use qems::spectrum::{analytic_spectrum, spectrum_numeric, FrequencyGrid, NumericOptions, SpectrumResult};
use qems::steady::{model_steady, SteadyOptions, SteadyState};
use qems::{Error, ErrorClass};

const TP: f64 = 2.0 * PI;

/// Result of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QemsStatus {
    Ok = 0,
    NullPointer = 1,
    /// Invalid parameter, configuration or argument.
    Config = 2,
    /// A linear solve or iteration failed.
    Solver = 3,
    /// Outside the validity regime, or truncation too small.
    Regime = 4,
    /// An unexpected internal failure.
    Internal = 5,
    /// The destination buffer is too short.
    BufferTooSmall = 6,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QemsFrame {
    Sideband = 0,
    Lab = 1,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QemsCommand {
    Params = 0,
    Steady = 1,
    Sweep = 2,
    Spectrum = 3,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QemsMethod {
    /// Use the `method` key of the configuration.
    Default = 0,
    Analytic = 1,
    Numeric = 2,
    Both = 3,
}

/// Model parameters.
pub struct QemsParams(SystemParams);

/// A solved steady state.
pub struct QemsSteady(SteadyState);

/// A spectrum sampled on a frequency grid.
pub struct QemsSpectrum(SpectrumResult);

#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct QemsRegime {
    pub resolved_sideband: f64,
    pub adiabatic: f64,
    pub resolved_ok: bool,
    pub adiabatic_ok: bool,
}

/// Qubit-induced rates and shifts in Hz, and the adiabatic occupations.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct QemsAdiabatic {
    pub gamma_minus_c_hz: f64,
    pub gamma_plus_c_hz: f64,
    pub delta_c_hz: f64,
    pub gamma_minus_m_hz: f64,
    pub gamma_plus_m_hz: f64,
    pub delta_m_hz: f64,
    pub n_c: f64,
    pub n_m: f64,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

enum Failure {
    Lib(Error),
    Null(&'static str),
    Short(usize, usize),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Lib(e)
    }
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> QemsStatus {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => QemsStatus::Ok,
        Ok(Err(Failure::Null(what))) => {
            set_error(format!("null pointer passed for {what}"));
            QemsStatus::NullPointer
        }
        Ok(Err(Failure::Short(need, have))) => {
            set_error(format!("buffer holds {have} values, {need} needed"));
            QemsStatus::BufferTooSmall
        }
        Ok(Err(Failure::Lib(e))) => {
            set_error(e.to_string());
            match e.class() {
                ErrorClass::Config => QemsStatus::Config,
                ErrorClass::Solver => QemsStatus::Solver,
                ErrorClass::Regime => QemsStatus::Regime,
            }
        }
        Err(_) => {
            set_error("internal panic".into());
            QemsStatus::Internal
        }
    }
}

unsafe fn borrow<'a, T>(p: *const T, what: &'static str) -> Result<&'a T, Failure> {
    p.as_ref().ok_or(Failure::Null(what))
}

unsafe fn text<'a>(p: *const c_char, what: &'static str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(Failure::Null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Error::Config(format!("{what} is not valid UTF-8")).into())
}

unsafe fn put<T>(out: *mut T, value: T, what: &'static str) -> Result<(), Failure> {
    if out.is_null() {
        return Err(Failure::Null(what));
    }
    out.write(value);
    Ok(())
}

fn frame(f: QemsFrame) -> Frame {
    match f {
        QemsFrame::Sideband => Frame::Sideband,
        QemsFrame::Lab => Frame::Lab,
    }
}

/// Message for the last failed call on this thread, or null. The pointer
/// stays valid until the next call into this library on the same thread.
#[no_mangle]
pub extern "C" fn qems_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Owned copy of the last error message, or null. Release it with
/// [`qems_string_free`].
#[no_mangle]
pub extern "C" fn qems_last_error_message() -> *mut c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null_mut(), |c| c.clone().into_raw()))
}

/// Frees a string returned by this library. Null is ignored.
///
/// # Safety
/// `s` must come from this library and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn qems_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Nominal parameter set.
#[no_mangle]
pub extern "C" fn qems_params_nominal() -> *mut QemsParams {
    Box::into_raw(Box::new(QemsParams(SystemParams::nominal())))
}

/// Parameters from configuration text in the command-line format.
///
/// # Safety
/// `config` must be a NUL-terminated string and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn qems_params_from_config(config: *const c_char, out: *mut *mut QemsParams) -> QemsStatus {
    guard(|| {
        let cfg = parse_config(text(config, "config")?)?;
        put(out, Box::into_raw(Box::new(QemsParams(cfg.params))), "out")
    })
}

/// # Safety
/// `p` must come from this library and not have been freed; null is ignored.
#[no_mangle]
pub unsafe extern "C" fn qems_params_free(p: *mut QemsParams) {
    if !p.is_null() {
        drop(Box::from_raw(p));
    }
}

fn field<'a>(sp: &'a mut SystemParams, name: &str) -> Result<(&'a mut f64, f64), Error> {
    let f = match name {
        "omega_m_hz" => (&mut sp.omega_m, TP),
        "omega_c_hz" => (&mut sp.omega_c, TP),
        "qubit_freq_hz" => (&mut sp.qubit_freq, TP),
        "drive_freq_hz" => (&mut sp.drive_freq, TP),
        "drive_amplitude_hz" => (&mut sp.drive_amplitude, TP),
        "g_mc_hz" => (&mut sp.g_mc, TP),
        "g_cq_hz" => (&mut sp.g_cq, TP),
        "g_mq_hz" => (&mut sp.g_mq, TP),
        "gbar_cq_hz" => (&mut sp.gbar_cq, TP),
        "gbar_mq_hz" => (&mut sp.gbar_mq, TP),
        "gamma_m_hz" => (&mut sp.gamma_m, TP),
        "gamma_c_hz" => (&mut sp.gamma_c, TP),
        "gamma_down_hz" => (&mut sp.gamma_down, TP),
        "gamma_up_hz" => (&mut sp.gamma_up, TP),
        "gamma_phi_hz" => (&mut sp.gamma_phi, TP),
        "nbar_m" => (&mut sp.nbar_m, 1.0),
        "nbar_c" => (&mut sp.nbar_c, 1.0),
        _ => return Err(Error::Config(format!("unknown parameter `{name}`"))),
    };
    Ok(f)
}

/// Reads a parameter by its configuration key, e.g. `"gamma_down_hz"`.
///
/// # Safety
/// `p` must be a live handle, `name` NUL-terminated and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn qems_params_get(p: *const QemsParams, name: *const c_char, out: *mut f64) -> QemsStatus {
    guard(|| {
        let mut sp = borrow(p, "params")?.0.clone();
        let (v, scale) = field(&mut sp, text(name, "name")?)?;
        put(out, *v / scale, "out")
    })
}

/// Sets a parameter by its configuration key. Setting a bare coupling or
/// the drive recomputes the sideband couplings. The handle is unchanged
/// when the new set fails validation.
///
/// # Safety
/// `p` must be a live handle and `name` NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn qems_params_set(p: *mut QemsParams, name: *const c_char, value: f64) -> QemsStatus {
    guard(|| {
        if p.is_null() {
            return Err(Failure::Null("params"));
        }
        let name = text(name, "name")?;
        let mut sp = (*p).0.clone();
        let (v, scale) = field(&mut sp, name)?;
        *v = value * scale;
        if matches!(name, "g_cq_hz" | "g_mq_hz" | "drive_freq_hz" | "drive_amplitude_hz") {
            sp.refresh_sideband_couplings();
        }
        if name.starts_with("nbar_") {
            sp.temperature = None;
        }
        sp.validate()?;
        (*p).0 = sp;
        Ok(())
    })
}

/// # Safety
/// `p` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn qems_regime(p: *const QemsParams, out: *mut QemsRegime) -> QemsStatus {
    guard(|| {
        let r = regime_report(&borrow(p, "params")?.0);
        let value = QemsRegime {
            resolved_sideband: r.resolved_sideband,
            adiabatic: r.adiabatic,
            resolved_ok: r.resolved_ok(),
            adiabatic_ok: r.adiabatic_ok(),
        };
        put(out, value, "out")
    })
}

/// # Safety
/// `p` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn qems_adiabatic(p: *const QemsParams, out: *mut QemsAdiabatic) -> QemsStatus {
    guard(|| {
        let sp = &borrow(p, "params")?.0;
        let r = induced_rates(sp)?;
        let occ = steady_occupations(sp, &r);
        let value = QemsAdiabatic {
            gamma_minus_c_hz: r.circuit.gamma_minus / TP,
            gamma_plus_c_hz: r.circuit.gamma_plus / TP,
            delta_c_hz: r.circuit.shift / TP,
            gamma_minus_m_hz: r.mech.gamma_minus / TP,
            gamma_plus_m_hz: r.mech.gamma_plus / TP,
            delta_m_hz: r.mech.shift / TP,
            n_c: occ.n_c,
            n_m: occ.n_m,
        };
        put(out, value, "out")
    })
}

/// Steady state of the full model with Fock truncations `n_c`, `n_m`.
///
/// # Safety
/// `p` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn qems_steady_solve(
    p: *const QemsParams,
    n_c: usize,
    n_m: usize,
    frame_kind: QemsFrame,
    out: *mut *mut QemsSteady,
) -> QemsStatus {
    guard(|| {
        let sp = &borrow(p, "params")?.0;
        let layout = SpaceLayout::new(n_c, n_m)?;
        let ss = model_steady(sp, &layout, frame(frame_kind), &SteadyOptions::default())?;
        put(out, Box::into_raw(Box::new(QemsSteady(ss))), "out")
    })
}

/// # Safety
/// `s` must be a live handle and both outputs writable.
#[no_mangle]
pub unsafe extern "C" fn qems_steady_occupations(s: *const QemsSteady, n_c: *mut f64, n_m: *mut f64) -> QemsStatus {
    guard(|| {
        let occ = borrow(s, "steady")?.0.occupations()?;
        put(n_c, occ.n_c, "n_c")?;
        put(n_m, occ.n_m, "n_m")
    })
}

/// Relative residual `‖Lρ‖∞ / ‖L‖∞` of the solution.
///
/// # Safety
/// `s` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn qems_steady_residual(s: *const QemsSteady, out: *mut f64) -> QemsStatus {
    guard(|| put(out, borrow(s, "steady")?.0.residual, "out"))
}

/// # Safety
/// `s` must come from this library and not have been freed; null is ignored.
#[no_mangle]
pub unsafe extern "C" fn qems_steady_free(s: *mut QemsSteady) {
    if !s.is_null() {
        drop(Box::from_raw(s));
    }
}

fn grid(center_hz: f64, span_hz: f64, points: usize) -> Result<FrequencyGrid, Error> {
    FrequencyGrid::linear(TP * center_hz, TP * span_hz, points)
}

/// Closed-form spectrum on a linear grid, frequencies relative to the drive.
///
/// # Safety
/// `p` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn qems_spectrum_analytic(
    p: *const QemsParams,
    center_hz: f64,
    span_hz: f64,
    points: usize,
    out: *mut *mut QemsSpectrum,
) -> QemsStatus {
    guard(|| {
        let sp = &borrow(p, "params")?.0;
        let s = analytic_spectrum(&grid(center_hz, span_hz, points)?, sp)?;
        put(out, Box::into_raw(Box::new(QemsSpectrum(s))), "out")
    })
}

/// Spectrum of the full model from the quantum regression theorem.
///
/// # Safety
/// `p` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn qems_spectrum_numeric(
    p: *const QemsParams,
    n_c: usize,
    n_m: usize,
    frame_kind: QemsFrame,
    center_hz: f64,
    span_hz: f64,
    points: usize,
    out: *mut *mut QemsSpectrum,
) -> QemsStatus {
    guard(|| {
        let sp = &borrow(p, "params")?.0;
        let layout = SpaceLayout::new(n_c, n_m)?;
        let g = grid(center_hz, span_hz, points)?;
        let s = spectrum_numeric(sp, &layout, frame(frame_kind), &g, &NumericOptions::default())?;
        put(out, Box::into_raw(Box::new(QemsSpectrum(s))), "out")
    })
}

/// Number of grid points, or 0 for a null handle.
///
/// # Safety
/// `s` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn qems_spectrum_len(s: *const QemsSpectrum) -> usize {
    s.as_ref().map_or(0, |s| s.0.grid.len())
}

/// Copies a column into `buf`. `name` is `"omega_hz"` for the grid (Hz,
/// relative to the drive), `"total"`, or a part such as `"s_c_upper"`.
///
/// # Safety
/// `s` must be a live handle, `name` NUL-terminated and `buf` valid for
/// `len` writes.
#[no_mangle]
pub unsafe extern "C" fn qems_spectrum_copy(
    s: *const QemsSpectrum,
    name: *const c_char,
    buf: *mut f64,
    len: usize,
) -> QemsStatus {
    guard(|| {
        let s = &borrow(s, "spectrum")?.0;
        let name = text(name, "name")?;
        let values: Vec<f64> = match name {
            "omega_hz" => s.grid.iter().map(|w| w / TP).collect(),
            "total" => s.total.clone(),
            _ => s
                .part(name)
                .ok_or_else(|| Error::Config(format!("spectrum has no column `{name}`")))?
                .to_vec(),
        };
        if buf.is_null() {
            return Err(Failure::Null("buf"));
        }
        if len < values.len() {
            return Err(Failure::Short(values.len(), len));
        }
        ptr::copy_nonoverlapping(values.as_ptr(), buf, values.len());
        Ok(())
    })
}

/// # Safety
/// `s` must come from this library and not have been freed; null is ignored.
#[no_mangle]
pub unsafe extern "C" fn qems_spectrum_free(s: *mut QemsSpectrum) {
    if !s.is_null() {
        drop(Box::from_raw(s));
    }
}

/// Runs a command-line command on configuration text and returns its output
/// (report or CSV) in `out`; release it with [`qems_string_free`]. A failed
/// sweep point still yields output alongside a non-zero status.
///
/// # Safety
/// `config` must be NUL-terminated and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn qems_run(
    config: *const c_char,
    command: QemsCommand,
    method: QemsMethod,
    out: *mut *mut c_char,
) -> QemsStatus {
    guard(|| {
        if out.is_null() {
            return Err(Failure::Null("out"));
        }
        out.write(ptr::null_mut());
        let mut cfg = parse_config(text(config, "config")?)?;
        cfg.run.command = match command {
            QemsCommand::Params => Command::Params,
            QemsCommand::Steady => Command::Steady,
            QemsCommand::Sweep => Command::Sweep,
            QemsCommand::Spectrum => Command::Spectrum,
        };
        match method {
            QemsMethod::Default => {}
            QemsMethod::Analytic => cfg.run.method = Method::Analytic,
            QemsMethod::Numeric => cfg.run.method = Method::Numeric,
            QemsMethod::Both => cfg.run.method = Method::Both,
        }
        let result = run(&cfg)?;
        let c = CString::new(result.text).map_err(|_| Error::Solver("output contains NUL".into()))?;
        out.write(c.into_raw());
        match result.failure {
            Some(e) => Err(e.into()),
            None => Ok(()),
        }
    })
}
