//! C ABI over `trojan-keyrate`.
//!
//! Every function returns a [`TkStatus`]; on failure the message is available
//! from [`tk_last_error_message`] on the same thread. Handles are opaque and
//! must be released with the matching `*_free` function.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use trojan_keyrate::config::{preset, ConfigFile};
use trojan_keyrate::gllp::{binary_entropy, gllp_bb84_rate, gllp_mdi_rate, GllpInputs};
use trojan_keyrate::pipeline::{self, KeyRateReport, Method, RunConfig, STATUS_OK};
use trojan_keyrate::protocol::Protocol;
use trojan_keyrate::tha::{delta_bloch, delta_bloch_mdi};
use trojan_keyrate::Error;

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TkStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Infeasible = 3,
    Numerical = 4,
    Io = 5,
    Panic = 6,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TkProtocol {
    Bb84 = 0,
    Mdi = 1,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TkMethod {
    Numerical = 0,
    Gllp = 1,
    Both = 2,
}

/// One method's result at one distance. Absent values are NaN; `iterations` is -1 when absent.
#[repr(C)]
#[derive(Clone, Copy, Debug)]
pub struct TkReport {
    pub distance_km: f64,
    pub method: TkMethod,
    pub mu_signal: f64,
    pub rate: f64,
    pub p1: f64,
    pub p_pass: f64,
    pub leak_ec: f64,
    pub f_lower: f64,
    pub f_upper: f64,
    pub gap: f64,
    pub iterations: i64,
    pub below_gllp: bool,
    pub all_zero: bool,
    /// False when the point failed; see `tk_scan_status` for the reason.
    pub ok: bool,
    pub stats_fingerprint: u64,
}

/// Inputs of the analytic bound; see the library's `GllpInputs`.
#[repr(C)]
#[derive(Clone, Copy, Debug)]
pub struct TkGllpInputs {
    pub q_signal: f64,
    pub e_signal: f64,
    pub p1: f64,
    pub y1: f64,
    pub y_delta: f64,
    pub e_x: f64,
    pub p_z: f64,
    pub f_ec: f64,
}

/// Opaque run configuration.
pub struct TkConfig(RunConfig);

/// Opaque list of reports.
pub struct TkScan {
    reports: Vec<KeyRateReport>,
    statuses: Vec<CString>,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

enum FfiError {
    Null(&'static str),
    Core(Error),
}

impl From<Error> for FfiError {
    fn from(e: Error) -> Self {
        FfiError::Core(e)
    }
}

type FfiResult<T> = std::result::Result<T, FfiError>;

fn status_of(e: &FfiError) -> (TkStatus, String) {
    let e = match e {
        FfiError::Null(what) => return (TkStatus::NullPointer, format!("{what} is null")),
        FfiError::Core(e) => e,
    };
    let status = match e {
        Error::Infeasible(_) | Error::Unbounded(_) => TkStatus::Infeasible,
        Error::Numerical(_) => TkStatus::Numerical,
        Error::Io(_) | Error::Csv(_) => TkStatus::Io,
        _ => TkStatus::InvalidArgument,
    };
    (status, e.to_string())
}

/// Runs `f`, translating errors and panics into a status.
fn guard(f: impl FnOnce() -> FfiResult<()>) -> TkStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error("");
            TkStatus::Ok
        }
        Ok(Err(e)) => {
            let (status, msg) = status_of(&e);
            set_error(&msg);
            status
        }
        Err(_) => {
            set_error("internal panic");
            TkStatus::Panic
        }
    }
}

fn null(what: &'static str) -> FfiError {
    FfiError::Null(what)
}

unsafe fn config_mut<'a>(cfg: *mut TkConfig) -> FfiResult<&'a mut RunConfig> {
    cfg.as_mut().map(|c| &mut c.0).ok_or_else(|| null("config"))
}

unsafe fn str_arg<'a>(s: *const c_char, what: &'static str) -> FfiResult<&'a str> {
    if s.is_null() {
        return Err(null(what));
    }
    Ok(CStr::from_ptr(s).to_str().map_err(|_| Error::Validation(format!("{what} is not valid UTF-8")))?)
}

unsafe fn write_out<T>(out: *mut T, v: T) -> FfiResult<()> {
    if out.is_null() {
        return Err(null("output pointer"));
    }
    out.write(v);
    Ok(())
}

fn boxed_config(out: *mut *mut TkConfig, c: RunConfig) -> FfiResult<()> {
    unsafe { write_out(out, Box::into_raw(Box::new(TkConfig(c)))) }
}

/// Message of the last failed call on this thread; empty after a success.
/// Valid until the next call into the library on this thread.
#[no_mangle]
pub extern "C" fn tk_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Library version, a static string.
#[no_mangle]
pub extern "C" fn tk_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Default parameter set for `protocol`.
#[no_mangle]
pub extern "C" fn tk_config_new(protocol: TkProtocol, out: *mut *mut TkConfig) -> TkStatus {
    guard(|| {
        let p = match protocol {
            TkProtocol::Bb84 => Protocol::Bb84,
            TkProtocol::Mdi => Protocol::Mdi,
        };
        boxed_config(out, trojan_keyrate::config::default_for(p))
    })
}

/// Named parameter set, e.g. `"table1-case1"`.
///
/// # Safety
/// `name` must be a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn tk_config_preset(name: *const c_char, out: *mut *mut TkConfig) -> TkStatus {
    guard(|| boxed_config(out, preset(str_arg(name, "name")?)?))
}

/// Configuration from TOML text.
///
/// # Safety
/// `toml` must be a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn tk_config_from_toml(toml: *const c_char, out: *mut *mut TkConfig) -> TkStatus {
    guard(|| boxed_config(out, ConfigFile::parse(str_arg(toml, "toml")?)?.to_run_config()?))
}

/// # Safety
/// `cfg` must come from a `tk_config_*` constructor or be null.
#[no_mangle]
pub unsafe extern "C" fn tk_config_free(cfg: *mut TkConfig) {
    if !cfg.is_null() {
        drop(Box::from_raw(cfg));
    }
}

/// # Safety
/// `cfg` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn tk_config_set_method(cfg: *mut TkConfig, method: TkMethod) -> TkStatus {
    guard(|| {
        config_mut(cfg)?.method = match method {
            TkMethod::Numerical => Method::Numerical,
            TkMethod::Gllp => Method::Gllp,
            TkMethod::Both => Method::Both,
        };
        Ok(())
    })
}

/// Leaked intensities; `mu_out_b` is Bob's (MDI) and NaN means "same as Alice".
///
/// # Safety
/// `cfg` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn tk_config_set_mu_out(cfg: *mut TkConfig, mu_out: f64, mu_out_b: f64) -> TkStatus {
    guard(|| {
        let c = config_mut(cfg)?;
        let mut next = c.clone();
        next.mu_out = mu_out;
        next.mu_out_b = if mu_out_b.is_nan() { None } else { Some(mu_out_b) };
        next.validate()?;
        *c = next;
        Ok(())
    })
}

/// # Safety
/// `cfg` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn tk_config_set_intensities(cfg: *mut TkConfig, mu: f64, nu1: f64, nu2: f64) -> TkStatus {
    guard(|| {
        let c = config_mut(cfg)?;
        c.intensities = trojan_keyrate::channel::IntensitySet::new(mu, nu1, nu2)?;
        Ok(())
    })
}

/// # Safety
/// `cfg` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn tk_config_set_optimize_mu(cfg: *mut TkConfig, enabled: bool) -> TkStatus {
    guard(|| {
        config_mut(cfg)?.optimize_mu = enabled;
        Ok(())
    })
}

/// # Safety
/// `cfg` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn tk_config_set_p_z(cfg: *mut TkConfig, p_z: f64) -> TkStatus {
    guard(|| {
        let c = config_mut(cfg)?;
        if !(p_z > 0.0 && p_z < 1.0) {
            return Err(Error::Validation(format!("p_Z must lie in (0, 1), got {p_z}")).into());
        }
        c.p_z = p_z;
        Ok(())
    })
}

/// # Safety
/// `cfg` must be a live handle and `km` must point to `len` values.
#[no_mangle]
pub unsafe extern "C" fn tk_config_set_distances(cfg: *mut TkConfig, km: *const f64, len: usize) -> TkStatus {
    guard(|| {
        let c = config_mut(cfg)?;
        if km.is_null() && len > 0 {
            return Err(null("distances"));
        }
        let d = if len == 0 { Vec::new() } else { std::slice::from_raw_parts(km, len).to_vec() };
        let mut next = c.clone();
        next.distances = d;
        next.validate()?;
        *c = next;
        Ok(())
    })
}

/// Configuration serialized as TOML. Free the string with `tk_string_free`.
///
/// # Safety
/// `cfg` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn tk_config_to_toml(cfg: *const TkConfig, out: *mut *mut c_char) -> TkStatus {
    guard(|| {
        let c = cfg.as_ref().ok_or_else(|| null("config"))?;
        let text = ConfigFile::from_run_config(&c.0).to_toml()?;
        let s = CString::new(text).map_err(|_| Error::Config("TOML contains NUL".into()))?;
        write_out(out, s.into_raw())
    })
}

/// # Safety
/// `s` must come from this library or be null.
#[no_mangle]
pub unsafe extern "C" fn tk_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

fn scan_handle(reports: Vec<KeyRateReport>) -> *mut TkScan {
    let statuses = reports.iter().map(|r| CString::new(r.status.replace('\0', " ")).unwrap_or_default()).collect();
    Box::into_raw(Box::new(TkScan { reports, statuses }))
}

/// Reports for every configured method at one distance.
///
/// # Safety
/// `cfg` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn tk_compute_keyrate(cfg: *const TkConfig, distance_km: f64, out: *mut *mut TkScan) -> TkStatus {
    guard(|| {
        let c = cfg.as_ref().ok_or_else(|| null("config"))?;
        let reports = pipeline::compute_keyrate(&c.0, distance_km)?;
        write_out(out, scan_handle(reports))
    })
}

/// Reports over the configured distance grid. Per-point failures are
/// reported with `ok = false` rather than failing the call.
///
/// # Safety
/// `cfg` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn tk_scan(cfg: *const TkConfig, out: *mut *mut TkScan) -> TkStatus {
    guard(|| {
        let c = cfg.as_ref().ok_or_else(|| null("config"))?;
        let reports = pipeline::scan_distance(&c.0)?;
        write_out(out, scan_handle(reports))
    })
}

/// Number of reports; 0 for a null handle.
///
/// # Safety
/// `scan` must be a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn tk_scan_len(scan: *const TkScan) -> usize {
    scan.as_ref().map_or(0, |s| s.reports.len())
}

/// # Safety
/// `scan` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn tk_scan_get(scan: *const TkScan, index: usize, out: *mut TkReport) -> TkStatus {
    guard(|| {
        let s = scan.as_ref().ok_or_else(|| null("scan"))?;
        let r = s
            .reports
            .get(index)
            .ok_or_else(|| Error::Validation(format!("index {index} out of range ({} reports)", s.reports.len())))?;
        let nan = f64::NAN;
        write_out(
            out,
            TkReport {
                distance_km: r.distance_km,
                method: match r.method {
                    Method::Numerical => TkMethod::Numerical,
                    Method::Gllp => TkMethod::Gllp,
                    Method::Both => TkMethod::Both,
                },
                mu_signal: r.mu_signal,
                rate: r.rate.unwrap_or(nan),
                p1: r.p1,
                p_pass: r.p_pass,
                leak_ec: r.leak_ec,
                f_lower: r.f_lower.unwrap_or(nan),
                f_upper: r.f_upper.unwrap_or(nan),
                gap: r.solver_gap.unwrap_or(nan),
                iterations: r.iterations.map_or(-1, |i| i as i64),
                below_gllp: r.below_gllp,
                all_zero: r.all_zero,
                ok: r.status == STATUS_OK,
                stats_fingerprint: r.stats_fingerprint,
            },
        )
    })
}

/// Status text of one report, owned by the scan; null when out of range.
///
/// # Safety
/// `scan` must be a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn tk_scan_status(scan: *const TkScan, index: usize) -> *const c_char {
    scan.as_ref().and_then(|s| s.statuses.get(index)).map_or(ptr::null(), |c| c.as_ptr())
}

/// # Safety
/// `scan` must come from `tk_scan` / `tk_compute_keyrate` or be null.
#[no_mangle]
pub unsafe extern "C" fn tk_scan_free(scan: *mut TkScan) {
    if !scan.is_null() {
        drop(Box::from_raw(scan));
    }
}

fn gllp_inputs(i: &TkGllpInputs) -> GllpInputs {
    GllpInputs {
        q_signal: i.q_signal,
        e_signal: i.e_signal,
        p1: i.p1,
        y1: i.y1,
        y_delta: i.y_delta,
        e_x: i.e_x,
        p_z: i.p_z,
        f_ec: i.f_ec,
    }
}

/// Analytic BB84 rate bound.
///
/// # Safety
/// `inputs` and `out` must be valid pointers.
#[no_mangle]
pub unsafe extern "C" fn tk_gllp_bb84_rate(inputs: *const TkGllpInputs, mu_out: f64, out: *mut f64) -> TkStatus {
    guard(|| {
        let i = inputs.as_ref().ok_or_else(|| null("inputs"))?;
        write_out(out, gllp_bb84_rate(&gllp_inputs(i), mu_out)?)
    })
}

/// Analytic MDI rate bound.
///
/// # Safety
/// `inputs` and `out` must be valid pointers.
#[no_mangle]
pub unsafe extern "C" fn tk_gllp_mdi_rate(
    inputs: *const TkGllpInputs,
    mu_out_a: f64,
    mu_out_b: f64,
    out: *mut f64,
) -> TkStatus {
    guard(|| {
        let i = inputs.as_ref().ok_or_else(|| null("inputs"))?;
        write_out(out, gllp_mdi_rate(&gllp_inputs(i), mu_out_a, mu_out_b)?)
    })
}

/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn tk_binary_entropy(x: f64, out: *mut f64) -> TkStatus {
    guard(|| write_out(out, binary_entropy(x)?))
}

/// Leak-induced state deviation for one party; NaN for invalid input.
#[no_mangle]
pub extern "C" fn tk_delta_bloch(mu_out: f64) -> f64 {
    if mu_out >= 0.0 && mu_out.is_finite() {
        delta_bloch(mu_out)
    } else {
        f64::NAN
    }
}

/// Two-party version of [`tk_delta_bloch`].
#[no_mangle]
pub extern "C" fn tk_delta_bloch_mdi(mu_out_a: f64, mu_out_b: f64) -> f64 {
    if [mu_out_a, mu_out_b].iter().all(|m| *m >= 0.0 && m.is_finite()) {
        delta_bloch_mdi(mu_out_a, mu_out_b)
    } else {
        f64::NAN
    }
}
