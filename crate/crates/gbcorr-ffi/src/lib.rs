//! C ABI over `gbcorr`. Handles are opaque; every fallible call returns a
//! `GbcorrStatus` and leaves a message for `gbcorr_last_error`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use gbcorr::app::{self, Suite};
use gbcorr::config::{Overrides, RunConfig};
use gbcorr::correlation::{self, CorrelationReport};
use gbcorr::Error;

/// Status codes. 1–3 match the CLI exit codes.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GbcorrStatus {
    Ok = 0,
    Validation = 1,
    Numerical = 2,
    Verification = 3,
    NullPointer = 4,
    Panic = 5,
}

/// Run configuration (defaults plus overrides).
pub struct GbcorrConfig {
    layers: Vec<Overrides>,
}

/// Correlation report for a single k_F.
pub struct GbcorrReport {
    inner: CorrelationReport,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn fail(e: Error) -> GbcorrStatus {
    let code = match e.exit_code() {
        1 => GbcorrStatus::Validation,
        3 => GbcorrStatus::Verification,
        _ => GbcorrStatus::Numerical,
    };
    set_error(e.to_string());
    code
}

fn guard(f: impl FnOnce() -> Result<(), GbcorrStatus>) -> GbcorrStatus {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => GbcorrStatus::Ok,
        Ok(Err(s)) => s,
        Err(_) => {
            set_error("internal panic".into());
            GbcorrStatus::Panic
        }
    }
}

fn null(what: &str) -> GbcorrStatus {
    set_error(format!("null pointer: {what}"));
    GbcorrStatus::NullPointer
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, GbcorrStatus> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p).to_str().map_err(|_| fail(Error::validation(format!("{what}: invalid UTF-8"))))
}

impl GbcorrConfig {
    fn build(&self) -> Result<RunConfig, GbcorrStatus> {
        RunConfig::build(&self.layers).map_err(fail)
    }
}

/// Message of the last failed call on this thread, or NULL. Valid until the next call.
#[no_mangle]
pub extern "C" fn gbcorr_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

#[no_mangle]
pub extern "C" fn gbcorr_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// New configuration with default values.
#[no_mangle]
pub extern "C" fn gbcorr_config_new() -> *mut GbcorrConfig {
    Box::into_raw(Box::new(GbcorrConfig { layers: vec![] }))
}

/// Parses flat `key = value` text into a new configuration.
///
/// # Safety
/// `text` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn gbcorr_config_parse(text: *const c_char, out: *mut *mut GbcorrConfig) -> GbcorrStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let text = str_arg(text, "text")?;
        let cfg = GbcorrConfig { layers: vec![Overrides::parse(text).map_err(fail)?] };
        cfg.build()?;
        *out = Box::into_raw(Box::new(cfg));
        Ok(())
    })
}

/// Sets one key; the whole configuration is revalidated and left unchanged on error.
///
/// # Safety
/// `cfg` must come from this library; `key` and `value` must be NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn gbcorr_config_set(
    cfg: *mut GbcorrConfig,
    key: *const c_char,
    value: *const c_char,
) -> GbcorrStatus {
    guard(|| {
        let cfg = cfg.as_mut().ok_or_else(|| null("cfg"))?;
        let (key, value) = (str_arg(key, "key")?, str_arg(value, "value")?);
        let layer = Overrides::parse(&format!("{key} = {value}")).map_err(fail)?;
        cfg.layers.push(layer);
        if let Err(s) = cfg.build() {
            cfg.layers.pop();
            return Err(s);
        }
        Ok(())
    })
}

/// # Safety
/// `cfg` must come from this library (or be NULL) and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn gbcorr_config_free(cfg: *mut GbcorrConfig) {
    if !cfg.is_null() {
        drop(Box::from_raw(cfg));
    }
}

/// Full correlation report at one k_F using the configuration's model and cutoffs.
///
/// # Safety
/// `cfg` must come from this library; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn gbcorr_compute(cfg: *const GbcorrConfig, k_f: f64, out: *mut *mut GbcorrReport) -> GbcorrStatus {
    guard(|| {
        let cfg = cfg.as_ref().ok_or_else(|| null("cfg"))?;
        if out.is_null() {
            return Err(null("out"));
        }
        let mut c = cfg.build()?;
        c.kf_list = vec![k_f];
        c.validate().map_err(fail)?;
        let p = app::run_params(&c, k_f);
        let r = correlation::with_threads(c.threads, || correlation::compute(&p)).map_err(fail)?.map_err(fail)?;
        *out = Box::into_raw(Box::new(GbcorrReport { inner: r }));
        Ok(())
    })
}

/// # Safety
/// `r` must come from this library (or be NULL) and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn gbcorr_report_free(r: *mut GbcorrReport) {
    if !r.is_null() {
        drop(Box::from_raw(r));
    }
}

/// Which scalar of a report to read.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GbcorrQuantity {
    EBosQuadrature = 0,
    /// NaN when the trace path was not run.
    EBosTrace = 1,
    EEx = 2,
    ESecondOrder = 3,
    /// NaN when E_B6 was not computed.
    EB6 = 4,
    TailBos = 5,
    TailEx = 6,
    ParticleCount = 7,
}

/// # Safety
/// `r` must come from this library; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn gbcorr_report_get(r: *const GbcorrReport, q: GbcorrQuantity, out: *mut f64) -> GbcorrStatus {
    guard(|| {
        let r = &r.as_ref().ok_or_else(|| null("report"))?.inner;
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        *out = match q {
            GbcorrQuantity::EBosQuadrature => r.e_bos_quadrature,
            GbcorrQuantity::EBosTrace => r.e_bos_trace.unwrap_or(f64::NAN),
            GbcorrQuantity::EEx => r.e_ex,
            GbcorrQuantity::ESecondOrder => r.e_second_order,
            GbcorrQuantity::EB6 => r.e_b6.unwrap_or(f64::NAN),
            GbcorrQuantity::TailBos => r.tail_estimate_bos,
            GbcorrQuantity::TailEx => r.tail_estimate_ex,
            GbcorrQuantity::ParticleCount => r.n as f64,
        };
        Ok(())
    })
}

/// Number of orbit rows in the report.
///
/// # Safety
/// `r` must come from this library or be NULL.
#[no_mangle]
pub unsafe extern "C" fn gbcorr_report_orbit_count(r: *const GbcorrReport) -> usize {
    r.as_ref().map_or(0, |r| r.inner.per_orbit.len())
}

/// Report as JSON; free with `gbcorr_string_free`.
///
/// # Safety
/// `r` must come from this library; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn gbcorr_report_json(r: *const GbcorrReport, out: *mut *mut c_char) -> GbcorrStatus {
    guard(|| {
        let r = &r.as_ref().ok_or_else(|| null("report"))?.inner;
        if out.is_null() {
            return Err(null("out"));
        }
        let s = serde_json::to_string(r).map_err(|e| fail(Error::numerical(e.to_string())))?;
        *out = CString::new(s).map_err(|e| fail(Error::numerical(e.to_string())))?.into_raw();
        Ok(())
    })
}

/// # Safety
/// `s` must come from this library (or be NULL) and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn gbcorr_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Runs a verification suite ("bounds", "fock", "onebody", "all") over the
/// configured k_F list. A failing suite returns `Verification` and sets
/// `*pass = false`; the failing check names are in `gbcorr_last_error`.
/// No files are written.
///
/// # Safety
/// `cfg` must come from this library; `suite` NUL-terminated; `pass` writable.
#[no_mangle]
pub unsafe extern "C" fn gbcorr_verify(cfg: *const GbcorrConfig, suite: *const c_char, pass: *mut bool) -> GbcorrStatus {
    guard(|| {
        let cfg = cfg.as_ref().ok_or_else(|| null("cfg"))?;
        let pass = pass.as_mut().ok_or_else(|| null("pass"))?;
        let suite: Suite = str_arg(suite, "suite")?.parse().map_err(fail)?;
        let mut c = cfg.build()?;
        c.formats.clear();
        let r = app::cmd_verify(&c, suite).map_err(fail)?;
        *pass = r.pass;
        r.into_result().map(|_| ()).map_err(fail)
    })
}

/// ∫₀^∞ a/(a²+t²)·b/(b²+t²) dt by adaptive quadrature.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn gbcorr_lorentzian_product_integral(a: f64, b: f64, out: *mut f64) -> GbcorrStatus {
    guard(|| {
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        *out = correlation::lorentzian_product_integral(a, b, correlation::DEFAULT_QUAD_TOL).map_err(fail)?;
        Ok(())
    })
}
