//! C ABI over the alpha-dynamo toolkit.
//!
//! Objects cross the boundary as opaque handles created by `ad_*_new`-style
//! constructors and released with the matching `ad_*_free`. Every fallible
//! call returns an [`AdStatus`]; the message of the last failure on the
//! calling thread is available through [`ad_last_error`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use alpha_dynamo::alpha::{alpha2, alpha_direct, alpha_series, AlphaTensor, InductionSystem};
use alpha_dynamo::bloch::{eigensolve_near, BlochOperator, EigenOptions};
use alpha_dynamo::evolution::estimate_rho;
use alpha_dynamo::large_scale::find_xi;
use alpha_dynamo::pipeline::{run_pipeline, PipelineConfig};
use alpha_dynamo::presets::Preset;
use alpha_dynamo::{io, Error, FourierVectorField, Tolerances, C64};

/// Status codes returned by every fallible function.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum AdStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidInput = 2,
    Numerical = 3,
    AcceptanceFailed = 4,
    Io = 5,
    Panic = 6,
}

impl From<&Error> for AdStatus {
    fn from(e: &Error) -> Self {
        match e {
            Error::Io(_) => AdStatus::Io,
            Error::Stage { source, .. } => AdStatus::from(&**source),
            _ => match e.exit_code() {
                3 => AdStatus::Numerical,
                4 => AdStatus::AcceptanceFailed,
                _ => AdStatus::InvalidInput,
            },
        }
    }
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("nul bytes removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn guard(f: impl FnOnce() -> Result<(), (AdStatus, String)>) -> AdStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => AdStatus::Ok,
        Ok(Err((status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic".into());
            AdStatus::Panic
        }
    }
}

fn fail(e: Error) -> (AdStatus, String) {
    (AdStatus::from(&e), e.to_string())
}

fn null(what: &str) -> (AdStatus, String) {
    (AdStatus::NullPointer, format!("{what} is null"))
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, (AdStatus, String)> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p).to_str().map_err(|_| (AdStatus::InvalidInput, format!("{what} is not UTF-8")))
}

unsafe fn out_ptr<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, (AdStatus, String)> {
    p.as_mut().ok_or_else(|| null(what))
}

/// Opaque Fourier vector field.
pub struct AdField(FourierVectorField);

/// Opaque alpha tensor.
pub struct AdAlpha(AlphaTensor);

/// Copies the last error message of this thread into `buf` (NUL-terminated,
/// truncated to `len`). Returns the full message length, or 0 if none.
///
/// # Safety
/// `buf` must be valid for `len` bytes or null.
#[no_mangle]
pub unsafe extern "C" fn ad_last_error(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| match &*e.borrow() {
        None => 0,
        Some(msg) => {
            let bytes = msg.as_bytes();
            if !buf.is_null() && len > 0 {
                let n = bytes.len().min(len - 1);
                ptr::copy_nonoverlapping(bytes.as_ptr(), buf as *mut u8, n);
                *buf.add(n) = 0;
            }
            bytes.len()
        }
    })
}

/// Builds a named flow (`zero`, `abc-like`, `vfields(j)`) on the 2 pi cell.
///
/// # Safety
/// `name` must be a NUL-terminated string; `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn ad_field_preset(name: *const c_char, trunc: usize, out: *mut *mut AdField) -> AdStatus {
    guard(|| {
        let name = str_arg(name, "name")?;
        let out = out_ptr(out, "out")?;
        let p: Preset = name.parse().map_err(fail)?;
        let f = p.build(trunc.max(p.band())).map_err(fail)?;
        *out = Box::into_raw(Box::new(AdField(f)));
        Ok(())
    })
}

/// Parses a field from its JSON file format.
///
/// # Safety
/// `json` must be a NUL-terminated string; `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn ad_field_from_json(json: *const c_char, out: *mut *mut AdField) -> AdStatus {
    guard(|| {
        let text = str_arg(json, "json")?;
        let out = out_ptr(out, "out")?;
        let f = io::field_from_json(text).map_err(fail)?;
        *out = Box::into_raw(Box::new(AdField(f)));
        Ok(())
    })
}

/// Serializes a field; release the string with [`ad_string_free`].
///
/// # Safety
/// `field` must come from this library; `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn ad_field_to_json(field: *const AdField, out: *mut *mut c_char) -> AdStatus {
    guard(|| {
        let f = field.as_ref().ok_or_else(|| null("field"))?;
        let out = out_ptr(out, "out")?;
        let text = io::field_to_json(&f.0).map_err(fail)?;
        *out = CString::new(text).map_err(|e| (AdStatus::InvalidInput, e.to_string()))?.into_raw();
        Ok(())
    })
}

/// L2 norm (normalized measure); negative if `field` is null.
///
/// # Safety
/// `field` must come from this library or be null.
#[no_mangle]
pub unsafe extern "C" fn ad_field_norm_l2(field: *const AdField) -> f64 {
    field.as_ref().map_or(-1.0, |f| f.0.norm_l2())
}

/// # Safety
/// `field` must come from this library or be null; it is invalid afterwards.
#[no_mangle]
pub unsafe extern "C" fn ad_field_free(field: *mut AdField) {
    if !field.is_null() {
        drop(Box::from_raw(field));
    }
}

/// # Safety
/// `s` must come from this library or be null.
#[no_mangle]
pub unsafe extern "C" fn ad_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Method selector for [`ad_alpha_compute`].
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum AdAlphaMethod {
    Direct = 0,
    Series = 1,
    Alpha2 = 2,
}

/// Alpha tensor of `field` at `r_m` with truncation `trunc` (0 keeps the
/// field's own); `terms` is used by the series method only.
///
/// # Safety
/// `field` must come from this library; `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn ad_alpha_compute(
    field: *const AdField,
    r_m: f64,
    method: AdAlphaMethod,
    trunc: usize,
    terms: usize,
    out: *mut *mut AdAlpha,
) -> AdStatus {
    guard(|| {
        let f = &field.as_ref().ok_or_else(|| null("field"))?.0;
        let out = out_ptr(out, "out")?;
        let k = if trunc == 0 { f.torus.trunc } else { trunc };
        let tol = Tolerances::default();
        let t = match method {
            AdAlphaMethod::Alpha2 => AlphaTensor::new(
                alpha2(f),
                r_m,
                alpha_dynamo::alpha::AlphaMethod::Alpha2,
                Default::default(),
            ),
            AdAlphaMethod::Direct => alpha_direct(&InductionSystem::new(f, k).map_err(fail)?, r_m, &tol).map_err(fail)?,
            AdAlphaMethod::Series => {
                alpha_series(&InductionSystem::new(f, k).map_err(fail)?, r_m, terms, &tol).map_err(fail)?
            }
        };
        *out = Box::into_raw(Box::new(AdAlpha(t)));
        Ok(())
    })
}

/// Writes the 3x3 tensor in row-major order.
///
/// # Safety
/// `alpha` must come from this library; `out9` must hold 9 doubles.
#[no_mangle]
pub unsafe extern "C" fn ad_alpha_entries(alpha: *const AdAlpha, out9: *mut f64) -> AdStatus {
    guard(|| {
        let a = &alpha.as_ref().ok_or_else(|| null("alpha"))?.0;
        if out9.is_null() {
            return Err(null("out9"));
        }
        let dst = std::slice::from_raw_parts_mut(out9, 9);
        for r in 0..3 {
            for c in 0..3 {
                dst[3 * r + c] = a.alpha[(r, c)];
            }
        }
        Ok(())
    })
}

/// # Safety
/// `alpha` must come from this library or be null; it is invalid afterwards.
#[no_mangle]
pub unsafe extern "C" fn ad_alpha_free(alpha: *mut AdAlpha) {
    if !alpha.is_null() {
        drop(Box::from_raw(alpha));
    }
}

/// Growing large-scale mode: best direction `xi_out[3]` (angular, on the
/// 2 pi cell) and rate `rate_out[2]` (re, im).
///
/// # Safety
/// `alpha` must come from this library; outputs must hold 3 and 2 doubles.
#[no_mangle]
pub unsafe extern "C" fn ad_predict(alpha: *const AdAlpha, qmax: u32, xi_out: *mut f64, rate_out: *mut f64) -> AdStatus {
    guard(|| {
        let a = &alpha.as_ref().ok_or_else(|| null("alpha"))?.0;
        if xi_out.is_null() || rate_out.is_null() {
            return Err(null("output"));
        }
        let torus = alpha_dynamo::TorusSpec::two_pi(1);
        let m = find_xi(&a.alpha, &torus, qmax).map_err(fail)?;
        std::slice::from_raw_parts_mut(xi_out, 3).copy_from_slice(&m.xi);
        std::slice::from_raw_parts_mut(rate_out, 2).copy_from_slice(&[m.rate.re, m.rate.im]);
        Ok(())
    })
}

/// Bloch eigenvalue `mu_out[2]` of the induction operator at `eps * xi`,
/// nearest to `guess_re + i guess_im`.
///
/// # Safety
/// `field` must come from this library; `xi` must hold 3 doubles and
/// `mu_out` 2.
#[no_mangle]
pub unsafe extern "C" fn ad_bloch_eigenvalue(
    field: *const AdField,
    r_m: f64,
    xi: *const f64,
    eps: f64,
    trunc: usize,
    guess_re: f64,
    guess_im: f64,
    mu_out: *mut f64,
) -> AdStatus {
    guard(|| {
        let f = &field.as_ref().ok_or_else(|| null("field"))?.0;
        if xi.is_null() || mu_out.is_null() {
            return Err(null("xi or mu_out"));
        }
        let x = std::slice::from_raw_parts(xi, 3);
        let op = BlochOperator::assemble(f, r_m, [x[0], x[1], x[2]], eps, trunc).map_err(fail)?;
        let r = eigensolve_near(&op, C64::new(guess_re, guess_im), None, EigenOptions::default()).map_err(fail)?;
        std::slice::from_raw_parts_mut(mu_out, 2).copy_from_slice(&[r.mu.re, r.mu.im]);
        Ok(())
    })
}

/// Largest growth rate of the linearized MHD operator over the Bloch classes
/// of the big torus `n[3]` times the cell.
///
/// # Safety
/// `field` must come from this library; `n` must hold 3 integers.
#[no_mangle]
pub unsafe extern "C" fn ad_estimate_rho(
    field: *const AdField,
    n: *const i64,
    trunc: usize,
    r_m: f64,
    r_e: f64,
    rho_out: *mut f64,
) -> AdStatus {
    guard(|| {
        let f = &field.as_ref().ok_or_else(|| null("field"))?.0;
        if n.is_null() {
            return Err(null("n"));
        }
        let out = out_ptr(rho_out, "rho_out")?;
        let n = std::slice::from_raw_parts(n, 3);
        let r = estimate_rho(&f.retruncate(trunc), [n[0], n[1], n[2]], trunc, r_m, r_e).map_err(fail)?;
        *out = r.rho;
        Ok(())
    })
}

/// Runs the full pipeline from a TOML configuration. `passed` receives 1
/// when every check passed.
///
/// # Safety
/// `config_toml` must be a NUL-terminated string; `passed` valid or null.
#[no_mangle]
pub unsafe extern "C" fn ad_pipeline_run(config_toml: *const c_char, passed: *mut i32) -> AdStatus {
    guard(|| {
        let text = str_arg(config_toml, "config_toml")?;
        let cfg = PipelineConfig::from_toml(text).map_err(fail)?;
        let report = run_pipeline(&cfg).map_err(fail)?;
        if let Some(p) = passed.as_mut() {
            *p = i32::from(report.passed);
        }
        Ok(())
    })
}
