//! C interface to wavephase. Objects are opaque handles created by
//! `wp_*_new`/constructor calls and released with the matching `wp_*_free`.
//! Every fallible call returns a [`WpStatus`]; on failure the message is
//! available from [`wp_last_error_message`] on the same thread.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;

use wavephase::gaussian::{fit_gaussian_model, sample_gaussian, GaussianDualState};
use wavephase::graph::{build_foveal_edges, estimate_table, CovarianceTable, ModelName, ModelSpec};
use wavephase::grid::white_noise;
use wavephase::io::{load_field, save_field, write_table};
use wavephase::micro::synthesize;
use wavephase::{ComplexField, Error, Seed, WaveletBank};

/// Status codes returned by every fallible call.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum WpStatus {
    Ok = 0,
    NullPointer = 1,
    Config = 2,
    Shape = 3,
    DegenerateChannel = 4,
    Numerical = 5,
    NonConvergence = 6,
    Io = 7,
    Format = 8,
    Json = 9,
    Panic = 10,
}

/// Built-in foveal models.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum WpModel {
    A = 0,
    B = 1,
    C = 2,
    D = 3,
}

impl From<WpModel> for ModelName {
    fn from(m: WpModel) -> Self {
        match m {
            WpModel::A => ModelName::A,
            WpModel::B => ModelName::B,
            WpModel::C => ModelName::C,
            WpModel::D => ModelName::D,
        }
    }
}

/// Real or complex square field.
pub struct WpField {
    inner: ComplexField,
}

/// Bump steerable wavelet bank.
pub struct WpBank {
    inner: WaveletBank,
}

/// Estimated covariance table.
pub struct WpTable {
    inner: CovarianceTable,
}

/// Fitted Gaussian maximum-entropy model.
pub struct WpGaussian {
    inner: GaussianDualState,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> WpStatus {
    match e {
        Error::Config(_) => WpStatus::Config,
        Error::Shape(_) => WpStatus::Shape,
        Error::DegenerateChannel(_) => WpStatus::DegenerateChannel,
        Error::Numerical(_) => WpStatus::Numerical,
        Error::NonConvergence { .. } => WpStatus::NonConvergence,
        Error::Io(_) => WpStatus::Io,
        Error::Format(_) => WpStatus::Format,
        Error::Json(_) => WpStatus::Json,
    }
}

enum Fail {
    Null(&'static str),
    Lib(Error),
}

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail::Lib(e)
    }
}

/// Runs `f`, translating errors and panics into status codes.
fn guard(f: impl FnOnce() -> Result<(), Fail>) -> WpStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => WpStatus::Ok,
        Ok(Err(Fail::Null(what))) => {
            set_error(format!("null pointer: {what}"));
            WpStatus::NullPointer
        }
        Ok(Err(Fail::Lib(e))) => {
            set_error(e.to_string());
            status_of(&e)
        }
        Err(_) => {
            set_error("internal panic".into());
            WpStatus::Panic
        }
    }
}

unsafe fn get<'a, T>(p: *const T, what: &'static str) -> Result<&'a T, Fail> {
    p.as_ref().ok_or(Fail::Null(what))
}

unsafe fn put<T>(out: *mut *mut T, v: T, what: &'static str) -> Result<(), Fail> {
    if out.is_null() {
        return Err(Fail::Null(what));
    }
    *out = Box::into_raw(Box::new(v));
    Ok(())
}

unsafe fn path_arg(p: *const c_char) -> Result<PathBuf, Fail> {
    if p.is_null() {
        return Err(Fail::Null("path"));
    }
    let s = CStr::from_ptr(p).to_str().map_err(|_| Fail::Lib(Error::Config("path is not valid UTF-8".into())))?;
    Ok(PathBuf::from(s))
}

/// Message of the last failure on this thread, or null. Valid until the
/// next failing call on the same thread.
#[no_mangle]
pub extern "C" fn wp_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(std::ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn wp_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Real field from `side * side` row-major values.
///
/// # Safety
/// `values` must point to `len` readable doubles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn wp_field_from_real(side: usize, values: *const f64, len: usize, out: *mut *mut WpField) -> WpStatus {
    guard(|| {
        if values.is_null() {
            return Err(Fail::Null("values"));
        }
        if len != side * side {
            return Err(Error::Shape(format!("{len} values for a {side}x{side} field")).into());
        }
        let v = std::slice::from_raw_parts(values, len);
        put(out, WpField { inner: ComplexField::from_real(side, v)? }, "out")
    })
}

/// Real Gaussian white noise with standard deviation `sigma`.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn wp_field_white_noise(side: usize, sigma: f64, seed: u64, out: *mut *mut WpField) -> WpStatus {
    guard(|| put(out, WpField { inner: white_noise(side, sigma, Seed(seed))? }, "out"))
}

/// Reads a field file.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn wp_field_load(path: *const c_char, out: *mut *mut WpField) -> WpStatus {
    guard(|| put(out, WpField { inner: load_field(&path_arg(path)?)? }, "out"))
}

/// Writes a field file.
///
/// # Safety
/// `field` must come from this library; `path` must be NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn wp_field_save(field: *const WpField, path: *const c_char) -> WpStatus {
    guard(|| Ok(save_field(&path_arg(path)?, &get(field, "field")?.inner)?))
}

/// Grid side, or 0 for a null handle.
///
/// # Safety
/// `field` must be null or come from this library.
#[no_mangle]
pub unsafe extern "C" fn wp_field_side(field: *const WpField) -> usize {
    field.as_ref().map_or(0, |f| f.inner.side())
}

/// Copies the real part into `buf` (`side * side` doubles).
///
/// # Safety
/// `buf` must point to `len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn wp_field_real(field: *const WpField, buf: *mut f64, len: usize) -> WpStatus {
    guard(|| {
        let f = get(field, "field")?;
        if buf.is_null() {
            return Err(Fail::Null("buf"));
        }
        let v = f.inner.real_part();
        if len != v.len() {
            return Err(Error::Shape(format!("buffer of {len} for {} values", v.len())).into());
        }
        std::slice::from_raw_parts_mut(buf, len).copy_from_slice(&v);
        Ok(())
    })
}

/// # Safety
/// `field` must be null or come from this library, and not be used again.
#[no_mangle]
pub unsafe extern "C" fn wp_field_free(field: *mut WpField) {
    if !field.is_null() {
        drop(Box::from_raw(field));
    }
}

/// Bump steerable bank with `scales` scales and `angles` angles.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn wp_bank_bump(side: usize, scales: usize, angles: usize, out: *mut *mut WpBank) -> WpStatus {
    guard(|| put(out, WpBank { inner: WaveletBank::bump(side, scales, angles)? }, "out"))
}

/// Number of channels including the lowpass, or 0 for a null handle.
///
/// # Safety
/// `bank` must be null or come from this library.
#[no_mangle]
pub unsafe extern "C" fn wp_bank_num_channels(bank: *const WpBank) -> usize {
    bank.as_ref().map_or(0, |b| b.inner.num_channels())
}

/// Frame bounds of the bank.
///
/// # Safety
/// `lower` and `upper` must be writable.
#[no_mangle]
pub unsafe extern "C" fn wp_bank_frame_bounds(bank: *const WpBank, lower: *mut f64, upper: *mut f64) -> WpStatus {
    guard(|| {
        let b = get(bank, "bank")?;
        if lower.is_null() || upper.is_null() {
            return Err(Fail::Null("bounds"));
        }
        let (a, bb) = b.inner.frame_bounds()?;
        *lower = a;
        *upper = bb;
        Ok(())
    })
}

/// # Safety
/// `bank` must be null or come from this library, and not be used again.
#[no_mangle]
pub unsafe extern "C" fn wp_bank_free(bank: *mut WpBank) {
    if !bank.is_null() {
        drop(Box::from_raw(bank));
    }
}

/// Estimates the covariance table of a model preset on `field`.
///
/// # Safety
/// Handles must come from this library; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn wp_table_estimate(field: *const WpField, bank: *const WpBank, model: WpModel, out: *mut *mut WpTable) -> WpStatus {
    guard(|| {
        let (f, b) = (get(field, "field")?, get(bank, "bank")?);
        let spec = ModelSpec::preset(model.into(), b.inner.scales(), b.inner.angles())?;
        let t = estimate_table(&f.inner, &b.inner, &build_foveal_edges(&spec)?)?;
        put(out, WpTable { inner: t }, "out")
    })
}

/// Number of stored edges, or 0 for a null handle.
///
/// # Safety
/// `table` must be null or come from this library.
#[no_mangle]
pub unsafe extern "C" fn wp_table_num_edges(table: *const WpTable) -> usize {
    table.as_ref().map_or(0, |t| t.inner.edges.len())
}

/// Writes the binary table file.
///
/// # Safety
/// `table` must come from this library; `path` must be NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn wp_table_save(table: *const WpTable, path: *const c_char) -> WpStatus {
    guard(|| Ok(write_table(&path_arg(path)?, &get(table, "table")?.inner)?))
}

/// # Safety
/// `table` must be null or come from this library, and not be used again.
#[no_mangle]
pub unsafe extern "C" fn wp_table_free(table: *mut WpTable) {
    if !table.is_null() {
        drop(Box::from_raw(table));
    }
}

/// Fits the Gaussian maximum-entropy model to a table.
///
/// # Safety
/// Handles must come from this library; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn wp_gaussian_fit(table: *const WpTable, bank: *const WpBank, tol: f64, out: *mut *mut WpGaussian) -> WpStatus {
    guard(|| {
        let s = fit_gaussian_model(&get(table, "table")?.inner, &get(bank, "bank")?.inner, tol)?;
        put(out, WpGaussian { inner: s }, "out")
    })
}

/// Largest relative constraint error of the fit, NaN for a null handle.
///
/// # Safety
/// `model` must be null or come from this library.
#[no_mangle]
pub unsafe extern "C" fn wp_gaussian_max_rel_error(model: *const WpGaussian) -> f64 {
    model.as_ref().map_or(f64::NAN, |m| m.inner.max_rel_error)
}

/// Draws one sample with the given seed.
///
/// # Safety
/// `model` must come from this library; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn wp_gaussian_sample(model: *const WpGaussian, seed: u64, out: *mut *mut WpField) -> WpStatus {
    guard(|| {
        let mut v = sample_gaussian(&get(model, "model")?.inner, seed, 1)?;
        put(out, WpField { inner: v.remove(0) }, "out")
    })
}

/// # Safety
/// `model` must be null or come from this library, and not be used again.
#[no_mangle]
pub unsafe extern "C" fn wp_gaussian_free(model: *mut WpGaussian) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Microcanonical synthesis for models B, C or D. Returns the best restart
/// and its final loss relative to its initial loss.
///
/// # Safety
/// Handles must come from this library; `out` and `relative_loss` must be
/// writable (`relative_loss` may be null).
#[no_mangle]
pub unsafe extern "C" fn wp_synthesize(
    reference: *const WpField,
    bank: *const WpBank,
    model: WpModel,
    restarts: usize,
    max_iter: usize,
    seed: u64,
    out: *mut *mut WpField,
    relative_loss: *mut f64,
) -> WpStatus {
    guard(|| {
        let (x, b) = (get(reference, "reference")?, get(bank, "bank")?);
        let mut spec = ModelSpec::preset(model.into(), b.inner.scales(), b.inner.angles())?;
        spec.optimizer.max_iter = max_iter;
        let res = synthesize(&x.inner, &b.inner, &spec, restarts, seed)?;
        let best = &res.restarts[res.best];
        if !relative_loss.is_null() {
            *relative_loss = best.final_loss / best.initial_loss;
        }
        put(out, WpField { inner: ComplexField::from_real(res.side, &best.field)? }, "out")
    })
}
