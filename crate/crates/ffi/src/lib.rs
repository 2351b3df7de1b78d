//! C ABI over the `qualshift` estimators.
//!
//! Samples and estimates are opaque handles created and released by this
//! library. Every fallible call returns a [`QsStatus`]; on failure the message
//! is available from [`qs_last_error_message`] on the same thread.
//!
//! ```c
//! QsSample *s = NULL;
//! if (qs_sample_new(y, d, n, &s) != QS_STATUS_OK) { puts(qs_last_error_message()); }
//! qs_sample_set_covariates(s, x, n, p);
//! QsOptions opts = qs_options_default(QS_DESIGN_SOO);
//! QsEstimate *e = NULL;
//! qs_estimate(s, &opts, &e);
//! ...
//! qs_estimate_free(e);
//! qs_sample_free(s);
//! ```

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;
use std::slice;

use qualshift::cli::{estimate_sample, EstimateConfig};
use qualshift::dgp::{gen_sample, DgpDesign, DgpSpec, OutcomeKind};
use qualshift::io::{read_sample_path, CsvSchema};
use qualshift::iv::{IvCovariance, IvOptions};
use qualshift::rd::{Bandwidth, RdOptions};
use qualshift::soo::SooOptions;
use qualshift::{Covariates, Design, Estimand, Error, Period, QualSample, ShiftEstimate};

/// Result of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QsStatus {
    Ok = 0,
    NullPointer = 1,
    /// Bad argument: length mismatch, bad period code, invalid UTF-8.
    InvalidArgument = 2,
    /// The data do not fit the requested design.
    InvalidInput = 3,
    /// Estimation failed on valid input.
    Estimation = 4,
    Io = 5,
    /// A Rust panic was caught at the boundary.
    Internal = 6,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QsDesign {
    Soo = 0,
    Iv = 1,
    Rd = 2,
    Did = 3,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QsEstimand {
    Ps = 0,
    Pst = 1,
    Lps = 2,
    Psc = 3,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QsSimDesign {
    SooRandomized = 0,
    SooObservational = 1,
    Iv = 2,
    Rd = 3,
    Did = 4,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QsOutcomeKind {
    Multinomial = 0,
    Ordered = 1,
}

/// Estimator settings. Start from [`qs_options_default`].
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QsOptions {
    pub design: QsDesign,
    /// `QS_ESTIMAND_PS` or `QS_ESTIMAND_PST` for selection on observables;
    /// the other designs have a fixed estimand and ignore this field.
    pub estimand: QsEstimand,
    pub folds: usize,
    pub seed: u64,
    pub alpha: f64,
    /// Fixed RD bandwidth; zero selects it from the data.
    pub bandwidth: f64,
    pub bias_correction: bool,
    pub homoskedastic: bool,
}

/// One category of an estimate.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QsCategory {
    pub label: i64,
    pub point: f64,
    pub se: f64,
    pub ci_low: f64,
    pub ci_high: f64,
}

/// Opaque observation set.
pub struct QsSample {
    inner: QualSample,
}

/// Opaque estimation result.
pub struct QsEstimate {
    inner: ShiftEstimate,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: impl Into<String>) {
    let msg = CString::new(msg.into().replace('\0', " ")).expect("interior NULs removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = msg);
}

fn fail(status: QsStatus, msg: impl Into<String>) -> QsStatus {
    set_error(msg);
    status
}

fn from_error(err: Error) -> QsStatus {
    let status = match &err {
        Error::Io(_) => QsStatus::Io,
        e if e.is_input_error() => QsStatus::InvalidInput,
        _ => QsStatus::Estimation,
    };
    fail(status, err.to_string())
}

// Runs `f`, turning panics into `QsStatus::Internal`.
fn guard(f: impl FnOnce() -> QsStatus) -> QsStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(s) => s,
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            fail(QsStatus::Internal, format!("internal error: {msg}"))
        }
    }
}

unsafe fn input<'a, T>(data: *const T, len: usize, name: &str) -> Result<&'a [T], QsStatus> {
    if len == 0 {
        return Ok(&[]);
    }
    if data.is_null() {
        return Err(fail(QsStatus::NullPointer, format!("`{name}` is NULL")));
    }
    Ok(slice::from_raw_parts(data, len))
}

fn update(sample: *mut QsSample, f: impl FnOnce(QualSample) -> Result<QualSample, QsStatus>) -> QsStatus {
    guard(|| {
        let Some(h) = (unsafe { sample.as_mut() }) else {
            return fail(QsStatus::NullPointer, "sample handle is NULL");
        };
        let current = std::mem::replace(&mut h.inner, QualSample::new(Vec::new(), Vec::new()));
        let backup = current.clone();
        match f(current) {
            Ok(next) => {
                h.inner = next;
                QsStatus::Ok
            }
            Err(status) => {
                h.inner = backup;
                status
            }
        }
    })
}

fn check_len(sample: &QualSample, got: usize, name: &str) -> Result<(), QsStatus> {
    if got == sample.len() {
        Ok(())
    } else {
        Err(fail(QsStatus::InvalidArgument, format!("`{name}` has {got} entries, sample has {}", sample.len())))
    }
}

/// Message of the last failed call on this thread; empty if none. The pointer
/// stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn qs_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn qs_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Creates a sample from `n` outcome labels and 0/1 treatments.
///
/// # Safety
/// `outcome` and `treatment` must point to `n` readable elements; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn qs_sample_new(
    outcome: *const i64,
    treatment: *const u8,
    n: usize,
    out: *mut *mut QsSample,
) -> QsStatus {
    guard(|| {
        if out.is_null() {
            return fail(QsStatus::NullPointer, "`out` is NULL");
        }
        let (y, d) = match (input(outcome, n, "outcome"), input(treatment, n, "treatment")) {
            (Ok(y), Ok(d)) => (y, d),
            (Err(s), _) | (_, Err(s)) => return s,
        };
        let handle = Box::new(QsSample { inner: QualSample::new(y.to_vec(), d.to_vec()) });
        *out = Box::into_raw(handle);
        QsStatus::Ok
    })
}

/// Reads a sample from a CSV file with the CLI's column conventions.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn qs_sample_read_csv(path: *const c_char, out: *mut *mut QsSample) -> QsStatus {
    guard(|| {
        if path.is_null() || out.is_null() {
            return fail(QsStatus::NullPointer, "`path` or `out` is NULL");
        }
        let Ok(path) = CStr::from_ptr(path).to_str() else {
            return fail(QsStatus::InvalidArgument, "path is not valid UTF-8");
        };
        match read_sample_path(Path::new(path), &CsvSchema::default()) {
            Ok(s) => {
                *out = Box::into_raw(Box::new(QsSample { inner: s }));
                QsStatus::Ok
            }
            Err(e) => from_error(e.into()),
        }
    })
}

/// Draws a sample from one of the built-in simulation designs.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn qs_sample_simulate(
    design: QsSimDesign,
    outcome: QsOutcomeKind,
    n: usize,
    seed: u64,
    out: *mut *mut QsSample,
) -> QsStatus {
    guard(|| {
        if out.is_null() {
            return fail(QsStatus::NullPointer, "`out` is NULL");
        }
        let design = match design {
            QsSimDesign::SooRandomized => DgpDesign::SooRandomized,
            QsSimDesign::SooObservational => DgpDesign::SooObservational,
            QsSimDesign::Iv => DgpDesign::Iv,
            QsSimDesign::Rd => DgpDesign::Rd,
            QsSimDesign::Did => DgpDesign::Did,
        };
        let outcome = match outcome {
            QsOutcomeKind::Multinomial => OutcomeKind::Multinomial,
            QsOutcomeKind::Ordered => OutcomeKind::Ordered,
        };
        let s = gen_sample(&DgpSpec::new(design, outcome, n, seed));
        *out = Box::into_raw(Box::new(QsSample { inner: s }));
        QsStatus::Ok
    })
}

/// Sets a row-major `n_rows × n_cols` covariate matrix.
///
/// # Safety
/// `data` must point to `n_rows * n_cols` readable doubles.
#[no_mangle]
pub unsafe extern "C" fn qs_sample_set_covariates(
    sample: *mut QsSample,
    data: *const f64,
    n_rows: usize,
    n_cols: usize,
) -> QsStatus {
    update(sample, |s| {
        check_len(&s, n_rows, "covariate rows")?;
        let Some(len) = n_rows.checked_mul(n_cols) else {
            return Err(fail(QsStatus::InvalidArgument, "covariate matrix too large"));
        };
        let x = input(data, len, "covariates")?;
        Ok(s.with_covariates(Covariates::from_row_major(n_rows, n_cols, x.to_vec())))
    })
}

/// # Safety
/// `z` must point to `n` readable bytes.
#[no_mangle]
pub unsafe extern "C" fn qs_sample_set_instrument(sample: *mut QsSample, z: *const u8, n: usize) -> QsStatus {
    update(sample, |s| {
        check_len(&s, n, "instrument")?;
        Ok(s.with_instrument(input(z, n, "instrument")?.to_vec()))
    })
}

/// Sets the running variable and the cutoff of a discontinuity design.
///
/// # Safety
/// `run` must point to `n` readable doubles.
#[no_mangle]
pub unsafe extern "C" fn qs_sample_set_running_var(
    sample: *mut QsSample,
    run: *const f64,
    n: usize,
    cutoff: f64,
) -> QsStatus {
    update(sample, |s| {
        check_len(&s, n, "running variable")?;
        Ok(s.with_running_var(input(run, n, "running variable")?.to_vec()).with_cutoff(cutoff))
    })
}

/// Sets periods: 0 = pre, 1 = post.
///
/// # Safety
/// `period` must point to `n` readable bytes.
#[no_mangle]
pub unsafe extern "C" fn qs_sample_set_period(sample: *mut QsSample, period: *const u8, n: usize) -> QsStatus {
    update(sample, |s| {
        check_len(&s, n, "period")?;
        let raw = input(period, n, "period")?;
        let mut out = Vec::with_capacity(n);
        for (i, &p) in raw.iter().enumerate() {
            out.push(match p {
                0 => Period::Pre,
                1 => Period::Post,
                _ => return Err(fail(QsStatus::InvalidArgument, format!("period of unit {i} is not 0 or 1"))),
            });
        }
        Ok(s.with_period(out))
    })
}

/// # Safety
/// `unit_id` must point to `n` readable integers.
#[no_mangle]
pub unsafe extern "C" fn qs_sample_set_unit_id(sample: *mut QsSample, unit_id: *const u64, n: usize) -> QsStatus {
    update(sample, |s| {
        check_len(&s, n, "unit id")?;
        Ok(s.with_unit_id(input(unit_id, n, "unit id")?.to_vec()))
    })
}

/// Number of rows; 0 for a NULL handle.
///
/// # Safety
/// `sample` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn qs_sample_len(sample: *const QsSample) -> usize {
    sample.as_ref().map_or(0, |s| s.inner.len())
}

/// Releases a sample. NULL is ignored.
///
/// # Safety
/// `sample` must be NULL or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn qs_sample_free(sample: *mut QsSample) {
    if !sample.is_null() {
        drop(Box::from_raw(sample));
    }
}

/// Defaults for `design`: PS, 5 folds, seed 42, alpha 0.05, automatic
/// bandwidth with bias correction, robust IV standard errors.
#[no_mangle]
pub extern "C" fn qs_options_default(design: QsDesign) -> QsOptions {
    let estimand = match design {
        QsDesign::Soo => QsEstimand::Ps,
        QsDesign::Iv => QsEstimand::Lps,
        QsDesign::Rd => QsEstimand::Psc,
        QsDesign::Did => QsEstimand::Pst,
    };
    QsOptions {
        design,
        estimand,
        folds: 5,
        seed: 42,
        alpha: 0.05,
        bandwidth: 0.0,
        bias_correction: true,
        homoskedastic: false,
    }
}

fn config(opts: &QsOptions) -> Result<EstimateConfig, QsStatus> {
    let design = match opts.design {
        QsDesign::Soo => Design::Soo,
        QsDesign::Iv => Design::Iv,
        QsDesign::Rd => Design::Rd,
        QsDesign::Did => Design::Did,
    };
    let estimand = match (design, opts.estimand) {
        (Design::Soo, QsEstimand::Ps) => Estimand::Ps,
        (Design::Soo, QsEstimand::Pst) => Estimand::Pst,
        (Design::Soo, other) => {
            return Err(fail(QsStatus::InvalidArgument, format!("{other:?} is not available for selection on observables")))
        }
        (Design::Iv, _) => Estimand::Lps,
        (Design::Rd, _) => Estimand::Psc,
        (Design::Did, _) => Estimand::Pst,
    };
    if !(opts.alpha > 0.0 && opts.alpha < 1.0) {
        return Err(fail(QsStatus::InvalidArgument, format!("alpha must lie in (0, 1), got {}", opts.alpha)));
    }
    if design == Design::Soo && opts.folds < 2 {
        return Err(fail(QsStatus::InvalidArgument, format!("need at least 2 folds, got {}", opts.folds)));
    }
    let bandwidth = if opts.bandwidth == 0.0 { Bandwidth::Auto } else { Bandwidth::Fixed(opts.bandwidth) };
    Ok(EstimateConfig {
        design,
        estimand,
        soo: SooOptions { k: opts.folds, seed: opts.seed, alpha: opts.alpha, ..SooOptions::default() },
        iv: IvOptions {
            alpha: opts.alpha,
            covariance: if opts.homoskedastic { IvCovariance::Homoskedastic } else { IvCovariance::Robust },
        },
        rd: RdOptions { bandwidth, bias_correction: opts.bias_correction, alpha: opts.alpha, ..RdOptions::default() },
        alpha: opts.alpha,
    })
}

/// Runs the estimator for `opts.design`.
///
/// # Safety
/// `sample` and `opts` must be live pointers; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn qs_estimate(
    sample: *const QsSample,
    opts: *const QsOptions,
    out: *mut *mut QsEstimate,
) -> QsStatus {
    guard(|| {
        let (Some(s), Some(opts)) = (sample.as_ref(), opts.as_ref()) else {
            return fail(QsStatus::NullPointer, "`sample` or `opts` is NULL");
        };
        if out.is_null() {
            return fail(QsStatus::NullPointer, "`out` is NULL");
        }
        let config = match config(opts) {
            Ok(c) => c,
            Err(status) => return status,
        };
        match estimate_sample(&s.inner, &config) {
            Ok(e) => {
                *out = Box::into_raw(Box::new(QsEstimate { inner: e }));
                QsStatus::Ok
            }
            Err(e) => from_error(e),
        }
    })
}

/// Number of outcome categories; 0 for a NULL handle.
///
/// # Safety
/// `estimate` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn qs_estimate_n_categories(estimate: *const QsEstimate) -> usize {
    estimate.as_ref().map_or(0, |e| e.inner.categories.len())
}

/// Copies category `index` (0-based) into `out`.
///
/// # Safety
/// `estimate` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn qs_estimate_category(
    estimate: *const QsEstimate,
    index: usize,
    out: *mut QsCategory,
) -> QsStatus {
    guard(|| {
        let Some(e) = estimate.as_ref() else {
            return fail(QsStatus::NullPointer, "estimate handle is NULL");
        };
        if out.is_null() {
            return fail(QsStatus::NullPointer, "`out` is NULL");
        }
        let Some(c) = e.inner.categories.get(index) else {
            return fail(
                QsStatus::InvalidArgument,
                format!("category index {index} out of range (have {})", e.inner.categories.len()),
            );
        };
        *out = QsCategory { label: c.label, point: c.point, se: c.se, ci_low: c.ci_low, ci_high: c.ci_high };
        QsStatus::Ok
    })
}

/// The estimand that was estimated.
///
/// # Safety
/// `estimate` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn qs_estimate_estimand(estimate: *const QsEstimate, out: *mut QsEstimand) -> QsStatus {
    guard(|| {
        let (Some(e), false) = (estimate.as_ref(), out.is_null()) else {
            return fail(QsStatus::NullPointer, "`estimate` or `out` is NULL");
        };
        *out = match e.inner.estimand {
            Estimand::Ps => QsEstimand::Ps,
            Estimand::Pst => QsEstimand::Pst,
            Estimand::Lps => QsEstimand::Lps,
            Estimand::Psc => QsEstimand::Psc,
        };
        QsStatus::Ok
    })
}

/// The estimate as the JSON document the CLI prints. Release with
/// [`qs_string_free`]. Returns NULL on a NULL handle.
///
/// # Safety
/// `estimate` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn qs_estimate_to_json(estimate: *const QsEstimate) -> *mut c_char {
    match estimate.as_ref() {
        Some(e) => CString::new(e.inner.to_json_string()).map_or(ptr::null_mut(), CString::into_raw),
        None => {
            set_error("estimate handle is NULL");
            ptr::null_mut()
        }
    }
}

/// # Safety
/// `s` must be NULL or a string returned by this library and not yet freed.
#[no_mangle]
pub unsafe extern "C" fn qs_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Releases an estimate. NULL is ignored.
///
/// # Safety
/// `estimate` must be NULL or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn qs_estimate_free(estimate: *mut QsEstimate) {
    if !estimate.is_null() {
        drop(Box::from_raw(estimate));
    }
}
