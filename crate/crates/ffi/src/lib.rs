//! C ABI over `cone_test`.
//!
//! Samples are opaque handles built from row-major `d x d` matrices. Every
//! function returns a [`CtStatus`]; on failure the message is available from
//! [`ct_last_error_message`] on the same thread until the next call.

use std::cell::RefCell;
use std::ffi::{c_char, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use cone_test::error::{Error, ErrorClass};
use cone_test::kde::{default_grid, lscv_select};
use cone_test::two_sample::{gaussian_test_pooled, permutation_test, spectral_test, statistic_t};
use cone_test::{Bandwidths, Sample, SpdMatrix, TwoSampleData};

/// Status codes. The nonzero error classes match the CLI exit codes.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CtStatus {
    Ok = 0,
    NullPointer = 1,
    Usage = 2,
    Data = 3,
    Numerical = 4,
    Panic = 5,
}

/// Calibration method for [`ct_test`].
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CtMethod {
    Gaussian = 0,
    Spectral = 1,
    Permutation = 2,
}

/// Summary of one calibrated test.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct CtTestResult {
    pub statistic: f64,
    pub statistic_raw: f64,
    pub p_value: f64,
    pub b1: f64,
    pub b2: f64,
}

/// Opaque sample of SPD matrices.
pub struct CtSample {
    inner: Sample,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(message: String) {
    let c = CString::new(message.replace('\0', " ")).expect("interior NULs removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> CtStatus {
    match e.class() {
        ErrorClass::Usage => CtStatus::Usage,
        ErrorClass::Data => CtStatus::Data,
        ErrorClass::Numerical => CtStatus::Numerical,
    }
}

enum Failure {
    Null(&'static str),
    Lib(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Lib(e)
    }
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> CtStatus {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => CtStatus::Ok,
        Ok(Err(Failure::Null(what))) => {
            set_error(format!("null pointer: {what}"));
            CtStatus::NullPointer
        }
        Ok(Err(Failure::Lib(e))) => {
            set_error(e.to_string());
            status_of(&e)
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_error(format!("internal panic: {msg}"));
            CtStatus::Panic
        }
    }
}

unsafe fn sample_ref<'a>(p: *const CtSample, what: &'static str) -> Result<&'a Sample, Failure> {
    // SAFETY: caller passes a handle from ct_sample_new or null.
    unsafe { p.as_ref() }.map(|s| &s.inner).ok_or(Failure::Null(what))
}

unsafe fn out_ref<'a, T>(p: *mut T, what: &'static str) -> Result<&'a mut T, Failure> {
    // SAFETY: caller passes a valid writable pointer or null.
    unsafe { p.as_mut() }.ok_or(Failure::Null(what))
}

/// Build a sample from `n` row-major `dim x dim` matrices stored back to back.
///
/// # Safety
/// `entries` must point to `n * dim * dim` readable doubles and `out` must be
/// writable. The handle written to `out` is released with [`ct_sample_free`].
#[no_mangle]
pub unsafe extern "C" fn ct_sample_new(dim: usize, n: usize, entries: *const f64, out: *mut *mut CtSample) -> CtStatus {
    guard(|| {
        let out = unsafe { out_ref(out, "out") }?;
        *out = ptr::null_mut();
        if entries.is_null() {
            return Err(Failure::Null("entries"));
        }
        if dim == 0 {
            return Err(Error::InvalidParameter("dimension must be at least 1".into()).into());
        }
        let len = n
            .checked_mul(dim * dim)
            .ok_or_else(|| Error::InvalidParameter("sample size overflows".into()))?;
        // SAFETY: checked non-null; length guaranteed by the caller.
        let values = unsafe { std::slice::from_raw_parts(entries, len) };
        let items = values
            .chunks_exact(dim * dim)
            .map(|m| SpdMatrix::new(dim, m.to_vec()))
            .collect::<Result<Vec<_>, _>>()?;
        let sample = Sample::new(items)?;
        *out = Box::into_raw(Box::new(CtSample { inner: sample }));
        Ok(())
    })
}

/// Release a sample. Null is ignored.
///
/// # Safety
/// `sample` must be null or a handle from [`ct_sample_new`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn ct_sample_free(sample: *mut CtSample) {
    if !sample.is_null() {
        // SAFETY: ownership returns from the caller.
        drop(unsafe { Box::from_raw(sample) });
    }
}

/// Number of matrices in a sample, or 0 for null.
///
/// # Safety
/// `sample` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn ct_sample_len(sample: *const CtSample) -> usize {
    unsafe { sample.as_ref() }.map_or(0, |s| s.inner.len())
}

/// Matrix dimension of a sample, or 0 for null.
///
/// # Safety
/// `sample` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn ct_sample_dim(sample: *const CtSample) -> usize {
    unsafe { sample.as_ref() }.map_or(0, |s| s.inner.dim())
}

unsafe fn pair(s1: *const CtSample, s2: *const CtSample) -> Result<TwoSampleData, Failure> {
    let a = unsafe { sample_ref(s1, "sample1") }?;
    let b = unsafe { sample_ref(s2, "sample2") }?;
    Ok(TwoSampleData::new(a.clone(), b.clone())?)
}

/// Clamped statistic T for bandwidths `b1`, `b2`.
///
/// # Safety
/// Handles must be live and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn ct_statistic(
    sample1: *const CtSample,
    sample2: *const CtSample,
    b1: f64,
    b2: f64,
    out: *mut f64,
) -> CtStatus {
    guard(|| {
        let out = unsafe { out_ref(out, "out") }?;
        let data = unsafe { pair(sample1, sample2) }?;
        *out = statistic_t(&data, b1, b2)?;
        Ok(())
    })
}

/// Run one calibrated test.
///
/// `resamples` is the number of weighted chi-square draws for the spectral
/// method, the number of permutations for the permutation method, and is
/// ignored by the Gaussian method. `seed` is ignored by the Gaussian method.
///
/// # Safety
/// Handles must be live and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn ct_test(
    sample1: *const CtSample,
    sample2: *const CtSample,
    method: CtMethod,
    b1: f64,
    b2: f64,
    resamples: usize,
    seed: u64,
    out: *mut CtTestResult,
) -> CtStatus {
    guard(|| {
        let out = unsafe { out_ref(out, "out") }?;
        let data = unsafe { pair(sample1, sample2) }?;
        let bw = Bandwidths::new(b1, b2)?;
        let r = match method {
            CtMethod::Gaussian => gaussian_test_pooled(&data, bw)?,
            CtMethod::Spectral => spectral_test(&data, bw, resamples, seed)?,
            CtMethod::Permutation => permutation_test(&data, bw, resamples, seed)?,
        };
        *out = CtTestResult {
            statistic: r.statistic,
            statistic_raw: r.statistic_raw,
            p_value: r.p_value,
            b1: r.bandwidths.b1,
            b2: r.bandwidths.b2,
        };
        Ok(())
    })
}

/// Least-squares cross-validated bandwidth over `grid`. A null grid or zero
/// length selects the default log-spaced grid.
///
/// # Safety
/// `grid` must be null or point to `grid_len` doubles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ct_lscv_bandwidth(
    sample: *const CtSample,
    grid: *const f64,
    grid_len: usize,
    out: *mut f64,
) -> CtStatus {
    guard(|| {
        let out = unsafe { out_ref(out, "out") }?;
        let sample = unsafe { sample_ref(sample, "sample") }?;
        let grid = if grid.is_null() || grid_len == 0 {
            default_grid()
        } else {
            // SAFETY: non-null, length from the caller.
            unsafe { std::slice::from_raw_parts(grid, grid_len) }.to_vec()
        };
        *out = lscv_select(sample, &grid)?.b_opt;
        Ok(())
    })
}

/// Message for the last failed call on this thread, or null. The pointer is
/// valid until the next `ct_` call on the same thread.
#[no_mangle]
pub extern "C" fn ct_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn ct_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}
