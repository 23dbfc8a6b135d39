//! C ABI for the streaming estimators.
//!
//! Handles are opaque and owned by the caller: every `*_new` has a matching
//! `*_free`. Functions return an [`SdStatus`]; on failure a human-readable
//! message is available from [`sd_last_error`] on the same thread. Array
//! arguments are `(pointer, length)` pairs and are only read during the call.
//! Panics never cross the boundary; they surface as [`SdStatus::Panic`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;
use std::slice;

use seqdecon::baselines::AveragedStat;
use seqdecon::{Complex64, EigenvalueVector, Error, EstimatorSpec, Kernel, SpectralBasis, SufStat};

/// Result of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SdStatus {
    Ok = 0,
    NullPointer = 1,
    Dimension = 2,
    NonFinite = 3,
    InvalidParameter = 4,
    InvalidInput = 5,
    /// No component identified yet, or nothing to estimate from.
    Degenerate = 6,
    Panic = 7,
}

/// Estimator family for [`sd_stat_estimate`].
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SdEstimator {
    Main = 0,
    Soft = 1,
    /// Tikhonov-Phillips; `param` is γ, NaN to tune it.
    TikhonovPhillips = 2,
    /// Landweber; `param` is the iteration count, NaN to tune it.
    Landweber = 3,
    Monotone = 4,
}

/// Opaque streaming sufficient statistic.
pub struct SdStat(SufStat);

/// Opaque running sums for the averaged-model ridge baseline.
pub struct SdAveraged(AveragedStat);

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: &str) {
    let text = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = text);
}

fn status_of(e: &Error) -> SdStatus {
    match e {
        Error::Dimension { .. } | Error::BasisMismatch(..) => SdStatus::Dimension,
        Error::NonFinite(_) => SdStatus::NonFinite,
        Error::InvalidParameter(_) | Error::ResourceLimit(_) => SdStatus::InvalidParameter,
        Error::NoIdentifiedComponents | Error::Unidentified(_) => SdStatus::Degenerate,
        _ => SdStatus::InvalidInput,
    }
}

fn guard(f: impl FnOnce() -> Result<(), SdStatusError>) -> SdStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error("");
            SdStatus::Ok
        }
        Ok(Err(SdStatusError(status, msg))) => {
            set_error(&msg);
            status
        }
        Err(_) => {
            set_error("internal panic");
            SdStatus::Panic
        }
    }
}

struct SdStatusError(SdStatus, String);

impl From<Error> for SdStatusError {
    fn from(e: Error) -> Self {
        SdStatusError(status_of(&e), e.to_string())
    }
}

fn null(what: &str) -> SdStatusError {
    SdStatusError(SdStatus::NullPointer, format!("{what} is null"))
}

unsafe fn input<'a>(ptr: *const f64, len: usize, what: &str) -> Result<&'a [f64], SdStatusError> {
    if len == 0 {
        return Ok(&[]);
    }
    if ptr.is_null() {
        return Err(null(what));
    }
    Ok(slice::from_raw_parts(ptr, len))
}

unsafe fn output<'a>(
    ptr: *mut f64,
    len: usize,
    what: &str,
) -> Result<&'a mut [f64], SdStatusError> {
    if ptr.is_null() {
        return Err(null(what));
    }
    Ok(slice::from_raw_parts_mut(ptr, len))
}

unsafe fn handle<'a, T>(ptr: *const T, what: &str) -> Result<&'a T, SdStatusError> {
    ptr.as_ref().ok_or_else(|| null(what))
}

unsafe fn handle_mut<'a, T>(ptr: *mut T, what: &str) -> Result<&'a mut T, SdStatusError> {
    ptr.as_mut().ok_or_else(|| null(what))
}

fn basis_for(h: usize, w: usize) -> Result<SpectralBasis, Error> {
    if h == 1 {
        SpectralBasis::one_d(w)
    } else {
        SpectralBasis::two_d(h, w)
    }
}

unsafe fn eigenvalues(
    basis: &SpectralBasis,
    kernel: *const f64,
    len: usize,
) -> Result<EigenvalueVector, SdStatusError> {
    let taps = input(kernel, len, "kernel")?;
    Ok(basis.diagonalize(&Kernel::new(taps.to_vec())?)?)
}

/// Message for the last failed call on this thread; empty after a success.
/// Valid until the next call on this thread.
#[no_mangle]
pub extern "C" fn sd_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn sd_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Create an empty statistic for signals of shape `h × w` (`h = 1` for 1D).
///
/// # Safety
/// `out` must be a valid pointer to writable storage for one handle.
#[no_mangle]
pub unsafe extern "C" fn sd_stat_new(h: usize, w: usize, out: *mut *mut SdStat) -> SdStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let stat = SufStat::new(basis_for(h, w)?);
        *out = Box::into_raw(Box::new(SdStat(stat)));
        Ok(())
    })
}

/// # Safety
/// `stat` must be null or a handle from [`sd_stat_new`]/[`sd_stat_from_json`]
/// not yet freed.
#[no_mangle]
pub unsafe extern "C" fn sd_stat_free(stat: *mut SdStat) {
    if !stat.is_null() {
        drop(Box::from_raw(stat));
    }
}

/// Signal length `p`, or 0 for a null handle.
///
/// # Safety
/// `stat` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn sd_stat_len(stat: *const SdStat) -> usize {
    stat.as_ref().map_or(0, |s| s.0.basis().len())
}

/// Observations folded in so far, or 0 for a null handle.
///
/// # Safety
/// `stat` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn sd_stat_count(stat: *const SdStat) -> u64 {
    stat.as_ref().map_or(0, |s| s.0.n())
}

/// Fold in one observation `y` (signal space) blurred by convolution taps
/// `kernel`; both have length `len = p`.
///
/// # Safety
/// `stat` must be a live handle; `kernel` and `y` must point to `len`
/// readable doubles.
#[no_mangle]
pub unsafe extern "C" fn sd_stat_update(
    stat: *mut SdStat,
    kernel: *const f64,
    y: *const f64,
    len: usize,
) -> SdStatus {
    guard(|| {
        let stat = handle_mut(stat, "stat")?;
        let basis = stat.0.basis();
        basis.check_len(len)?;
        let d = eigenvalues(&basis, kernel, len)?;
        let x = basis.to_spectral_real(input(y, len, "y")?)?;
        stat.0.update(&d, &x)?;
        Ok(())
    })
}

/// Fold in one observation already in the spectral basis: eigenvalues
/// `d_re + i d_im` and rotated data `x_re + i x_im`, each of length `len`.
///
/// # Safety
/// `stat` must be a live handle; the four arrays must hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn sd_stat_update_spectral(
    stat: *mut SdStat,
    d_re: *const f64,
    d_im: *const f64,
    x_re: *const f64,
    x_im: *const f64,
    len: usize,
) -> SdStatus {
    guard(|| {
        let stat = handle_mut(stat, "stat")?;
        stat.0.basis().check_len(len)?;
        let join = |re: &[f64], im: &[f64]| -> Vec<Complex64> {
            re.iter()
                .zip(im)
                .map(|(&r, &i)| Complex64::new(r, i))
                .collect()
        };
        let d = EigenvalueVector::new(join(input(d_re, len, "d_re")?, input(d_im, len, "d_im")?))?;
        let x = join(input(x_re, len, "x_re")?, input(x_im, len, "x_im")?);
        stat.0.update(&d, &x)?;
        Ok(())
    })
}

/// `dst ← dst ⊕ src`; equivalent to having streamed both inputs into `dst`.
///
/// # Safety
/// Both must be live handles; they may not alias.
#[no_mangle]
pub unsafe extern "C" fn sd_stat_merge(dst: *mut SdStat, src: *const SdStat) -> SdStatus {
    guard(|| {
        if ptr::eq(dst, src) {
            return Err(SdStatusError(
                SdStatus::InvalidParameter,
                "dst and src alias".into(),
            ));
        }
        let src = handle(src, "src")?;
        handle_mut(dst, "dst")?.0.merge(&src.0)?;
        Ok(())
    })
}

/// Write the estimate `θ̂` (length `len = p`) into `theta_out`. `param` is
/// the family's tuning value (see [`SdEstimator`]); NaN selects it by
/// minimizing the risk estimate. Returns [`SdStatus::Degenerate`] when no
/// component has been observed.
///
/// # Safety
/// `stat` must be a live handle and `theta_out` must hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn sd_stat_estimate(
    stat: *const SdStat,
    family: SdEstimator,
    param: f64,
    epsilon: f64,
    theta_out: *mut f64,
    len: usize,
) -> SdStatus {
    guard(|| {
        let stat = handle(stat, "stat")?;
        stat.0.basis().check_len(len)?;
        let out = output(theta_out, len, "theta_out")?;
        if stat.0.identified_count() == 0 {
            return Err(Error::NoIdentifiedComponents.into());
        }
        let tuned = |v: f64| if v.is_nan() { None } else { Some(v) };
        let spec = match family {
            SdEstimator::Main => EstimatorSpec::Main,
            SdEstimator::Soft => EstimatorSpec::Soft,
            SdEstimator::Monotone => EstimatorSpec::Monotone,
            SdEstimator::TikhonovPhillips => EstimatorSpec::TikhonovPhillips {
                gamma: tuned(param),
            },
            SdEstimator::Landweber => {
                let iterations = match tuned(param) {
                    None => None,
                    Some(g) if g.fract() == 0.0 && (1.0..=u32::MAX as f64).contains(&g) => {
                        Some(g as u32)
                    }
                    Some(g) => {
                        return Err(SdStatusError(
                            SdStatus::InvalidParameter,
                            format!("iteration count must be a positive integer, got {g}"),
                        ))
                    }
                };
                EstimatorSpec::Landweber {
                    iterations,
                    relaxation: None,
                }
            }
        };
        let est = seqdecon::estimate(&stat.0, &spec, epsilon)?;
        out.copy_from_slice(&est.theta_hat);
        Ok(())
    })
}

/// Serialize the statistic to a JSON string; free it with
/// [`sd_string_free`].
///
/// # Safety
/// `stat` must be a live handle and `out` valid for one pointer write.
#[no_mangle]
pub unsafe extern "C" fn sd_stat_to_json(stat: *const SdStat, out: *mut *mut c_char) -> SdStatus {
    guard(|| {
        let stat = handle(stat, "stat")?;
        if out.is_null() {
            return Err(null("out"));
        }
        let text = CString::new(stat.0.to_json()?).expect("JSON has no NUL bytes");
        *out = text.into_raw();
        Ok(())
    })
}

/// Restore a statistic from [`sd_stat_to_json`] output.
///
/// # Safety
/// `json` must be a NUL-terminated string; `out` valid for one pointer write.
#[no_mangle]
pub unsafe extern "C" fn sd_stat_from_json(json: *const c_char, out: *mut *mut SdStat) -> SdStatus {
    guard(|| {
        if json.is_null() {
            return Err(null("json"));
        }
        if out.is_null() {
            return Err(null("out"));
        }
        let text = CStr::from_ptr(json)
            .to_str()
            .map_err(|_| SdStatusError(SdStatus::InvalidInput, "json is not UTF-8".into()))?;
        *out = Box::into_raw(Box::new(SdStat(SufStat::from_json(text)?)));
        Ok(())
    })
}

/// # Safety
/// `s` must be null or a string returned by this library, not yet freed.
#[no_mangle]
pub unsafe extern "C" fn sd_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Create empty averaged-model sums for shape `h × w` (`h = 1` for 1D).
///
/// # Safety
/// `out` must be valid for one pointer write.
#[no_mangle]
pub unsafe extern "C" fn sd_averaged_new(
    h: usize,
    w: usize,
    out: *mut *mut SdAveraged,
) -> SdStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        *out = Box::into_raw(Box::new(SdAveraged(AveragedStat::new(basis_for(h, w)?))));
        Ok(())
    })
}

/// # Safety
/// `avg` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn sd_averaged_free(avg: *mut SdAveraged) {
    if !avg.is_null() {
        drop(Box::from_raw(avg));
    }
}

/// Same contract as [`sd_stat_update`].
///
/// # Safety
/// As for [`sd_stat_update`].
#[no_mangle]
pub unsafe extern "C" fn sd_averaged_update(
    avg: *mut SdAveraged,
    kernel: *const f64,
    y: *const f64,
    len: usize,
) -> SdStatus {
    guard(|| {
        let avg = handle_mut(avg, "avg")?;
        let basis = avg.0.basis();
        basis.check_len(len)?;
        let d = eigenvalues(&basis, kernel, len)?;
        let x = basis.to_spectral_real(input(y, len, "y")?)?;
        avg.0.update(&d, &x)?;
        Ok(())
    })
}

/// Ridge estimate on the averaged model with penalty `tau` (NaN: chosen by
/// generalized cross validation). The penalty used is written to `tau_out`
/// when it is non-null.
///
/// # Safety
/// `avg` must be a live handle, `theta_out` must hold `len` doubles and
/// `tau_out` must be null or writable.
#[no_mangle]
pub unsafe extern "C" fn sd_averaged_ridge(
    avg: *const SdAveraged,
    tau: f64,
    theta_out: *mut f64,
    len: usize,
    tau_out: *mut f64,
) -> SdStatus {
    guard(|| {
        let avg = handle(avg, "avg")?;
        avg.0.basis().check_len(len)?;
        let out = output(theta_out, len, "theta_out")?;
        if avg.0.n() == 0 {
            return Err(SdStatusError(
                SdStatus::Degenerate,
                "no observations averaged yet".into(),
            ));
        }
        let tau = if tau.is_nan() {
            avg.0.gcv_select_tau()?
        } else {
            tau
        };
        let (theta, _) = avg.0.ridge_estimate(tau)?;
        out.copy_from_slice(&theta);
        if !tau_out.is_null() {
            *tau_out = tau;
        }
        Ok(())
    })
}
