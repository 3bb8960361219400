//! C ABI over the rankscope detectors.
//!
//! Every fallible function returns an `RsStatus`; on failure the message is
//! available from `rs_last_error_message` until the next call on the same
//! thread. Handles are opaque and must be released with their `_free`
//! function.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use rankscope::detectors::{
    self, AveragedRotationsConfig, RankDecision, Threshold, VarianceRatioConfig,
};
use rankscope::eval::{self, ConfusionMatrix};
use rankscope::matrix::{ObservationSet, Sample};
use rankscope::rotation::default_angles;
use rankscope::stats::{self, TestSide};
use rankscope::Error;

/// Status codes.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RsStatus {
    Ok = 0,
    NullPointer = 1,
    Dimension = 2,
    DuplicateIndex = 3,
    IndexOutOfRange = 4,
    NumericalFailure = 5,
    InvalidParameter = 6,
    InfeasibleChain = 7,
    Io = 8,
    Parse = 9,
    Other = 10,
    Panic = 11,
}

/// Observed entries of a partially sampled matrix.
pub struct RsObservations(ObservationSet);

/// Result of a rank detector.
pub struct RsDecision(RankDecision);

/// Parameters of the variance-ratio detector. `b` is used when finite,
/// otherwise the threshold follows from `alpha`.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct RsVarianceRatioParams {
    pub r_max: usize,
    pub c: usize,
    pub steps: usize,
    pub b: f64,
    pub alpha: f64,
    pub two_sided: bool,
    pub rotate: bool,
    pub angles: usize,
    pub seed: u64,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).expect("no interior nul");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> RsStatus {
    match e {
        Error::Dimension(_) => RsStatus::Dimension,
        Error::DuplicateIndex { .. } => RsStatus::DuplicateIndex,
        Error::IndexOutOfRange { .. } => RsStatus::IndexOutOfRange,
        Error::NumericalFailure(_) | Error::DegenerateStatistic(_) => RsStatus::NumericalFailure,
        Error::Parameter(_) | Error::Input(_) => RsStatus::InvalidParameter,
        Error::InfeasibleChain { .. } | Error::ChainStep { .. } => RsStatus::InfeasibleChain,
        Error::Io(_) => RsStatus::Io,
        Error::Parse { .. } | Error::Config { .. } | Error::Json(_) => RsStatus::Parse,
        _ => RsStatus::Other,
    }
}

/// Runs `f`, recording errors and converting panics.
fn guard(f: impl FnOnce() -> Result<(), (RsStatus, String)>) -> RsStatus {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => RsStatus::Ok,
        Ok(Err((status, msg))) => {
            set_error(&msg);
            status
        }
        Err(_) => {
            set_error("internal panic");
            RsStatus::Panic
        }
    }
}

fn lib_err(e: Error) -> (RsStatus, String) {
    (status_of(&e), e.to_string())
}

fn null_err(name: &str) -> (RsStatus, String) {
    (RsStatus::NullPointer, format!("{name} is null"))
}

unsafe fn slice<'a, T>(p: *const T, n: usize, name: &str) -> Result<&'a [T], (RsStatus, String)> {
    if n == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null_err(name));
    }
    Ok(std::slice::from_raw_parts(p, n))
}

unsafe fn store<T>(out: *mut *mut T, value: T) {
    *out = Box::into_raw(Box::new(value));
}

/// Message of the last failed call on this thread, or null. Owned by the
/// library; valid until the next call.
#[no_mangle]
pub extern "C" fn rs_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Builds an observation set from `n` triplets (0-based indices).
///
/// # Safety
/// The three arrays must hold `n` elements; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn rs_observations_new(
    rows: usize,
    cols: usize,
    row_idx: *const usize,
    col_idx: *const usize,
    values: *const f64,
    n: usize,
    out: *mut *mut RsObservations,
) -> RsStatus {
    guard(|| {
        if out.is_null() {
            return Err(null_err("out"));
        }
        let (ri, ci, v) = (slice(row_idx, n, "row_idx")?, slice(col_idx, n, "col_idx")?, slice(values, n, "values")?);
        let samples = (0..n).map(|k| Sample { row: ri[k], col: ci[k], value: v[k] }).collect();
        let obs = ObservationSet::new(rows, cols, samples).map_err(lib_err)?;
        store(out, RsObservations(obs));
        Ok(())
    })
}

/// Reads an observations CSV (`# rows=R cols=C`, `i,j,value`).
///
/// # Safety
/// `path` must be a nul-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn rs_observations_read(path: *const c_char, out: *mut *mut RsObservations) -> RsStatus {
    guard(|| {
        if path.is_null() {
            return Err(null_err("path"));
        }
        if out.is_null() {
            return Err(null_err("out"));
        }
        let p = CStr::from_ptr(path)
            .to_str()
            .map_err(|_| (RsStatus::InvalidParameter, "path is not UTF-8".to_string()))?;
        let obs = rankscope::io::read_observations(Path::new(p)).map_err(lib_err)?;
        store(out, RsObservations(obs));
        Ok(())
    })
}

/// Number of observed entries; 0 for a null handle.
///
/// # Safety
/// `obs` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn rs_observations_len(obs: *const RsObservations) -> usize {
    obs.as_ref().map_or(0, |o| o.0.len())
}

/// # Safety
/// `obs` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn rs_observations_free(obs: *mut RsObservations) {
    if !obs.is_null() {
        drop(Box::from_raw(obs));
    }
}

unsafe fn detect_with(
    obs: *const RsObservations,
    out: *mut *mut RsDecision,
    f: impl FnOnce(&ObservationSet) -> rankscope::Result<RankDecision>,
) -> RsStatus {
    guard(|| {
        let o = obs.as_ref().ok_or_else(|| null_err("obs"))?;
        if out.is_null() {
            return Err(null_err("out"));
        }
        let d = f(&o.0).map_err(lib_err)?;
        store(out, RsDecision(d));
        Ok(())
    })
}

/// Zero-filled SVD baseline with cumulative-fraction threshold `b`.
///
/// # Safety
/// `obs` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn rs_detect_baseline(obs: *const RsObservations, b: f64, out: *mut *mut RsDecision) -> RsStatus {
    detect_with(obs, out, |o| detectors::detect_baseline(o, b))
}

/// Spectra averaged over `angles` rotations, top `n` values, threshold `b`.
///
/// # Safety
/// `obs` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn rs_detect_averaged_rotations(
    obs: *const RsObservations,
    n: usize,
    angles: usize,
    b: f64,
    out: *mut *mut RsDecision,
) -> RsStatus {
    detect_with(obs, out, |o| {
        let cfg = AveragedRotationsConfig {
            n,
            angles: default_angles(angles),
            b,
            ..Default::default()
        };
        detectors::detect_averaged_rotations(o, &cfg)
    })
}

/// Defaults: r_max 4, c 2, L 750, alpha 0.05, 20 angles, no rotation.
#[no_mangle]
pub extern "C" fn rs_variance_ratio_params_default() -> RsVarianceRatioParams {
    let d = VarianceRatioConfig::default();
    RsVarianceRatioParams {
        r_max: d.r_max,
        c: d.c,
        steps: d.steps,
        b: f64::NAN,
        alpha: 0.05,
        two_sided: false,
        rotate: false,
        angles: d.angles.len(),
        seed: 0,
    }
}

/// Variance-ratio rank test.
///
/// # Safety
/// `obs` and `params` must be valid; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn rs_detect_variance_ratio(
    obs: *const RsObservations,
    params: *const RsVarianceRatioParams,
    out: *mut *mut RsDecision,
) -> RsStatus {
    let Some(p) = params.as_ref().copied() else {
        return guard(|| Err(null_err("params")));
    };
    detect_with(obs, out, |o| {
        let cfg = VarianceRatioConfig {
            r_max: p.r_max,
            c: p.c,
            steps: p.steps,
            threshold: if p.b.is_finite() { Threshold::Fixed(p.b) } else { Threshold::Alpha(p.alpha) },
            side: if p.two_sided { TestSide::TwoSided } else { TestSide::Upper },
            use_rotation: p.rotate,
            angles: default_angles(p.angles),
            seed: p.seed,
            ..Default::default()
        };
        detectors::detect_variance_ratio(o, &cfg)
    })
}

/// Estimated rank; 0 for a null handle.
///
/// # Safety
/// `d` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn rs_decision_r_hat(d: *const RsDecision) -> usize {
    d.as_ref().map_or(0, |d| d.0.r_hat)
}

/// # Safety
/// `d` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn rs_decision_inconclusive(d: *const RsDecision) -> bool {
    d.as_ref().map_or(true, |d| d.0.inconclusive)
}

/// # Safety
/// `d` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn rs_decision_threshold(d: *const RsDecision) -> f64 {
    d.as_ref().map_or(f64::NAN, |d| d.0.threshold_used)
}

/// Decision as JSON; free with `rs_string_free`. Null on failure.
///
/// # Safety
/// `d` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn rs_decision_json(d: *const RsDecision) -> *mut c_char {
    let mut s = ptr::null_mut();
    guard(|| {
        let d = d.as_ref().ok_or_else(|| null_err("decision"))?;
        let json = d.0.to_json().map_err(lib_err)?;
        s = CString::new(json).expect("json has no nul").into_raw();
        Ok(())
    });
    s
}

/// # Safety
/// `s` must be null or returned by `rs_decision_json`.
#[no_mangle]
pub unsafe extern "C" fn rs_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// # Safety
/// `d` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn rs_decision_free(d: *mut RsDecision) {
    if !d.is_null() {
        drop(Box::from_raw(d));
    }
}

/// Upper critical value `1 + z_{1-alpha} sqrt((c+2)/(2cL))`.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn rs_threshold(c: usize, steps: usize, alpha: f64, out: *mut f64) -> RsStatus {
    guard(|| {
        if out.is_null() {
            return Err(null_err("out"));
        }
        *out = stats::threshold(c, steps, alpha).map_err(lib_err)?;
        Ok(())
    })
}

/// Macro-F1 over `f1_classes` from a confusion matrix with one row per true
/// count (`counts` is `n_true x n_classes`, row-major). `trials[i]` is the
/// row total including inconclusive trials.
///
/// # Safety
/// Arrays must hold the stated number of elements; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn rs_macro_f1(
    true_counts: *const usize,
    n_true: usize,
    classes: *const usize,
    n_classes: usize,
    counts: *const u64,
    trials: *const u64,
    f1_classes: *const usize,
    n_f1: usize,
    out: *mut f64,
) -> RsStatus {
    guard(|| {
        if out.is_null() {
            return Err(null_err("out"));
        }
        let tc = slice(true_counts, n_true, "true_counts")?;
        let cl = slice(classes, n_classes, "classes")?;
        let flat = slice(counts, n_true * n_classes, "counts")?;
        let tr = slice(trials, n_true, "trials")?;
        let f1c = slice(f1_classes, n_f1, "f1_classes")?;
        let rows: Vec<Vec<u64>> = flat.chunks(n_classes.max(1)).map(<[u64]>::to_vec).collect();
        let cm = ConfusionMatrix::from_counts(tc, cl, &rows, tr).map_err(lib_err)?;
        *out = eval::macro_f1(&cm, f1c);
        Ok(())
    })
}
