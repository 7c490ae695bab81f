//! C ABI over `lcscale`.
//!
//! Every function returns an [`LcsStatus`]; on failure the message is kept
//! per thread and can be read with [`lcs_last_error`]. Handles are opaque and
//! must be released with their `_free` function.

use std::cell::RefCell;
use std::ffi::{c_char, CStr};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;
use std::slice;

use lcscale::data::{CurveDataset, CurveKey};
use lcscale::hier::{self, HierConfig, HierGpModel};
use lcscale::kernels::ModelKind;
use lcscale::metrics::abc_lines;
use lcscale::scaling::{fit_loglog, ScalingLaw};
use lcscale::{Error, ErrorClass};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LcsStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    Config = 3,
    Data = 4,
    Numeric = 5,
    Panic = 6,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LcsModelKind {
    Magp = 0,
    Dhgp = 1,
}

/// Opaque dataset handle.
pub struct LcsDataset(CurveDataset);

/// Opaque fitted-model handle.
pub struct LcsModel(HierGpModel);

thread_local! {
    static LAST_ERROR: RefCell<Vec<u8>> = const { RefCell::new(Vec::new()) };
}

fn set_error(msg: String) {
    LAST_ERROR.with(|e| {
        let mut v = msg.into_bytes();
        v.retain(|&b| b != 0);
        *e.borrow_mut() = v;
    });
}

fn fail(status: LcsStatus, msg: impl Into<String>) -> LcsStatus {
    set_error(msg.into());
    status
}

fn from_error(e: Error) -> LcsStatus {
    let status = match e.class() {
        ErrorClass::Config => LcsStatus::Config,
        ErrorClass::Data => LcsStatus::Data,
        ErrorClass::Numeric => LcsStatus::Numeric,
    };
    fail(status, e.to_string())
}

fn guard(f: impl FnOnce() -> LcsStatus) -> LcsStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(s) => s,
        Err(_) => fail(LcsStatus::Panic, "internal panic"),
    }
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, LcsStatus> {
    if p.is_null() {
        return Err(fail(LcsStatus::NullPointer, format!("{what} is null")));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| fail(LcsStatus::InvalidUtf8, format!("{what} is not UTF-8")))
}

/// Copies the last error message of this thread into `buf` (NUL-terminated,
/// truncated to `len`). Returns the full message length in bytes.
///
/// # Safety
/// `buf` must be null or point to `len` writable bytes.
#[no_mangle]
pub unsafe extern "C" fn lcs_last_error(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| {
        let msg = e.borrow();
        if !buf.is_null() && len > 0 {
            let n = msg.len().min(len - 1);
            ptr::copy_nonoverlapping(msg.as_ptr(), buf.cast::<u8>(), n);
            *buf.add(n) = 0;
        }
        msg.len()
    })
}

/// Loads a dataset from a JSON file.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn lcs_dataset_load(path: *const c_char, out: *mut *mut LcsDataset) -> LcsStatus {
    guard(|| {
        if out.is_null() {
            return fail(LcsStatus::NullPointer, "out is null");
        }
        let path = match str_arg(path, "path") {
            Ok(p) => p,
            Err(s) => return s,
        };
        match lcscale::data::load_dataset(path) {
            Ok(ds) => {
                *out = Box::into_raw(Box::new(LcsDataset(ds)));
                LcsStatus::Ok
            }
            Err(e) => from_error(e),
        }
    })
}

/// Parses a dataset from a JSON string.
///
/// # Safety
/// `json` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn lcs_dataset_from_json(json: *const c_char, out: *mut *mut LcsDataset) -> LcsStatus {
    guard(|| {
        if out.is_null() {
            return fail(LcsStatus::NullPointer, "out is null");
        }
        let text = match str_arg(json, "json") {
            Ok(p) => p,
            Err(s) => return s,
        };
        match CurveDataset::from_json_str(text) {
            Ok(ds) => {
                *out = Box::into_raw(Box::new(LcsDataset(ds)));
                LcsStatus::Ok
            }
            Err(e) => from_error(e),
        }
    })
}

/// Number of curves in the dataset, 0 for a null handle.
///
/// # Safety
/// `ds` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn lcs_dataset_len(ds: *const LcsDataset) -> usize {
    ds.as_ref().map_or(0, |d| d.0.curves.len())
}

/// # Safety
/// `ds` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn lcs_dataset_free(ds: *mut LcsDataset) {
    if !ds.is_null() {
        drop(Box::from_raw(ds));
    }
}

/// Fits a hierarchical GP to every curve of `ds`. `max_iters` of 0 keeps the
/// library default.
///
/// # Safety
/// `ds` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn lcs_model_fit(
    ds: *const LcsDataset,
    kind: LcsModelKind,
    seed: u64,
    max_iters: usize,
    out: *mut *mut LcsModel,
) -> LcsStatus {
    guard(|| {
        let Some(ds) = ds.as_ref() else {
            return fail(LcsStatus::NullPointer, "dataset is null");
        };
        if out.is_null() {
            return fail(LcsStatus::NullPointer, "out is null");
        }
        let kind = match kind {
            LcsModelKind::Magp => ModelKind::Magp,
            LcsModelKind::Dhgp => ModelKind::Dhgp,
        };
        let mut config = HierConfig::default();
        if max_iters > 0 {
            config.max_iters = max_iters;
        }
        match hier::fit(kind, &ds.0.curves, &config, seed) {
            Ok(m) => {
                *out = Box::into_raw(Box::new(LcsModel(m)));
                LcsStatus::Ok
            }
            Err(e) => from_error(e),
        }
    })
}

/// Predictive mean and variance for curve `(task, within)` at `n` inputs.
///
/// # Safety
/// `x`, `mean` and `variance` must each hold `n` doubles.
#[no_mangle]
pub unsafe extern "C" fn lcs_model_predict(
    model: *const LcsModel,
    task: *const c_char,
    within: *const c_char,
    x: *const f64,
    n: usize,
    mean: *mut f64,
    variance: *mut f64,
) -> LcsStatus {
    guard(|| {
        let Some(model) = model.as_ref() else {
            return fail(LcsStatus::NullPointer, "model is null");
        };
        if n > 0 && (x.is_null() || mean.is_null() || variance.is_null()) {
            return fail(LcsStatus::NullPointer, "buffer is null");
        }
        let (task, within) = match (str_arg(task, "task"), str_arg(within, "within")) {
            (Ok(t), Ok(w)) => (t, w),
            (Err(s), _) | (_, Err(s)) => return s,
        };
        if n == 0 {
            return LcsStatus::Ok;
        }
        let xs = slice::from_raw_parts(x, n);
        match model.0.predict_curve(&CurveKey::new(task, within), xs, false) {
            Ok(p) => {
                slice::from_raw_parts_mut(mean, n).copy_from_slice(&p.mean);
                slice::from_raw_parts_mut(variance, n).copy_from_slice(&p.variance);
                LcsStatus::Ok
            }
            Err(e) => from_error(e),
        }
    })
}

/// # Safety
/// `model` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn lcs_model_free(model: *mut LcsModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Area between two log-log lines over `[lo, hi]` in log10 compute.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn lcs_abc_lines(
    beta0_a: f64,
    beta1_a: f64,
    beta0_b: f64,
    beta1_b: f64,
    lo: f64,
    hi: f64,
    out: *mut f64,
) -> LcsStatus {
    guard(|| {
        if out.is_null() {
            return fail(LcsStatus::NullPointer, "out is null");
        }
        match abc_lines(
            &ScalingLaw::new(beta0_a, beta1_a),
            &ScalingLaw::new(beta0_b, beta1_b),
            lo,
            hi,
        ) {
            Ok(v) => {
                *out = v;
                LcsStatus::Ok
            }
            Err(e) => from_error(e),
        }
    })
}

/// Least-squares line through `(log10 compute, log10 loss)`.
///
/// # Safety
/// `compute` and `loss` must hold `n` doubles; `beta0`, `beta1` writable.
#[no_mangle]
pub unsafe extern "C" fn lcs_fit_loglog(
    compute: *const f64,
    loss: *const f64,
    n: usize,
    beta0: *mut f64,
    beta1: *mut f64,
) -> LcsStatus {
    guard(|| {
        if compute.is_null() || loss.is_null() || beta0.is_null() || beta1.is_null() {
            return fail(LcsStatus::NullPointer, "argument is null");
        }
        let pts: Vec<(f64, f64)> = slice::from_raw_parts(compute, n)
            .iter()
            .copied()
            .zip(slice::from_raw_parts(loss, n).iter().copied())
            .collect();
        match fit_loglog(&pts) {
            Ok(law) => {
                *beta0 = law.beta0;
                *beta1 = law.beta1;
                LcsStatus::Ok
            }
            Err(e) => from_error(e),
        }
    })
}
