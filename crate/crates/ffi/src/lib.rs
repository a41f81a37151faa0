//! C interface to `tvreg-core`.
//!
//! Objects cross the boundary as opaque handles created by `*_new`
//! functions and released by the matching `*_free`. Every fallible call
//! returns a [`TvregStatus`]; the message for the most recent failure on the
//! calling thread is available from [`tvreg_last_error`]. Structured results
//! are returned as JSON strings owned by the caller and released with
//! [`tvreg_string_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use nalgebra::{DMatrix, DVector};
use tvreg_core::cli::{ingest_csv, CsvSchema};
use tvreg_core::selection::{default_chi, select_subset, Search};
use tvreg_core::testing::{asymptotic_decision, evaluate_delta, PipelineConfig};
use tvreg_core::{local_linear_fit, Error, EvaluationGrid, Kernel, LocalLinearFit, RegressionData, Target, WeightScheme};

/// Result codes shared by every entry point.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TvregStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidInput = 2,
    Domain = 3,
    Numerical = 4,
    Unstable = 5,
    Parse = 6,
    Io = 7,
    /// A Rust panic was caught at the boundary.
    Internal = 8,
}

impl From<&Error> for TvregStatus {
    fn from(e: &Error) -> Self {
        match e {
            Error::InvalidInput(_) => TvregStatus::InvalidInput,
            Error::Domain(_) => TvregStatus::Domain,
            Error::Numerical(_) => TvregStatus::Numerical,
            Error::Unstable { .. } => TvregStatus::Unstable,
            Error::Parse { .. } | Error::Csv(_) | Error::Json(_) => TvregStatus::Parse,
            Error::Io(_) => TvregStatus::Io,
            Error::Replicate { source, .. } => TvregStatus::from(source.as_ref()),
        }
    }
}

/// Kernel selector for [`tvreg_fit_new`] and the analysis calls.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TvregKernel {
    Epanechnikov = 0,
    Bartlett = 1,
}

impl From<TvregKernel> for Kernel {
    fn from(k: TvregKernel) -> Self {
        match k {
            TvregKernel::Epanechnikov => Kernel::Epanechnikov,
            TvregKernel::Bartlett => Kernel::Bartlett,
        }
    }
}

/// Regression data: a response and an `n × p` design.
pub struct TvregData(RegressionData);

/// A local linear fit evaluated on a grid.
pub struct TvregFit(LocalLinearFit);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let msg = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(msg));
}

enum Failure {
    Null(&'static str),
    Core(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Core(e)
    }
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> TvregStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => TvregStatus::Ok,
        Ok(Err(Failure::Null(what))) => {
            set_error(format!("null pointer passed for {what}"));
            TvregStatus::NullPointer
        }
        Ok(Err(Failure::Core(e))) => {
            set_error(e.to_string());
            TvregStatus::from(&e)
        }
        Err(panic) => {
            let msg = panic
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| panic.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_error(format!("internal error: {msg}"));
            TvregStatus::Internal
        }
    }
}

unsafe fn non_null<'a, T>(p: *const T, what: &'static str) -> Result<&'a T, Failure> {
    p.as_ref().ok_or(Failure::Null(what))
}

unsafe fn slice<'a>(p: *const f64, len: usize, what: &'static str) -> Result<&'a [f64], Failure> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(Failure::Null(what));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn string(p: *const c_char, what: &'static str) -> Result<String, Failure> {
    if p.is_null() {
        return Err(Failure::Null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map(str::to_owned)
        .map_err(|_| Failure::Core(Error::InvalidInput(format!("{what} is not valid UTF-8"))))
}

unsafe fn write_out<T>(out: *mut T, value: T, what: &'static str) -> Result<(), Failure> {
    if out.is_null() {
        return Err(Failure::Null(what));
    }
    out.write(value);
    Ok(())
}

fn json_string(value: &serde_json::Value) -> Result<*mut c_char, Failure> {
    let text = serde_json::to_string(value).map_err(Error::from)?;
    Ok(CString::new(text).expect("JSON has no interior NUL").into_raw())
}

/// Copies the message of the last failure on this thread into `buf`,
/// truncated and NUL-terminated. Returns the full message length in bytes
/// excluding the terminator, or 0 if there is no message.
///
/// # Safety
/// `buf` must be null or point to `len` writable bytes.
#[no_mangle]
pub unsafe extern "C" fn tvreg_last_error(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| match e.borrow().as_ref() {
        None => 0,
        Some(msg) => {
            let bytes = msg.as_bytes();
            if !buf.is_null() && len > 0 {
                let n = bytes.len().min(len - 1);
                ptr::copy_nonoverlapping(bytes.as_ptr().cast::<c_char>(), buf, n);
                *buf.add(n) = 0;
            }
            bytes.len()
        }
    })
}

/// Builds data from a response of length `n` and a row-major `n × p` design.
/// Columns are named `x1 … xp`.
///
/// # Safety
/// `y` must hold `n` values, `x` must hold `n * p` values and `out` must be
/// writable.
#[no_mangle]
pub unsafe extern "C" fn tvreg_data_new(
    y: *const f64,
    x: *const f64,
    n: usize,
    p: usize,
    out: *mut *mut TvregData,
) -> TvregStatus {
    guard(|| {
        let len = n.checked_mul(p).ok_or_else(|| Error::InvalidInput("n * p overflows".into()))?;
        let y = slice(y, n, "y")?;
        let x = slice(x, len, "x")?;
        let names = (1..=p).map(|j| format!("x{j}")).collect();
        let data = RegressionData::new(DVector::from_column_slice(y), DMatrix::from_row_slice(n, p, x), names)?;
        write_out(out, Box::into_raw(Box::new(TvregData(data))), "out")
    })
}

/// Reads a header-first CSV file. The response column is `response`; every
/// other column becomes a predictor.
///
/// # Safety
/// `path` and `response` must be NUL-terminated strings and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn tvreg_data_from_csv(
    path: *const c_char,
    response: *const c_char,
    standardize: bool,
    intercept: bool,
    out: *mut *mut TvregData,
) -> TvregStatus {
    guard(|| {
        let path = string(path, "path")?;
        let mut schema = CsvSchema::new(string(response, "response")?);
        schema.standardize = standardize;
        schema.intercept = intercept;
        let data = ingest_csv(path, &schema)?;
        write_out(out, Box::into_raw(Box::new(TvregData(data))), "out")
    })
}

/// # Safety
/// `data` must be null or a handle from `tvreg_data_*` not yet freed.
#[no_mangle]
pub unsafe extern "C" fn tvreg_data_free(data: *mut TvregData) {
    if !data.is_null() {
        drop(Box::from_raw(data));
    }
}

/// # Safety
/// `data` must be a live handle; `n` and `p` must be writable.
#[no_mangle]
pub unsafe extern "C" fn tvreg_data_shape(data: *const TvregData, n: *mut usize, p: *mut usize) -> TvregStatus {
    guard(|| {
        let d = &non_null(data, "data")?.0;
        write_out(n, d.n(), "n")?;
        write_out(p, d.p(), "p")
    })
}

/// Local linear fit on the uniform grid `k / grid_size`, `k = 1 … grid_size`,
/// or on the observation times when `grid_size` is 0.
///
/// # Safety
/// `data` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn tvreg_fit_new(
    data: *const TvregData,
    kernel: TvregKernel,
    bandwidth: f64,
    grid_size: usize,
    out: *mut *mut TvregFit,
) -> TvregStatus {
    guard(|| {
        let d = &non_null(data, "data")?.0;
        let grid = if grid_size == 0 {
            EvaluationGrid::observation(d.n())?
        } else {
            EvaluationGrid::uniform(grid_size)?
        };
        let fit = local_linear_fit(d, &kernel.into(), bandwidth, &grid)?;
        write_out(out, Box::into_raw(Box::new(TvregFit(fit))), "out")
    })
}

/// # Safety
/// `fit` must be null or a handle from `tvreg_fit_new` not yet freed.
#[no_mangle]
pub unsafe extern "C" fn tvreg_fit_free(fit: *mut TvregFit) {
    if !fit.is_null() {
        drop(Box::from_raw(fit));
    }
}

/// # Safety
/// `fit` must be a live handle; `grid_len` and `p` must be writable.
#[no_mangle]
pub unsafe extern "C" fn tvreg_fit_shape(fit: *const TvregFit, grid_len: *mut usize, p: *mut usize) -> TvregStatus {
    guard(|| {
        let f = &non_null(fit, "fit")?.0;
        write_out(grid_len, f.grid().len(), "grid_len")?;
        write_out(p, f.p(), "p")
    })
}

/// Copies the grid points into `out`, which must hold `grid_len` values.
///
/// # Safety
/// `fit` must be a live handle and `out` must point to `len` writable values.
#[no_mangle]
pub unsafe extern "C" fn tvreg_fit_grid(fit: *const TvregFit, out: *mut f64, len: usize) -> TvregStatus {
    guard(|| {
        let f = &non_null(fit, "fit")?.0;
        copy_into(f.grid().points(), out, len)
    })
}

/// Copies the coefficient curves, row-major `grid_len × p`, into `out`.
///
/// # Safety
/// `fit` must be a live handle and `out` must point to `len` writable values.
#[no_mangle]
pub unsafe extern "C" fn tvreg_fit_beta(fit: *const TvregFit, out: *mut f64, len: usize) -> TvregStatus {
    guard(|| {
        let f = &non_null(fit, "fit")?.0;
        let b = f.beta();
        copy_into(b.transpose().as_slice(), out, len)
    })
}

/// Residual sum of squares of the fit at the observation times.
///
/// # Safety
/// `fit` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn tvreg_fit_rss(fit: *const TvregFit, out: *mut f64) -> TvregStatus {
    guard(|| {
        let f = &non_null(fit, "fit")?.0;
        write_out(out, f.rss(), "out")
    })
}

unsafe fn copy_into(values: &[f64], out: *mut f64, len: usize) -> Result<(), Failure> {
    if values.len() != len {
        return Err(Failure::Core(Error::InvalidInput(format!(
            "output buffer holds {len} values, {} required",
            values.len()
        ))));
    }
    if len == 0 {
        return Ok(());
    }
    if out.is_null() {
        return Err(Failure::Null("out"));
    }
    ptr::copy_nonoverlapping(values.as_ptr(), out, len);
    Ok(())
}

/// Tests `H₀: A β(·) ≡ a` with the asymptotic normal calibration at level
/// `alpha`, for all weight schemes. `a_matrix` is row-major `s × p`.
/// `target` holds `s` values, or is null to test constancy against
/// `â = ∫ A β̃`. `grid_size` 0 evaluates on the observation times.
///
/// On success `*json_out` holds an object with the target used and, per
/// scheme, the statistic components and the decision.
///
/// # Safety
/// `data` must be a live handle, `a_matrix` must hold `s * p` values,
/// `target` must be null or hold `s` values, and `json_out` writable.
#[no_mangle]
pub unsafe extern "C" fn tvreg_test(
    data: *const TvregData,
    a_matrix: *const f64,
    s: usize,
    target: *const f64,
    kernel: TvregKernel,
    bandwidth: f64,
    grid_size: usize,
    alpha: f64,
    json_out: *mut *mut c_char,
) -> TvregStatus {
    guard(|| {
        let d = &non_null(data, "data")?.0;
        let p = d.p();
        let a = DMatrix::from_row_slice(s, p, slice(a_matrix, s * p, "a_matrix")?);
        let target = if target.is_null() {
            Target::Estimate
        } else {
            Target::Fixed(DVector::from_column_slice(slice(target, s, "target")?))
        };
        let mut config = PipelineConfig::new(kernel.into(), bandwidth);
        config.grid_size = (grid_size > 0).then_some(grid_size);
        let eval = evaluate_delta(d, &a, &target, &WeightScheme::ALL, &config)?;
        let schemes = eval
            .components
            .iter()
            .map(|c| {
                let decision = asymptotic_decision(c.delta, alpha)?;
                Ok(serde_json::json!({ "components": c, "decision": decision }))
            })
            .collect::<Result<Vec<_>, Error>>()?;
        let json = serde_json::json!({
            "target": eval.target.iter().collect::<Vec<_>>(),
            "alpha": alpha,
            "schemes": schemes,
        });
        write_out(json_out, json_string(&json)?, "json_out")
    })
}

/// Variable selection by exhaustive VIC search at bandwidth `bandwidth`.
/// A negative `chi` uses the default penalty `n^{-2/5}`.
///
/// # Safety
/// `data` must be a live handle and `json_out` writable.
#[no_mangle]
pub unsafe extern "C" fn tvreg_select(
    data: *const TvregData,
    kernel: TvregKernel,
    bandwidth: f64,
    chi: f64,
    json_out: *mut *mut c_char,
) -> TvregStatus {
    guard(|| {
        let d = &non_null(data, "data")?.0;
        let chi = if chi < 0.0 { default_chi(d.n()) } else { chi };
        let report = select_subset(d, &kernel.into(), bandwidth, chi, Search::Exhaustive)?;
        let json = serde_json::to_value(&report).map_err(Error::from)?;
        write_out(json_out, json_string(&json)?, "json_out")
    })
}

/// Releases a string returned through a `json_out` parameter.
///
/// # Safety
/// `s` must be null or a string from this library not yet freed.
#[no_mangle]
pub unsafe extern "C" fn tvreg_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}
