//! C ABI for `ge-core`.
//!
//! Every function returns a [`GeStatus`]. On failure the message is kept per
//! thread and read back with [`ge_last_error`]. Handles are opaque and are
//! released with their `_free` function; passing null to a `_free` is a no-op.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::slice;

use ge_core::cli::model_file::{load_model, parse_model};
use ge_core::model::validate_model;
use ge_core::objective;
use ge_core::processes::{build_deflator, simulate, SimConfig};
use ge_core::solver::{solve, SolveError, SolveOptions, SolveReport};
use ge_core::{MarketModel, Vector};
use thiserror::Error;

/// Result code of every call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GeStatus {
    Ok = 0,
    /// A required pointer was null.
    NullArgument = 1,
    /// An argument was out of range or had the wrong length.
    InvalidArgument = 2,
    /// The model text could not be read or parsed.
    ParseError = 3,
    /// The model failed validation.
    InvalidModel = 4,
    /// The objective has no minimizer on some segment.
    NotAttained = 5,
    /// The solver or simulation stopped without a certified result.
    Failed = 6,
    /// A Rust panic was caught at the boundary.
    Panic = 7,
}

#[derive(Debug, Error)]
enum FfiError {
    #[error("null pointer passed for `{0}`")]
    Null(&'static str),
    #[error("{0}")]
    Invalid(String),
    #[error("{0}")]
    Parse(String),
    #[error("{0}")]
    Model(String),
    #[error("{0}")]
    NotAttained(String),
    #[error("{0}")]
    Failed(String),
}

impl FfiError {
    fn status(&self) -> GeStatus {
        match self {
            FfiError::Null(_) => GeStatus::NullArgument,
            FfiError::Invalid(_) => GeStatus::InvalidArgument,
            FfiError::Parse(_) => GeStatus::ParseError,
            FfiError::Model(_) => GeStatus::InvalidModel,
            FfiError::NotAttained(_) => GeStatus::NotAttained,
            FfiError::Failed(_) => GeStatus::Failed,
        }
    }
}

impl From<SolveError> for FfiError {
    fn from(e: SolveError) -> Self {
        match e {
            SolveError::NotAttained { .. } => FfiError::NotAttained(e.to_string()),
            other => FfiError::Failed(other.to_string()),
        }
    }
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_last_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn guard(f: impl FnOnce() -> Result<(), FfiError>) -> GeStatus {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => GeStatus::Ok,
        Ok(Err(e)) => {
            set_last_error(e.to_string());
            e.status()
        }
        Err(p) => {
            let msg = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_last_error(format!("panic: {msg}"));
            GeStatus::Panic
        }
    }
}

unsafe fn as_ref<'a, T>(p: *const T, name: &'static str) -> Result<&'a T, FfiError> {
    p.as_ref().ok_or(FfiError::Null(name))
}

unsafe fn as_mut<'a, T>(p: *mut T, name: &'static str) -> Result<&'a mut T, FfiError> {
    p.as_mut().ok_or(FfiError::Null(name))
}

unsafe fn as_str<'a>(p: *const c_char, name: &'static str) -> Result<&'a str, FfiError> {
    if p.is_null() {
        return Err(FfiError::Null(name));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| FfiError::Invalid(format!("`{name}` is not valid UTF-8")))
}

unsafe fn as_slice<'a>(
    p: *const f64,
    len: usize,
    name: &'static str,
) -> Result<&'a [f64], FfiError> {
    if p.is_null() {
        return Err(FfiError::Null(name));
    }
    Ok(slice::from_raw_parts(p, len))
}

fn check_len(len: usize, expected: usize, name: &str) -> Result<(), FfiError> {
    if len != expected {
        return Err(FfiError::Invalid(format!(
            "`{name}` has length {len}, expected {expected}"
        )));
    }
    Ok(())
}

/// A validated market model.
pub struct GeModel {
    inner: MarketModel,
}

/// Optimal fractions for every segment of a model.
pub struct GeSolution {
    inner: SolveReport,
}

/// Solver settings; obtain defaults from [`ge_solve_options_default`].
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct GeSolveOptions {
    pub tol: f64,
    pub max_iter: usize,
    pub n_probes: usize,
    pub n_dirs: usize,
    pub seed: u64,
    pub force_continuation: bool,
}

impl From<GeSolveOptions> for SolveOptions {
    fn from(o: GeSolveOptions) -> Self {
        SolveOptions {
            tol: o.tol,
            max_iter: o.max_iter,
            n_probes: o.n_probes,
            n_dirs: o.n_dirs,
            seed: o.seed,
            force_continuation: o.force_continuation,
        }
    }
}

/// Terminal statistics of a simulation under the optimal fractions.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct GeSimSummary {
    pub n_paths: usize,
    pub mean_log_wealth: f64,
    pub log_wealth_std_error: f64,
    pub mean_wealth: f64,
    pub wealth_std_error: f64,
    /// Mean of wealth times deflator at the horizon.
    pub mean_product: f64,
    pub product_std_error: f64,
    pub min_wealth: f64,
    pub min_deflator: f64,
}

fn finish_model(model: MarketModel) -> Result<Box<GeModel>, FfiError> {
    let report = validate_model(&model);
    if let Some(c) = report.failures().next() {
        return Err(FfiError::Model(format!("{}: {}", c.name, c.message)));
    }
    Ok(Box::new(GeModel { inner: model }))
}

/// Message of the last failed call on this thread, or null. The pointer stays
/// valid until the next call into this library on the same thread.
#[no_mangle]
pub extern "C" fn ge_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(std::ptr::null(), |c| c.as_ptr()))
}

/// Loads and validates a TOML model file.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ge_model_load(path: *const c_char, out: *mut *mut GeModel) -> GeStatus {
    guard(|| {
        let out = as_mut(out, "out")?;
        let path = as_str(path, "path")?;
        let model = load_model(Path::new(path)).map_err(|e| FfiError::Parse(e.to_string()))?;
        *out = Box::into_raw(finish_model(model)?);
        Ok(())
    })
}

/// Parses and validates a TOML model held in memory.
///
/// # Safety
/// `text` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ge_model_parse(text: *const c_char, out: *mut *mut GeModel) -> GeStatus {
    guard(|| {
        let out = as_mut(out, "out")?;
        let text = as_str(text, "text")?;
        let model = parse_model(text, "<memory>").map_err(|e| FfiError::Parse(e.to_string()))?;
        *out = Box::into_raw(finish_model(model)?);
        Ok(())
    })
}

/// # Safety
/// `model` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn ge_model_free(model: *mut GeModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Writes the number of assets and of time segments.
///
/// # Safety
/// Pointers must be valid; `dim` and `segments` may be null.
#[no_mangle]
pub unsafe extern "C" fn ge_model_shape(
    model: *const GeModel,
    dim: *mut usize,
    segments: *mut usize,
) -> GeStatus {
    guard(|| {
        let m = &as_ref(model, "model")?.inner;
        if let Some(d) = dim.as_mut() {
            *d = m.dim();
        }
        if let Some(s) = segments.as_mut() {
            *s = m.segments().len();
        }
        Ok(())
    })
}

/// Evaluates the objective on one segment at `lambda` (length `len`). With
/// `delta` in (0, 1) the smoothed objective is used; `delta == 1` gives the
/// exact one. Outside the domain `value` is +infinity and `gradient` is left
/// untouched. `gradient` may be null; otherwise it must hold `len` entries.
///
/// # Safety
/// Pointers must be valid for the stated lengths.
#[no_mangle]
pub unsafe extern "C" fn ge_objective(
    model: *const GeModel,
    segment: usize,
    lambda: *const f64,
    len: usize,
    delta: f64,
    value: *mut f64,
    gradient: *mut f64,
) -> GeStatus {
    guard(|| {
        let m = &as_ref(model, "model")?.inner;
        let value = as_mut(value, "value")?;
        let lambda = as_slice(lambda, len, "lambda")?;
        check_len(len, m.dim(), "lambda")?;
        let seg = m
            .segments()
            .get(segment)
            .ok_or_else(|| FfiError::Invalid(format!("segment {segment} out of range")))?;
        let l = Vector::from_column_slice(lambda);
        let eval = if delta == 1.0 {
            objective::evaluate(&seg.chars, &l)
        } else {
            objective::evaluate_smoothed(&seg.chars, &l, delta)
        }
        .map_err(|e| FfiError::Invalid(e.to_string()))?;
        *value = eval.value;
        if let (Some(g), false) = (eval.gradient, gradient.is_null()) {
            slice::from_raw_parts_mut(gradient, len).copy_from_slice(g.as_slice());
        }
        Ok(())
    })
}

#[no_mangle]
pub extern "C" fn ge_solve_options_default() -> GeSolveOptions {
    let o = SolveOptions::default();
    GeSolveOptions {
        tol: o.tol,
        max_iter: o.max_iter,
        n_probes: o.n_probes,
        n_dirs: o.n_dirs,
        seed: o.seed,
        force_continuation: o.force_continuation,
    }
}

/// Computes the optimal fractions. `options` may be null for defaults.
/// Returns `GE_STATUS_NOT_ATTAINED` with the witness direction in the error
/// message when no minimizer exists.
///
/// # Safety
/// Pointers must be valid; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ge_solve(
    model: *const GeModel,
    options: *const GeSolveOptions,
    out: *mut *mut GeSolution,
) -> GeStatus {
    guard(|| {
        let m = &as_ref(model, "model")?.inner;
        let out = as_mut(out, "out")?;
        let opts: SolveOptions = options
            .as_ref()
            .map_or_else(SolveOptions::default, |o| (*o).into());
        let report = solve(m, &opts)?;
        *out = Box::into_raw(Box::new(GeSolution { inner: report }));
        Ok(())
    })
}

/// # Safety
/// `solution` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn ge_solution_free(solution: *mut GeSolution) {
    if !solution.is_null() {
        drop(Box::from_raw(solution));
    }
}

/// Optimal expected log-wealth at the horizon.
///
/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn ge_solution_log_wealth(
    solution: *const GeSolution,
    out: *mut f64,
) -> GeStatus {
    guard(|| {
        *as_mut(out, "out")? = as_ref(solution, "solution")?.inner.optimal_log_wealth();
        Ok(())
    })
}

/// Copies the optimal fraction of `segment` into `out` (length `len`).
///
/// # Safety
/// `out` must hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn ge_solution_fraction(
    solution: *const GeSolution,
    segment: usize,
    out: *mut f64,
    len: usize,
) -> GeStatus {
    guard(|| {
        let s = &as_ref(solution, "solution")?.inner;
        if out.is_null() {
            return Err(FfiError::Null("out"));
        }
        let seg = s
            .segments
            .get(segment)
            .ok_or_else(|| FfiError::Invalid(format!("segment {segment} out of range")))?;
        check_len(len, seg.phi.len(), "out")?;
        slice::from_raw_parts_mut(out, len).copy_from_slice(seg.phi.as_slice());
        Ok(())
    })
}

/// Simulates wealth and the optimal deflator on `n_paths` paths.
///
/// # Safety
/// Pointers must be valid; `solution` must come from `ge_solve` on `model`.
#[no_mangle]
pub unsafe extern "C" fn ge_simulate(
    model: *const GeModel,
    solution: *const GeSolution,
    n_paths: usize,
    steps_per_unit: f64,
    seed: u64,
    out: *mut GeSimSummary,
) -> GeStatus {
    guard(|| {
        let m = &as_ref(model, "model")?.inner;
        let s = &as_ref(solution, "solution")?.inner;
        let out = as_mut(out, "out")?;
        if s.segments.len() != m.segments().len()
            || s.segments.iter().any(|g| g.phi.len() != m.dim())
        {
            return Err(FfiError::Invalid(
                "solution does not belong to this model".into(),
            ));
        }
        let z = build_deflator(m, s).map_err(|e| FfiError::Failed(e.to_string()))?;
        let cfg = SimConfig {
            n_paths,
            steps_per_unit,
            seed,
            n_audit: 0,
        };
        let b =
            simulate(m, &s.phis(), Some(&z), &cfg).map_err(|e| FfiError::Invalid(e.to_string()))?;
        let last = b.rows.last().expect("grid has a terminal point");
        let product = last.product.expect("deflator was simulated");
        *out = GeSimSummary {
            n_paths: b.n_paths,
            mean_log_wealth: b.log_wealth_t.mean(),
            log_wealth_std_error: b.log_wealth_t.std_error(),
            mean_wealth: last.wealth.mean(),
            wealth_std_error: last.wealth.std_error(),
            mean_product: product.mean(),
            product_std_error: product.std_error(),
            min_wealth: b.min_wealth,
            min_deflator: b.min_deflator.unwrap_or(f64::NAN),
        };
        Ok(())
    })
}
