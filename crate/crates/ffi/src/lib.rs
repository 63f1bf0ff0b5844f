//! C ABI over `deq-core`.
//!
//! Handles are opaque and owned by the caller once returned; free each with
//! its `_free` function. Every fallible call returns a [`DeqStatus`] and, on
//! failure, records a message readable with [`deq_last_error_message`] on the
//! same thread. Output buffers are caller-allocated with the documented
//! length. Panics never cross the boundary; they surface as
//! `DEQ_STATUS_PANIC`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use deq_core::approx::{iterate_until_equilibrium, newton_basins, newton_map, NewtonBasinOptions};
use deq_core::cli::{solve, CliError, ProblemFile};
use deq_core::finite::{deep_equilibrium_finite, FiniteMap};
use deq_core::function::{LayerFunctionSpec, StateMap};
use deq_core::structure::{LayerState, PredicateSpec};
use deq_core::Error;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DeqStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    /// A layer map could not be evaluated (critical point, missing entry, ...).
    Evaluation = 3,
    /// A value does not fit the output type.
    Overflow = 4,
    Json = 5,
    Utf8 = 6,
    Panic = 7,
}

/// A self-map of `{1, ..., m}`.
pub struct DeqFiniteMap(FiniteMap);

/// A layer function from the catalog.
pub struct DeqFunction(LayerFunctionSpec);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let msg = CString::new(msg.into().replace('\0', " ")).expect("nul bytes removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(msg));
}

struct Failure(DeqStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let status = match e {
            Error::Overflow | Error::OrderOverflow => DeqStatus::Overflow,
            ref e if e.is_evaluation() => DeqStatus::Evaluation,
            _ => DeqStatus::InvalidArgument,
        };
        Failure(status, e.to_string())
    }
}

impl From<CliError> for Failure {
    fn from(e: CliError) -> Self {
        match e {
            CliError::Library(e) => e.into(),
            CliError::Json(m) => Failure(DeqStatus::Json, m),
            e => Failure(DeqStatus::InvalidArgument, e.to_string()),
        }
    }
}

fn null(what: &str) -> Failure {
    Failure(DeqStatus::NullPointer, format!("`{what}` is null"))
}

/// Runs `body`, converting failures and panics into a status.
fn guard(body: impl FnOnce() -> Result<(), Failure>) -> DeqStatus {
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(Ok(())) => DeqStatus::Ok,
        Ok(Err(Failure(status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic");
            DeqStatus::Panic
        }
    }
}

/// # Safety
/// `p` is null or valid for `len` reads.
unsafe fn slice<'a, T>(p: *const T, len: usize, what: &str) -> Result<&'a [T], Failure> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

/// # Safety
/// `p` is null or valid for `len` writes.
unsafe fn slice_mut<'a, T>(p: *mut T, len: usize, what: &str) -> Result<&'a mut [T], Failure> {
    if len == 0 {
        return Ok(&mut []);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts_mut(p, len))
}

/// # Safety
/// `p` is null or points to a live `T`.
unsafe fn deref<'a, T>(p: *const T, what: &str) -> Result<&'a T, Failure> {
    p.as_ref().ok_or_else(|| null(what))
}

/// # Safety
/// `p` is null or a valid NUL-terminated string.
unsafe fn string<'a>(p: *const c_char, what: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p).to_str().map_err(|e| Failure(DeqStatus::Utf8, format!("`{what}`: {e}")))
}

fn write_out<T>(out: *mut T, value: T, what: &str) -> Result<(), Failure> {
    if out.is_null() {
        return Err(null(what));
    }
    // SAFETY: checked non-null; the caller guarantees it is writable.
    unsafe { out.write(value) };
    Ok(())
}

/// Message of the last failed call on this thread, or null. Valid until the
/// next failing call on the same thread.
#[no_mangle]
pub extern "C" fn deq_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn deq_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Builds a finite map from a 1-based table of length `len`.
///
/// # Safety
/// `table` is valid for `len` reads; `out` is writable.
#[no_mangle]
pub unsafe extern "C" fn deq_finite_map_new(table: *const u32, len: usize, out: *mut *mut DeqFiniteMap) -> DeqStatus {
    guard(|| {
        let t = slice(table, len, "table")?;
        let map = FiniteMap::new(t.to_vec())?;
        write_out(out, Box::into_raw(Box::new(DeqFiniteMap(map))), "out")
    })
}

/// # Safety
/// `map` is null or was returned by `deq_finite_map_new` and not yet freed.
#[no_mangle]
pub unsafe extern "C" fn deq_finite_map_free(map: *mut DeqFiniteMap) {
    if !map.is_null() {
        drop(Box::from_raw(map));
    }
}

/// Number of elements `m`; 0 for a null handle.
///
/// # Safety
/// `map` is null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn deq_finite_map_len(map: *const DeqFiniteMap) -> usize {
    map.as_ref().map_or(0, |m| m.0.len())
}

/// Writes `f*` (1-based, `m` entries) to `f_star`, the least `N` to `n_out`,
/// the tail length to `tail_out` and the core order `K` to `order_out`. Any
/// of the scalar outputs may be null. `DEQ_STATUS_OVERFLOW` if `N` or `K`
/// exceeds 64 bits.
///
/// # Safety
/// `map` is a live handle; `f_star` is valid for `m` writes; non-null
/// scalar outputs are writable.
#[no_mangle]
pub unsafe extern "C" fn deq_finite_deep_equilibrium(
    map: *const DeqFiniteMap,
    f_star: *mut u32,
    n_out: *mut u64,
    tail_out: *mut u32,
    order_out: *mut u64,
) -> DeqStatus {
    guard(|| {
        let map = &deref(map, "map")?.0;
        let eq = deep_equilibrium_finite(map)?;
        let narrow = |v: u128, what: &str| {
            u64::try_from(v).map_err(|_| Failure(DeqStatus::Overflow, format!("{what} = {v} exceeds 64 bits")))
        };
        let n = narrow(eq.n, "N")?;
        let k = narrow(eq.analysis.order_k, "K")?;
        slice_mut(f_star, map.len(), "f_star")?.copy_from_slice(eq.f_star.table());
        if !n_out.is_null() {
            n_out.write(n);
        }
        if !tail_out.is_null() {
            tail_out.write(eq.analysis.tail_n);
        }
        if !order_out.is_null() {
            order_out.write(k);
        }
        Ok(())
    })
}

/// Parses a layer function from its JSON form, e.g. `{"type":"square"}`.
///
/// # Safety
/// `json` is a NUL-terminated string; `out` is writable.
#[no_mangle]
pub unsafe extern "C" fn deq_function_from_json(json: *const c_char, out: *mut *mut DeqFunction) -> DeqStatus {
    guard(|| {
        let text = string(json, "json")?;
        let f: LayerFunctionSpec =
            serde_json::from_str(text).map_err(|e| Failure(DeqStatus::Json, e.to_string()))?;
        f.validate()?;
        write_out(out, Box::into_raw(Box::new(DeqFunction(f))), "out")
    })
}

/// Newton map of a real polynomial on `(re, im)`; coefficients leading first.
///
/// # Safety
/// `coeffs` is valid for `len` reads; `out` is writable.
#[no_mangle]
pub unsafe extern "C" fn deq_function_newton(coeffs: *const f64, len: usize, out: *mut *mut DeqFunction) -> DeqStatus {
    guard(|| {
        let f = newton_map(slice(coeffs, len, "coeffs")?)?;
        write_out(out, Box::into_raw(Box::new(DeqFunction(f))), "out")
    })
}

/// # Safety
/// `f` is null or a live handle from this library.
#[no_mangle]
pub unsafe extern "C" fn deq_function_free(f: *mut DeqFunction) {
    if !f.is_null() {
        drop(Box::from_raw(f));
    }
}

fn state(coords: &[f64]) -> Result<LayerState, Failure> {
    Ok(LayerState::new(coords.to_vec())?)
}

/// Writes `f(v)` for a state of dimension `dim`.
///
/// # Safety
/// `f` is a live handle; `v` and `out` are valid for `dim` elements.
#[no_mangle]
pub unsafe extern "C" fn deq_function_eval(f: *const DeqFunction, v: *const f64, dim: usize, out: *mut f64) -> DeqStatus {
    guard(|| {
        let f = &deref(f, "f")?.0;
        let w = f.apply(&state(slice(v, dim, "v")?)?)?;
        let w = w.coords();
        if w.len() != dim {
            return Err(Error::Dimension { expected: dim, found: w.len() }.into());
        }
        slice_mut(out, dim, "out")?.copy_from_slice(w);
        Ok(())
    })
}

/// Doubling test on `n` states of dimension `dim` (row-major), measured with
/// the coordinate predicates. Writes the approximate `f*` values to `out`
/// (`n * dim`), the iterate count to `n_out`, the residual to
/// `residual_out` and whether the tolerance was met to `converged_out`.
/// Non-convergence is a result, not an error.
///
/// # Safety
/// `f` is a live handle; `states` and `out` are valid for `n * dim`
/// elements; the scalar outputs are writable.
#[no_mangle]
#[allow(clippy::too_many_arguments)]
pub unsafe extern "C" fn deq_iterate_until_equilibrium(
    f: *const DeqFunction,
    states: *const f64,
    n: usize,
    dim: usize,
    tol: f64,
    max_doublings: usize,
    out: *mut f64,
    n_out: *mut u64,
    residual_out: *mut f64,
    converged_out: *mut bool,
) -> DeqStatus {
    guard(|| {
        let f = &deref(f, "f")?.0;
        if n == 0 || dim == 0 {
            return Err(Failure(DeqStatus::InvalidArgument, "n and dim must be >= 1".into()));
        }
        let total = n
            .checked_mul(dim)
            .ok_or_else(|| Failure(DeqStatus::Overflow, "n * dim overflows".into()))?;
        let samples = slice(states, total, "states")?.chunks(dim).map(state).collect::<Result<Vec<_>, _>>()?;
        let eq = iterate_until_equilibrium(f, &samples, &PredicateSpec::coordinates(dim), tol, max_doublings)?;
        let out = slice_mut(out, total, "out")?;
        for (dst, e) in out.chunks_mut(dim).zip(&eq.table.entries) {
            dst.copy_from_slice(e.output.coords());
        }
        write_out(n_out, eq.n, "n_out")?;
        write_out(residual_out, eq.residual, "residual_out")?;
        write_out(converged_out, eq.converged(), "converged_out")
    })
}

/// Newton basins on a `res x res` grid over `grid = [xmin, xmax, ymin, ymax]`,
/// rows by `y` then `x`. Writes the root index of each cell to `root_index`
/// (`-1` if unattributed) and, if non-null, the computed roots as
/// `(re, im)` pairs to `roots` (`2 * (len - 1)` doubles).
///
/// # Safety
/// `coeffs` is valid for `len` reads, `grid` for 4, `root_index` for
/// `res * res` writes and `roots`, if non-null, for `2 * (len - 1)`.
#[no_mangle]
#[allow(clippy::too_many_arguments)]
pub unsafe extern "C" fn deq_newton_basins(
    coeffs: *const f64,
    len: usize,
    grid: *const f64,
    res: usize,
    max_iter: usize,
    tol: f64,
    root_index: *mut i32,
    roots: *mut f64,
) -> DeqStatus {
    guard(|| {
        let coeffs = slice(coeffs, len, "coeffs")?;
        let g = slice(grid, 4, "grid")?;
        let opts = NewtonBasinOptions { grid: [g[0], g[1], g[2], g[3]], res, max_iter, tol };
        let cells = res
            .checked_mul(res)
            .ok_or_else(|| Failure(DeqStatus::Overflow, "res * res overflows".into()))?;
        let basins = newton_basins(coeffs, &opts)?;
        let idx = slice_mut(root_index, cells, "root_index")?;
        for (dst, c) in idx.iter_mut().zip(&basins.cells) {
            *dst = c.root_index.map_or(-1, |i| i as i32);
        }
        if !roots.is_null() {
            let dst = slice_mut(roots, 2 * len.saturating_sub(1), "roots")?;
            for (d, r) in dst.chunks_mut(2).zip(&basins.roots) {
                d.copy_from_slice(r);
            }
        }
        Ok(())
    })
}

/// Runs a JSON problem file (the format accepted by `deq --problem`) and
/// stores the JSON report, without timing, in `report_out`. Free it with
/// `deq_string_free`.
///
/// # Safety
/// `problem_json` is a NUL-terminated string; `report_out` is writable.
#[no_mangle]
pub unsafe extern "C" fn deq_run_problem_json(problem_json: *const c_char, report_out: *mut *mut c_char) -> DeqStatus {
    guard(|| {
        let text = string(problem_json, "problem_json")?;
        let problem: ProblemFile =
            serde_json::from_str(text).map_err(|e| Failure(DeqStatus::Json, e.to_string()))?;
        let report = solve(problem, None)?.to_string();
        let c = CString::new(report).expect("JSON has no NUL bytes");
        write_out(report_out, c.into_raw(), "report_out")
    })
}

/// # Safety
/// `s` is null or a string returned by this library and not yet freed.
#[no_mangle]
pub unsafe extern "C" fn deq_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}
