//! C ABI for the susceptance-placement library.
//!
//! The surface follows the usual handle/error-code conventions:
//!
//! * Grids and placement results are opaque handles (`FactsGrid`,
//!   `FactsResult`) created by `facts_*` constructors and released with
//!   the matching `facts_*_free`. Freeing null is a no-op; every other
//!   null argument is rejected with `NULL_ARGUMENT`.
//! * Every fallible call returns a [`FactsErrorCode`] and writes its
//!   payload through out-pointers, so the codes stay uniform across the
//!   API. `OK` is zero.
//! * On failure a human-readable message is stored per thread and can
//!   be read with [`facts_last_error`] until the same thread's next
//!   failing call.
//! * Panics never unwind across the boundary: they are caught and
//!   surfaced as the `PANIC` code.
//!
//! The generated header lives in `include/factsopt.h`; `build.rs`
//! regenerates it via cbindgen on every build of this crate.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};

use factsopt::grid::{from_native, parse_matpower, GridModel, Scenario};
use factsopt::optimizer::{
    base_opf, place, PlacementOptions, PlacementResult, PlacementStatus, Strategy, ViolationMove,
};
use factsopt::powerflow::alpha_c;
use factsopt::Error;

/// Opaque handle to a loaded grid. Create with [`facts_grid_from_native`]
/// or [`facts_grid_from_matpower`], release with [`facts_grid_free`].
pub struct FactsGrid(GridModel);

/// Opaque handle to a placement result. Created by [`facts_place`],
/// released with [`facts_result_free`].
pub struct FactsResult(PlacementResult);

/// Status of every C-API call. Zero is success; everything else is a
/// failure whose message is available via [`facts_last_error`].
#[repr(C)]
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum FactsErrorCode {
    Ok = 0,
    /// A required pointer argument was null.
    NullArgument = 1,
    /// A string argument was not valid UTF-8.
    Utf8 = 2,
    /// Input text could not be parsed (bad MATPOWER or JSON syntax).
    Parse = 3,
    /// Structurally valid input with values that violate the model.
    Data = 4,
    /// The grid graph is not connected.
    Disconnected = 5,
    /// Scenario injections do not sum to zero.
    Unbalanced = 6,
    /// The susceptance matrix is numerically singular.
    Singular = 7,
    /// No finite critical scaling exists for the dispatch.
    Unstressable = 8,
    /// Generator limits cannot cover the load.
    InfeasibleDispatch = 9,
    /// An iterative routine failed to converge.
    Numerical = 10,
    /// An argument value is out of range.
    Invalid = 11,
    /// A caller-supplied buffer has the wrong length.
    Length = 12,
    /// An internal panic was caught at the boundary.
    Panic = 13,
}

/// Placement termination status, mirroring the library's own.
#[repr(C)]
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum FactsStatus {
    /// Converged and re-verified feasible on exact flows.
    Solved = 0,
    /// Some linearized subproblem admitted no feasible correction.
    InfeasibleLp = 1,
    /// The outer iteration cap was reached first.
    IterLimit = 2,
}

/// Linearization strategy selector for [`FactsPlaceOptions`].
#[repr(C)]
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum FactsStrategy {
    /// Linearize every constraint of every scenario each iteration.
    Direct = 0,
    /// Cutting-plane: grow the constraint set from observed violations.
    Improved = 1,
}

/// Cutting-plane growth policy for [`FactsPlaceOptions`].
#[repr(C)]
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum FactsViolationMove {
    /// Add only the single worst violation per iteration.
    MostViolated = 0,
    /// Add every currently violated constraint.
    AllViolated = 1,
}

/// Plain-data mirror of the library's placement options. Obtain the
/// defaults from [`facts_place_options_default`] and adjust fields.
#[repr(C)]
#[derive(Clone, Copy)]
pub struct FactsPlaceOptions {
    pub strategy: FactsStrategy,
    pub violation_move: FactsViolationMove,
    /// Outer-iteration cap.
    pub max_outer_iters: usize,
    /// Convergence threshold on the susceptance step (infinity norm).
    /// Any value `<= 0` selects the automatic scale-relative default.
    pub beta_tolerance: f64,
    /// Lower bound applied to every line's susceptance.
    pub beta_lower: f64,
    /// Relative slack accepted on line limits at re-verification.
    pub feasibility_tolerance: f64,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_last_error(message: &str) {
    let owned = CString::new(message.replace('\0', " "))
        .unwrap_or_else(|_| CString::new("error message unavailable").unwrap());
    LAST_ERROR.with(|slot| *slot.borrow_mut() = owned);
}

fn fail(code: FactsErrorCode, message: &str) -> FactsErrorCode {
    set_last_error(message);
    code
}

fn fail_with(err: Error) -> FactsErrorCode {
    let code = match err {
        Error::Parse { .. } | Error::Json(_) => FactsErrorCode::Parse,
        Error::Data(_) | Error::Schema { .. } | Error::Io(_) => FactsErrorCode::Data,
        Error::Disconnected(_) => FactsErrorCode::Disconnected,
        Error::Unbalanced { .. } => FactsErrorCode::Unbalanced,
        Error::Singular { .. } => FactsErrorCode::Singular,
        Error::Unstressable => FactsErrorCode::Unstressable,
        Error::InfeasibleDispatch(_) => FactsErrorCode::InfeasibleDispatch,
        Error::Numerical(_) => FactsErrorCode::Numerical,
        Error::Invalid(_) => FactsErrorCode::Invalid,
    };
    fail(code, &err.to_string())
}

/// Run a body under `catch_unwind` so panics become an error code
/// instead of undefined behavior at the C boundary.
fn guarded(body: impl FnOnce() -> FactsErrorCode) -> FactsErrorCode {
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(code) => code,
        Err(payload) => {
            let message = payload
                .downcast_ref::<&str>()
                .map(|s| (*s).to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".to_string());
            fail(FactsErrorCode::Panic, &format!("internal panic: {message}"))
        }
    }
}

/// Read a required C string argument into UTF-8.
///
/// # Safety
/// `ptr`, when non-null, must point to a NUL-terminated string.
unsafe fn required_str<'a>(ptr: *const c_char, name: &str) -> Result<&'a str, FactsErrorCode> {
    if ptr.is_null() {
        return Err(fail(
            FactsErrorCode::NullArgument,
            &format!("{name} must not be null"),
        ));
    }
    CStr::from_ptr(ptr).to_str().map_err(|_| {
        fail(
            FactsErrorCode::Utf8,
            &format!("{name} is not valid UTF-8"),
        )
    })
}

fn required<'a, T>(ptr: *const T, name: &str) -> Result<&'a T, FactsErrorCode> {
    // SAFETY: the caller contract of every facts_* function requires
    // non-null pointers to refer to live, properly typed values.
    unsafe { ptr.as_ref() }.ok_or_else(|| {
        fail(
            FactsErrorCode::NullArgument,
            &format!("{name} must not be null"),
        )
    })
}

fn required_mut<'a, T>(ptr: *mut T, name: &str) -> Result<&'a mut T, FactsErrorCode> {
    // SAFETY: as in `required`.
    unsafe { ptr.as_mut() }.ok_or_else(|| {
        fail(
            FactsErrorCode::NullArgument,
            &format!("{name} must not be null"),
        )
    })
}

/// View a caller buffer as a slice after checking the advertised
/// length against the expected one.
///
/// # Safety
/// `ptr`, when non-null, must point to `len` consecutive values.
unsafe fn required_slice<'a, T>(
    ptr: *const T,
    len: usize,
    expected: usize,
    name: &str,
) -> Result<&'a [T], FactsErrorCode> {
    if ptr.is_null() {
        return Err(fail(
            FactsErrorCode::NullArgument,
            &format!("{name} must not be null"),
        ));
    }
    if len != expected {
        return Err(fail(
            FactsErrorCode::Length,
            &format!("{name} has length {len}, expected {expected}"),
        ));
    }
    Ok(std::slice::from_raw_parts(ptr, len))
}

/// Mutable variant of [`required_slice`].
///
/// # Safety
/// `ptr`, when non-null, must point to `len` consecutive writable values.
unsafe fn required_slice_mut<'a, T>(
    ptr: *mut T,
    len: usize,
    expected: usize,
    name: &str,
) -> Result<&'a mut [T], FactsErrorCode> {
    if ptr.is_null() {
        return Err(fail(
            FactsErrorCode::NullArgument,
            &format!("{name} must not be null"),
        ));
    }
    if len != expected {
        return Err(fail(
            FactsErrorCode::Length,
            &format!("{name} has length {len}, expected {expected}"),
        ));
    }
    Ok(std::slice::from_raw_parts_mut(ptr, len))
}

macro_rules! try_code {
    ($expr:expr) => {
        match $expr {
            Ok(value) => value,
            Err(code) => return code,
        }
    };
}

// ---------------------------------------------------------------------
// Diagnostics

/// Message for the current thread's most recent failure, or an empty
/// string when nothing has failed yet. The pointer stays valid until
/// this thread's next failing `facts_*` call; do not free it.
#[no_mangle]
pub extern "C" fn facts_last_error() -> *const c_char {
    LAST_ERROR.with(|slot| slot.borrow().as_ptr())
}

/// Library version as a static string; do not free it.
#[no_mangle]
pub extern "C" fn facts_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr() as *const c_char
}

// ---------------------------------------------------------------------
// Grid lifecycle

/// Parse a grid from native JSON (the `factsopt-grid` schema) and hand
/// back an owned handle.
///
/// # Safety
/// `json` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn facts_grid_from_native(
    json: *const c_char,
    out: *mut *mut FactsGrid,
) -> FactsErrorCode {
    guarded(|| {
        let slot = try_code!(required_mut(out, "out"));
        let text = try_code!(required_str(json, "json"));
        match from_native(text) {
            Ok(model) => {
                *slot = Box::into_raw(Box::new(FactsGrid(model)));
                FactsErrorCode::Ok
            }
            Err(e) => fail_with(e),
        }
    })
}

/// Parse a grid from MATPOWER case text and hand back an owned handle.
///
/// # Safety
/// `text` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn facts_grid_from_matpower(
    text: *const c_char,
    out: *mut *mut FactsGrid,
) -> FactsErrorCode {
    guarded(|| {
        let slot = try_code!(required_mut(out, "out"));
        let case = try_code!(required_str(text, "text"));
        match parse_matpower(case) {
            Ok(model) => {
                *slot = Box::into_raw(Box::new(FactsGrid(model)));
                FactsErrorCode::Ok
            }
            Err(e) => fail_with(e),
        }
    })
}

/// Release a grid handle. Null is a no-op.
///
/// # Safety
/// `grid` must be a pointer returned by a `facts_grid_from_*` call that
/// has not already been freed.
#[no_mangle]
pub unsafe extern "C" fn facts_grid_free(grid: *mut FactsGrid) {
    if !grid.is_null() {
        drop(Box::from_raw(grid));
    }
}

// ---------------------------------------------------------------------
// Grid queries

/// Number of buses, or 0 when `grid` is null.
///
/// # Safety
/// `grid`, when non-null, must be a live grid handle.
#[no_mangle]
pub unsafe extern "C" fn facts_grid_num_buses(grid: *const FactsGrid) -> usize {
    grid.as_ref().map_or(0, |g| g.0.num_buses())
}

/// Number of lines, or 0 when `grid` is null.
///
/// # Safety
/// `grid`, when non-null, must be a live grid handle.
#[no_mangle]
pub unsafe extern "C" fn facts_grid_num_lines(grid: *const FactsGrid) -> usize {
    grid.as_ref().map_or(0, |g| g.0.num_lines())
}

/// Copy the per-unit line susceptances into `out` (length must equal
/// the line count).
///
/// # Safety
/// `grid` must be a live grid handle and `out` must point to `len`
/// writable doubles.
#[no_mangle]
pub unsafe extern "C" fn facts_grid_susceptances(
    grid: *const FactsGrid,
    out: *mut f64,
    len: usize,
) -> FactsErrorCode {
    guarded(|| {
        let grid = try_code!(required(grid, "grid"));
        let out = try_code!(required_slice_mut(out, len, grid.0.num_lines(), "out"));
        out.copy_from_slice(&grid.0.susceptances());
        FactsErrorCode::Ok
    })
}

// ---------------------------------------------------------------------
// Analysis

/// Minimum-cost balanced dispatch for the grid's generators, written as
/// per-bus MW injections into `out` (length must equal the bus count).
///
/// # Safety
/// `grid` must be a live grid handle and `out` must point to `len`
/// writable doubles.
#[no_mangle]
pub unsafe extern "C" fn facts_base_opf(
    grid: *const FactsGrid,
    out: *mut f64,
    len: usize,
) -> FactsErrorCode {
    guarded(|| {
        let grid = try_code!(required(grid, "grid"));
        let out = try_code!(required_slice_mut(out, len, grid.0.num_buses(), "out"));
        match base_opf(&grid.0) {
            Ok(dispatch) => {
                out.copy_from_slice(&dispatch);
                FactsErrorCode::Ok
            }
            Err(e) => fail_with(e),
        }
    })
}

/// Critical scaling of a dispatch: the largest uniform multiplier that
/// keeps every line within its limit, together with the line that binds
/// there.
///
/// # Safety
/// `grid` must be a live grid handle, `injections` must point to `len`
/// doubles, and the out-pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn facts_alpha_c(
    grid: *const FactsGrid,
    injections: *const f64,
    len: usize,
    out_alpha: *mut f64,
    out_line: *mut usize,
) -> FactsErrorCode {
    guarded(|| {
        let grid = try_code!(required(grid, "grid"));
        let injections = try_code!(required_slice(
            injections,
            len,
            grid.0.num_buses(),
            "injections"
        ));
        let out_alpha = try_code!(required_mut(out_alpha, "out_alpha"));
        let out_line = try_code!(required_mut(out_line, "out_line"));
        match alpha_c(&grid.0, injections) {
            Ok(critical) => {
                *out_alpha = critical.alpha;
                *out_line = critical.line;
                FactsErrorCode::Ok
            }
            Err(e) => fail_with(e),
        }
    })
}

// ---------------------------------------------------------------------
// Placement

/// The library's default placement options.
#[no_mangle]
pub extern "C" fn facts_place_options_default() -> FactsPlaceOptions {
    let defaults = PlacementOptions::default();
    FactsPlaceOptions {
        strategy: match defaults.strategy {
            Strategy::Direct => FactsStrategy::Direct,
            Strategy::Improved => FactsStrategy::Improved,
        },
        violation_move: match defaults.violation_move {
            ViolationMove::MostViolated => FactsViolationMove::MostViolated,
            ViolationMove::AllViolated => FactsViolationMove::AllViolated,
        },
        max_outer_iters: defaults.max_outer_iters,
        beta_tolerance: defaults.beta_tolerance.unwrap_or(0.0),
        beta_lower: defaults.beta_lower,
        feasibility_tolerance: defaults.feasibility_tolerance,
    }
}

fn rust_options(options: &FactsPlaceOptions) -> PlacementOptions {
    PlacementOptions {
        strategy: match options.strategy {
            FactsStrategy::Direct => Strategy::Direct,
            FactsStrategy::Improved => Strategy::Improved,
        },
        violation_move: match options.violation_move {
            FactsViolationMove::MostViolated => ViolationMove::MostViolated,
            FactsViolationMove::AllViolated => ViolationMove::AllViolated,
        },
        max_outer_iters: options.max_outer_iters,
        beta_tolerance: (options.beta_tolerance > 0.0).then_some(options.beta_tolerance),
        beta_lower: options.beta_lower,
        beta_upper: None,
        feasibility_tolerance: options.feasibility_tolerance,
    }
}

/// Relieve the overloads produced by one injection scenario (per-bus
/// MW, summing to zero) by re-placing line susceptances. `options` may
/// be null for the defaults. On success `out` receives an owned result
/// handle.
///
/// # Safety
/// `grid` must be a live grid handle, `injections` must point to `len`
/// doubles, `options` must be null or valid, and `out` must be a valid
/// pointer.
#[no_mangle]
pub unsafe extern "C" fn facts_place(
    grid: *const FactsGrid,
    injections: *const f64,
    len: usize,
    options: *const FactsPlaceOptions,
    out: *mut *mut FactsResult,
) -> FactsErrorCode {
    guarded(|| {
        let grid = try_code!(required(grid, "grid"));
        let injections = try_code!(required_slice(
            injections,
            len,
            grid.0.num_buses(),
            "injections"
        ));
        let slot = try_code!(required_mut(out, "out"));
        let options = match options.as_ref() {
            Some(opts) => rust_options(opts),
            None => PlacementOptions::default(),
        };
        let scenario = Scenario::base(injections.to_vec(), "ffi");
        match place(&grid.0, std::slice::from_ref(&scenario), &options) {
            Ok(result) => {
                *slot = Box::into_raw(Box::new(FactsResult(result)));
                FactsErrorCode::Ok
            }
            Err(e) => fail_with(e),
        }
    })
}

/// Release a result handle. Null is a no-op.
///
/// # Safety
/// `result` must be a pointer returned by [`facts_place`] that has not
/// already been freed.
#[no_mangle]
pub unsafe extern "C" fn facts_result_free(result: *mut FactsResult) {
    if !result.is_null() {
        drop(Box::from_raw(result));
    }
}

// ---------------------------------------------------------------------
// Result queries

/// Termination status of a placement run.
///
/// # Safety
/// `result` must be a live result handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn facts_result_status(
    result: *const FactsResult,
    out: *mut FactsStatus,
) -> FactsErrorCode {
    guarded(|| {
        let result = try_code!(required(result, "result"));
        let out = try_code!(required_mut(out, "out"));
        *out = match result.0.status {
            PlacementStatus::Solved => FactsStatus::Solved,
            PlacementStatus::InfeasibleLP => FactsStatus::InfeasibleLp,
            PlacementStatus::IterLimit => FactsStatus::IterLimit,
        };
        FactsErrorCode::Ok
    })
}

/// Total l1 placement cost (sum of absolute susceptance changes).
///
/// # Safety
/// `result` must be a live result handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn facts_result_cost(
    result: *const FactsResult,
    out: *mut f64,
) -> FactsErrorCode {
    guarded(|| {
        let result = try_code!(required(result, "result"));
        let out = try_code!(required_mut(out, "out"));
        *out = result.0.cost;
        FactsErrorCode::Ok
    })
}

/// Number of outer iterations the run took.
///
/// # Safety
/// `result` must be a live result handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn facts_result_iterations(
    result: *const FactsResult,
    out: *mut usize,
) -> FactsErrorCode {
    guarded(|| {
        let result = try_code!(required(result, "result"));
        let out = try_code!(required_mut(out, "out"));
        *out = result.0.iterations.len();
        FactsErrorCode::Ok
    })
}

/// Copy the final susceptance vector into `out` (length must equal the
/// grid's line count).
///
/// # Safety
/// `result` must be a live result handle and `out` must point to `len`
/// writable doubles.
#[no_mangle]
pub unsafe extern "C" fn facts_result_beta(
    result: *const FactsResult,
    out: *mut f64,
    len: usize,
) -> FactsErrorCode {
    guarded(|| {
        let result = try_code!(required(result, "result"));
        let out = try_code!(required_slice_mut(
            out,
            len,
            result.0.beta_opt.len(),
            "out"
        ));
        out.copy_from_slice(&result.0.beta_opt);
        FactsErrorCode::Ok
    })
}

/// Copy the susceptance change vector (final minus initial) into `out`
/// (length must equal the grid's line count).
///
/// # Safety
/// `result` must be a live result handle and `out` must point to `len`
/// writable doubles.
#[no_mangle]
pub unsafe extern "C" fn facts_result_delta(
    result: *const FactsResult,
    out: *mut f64,
    len: usize,
) -> FactsErrorCode {
    guarded(|| {
        let result = try_code!(required(result, "result"));
        let out = try_code!(required_slice_mut(out, len, result.0.delta.len(), "out"));
        out.copy_from_slice(&result.0.delta);
        FactsErrorCode::Ok
    })
}

/// Number of materially modified lines; sizes the buffer for
/// [`facts_result_modified_lines`].
///
/// # Safety
/// `result` must be a live result handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn facts_result_num_modified(
    result: *const FactsResult,
    out: *mut usize,
) -> FactsErrorCode {
    guarded(|| {
        let result = try_code!(required(result, "result"));
        let out = try_code!(required_mut(out, "out"));
        *out = result.0.modified_lines.len();
        FactsErrorCode::Ok
    })
}

/// Copy the ascending indices of materially modified lines into `out`
/// (length must equal [`facts_result_num_modified`]).
///
/// # Safety
/// `result` must be a live result handle and `out` must point to `len`
/// writable values.
#[no_mangle]
pub unsafe extern "C" fn facts_result_modified_lines(
    result: *const FactsResult,
    out: *mut usize,
    len: usize,
) -> FactsErrorCode {
    guarded(|| {
        let result = try_code!(required(result, "result"));
        let out = try_code!(required_slice_mut(
            out,
            len,
            result.0.modified_lines.len(),
            "out"
        ));
        out.copy_from_slice(&result.0.modified_lines);
        FactsErrorCode::Ok
    })
}
