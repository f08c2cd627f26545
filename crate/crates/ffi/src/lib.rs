//! C interface to the analogy solvers.
//!
//! Every fallible function returns a [`MorphoStatus`]. On failure a message
//! is stored per thread and can be read with [`morpho_last_error_message`].
//! Objects are opaque handles created by `*_new`/`*_open` functions and
//! released with the matching `*_free`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;
use std::time::Duration;

use morpho_analogy::cli::{CliError, RunDir};
use morpho_analogy::data::AnalogyQuadruple;
use morpho_analogy::solvers::{solve_with_timeout, AleaSolver, KolmoSolver, Solver, SolverRanking};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MorphoStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    InvalidArgument = 3,
    NotFound = 4,
    SolverFailed = 5,
    Panic = 6,
}

/// A solver instance.
pub struct MorphoSolver {
    inner: Box<dyn Solver>,
}

/// The ranked candidates of one solved equation.
pub struct MorphoRanking {
    words: Vec<CString>,
    scores: Vec<f64>,
    timed_out: bool,
    no_solution: bool,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).ok());
}

fn fail(status: MorphoStatus, msg: impl Into<String>) -> MorphoStatus {
    set_error(msg);
    status
}

/// Runs `f`, turning panics into [`MorphoStatus::Panic`].
fn guard(f: impl FnOnce() -> MorphoStatus) -> MorphoStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(s) => s,
        Err(p) => {
            let msg = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            fail(MorphoStatus::Panic, format!("panic: {msg}"))
        }
    }
}

unsafe fn read_str<'a>(p: *const c_char, what: &str) -> Result<&'a str, MorphoStatus> {
    if p.is_null() {
        return Err(fail(MorphoStatus::NullPointer, format!("{what} is null")));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| fail(MorphoStatus::InvalidUtf8, format!("{what} is not valid UTF-8")))
}

unsafe fn store_solver(out: *mut *mut MorphoSolver, solver: Box<dyn Solver>) -> MorphoStatus {
    *out = Box::into_raw(Box::new(MorphoSolver { inner: solver }));
    MorphoStatus::Ok
}

/// Message of the last failed call on this thread, or null. The pointer is
/// valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn morpho_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

#[no_mangle]
pub extern "C" fn morpho_clear_last_error() {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn morpho_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Creates the sampling solver with `trials` random interleavings.
///
/// # Safety
/// `out` must be a valid pointer to writable storage for a handle.
#[no_mangle]
pub unsafe extern "C" fn morpho_solver_new_alea(trials: u32, seed: u64, out: *mut *mut MorphoSolver) -> MorphoStatus {
    guard(|| {
        if out.is_null() {
            return fail(MorphoStatus::NullPointer, "out is null");
        }
        if trials == 0 {
            return fail(MorphoStatus::InvalidArgument, "trials must be positive");
        }
        store_solver(out, Box::new(AleaSolver { trials: trials as usize, seed }))
    })
}

/// Creates the edit-program solver. A `node_budget` of 0 means no budget.
///
/// # Safety
/// `out` must be a valid pointer to writable storage for a handle.
#[no_mangle]
pub unsafe extern "C" fn morpho_solver_new_kolmo(node_budget: u64, out: *mut *mut MorphoSolver) -> MorphoStatus {
    guard(|| {
        if out.is_null() {
            return fail(MorphoStatus::NullPointer, "out is null");
        }
        let node_budget = (node_budget > 0).then_some(node_budget);
        store_solver(out, Box::new(KolmoSolver { node_budget }))
    })
}

/// Opens any solver of a prepared run directory by name, loading the
/// checkpoints trained for `seed`.
///
/// # Safety
/// `run_dir` and `name` must be NUL-terminated strings; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn morpho_solver_open(
    run_dir: *const c_char,
    name: *const c_char,
    seed: u64,
    out: *mut *mut MorphoSolver,
) -> MorphoStatus {
    guard(|| {
        if out.is_null() {
            return fail(MorphoStatus::NullPointer, "out is null");
        }
        let (dir, name) = match (read_str(run_dir, "run_dir"), read_str(name, "name")) {
            (Ok(d), Ok(n)) => (d, n),
            (Err(s), _) | (_, Err(s)) => return s,
        };
        let built = RunDir::open(Path::new(dir)).and_then(|run| run.solver(name, seed));
        match built {
            Ok(s) => store_solver(out, s),
            Err(e @ CliError::Usage(_)) => fail(MorphoStatus::InvalidArgument, e.to_string()),
            Err(e) => fail(MorphoStatus::NotFound, e.to_string()),
        }
    })
}

/// Releases a solver. Null is ignored.
///
/// # Safety
/// `solver` must come from a constructor of this library and not be used
/// afterwards.
#[no_mangle]
pub unsafe extern "C" fn morpho_solver_free(solver: *mut MorphoSolver) {
    if !solver.is_null() {
        drop(Box::from_raw(solver));
    }
}

/// Solves `a:b::c:x`. A negative `timeout_secs` disables the time limit.
/// Timeouts are not errors: the ranking reports them.
///
/// # Safety
/// `solver` must be a live handle, the words NUL-terminated strings and
/// `out` valid.
#[no_mangle]
pub unsafe extern "C" fn morpho_solve(
    solver: *const MorphoSolver,
    a: *const c_char,
    b: *const c_char,
    c: *const c_char,
    timeout_secs: f64,
    out: *mut *mut MorphoRanking,
) -> MorphoStatus {
    guard(|| {
        if solver.is_null() || out.is_null() {
            return fail(MorphoStatus::NullPointer, "solver or out is null");
        }
        let words = [read_str(a, "a"), read_str(b, "b"), read_str(c, "c")];
        let [a, b, c] = match words {
            [Ok(a), Ok(b), Ok(c)] => [a, b, c],
            [Err(s), ..] | [_, Err(s), _] | [.., Err(s)] => return s,
        };
        let timeout = if timeout_secs.is_nan() {
            return fail(MorphoStatus::InvalidArgument, "timeout is NaN");
        } else if timeout_secs < 0.0 {
            None
        } else {
            Some(Duration::from_secs_f64(timeout_secs.min(1e9)))
        };
        let q = AnalogyQuadruple::new(a, b, c, "");
        let r: SolverRanking = solve_with_timeout((*solver).inner.as_ref(), &q, timeout);
        if let Some(e) = r.error {
            return fail(MorphoStatus::SolverFailed, e);
        }
        let words = r.candidates.iter().map(|(w, _)| CString::new(w.as_str()).unwrap_or_default()).collect();
        let scores = r.candidates.iter().map(|(_, s)| *s).collect();
        *out = Box::into_raw(Box::new(MorphoRanking {
            words,
            scores,
            timed_out: r.timed_out,
            no_solution: r.no_solution,
        }));
        MorphoStatus::Ok
    })
}

/// Number of candidates in the ranking (0 for null).
///
/// # Safety
/// `ranking` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn morpho_ranking_len(ranking: *const MorphoRanking) -> usize {
    ranking.as_ref().map_or(0, |r| r.words.len())
}

/// Candidate word at `index`, or null when out of range. The string lives
/// as long as the ranking.
///
/// # Safety
/// `ranking` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn morpho_ranking_word(ranking: *const MorphoRanking, index: usize) -> *const c_char {
    ranking
        .as_ref()
        .and_then(|r| r.words.get(index))
        .map_or(ptr::null(), |w| w.as_ptr())
}

/// Score of the candidate at `index`; NaN when out of range.
///
/// # Safety
/// `ranking` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn morpho_ranking_score(ranking: *const MorphoRanking, index: usize) -> f64 {
    ranking.as_ref().and_then(|r| r.scores.get(index).copied()).unwrap_or(f64::NAN)
}

/// True when the solver hit its time limit.
///
/// # Safety
/// `ranking` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn morpho_ranking_timed_out(ranking: *const MorphoRanking) -> bool {
    ranking.as_ref().is_some_and(|r| r.timed_out)
}

/// True when the solver proved that no solution exists.
///
/// # Safety
/// `ranking` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn morpho_ranking_no_solution(ranking: *const MorphoRanking) -> bool {
    ranking.as_ref().is_some_and(|r| r.no_solution)
}

/// Releases a ranking. Null is ignored.
///
/// # Safety
/// `ranking` must come from [`morpho_solve`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn morpho_ranking_free(ranking: *mut MorphoRanking) {
    if !ranking.is_null() {
        drop(Box::from_raw(ranking));
    }
}
