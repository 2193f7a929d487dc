//! C ABI over the pvdyn solvers.
//!
//! Models and constraint sets live behind opaque handles created from JSON
//! documents and released with the matching `*_free` function. Every
//! fallible call returns a [`PvdynStatus`]; on failure a message for the
//! calling thread is available from [`pvdyn_last_error`] until the next
//! failing call on that thread. Panics never cross the boundary.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use nalgebra::DVector;
use pvdyn::model::{load_constraints, load_model};
use pvdyn::osim::pv_osim;
use pvdyn::solvers::{aba, pv_early_solve, pv_soft_solve, pv_solve};
use pvdyn::{ConstraintSet, Error, RobotModel, RobotState};

/// Result code of every fallible call.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PvdynStatus {
    Ok = 0,
    NullPointer = 1,
    /// Malformed argument: bad UTF-8, wrong buffer length, unknown solver.
    InvalidArgument = 2,
    /// The JSON document could not be parsed.
    Parse = 3,
    /// The model or constraint set is structurally invalid.
    Model = 4,
    /// A factorization met a singular or indefinite pivot.
    Singular = 5,
    /// More independent constraint rows than the tree can satisfy.
    OverConstrained = 6,
    Unsupported = 7,
    /// Internal error; the library caught a panic.
    Panic = 99,
}

/// Forward-dynamics algorithm.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PvdynSolver {
    /// Hard constraints, multipliers resolved at the root.
    Pv = 0,
    /// Hard constraints, multipliers eliminated as soon as possible.
    PvEarly = 1,
    /// Penalty constraints; every row must carry a soft weight.
    PvSoft = 2,
    /// Unconstrained articulated-body algorithm; constraints are ignored.
    Aba = 3,
}

/// Opaque robot model.
pub struct PvdynModel {
    inner: RobotModel,
}

/// Opaque constraint set bound to the model it was loaded against.
pub struct PvdynConstraints {
    inner: ConstraintSet,
    nlinks: usize,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("interior nuls removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

struct Failure(PvdynStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let status = match &e {
            Error::Parse(_) => PvdynStatus::Parse,
            Error::Model(_) => PvdynStatus::Model,
            Error::Singular { .. } | Error::NonPositiveJointInertia { .. } => PvdynStatus::Singular,
            Error::OverConstrained { .. } => PvdynStatus::OverConstrained,
            Error::Unsupported(_) => PvdynStatus::Unsupported,
            _ => PvdynStatus::InvalidArgument,
        };
        Failure(status, e.to_string())
    }
}

fn fail(status: PvdynStatus, msg: impl Into<String>) -> Failure {
    Failure(status, msg.into())
}

/// Runs `f`, translating errors and panics into status codes.
fn guard(f: impl FnOnce() -> Result<(), Failure>) -> PvdynStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => PvdynStatus::Ok,
        Ok(Err(Failure(status, msg))) => {
            set_error(msg);
            status
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_error(format!("internal error: {msg}"));
            PvdynStatus::Panic
        }
    }
}

unsafe fn text<'a>(s: *const c_char, what: &str) -> Result<&'a str, Failure> {
    if s.is_null() {
        return Err(fail(PvdynStatus::NullPointer, format!("{what} is null")));
    }
    CStr::from_ptr(s).to_str().map_err(|_| fail(PvdynStatus::InvalidArgument, format!("{what} is not valid UTF-8")))
}

unsafe fn handle<'a, T>(p: *const T, what: &str) -> Result<&'a T, Failure> {
    p.as_ref().ok_or_else(|| fail(PvdynStatus::NullPointer, format!("{what} is null")))
}

unsafe fn input(p: *const f64, len: usize, expected: usize, what: &str) -> Result<DVector<f64>, Failure> {
    if len != expected {
        return Err(fail(PvdynStatus::InvalidArgument, format!("{what} has length {len}, expected {expected}")));
    }
    if expected == 0 {
        return Ok(DVector::zeros(0));
    }
    if p.is_null() {
        return Err(fail(PvdynStatus::NullPointer, format!("{what} is null")));
    }
    Ok(DVector::from_column_slice(std::slice::from_raw_parts(p, len)))
}

unsafe fn output<'a>(p: *mut f64, len: usize, expected: usize, what: &str) -> Result<&'a mut [f64], Failure> {
    if len != expected {
        return Err(fail(PvdynStatus::InvalidArgument, format!("{what} has length {len}, expected {expected}")));
    }
    if expected == 0 {
        return Ok(&mut []);
    }
    if p.is_null() {
        return Err(fail(PvdynStatus::NullPointer, format!("{what} is null")));
    }
    Ok(std::slice::from_raw_parts_mut(p, len))
}

/// Message describing the last failure on this thread, or null. The string
/// stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn pvdyn_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn pvdyn_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Parses a JSON robot model. On success `*out` owns a new handle.
///
/// # Safety
/// `json` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn pvdyn_model_from_json(json: *const c_char, out: *mut *mut PvdynModel) -> PvdynStatus {
    guard(|| {
        if out.is_null() {
            return Err(fail(PvdynStatus::NullPointer, "out is null"));
        }
        let model = load_model(text(json, "json")?)?;
        *out = Box::into_raw(Box::new(PvdynModel { inner: model }));
        Ok(())
    })
}

/// # Safety
/// `model` must be null or a handle from [`pvdyn_model_from_json`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn pvdyn_model_free(model: *mut PvdynModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Number of links, or 0 for a null handle.
///
/// # Safety
/// `model` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn pvdyn_model_num_links(model: *const PvdynModel) -> usize {
    model.as_ref().map_or(0, |m| m.inner.num_links())
}

/// Length of the configuration vector (7 for a floating base's position and
/// quaternion), or 0 for a null handle.
///
/// # Safety
/// `model` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn pvdyn_model_nq(model: *const PvdynModel) -> usize {
    model.as_ref().map_or(0, |m| m.inner.nq())
}

/// Degrees of freedom (length of velocity and torque vectors), or 0 for a
/// null handle.
///
/// # Safety
/// `model` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn pvdyn_model_nv(model: *const PvdynModel) -> usize {
    model.as_ref().map_or(0, |m| m.inner.n())
}

/// Writes the neutral configuration into `q` (length `nq`).
///
/// # Safety
/// `model` must be a live handle and `q` point to `q_len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn pvdyn_model_neutral(model: *const PvdynModel, q: *mut f64, q_len: usize) -> PvdynStatus {
    guard(|| {
        let model = &handle(model, "model")?.inner;
        output(q, q_len, model.nq(), "q")?.copy_from_slice(model.neutral_configuration().as_slice());
        Ok(())
    })
}

/// Parses a JSON document of explicit constraint rows against `model`.
///
/// # Safety
/// `model` must be a live handle, `json` a NUL-terminated string and `out`
/// a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn pvdyn_constraints_from_json(
    model: *const PvdynModel,
    json: *const c_char,
    out: *mut *mut PvdynConstraints,
) -> PvdynStatus {
    guard(|| {
        let model = &handle(model, "model")?.inner;
        if out.is_null() {
            return Err(fail(PvdynStatus::NullPointer, "out is null"));
        }
        let set = load_constraints(model, text(json, "json")?)?;
        *out = Box::into_raw(Box::new(PvdynConstraints { inner: set, nlinks: model.num_links() }));
        Ok(())
    })
}

/// # Safety
/// `constraints` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn pvdyn_constraints_free(constraints: *mut PvdynConstraints) {
    if !constraints.is_null() {
        drop(Box::from_raw(constraints));
    }
}

/// Total number of constraint rows, or 0 for a null handle.
///
/// # Safety
/// `constraints` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn pvdyn_constraints_rows(constraints: *const PvdynConstraints) -> usize {
    constraints.as_ref().map_or(0, |c| c.inner.m())
}

fn bound<'a>(model: &RobotModel, constraints: Option<&'a PvdynConstraints>, empty: &'a ConstraintSet) -> Result<&'a ConstraintSet, Failure> {
    match constraints {
        None => Ok(empty),
        Some(c) if c.nlinks == model.num_links() => {
            c.inner.validate(model).map_err(Error::from)?;
            Ok(&c.inner)
        }
        Some(_) => Err(fail(PvdynStatus::InvalidArgument, "constraint set was loaded for a different model")),
    }
}

/// Constrained forward dynamics. `constraints` may be null for an
/// unconstrained tree; `lambda` may be null, otherwise it receives the
/// multipliers (`lambda_len` must equal the row count, zero for ABA).
///
/// # Safety
/// Handles must be live; each array must hold the stated number of doubles.
#[no_mangle]
pub unsafe extern "C" fn pvdyn_forward_dynamics(
    model: *const PvdynModel,
    constraints: *const PvdynConstraints,
    solver: PvdynSolver,
    q: *const f64,
    q_len: usize,
    qd: *const f64,
    qd_len: usize,
    tau: *const f64,
    tau_len: usize,
    qdd: *mut f64,
    qdd_len: usize,
    lambda: *mut f64,
    lambda_len: usize,
) -> PvdynStatus {
    guard(|| {
        let model = &handle(model, "model")?.inner;
        let empty = ConstraintSet::new();
        let cs = bound(model, constraints.as_ref(), &empty)?;
        let mut state = RobotState::at_rest(model, input(q, q_len, model.nq(), "q")?);
        state.qd = input(qd, qd_len, model.n(), "qd")?;
        state.tau = input(tau, tau_len, model.n(), "tau")?;
        state.validate(model)?;
        let (acc, mult) = match solver {
            PvdynSolver::Aba => (aba(model, &state)?, DVector::zeros(0)),
            PvdynSolver::Pv => {
                let s = pv_solve(model, &state, cs)?;
                (s.qdd, s.lambda)
            }
            PvdynSolver::PvEarly => {
                let s = pv_early_solve(model, &state, cs)?;
                (s.qdd, s.lambda)
            }
            PvdynSolver::PvSoft => {
                let s = pv_soft_solve(model, &state, cs)?;
                (s.qdd, s.lambda)
            }
        };
        output(qdd, qdd_len, model.n(), "qdd")?.copy_from_slice(acc.as_slice());
        if !lambda.is_null() {
            output(lambda, lambda_len, mult.len(), "lambda")?.copy_from_slice(mult.as_slice());
        }
        Ok(())
    })
}

/// Inverse operational-space inertia `K M⁻¹ Kᵀ` at configuration `q`,
/// written row-major into `out` (`rows × rows` doubles).
///
/// # Safety
/// Handles must be live; `q` must hold `q_len` doubles and `out` `out_len`.
#[no_mangle]
pub unsafe extern "C" fn pvdyn_osim_inverse(
    model: *const PvdynModel,
    constraints: *const PvdynConstraints,
    q: *const f64,
    q_len: usize,
    out: *mut f64,
    out_len: usize,
) -> PvdynStatus {
    guard(|| {
        let model = &handle(model, "model")?.inner;
        let empty = ConstraintSet::new();
        let cs = bound(model, Some(handle(constraints, "constraints")?), &empty)?;
        let q = input(q, q_len, model.nq(), "q")?;
        let result = pv_osim(model, &q, cs)?;
        let inv = result.inverse();
        let m = inv.nrows();
        let dst = output(out, out_len, m * m, "out")?;
        for r in 0..m {
            for c in 0..m {
                dst[r * m + c] = inv[(r, c)];
            }
        }
        Ok(())
    })
}
