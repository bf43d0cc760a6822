//! C ABI for flowdim.
//!
//! Models and measures are opaque handles created by `flowdim_*_new`-style
//! constructors and released with the matching `_free`. Every fallible call
//! returns a `FlowdimStatus`; on failure `flowdim_last_error` describes the
//! most recent error on the calling thread.

#![allow(clippy::missing_safety_doc)]

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use flowdim::config::{preset, Model, ModelConfig};
use flowdim::fluctuation::{green_kubo_covariance, LagPolicy};
use flowdim::solver::{bowen_root, solve_dimension_two, Presentation, SolveOptions};
use flowdim::suspension::flow_stats;
use flowdim::Error;

/// Result codes. The nonzero values agree with the CLI exit codes where
/// both exist.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FlowdimStatus {
    Ok = 0,
    NullPointer = 1,
    Validation = 2,
    Infeasible = 3,
    Numerical = 4,
    InvalidUtf8 = 5,
    BufferTooSmall = 6,
    Panic = 7,
}

/// Opaque validated model.
pub struct FlowdimModel {
    model: Model,
}

/// Opaque Markov measure together with the model presentation it lives on.
pub struct FlowdimMeasure {
    model: Model,
}

/// Invariants of the suspension flow under a measure.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct FlowdimStats {
    pub h_flow: f64,
    pub lambda: f64,
    pub dim: f64,
    pub a: f64,
    pub b: f64,
    pub roof_mean: f64,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).ok());
}

fn fail(status: FlowdimStatus, msg: impl Into<String>) -> FlowdimStatus {
    set_error(msg);
    status
}

fn from_error(e: &Error) -> FlowdimStatus {
    let status = match e {
        Error::Infeasible { .. } => FlowdimStatus::Infeasible,
        Error::Numerical(_) => FlowdimStatus::Numerical,
        _ => FlowdimStatus::Validation,
    };
    fail(status, e.to_string())
}

fn guard(f: impl FnOnce() -> FlowdimStatus) -> FlowdimStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(s) => {
            if s == FlowdimStatus::Ok {
                LAST_ERROR.with(|e| *e.borrow_mut() = None);
            }
            s
        }
        Err(_) => fail(FlowdimStatus::Panic, "internal panic"),
    }
}

unsafe fn read_str<'a>(s: *const c_char) -> Result<&'a str, FlowdimStatus> {
    if s.is_null() {
        return Err(fail(FlowdimStatus::NullPointer, "null string argument"));
    }
    CStr::from_ptr(s).to_str().map_err(|_| fail(FlowdimStatus::InvalidUtf8, "string argument is not UTF-8"))
}

fn build_model(cfg: ModelConfig, out: *mut *mut FlowdimModel) -> FlowdimStatus {
    match cfg.validate() {
        Ok(model) => {
            unsafe { *out = Box::into_raw(Box::new(FlowdimModel { model })) };
            FlowdimStatus::Ok
        }
        Err(issues) => {
            let msg = issues.iter().map(|i| i.message.as_str()).collect::<Vec<_>>().join("; ");
            fail(FlowdimStatus::Validation, msg)
        }
    }
}

/// Message for the last failed call on this thread, or NULL. The pointer
/// stays valid until the next flowdim call on the same thread.
#[no_mangle]
pub extern "C" fn flowdim_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn flowdim_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr() as *const c_char
}

/// Parses and validates a JSON model document.
#[no_mangle]
pub unsafe extern "C" fn flowdim_model_from_json(json: *const c_char, out: *mut *mut FlowdimModel) -> FlowdimStatus {
    guard(|| {
        if out.is_null() {
            return fail(FlowdimStatus::NullPointer, "null output pointer");
        }
        *out = ptr::null_mut();
        let text = match read_str(json) {
            Ok(t) => t,
            Err(s) => return s,
        };
        match ModelConfig::parse(text) {
            Ok(cfg) => build_model(cfg, out),
            Err(e) => from_error(&e),
        }
    })
}

/// Loads a bundled model by name.
#[no_mangle]
pub unsafe extern "C" fn flowdim_model_from_preset(name: *const c_char, out: *mut *mut FlowdimModel) -> FlowdimStatus {
    guard(|| {
        if out.is_null() {
            return fail(FlowdimStatus::NullPointer, "null output pointer");
        }
        *out = ptr::null_mut();
        let name = match read_str(name) {
            Ok(t) => t,
            Err(s) => return s,
        };
        match preset(name) {
            Some(cfg) => build_model(cfg, out),
            None => fail(FlowdimStatus::Validation, format!("unknown preset {name}")),
        }
    })
}

#[no_mangle]
pub unsafe extern "C" fn flowdim_model_free(model: *mut FlowdimModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Number of symbols, or 0 for NULL.
#[no_mangle]
pub unsafe extern "C" fn flowdim_model_alphabet_size(model: *const FlowdimModel) -> usize {
    model.as_ref().map_or(0, |m| m.model.sft.alphabet_size())
}

/// Bowen root of `F^u`: the zero of `s -> P(-s F^u)`.
#[no_mangle]
pub unsafe extern "C" fn flowdim_model_bowen_root(model: *const FlowdimModel, out: *mut f64) -> FlowdimStatus {
    guard(|| {
        let (Some(m), false) = (model.as_ref(), out.is_null()) else {
            return fail(FlowdimStatus::NullPointer, "null argument");
        };
        let m = &m.model;
        let ell = m.fu.depth().saturating_sub(1).max(1);
        let root = Presentation::new(&m.sft, &m.fu, &m.roof, ell).and_then(|p| bowen_root(&p.sft, &p.fu));
        match root {
            Ok(s) => {
                *out = s;
                FlowdimStatus::Ok
            }
            Err(e) => from_error(&e),
        }
    })
}

/// Solves for a Markov measure of dimension two. `tol <= 0` selects the
/// default tolerance.
#[no_mangle]
pub unsafe extern "C" fn flowdim_solve(
    model: *const FlowdimModel,
    tol: f64,
    out: *mut *mut FlowdimMeasure,
) -> FlowdimStatus {
    guard(|| {
        let (Some(m), false) = (model.as_ref(), out.is_null()) else {
            return fail(FlowdimStatus::NullPointer, "null argument");
        };
        *out = ptr::null_mut();
        let m = &m.model;
        let mut opts = SolveOptions::default();
        if tol > 0.0 {
            opts.tol = tol;
        }
        let solved = solve_dimension_two(&m.sft, &m.fu, &m.roof, &opts).and_then(|r| {
            let mut presented = if r.ell_used > 1 { m.recode(r.ell_used)?.1 } else { m.clone() };
            presented.markov = Some(r.measure);
            Ok(presented)
        });
        match solved {
            Ok(model) => {
                *out = Box::into_raw(Box::new(FlowdimMeasure { model }));
                FlowdimStatus::Ok
            }
            Err(e) => from_error(&e),
        }
    })
}

/// The Markov matrix stored in the model document.
#[no_mangle]
pub unsafe extern "C" fn flowdim_measure_from_model(
    model: *const FlowdimModel,
    out: *mut *mut FlowdimMeasure,
) -> FlowdimStatus {
    guard(|| {
        let (Some(m), false) = (model.as_ref(), out.is_null()) else {
            return fail(FlowdimStatus::NullPointer, "null argument");
        };
        *out = ptr::null_mut();
        if m.model.markov.is_none() {
            return fail(FlowdimStatus::Validation, "model has no markov block");
        }
        *out = Box::into_raw(Box::new(FlowdimMeasure { model: m.model.clone() }));
        FlowdimStatus::Ok
    })
}

#[no_mangle]
pub unsafe extern "C" fn flowdim_measure_free(measure: *mut FlowdimMeasure) {
    if !measure.is_null() {
        drop(Box::from_raw(measure));
    }
}

/// Alphabet size of the presentation the measure lives on, or 0 for NULL.
#[no_mangle]
pub unsafe extern "C" fn flowdim_measure_size(measure: *const FlowdimMeasure) -> usize {
    measure.as_ref().map_or(0, |m| m.model.sft.alphabet_size())
}

/// Copies the transition matrix, row-major, into `buf` of `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn flowdim_measure_matrix(measure: *const FlowdimMeasure, buf: *mut f64, len: usize) -> FlowdimStatus {
    guard(|| {
        let (Some(m), false) = (measure.as_ref(), buf.is_null()) else {
            return fail(FlowdimStatus::NullPointer, "null argument");
        };
        let rows = m.model.markov.as_ref().expect("measure handle carries a measure").rows();
        let n = rows.len();
        if len < n * n {
            return fail(FlowdimStatus::BufferTooSmall, format!("need {} doubles, got {len}", n * n));
        }
        let out = std::slice::from_raw_parts_mut(buf, n * n);
        for (dst, src) in out.iter_mut().zip(rows.iter().flatten()) {
            *dst = *src;
        }
        FlowdimStatus::Ok
    })
}

#[no_mangle]
pub unsafe extern "C" fn flowdim_measure_stats(measure: *const FlowdimMeasure, out: *mut FlowdimStats) -> FlowdimStatus {
    guard(|| {
        let (Some(m), false) = (measure.as_ref(), out.is_null()) else {
            return fail(FlowdimStatus::NullPointer, "null argument");
        };
        let model = &m.model;
        match flow_stats(model.markov.as_ref().unwrap(), &model.roof, &model.fu) {
            Ok(s) => {
                *out = FlowdimStats {
                    h_flow: s.h_flow,
                    lambda: s.lambda,
                    dim: s.dim,
                    a: s.a,
                    b: s.b,
                    roof_mean: s.roof_mean,
                };
                FlowdimStatus::Ok
            }
            Err(e) => from_error(&e),
        }
    })
}

/// Exact fluctuation covariance of `(-G - a, F^u - b)`, written row-major
/// into `out[4]`.
#[no_mangle]
pub unsafe extern "C" fn flowdim_measure_covariance(measure: *const FlowdimMeasure, out: *mut f64) -> FlowdimStatus {
    guard(|| {
        let (Some(m), false) = (measure.as_ref(), out.is_null()) else {
            return fail(FlowdimStatus::NullPointer, "null argument");
        };
        let model = &m.model;
        match green_kubo_covariance(model.markov.as_ref().unwrap(), &model.fu, &LagPolicy::default()) {
            Ok(q) => {
                let dst = std::slice::from_raw_parts_mut(out, 4);
                dst.copy_from_slice(&[q.q[0][0], q.q[0][1], q.q[1][0], q.q[1][1]]);
                FlowdimStatus::Ok
            }
            Err(e) => from_error(&e),
        }
    })
}

/// The measure embedded in its model as a JSON document. Release with
/// `flowdim_string_free`.
#[no_mangle]
pub unsafe extern "C" fn flowdim_measure_to_json(measure: *const FlowdimMeasure, out: *mut *mut c_char) -> FlowdimStatus {
    guard(|| {
        let (Some(m), false) = (measure.as_ref(), out.is_null()) else {
            return fail(FlowdimStatus::NullPointer, "null argument");
        };
        *out = ptr::null_mut();
        let text = m.model.to_config(None).to_json_pretty();
        match CString::new(text) {
            Ok(s) => {
                *out = s.into_raw();
                FlowdimStatus::Ok
            }
            Err(_) => fail(FlowdimStatus::Numerical, "document contains NUL"),
        }
    })
}

#[no_mangle]
pub unsafe extern "C" fn flowdim_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}
