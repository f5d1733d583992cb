//! C ABI over `bethe_lab`.
//!
//! Objects are opaque handles created by `bl_*_new`/`bl_*_sample` style
//! functions and released with the matching `bl_*_free`. Every fallible call
//! returns a [`BlStatus`]; on failure a description is available from
//! [`bl_last_error`] on the same thread.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use bethe_lab::bp::{bethe_free_energy, bp_solve, marginal_from_messages, BpSolveReport, Init, MessageSet};
use bethe_lab::cavity::{popdyn_free_energy, PopDynConfig};
use bethe_lab::exact::Oracle;
use bethe_lab::graph::{sample_pairing_graph, sample_simple_graph, FactorGraph};
use bethe_lab::model::{check_pos, Model, ModelSpec, PosConfig};
use bethe_lab::numeric::rng_from_seed;
use bethe_lab::Error;

/// Status codes returned by every fallible function.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BlStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    InvalidModel = 3,
    SizeGuard = 4,
    RetryLimit = 5,
    RejectionCap = 6,
    ZeroWeight = 7,
    Degenerate = 8,
    Parse = 9,
    BufferTooSmall = 10,
    Panic = 11,
    Other = 12,
}

/// A model (family, arity, degree and parameters).
pub struct BlModel(Model);

/// A factor graph.
pub struct BlGraph(FactorGraph);

/// A belief-propagation run: messages and convergence data.
pub struct BlBp {
    msgs: MessageSet,
    report: BpSolveReport,
    bethe: f64,
}

/// Summary of a BP run.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct BlBpSummary {
    pub iterations: usize,
    pub residual: f64,
    pub converged: bool,
    /// Bethe approximation of ln Z at the final messages.
    pub bethe_log_z: f64,
}

/// A Monte Carlo estimate with its standard error.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct BlEstimate {
    pub estimate: f64,
    pub std_error: f64,
    pub draws: usize,
    pub rejected: usize,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("no interior nul");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> BlStatus {
    match e {
        Error::InvalidModel(_) => BlStatus::InvalidModel,
        Error::Divisibility { .. } | Error::OutOfRange(_) | Error::IndexMismatch => BlStatus::InvalidArgument,
        Error::SizeGuard { .. } => BlStatus::SizeGuard,
        Error::RetryLimit(_) => BlStatus::RetryLimit,
        Error::RejectionCap(_) => BlStatus::RejectionCap,
        Error::ZeroWeight => BlStatus::ZeroWeight,
        Error::Degenerate { .. } | Error::DegenerateJoin | Error::CavityDegree { .. } => BlStatus::Degenerate,
        Error::Parse(_) => BlStatus::Parse,
        Error::Lp(_) | Error::Io(_) => BlStatus::Other,
    }
}

struct Fail(BlStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail(status_of(&e), e.to_string())
    }
}

fn guard<F: FnOnce() -> Result<(), Fail>>(f: F) -> BlStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => BlStatus::Ok,
        Ok(Err(Fail(s, msg))) => {
            set_error(msg);
            s
        }
        Err(p) => {
            let msg = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            set_error(format!("panic: {msg}"));
            BlStatus::Panic
        }
    }
}

fn null(what: &str) -> Fail {
    Fail(BlStatus::NullPointer, format!("{what} is null"))
}

unsafe fn deref<'a, T>(p: *const T, what: &str) -> Result<&'a T, Fail> {
    // SAFETY: caller guarantees `p` is null or valid for reads.
    unsafe { p.as_ref() }.ok_or_else(|| null(what))
}

unsafe fn write_out<T>(out: *mut T, v: T, what: &str) -> Result<(), Fail> {
    if out.is_null() {
        return Err(null(what));
    }
    // SAFETY: non-null and, per the caller's contract, valid for writes.
    unsafe { out.write(v) };
    Ok(())
}

unsafe fn read_str<'a>(s: *const c_char, what: &str) -> Result<&'a str, Fail> {
    if s.is_null() {
        return Err(null(what));
    }
    // SAFETY: caller passes a nul-terminated string.
    unsafe { CStr::from_ptr(s) }
        .to_str()
        .map_err(|_| Fail(BlStatus::InvalidArgument, format!("{what} is not UTF-8")))
}

unsafe fn write_slice(out: *mut f64, len: usize, v: &[f64]) -> Result<(), Fail> {
    if out.is_null() {
        return Err(null("output buffer"));
    }
    if len < v.len() {
        return Err(Fail(BlStatus::BufferTooSmall, format!("buffer holds {len} values, need {}", v.len())));
    }
    // SAFETY: `out` is valid for `len >= v.len()` writes.
    unsafe { ptr::copy_nonoverlapping(v.as_ptr(), out, v.len()) };
    Ok(())
}

/// Message of the last failed call on this thread, or null. The pointer stays
/// valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn bl_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static nul-terminated string.
#[no_mangle]
pub extern "C" fn bl_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

fn boxed_model(out: *mut *mut BlModel, m: bethe_lab::Result<Model>) -> Result<(), Fail> {
    let m = m?;
    // SAFETY: forwarded from the exported function's contract.
    unsafe { write_out(out, Box::into_raw(Box::new(BlModel(m))), "out") }
}

/// k-spin model with Gaussian couplings.
///
/// # Safety
/// `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn bl_model_kspin(k: usize, d: usize, beta: f64, out: *mut *mut BlModel) -> BlStatus {
    guard(|| boxed_model(out, Model::kspin(k, d, beta)))
}

/// Antiferromagnetic Potts model.
///
/// # Safety
/// `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn bl_model_potts(q: usize, d: usize, beta: f64, out: *mut *mut BlModel) -> BlStatus {
    guard(|| boxed_model(out, Model::potts(q, d, beta)))
}

/// Random k-SAT at inverse temperature `beta`.
///
/// # Safety
/// `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn bl_model_ksat(k: usize, d: usize, beta: f64, out: *mut *mut BlModel) -> BlStatus {
    guard(|| boxed_model(out, Model::ksat(k, d, beta)))
}

/// Hard-core model with fugacity `lambda`.
///
/// # Safety
/// `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn bl_model_hardcore(d: usize, lambda: f64, out: *mut *mut BlModel) -> BlStatus {
    guard(|| boxed_model(out, Model::hardcore(d, lambda)))
}

/// Model from its TOML description.
///
/// # Safety
/// `toml` must be a nul-terminated string; `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn bl_model_from_toml(toml: *const c_char, out: *mut *mut BlModel) -> BlStatus {
    guard(|| {
        // SAFETY: forwarded from this function's contract.
        let s = unsafe { read_str(toml, "toml") }?;
        boxed_model(out, ModelSpec::from_toml(s).and_then(|spec| Model::from_spec(&spec)))
    })
}

/// Number of spins of the model, or 0 for a null handle.
///
/// # Safety
/// `model` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn bl_model_q(model: *const BlModel) -> usize {
    // SAFETY: caller contract.
    unsafe { model.as_ref() }.map_or(0, |m| m.0.q())
}

/// Releases a model. Null is ignored.
///
/// # Safety
/// `model` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn bl_model_free(model: *mut BlModel) {
    if !model.is_null() {
        // SAFETY: created by Box::into_raw in this crate.
        drop(unsafe { Box::from_raw(model) });
    }
}

/// Samples a graph with `n` variables from the pairing model, or from the
/// pairing model conditioned on simplicity when `simple` is set.
///
/// # Safety
/// `model` must be a live handle; `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn bl_graph_sample(
    model: *const BlModel,
    n: usize,
    seed: u64,
    simple: bool,
    out: *mut *mut BlGraph,
) -> BlStatus {
    guard(|| {
        // SAFETY: caller contract.
        let m = unsafe { deref(model, "model") }?;
        let mut rng = rng_from_seed(seed);
        let g = if simple { sample_simple_graph(&m.0, n, &mut rng, 100_000)? } else { sample_pairing_graph(&m.0, n, &mut rng)? };
        // SAFETY: caller contract.
        unsafe { write_out(out, Box::into_raw(Box::new(BlGraph(g))), "out") }
    })
}

/// Parses a graph in the text format written by [`bl_graph_to_text`].
///
/// # Safety
/// `text` must be a nul-terminated string; `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn bl_graph_from_text(text: *const c_char, out: *mut *mut BlGraph) -> BlStatus {
    guard(|| {
        // SAFETY: caller contract.
        let s = unsafe { read_str(text, "text") }?;
        let g = FactorGraph::from_text(s)?;
        // SAFETY: caller contract.
        unsafe { write_out(out, Box::into_raw(Box::new(BlGraph(g))), "out") }
    })
}

/// Writes the graph as nul-terminated text into `buf` of capacity `len`.
/// `needed` (optional) receives the required capacity including the nul;
/// pass a null `buf` to query it.
///
/// # Safety
/// `graph` must be a live handle; `buf` must be null or valid for `len`
/// bytes; `needed` must be null or valid for writes.
#[no_mangle]
pub unsafe extern "C" fn bl_graph_to_text(graph: *const BlGraph, buf: *mut c_char, len: usize, needed: *mut usize) -> BlStatus {
    guard(|| {
        // SAFETY: caller contract.
        let g = unsafe { deref(graph, "graph") }?;
        let text = g.0.to_text();
        let need = text.len() + 1;
        if !needed.is_null() {
            // SAFETY: non-null, caller contract.
            unsafe { needed.write(need) };
        }
        if buf.is_null() {
            return Ok(());
        }
        if len < need {
            return Err(Fail(BlStatus::BufferTooSmall, format!("buffer holds {len} bytes, need {need}")));
        }
        // SAFETY: `buf` is valid for `len >= need` bytes.
        unsafe {
            ptr::copy_nonoverlapping(text.as_ptr().cast::<c_char>(), buf, text.len());
            buf.add(text.len()).write(0);
        }
        Ok(())
    })
}

/// Number of variables, or 0 for a null handle.
///
/// # Safety
/// `graph` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn bl_graph_n(graph: *const BlGraph) -> usize {
    // SAFETY: caller contract.
    unsafe { graph.as_ref() }.map_or(0, |g| g.0.n())
}

/// Number of constraints, or 0 for a null handle.
///
/// # Safety
/// `graph` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn bl_graph_m(graph: *const BlGraph) -> usize {
    // SAFETY: caller contract.
    unsafe { graph.as_ref() }.map_or(0, |g| g.0.m())
}

/// Releases a graph. Null is ignored.
///
/// # Safety
/// `graph` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn bl_graph_free(graph: *mut BlGraph) {
    if !graph.is_null() {
        // SAFETY: created by Box::into_raw in this crate.
        drop(unsafe { Box::from_raw(graph) });
    }
}

/// Exact ln Z by enumeration. Fails with `SizeGuard` on large graphs.
///
/// # Safety
/// `graph` must be a live handle; `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn bl_exact_log_z(graph: *const BlGraph, out: *mut f64) -> BlStatus {
    guard(|| {
        // SAFETY: caller contract.
        let g = unsafe { deref(graph, "graph") }?;
        let z = Oracle::default().log_z(&g.0, None)?;
        // SAFETY: caller contract.
        unsafe { write_out(out, z, "out") }
    })
}

/// Exact marginal of variable `v` written to `out[0..q]`.
///
/// # Safety
/// `graph` must be a live handle; `out` must be valid for `len` writes.
#[no_mangle]
pub unsafe extern "C" fn bl_exact_marginal(graph: *const BlGraph, v: usize, out: *mut f64, len: usize) -> BlStatus {
    guard(|| {
        // SAFETY: caller contract.
        let g = unsafe { deref(graph, "graph") }?;
        if v >= g.0.n() {
            return Err(Fail(BlStatus::InvalidArgument, format!("variable {v} out of range")));
        }
        let m = Oracle::default().marginal(&g.0, v, None)?;
        // SAFETY: caller contract.
        unsafe { write_slice(out, len, &m) }
    })
}

/// Runs damped BP from uniform messages. The result handle owns the messages.
///
/// # Safety
/// `graph` must be a live handle; `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn bl_bp_run(
    graph: *const BlGraph,
    damping: f64,
    tol: f64,
    max_iter: usize,
    out: *mut *mut BlBp,
) -> BlStatus {
    guard(|| {
        // SAFETY: caller contract.
        let g = unsafe { deref(graph, "graph") }?;
        let (msgs, report) = bp_solve(&g.0, Init::Uniform, damping, tol, max_iter)?;
        let bethe = bethe_free_energy(&g.0, &msgs)?;
        // SAFETY: caller contract.
        unsafe { write_out(out, Box::into_raw(Box::new(BlBp { msgs, report, bethe })), "out") }
    })
}

/// Convergence data and the Bethe free energy of a BP run.
///
/// # Safety
/// `bp` must be a live handle; `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn bl_bp_summary(bp: *const BlBp, out: *mut BlBpSummary) -> BlStatus {
    guard(|| {
        // SAFETY: caller contract.
        let b = unsafe { deref(bp, "bp") }?;
        let s = BlBpSummary {
            iterations: b.report.iterations,
            residual: b.report.residual,
            converged: b.report.converged,
            bethe_log_z: b.bethe,
        };
        // SAFETY: caller contract.
        unsafe { write_out(out, s, "out") }
    })
}

/// BP marginal of variable `v` on the graph the run was made on.
///
/// # Safety
/// `graph` and `bp` must be live handles, `bp` produced from `graph`;
/// `out` must be valid for `len` writes.
#[no_mangle]
pub unsafe extern "C" fn bl_bp_marginal(graph: *const BlGraph, bp: *const BlBp, v: usize, out: *mut f64, len: usize) -> BlStatus {
    guard(|| {
        // SAFETY: caller contract.
        let (g, b) = unsafe { (deref(graph, "graph")?, deref(bp, "bp")?) };
        if b.msgs.num_edges() != g.0.num_edges() {
            return Err(Fail(BlStatus::InvalidArgument, "bp run belongs to a different graph".into()));
        }
        if v >= g.0.n() {
            return Err(Fail(BlStatus::InvalidArgument, format!("variable {v} out of range")));
        }
        let m = marginal_from_messages(&g.0, v, &b.msgs)?;
        // SAFETY: caller contract.
        unsafe { write_slice(out, len, &m) }
    })
}

/// Releases a BP run. Null is ignored.
///
/// # Safety
/// `bp` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn bl_bp_free(bp: *mut BlBp) {
    if !bp.is_null() {
        // SAFETY: created by Box::into_raw in this crate.
        drop(unsafe { Box::from_raw(bp) });
    }
}

/// Replica-symmetric free energy per variable by population dynamics.
///
/// # Safety
/// `model` must be a live handle; `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn bl_popdyn_free_energy(
    model: *const BlModel,
    size: usize,
    sweeps: usize,
    samples: usize,
    seed: u64,
    out: *mut BlEstimate,
) -> BlStatus {
    guard(|| {
        // SAFETY: caller contract.
        let m = unsafe { deref(model, "model") }?;
        let cfg = PopDynConfig { size, sweeps, damping: 0.0 };
        let b = popdyn_free_energy(&m.0, &cfg, samples, seed)?;
        let e = BlEstimate { estimate: b.estimate, std_error: b.stderr, draws: b.draws, rejected: b.rejected };
        // SAFETY: caller contract.
        unsafe { write_out(out, e, "out") }
    })
}

/// Fuzzes the positivity condition; `worst` receives the most negative value
/// found (nonnegative when the condition held on every trial).
///
/// # Safety
/// `model` must be a live handle; `worst` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn bl_check_pos(model: *const BlModel, trials: usize, ell_max: usize, seed: u64, worst: *mut f64) -> BlStatus {
    guard(|| {
        // SAFETY: caller contract.
        let m = unsafe { deref(model, "model") }?;
        let cfg = PosConfig { trials, ell_max, ..PosConfig::default() };
        let r = check_pos(&m.0, &cfg, &mut rng_from_seed(seed))?;
        // SAFETY: caller contract.
        unsafe { write_out(worst, r.worst_violation, "worst") }
    })
}
