//! C ABI over the tiltpath solvers.
//!
//! Every function returns a [`TpStatus`]. On failure the message is kept in
//! a thread-local slot readable with [`tp_last_error`]. Handles are opaque
//! and must be released with the matching `*_free` function.

use std::cell::RefCell;
use std::ffi::{c_char, CStr};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use tiltpath::config::ExperimentConfig;
use tiltpath::controlsolver::ControlSolution;
use tiltpath::densities::GaussianMixture;
use tiltpath::experiment::{run_command, Command, Experiment};
use tiltpath::refsolver::ReferenceSolution;
use tiltpath::transport::{euler_transport, mccann_map, VelocityField};
use tiltpath::Error;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TpStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Config = 3,
    Solver = 4,
    Io = 5,
    Panic = 6,
}

/// Gaussian mixture.
pub struct TpMixture {
    inner: GaussianMixture,
}

/// Validated experiment: path, collocation grid, kernel and samples.
pub struct TpExperiment {
    inner: Experiment,
}

/// Solved reference potential.
pub struct TpReference {
    inner: ReferenceSolution,
}

/// Solved control problem (potential and tilt).
pub struct TpControl {
    inner: ControlSolution,
}

thread_local! {
    static LAST_ERROR: RefCell<String> = const { RefCell::new(String::new()) };
}

fn set_error(msg: String) {
    LAST_ERROR.with(|e| *e.borrow_mut() = msg);
}

fn status_of(e: &Error) -> TpStatus {
    match e {
        Error::Config(_) => TpStatus::Config,
        Error::InvalidMixture(_) | Error::InvalidArgument(_) | Error::DimensionMismatch { .. } => {
            TpStatus::InvalidArgument
        }
        Error::Io { .. } => TpStatus::Io,
        _ => TpStatus::Solver,
    }
}

fn guard(f: impl FnOnce() -> Result<(), (TpStatus, String)>) -> TpStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => TpStatus::Ok,
        Ok(Err((status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("panic inside tiltpath".into());
            TpStatus::Panic
        }
    }
}

fn lib(e: Error) -> (TpStatus, String) {
    (status_of(&e), e.to_string())
}

fn null(what: &str) -> (TpStatus, String) {
    (TpStatus::NullPointer, format!("{what} is null"))
}

unsafe fn deref<'a, T>(p: *const T, what: &str) -> Result<&'a T, (TpStatus, String)> {
    p.as_ref().ok_or_else(|| null(what))
}

unsafe fn slice<'a>(p: *const f64, n: usize, what: &str) -> Result<&'a [f64], (TpStatus, String)> {
    if n == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(p, n))
}

unsafe fn slice_mut<'a>(p: *mut f64, n: usize, what: &str) -> Result<&'a mut [f64], (TpStatus, String)> {
    if n == 0 {
        return Ok(&mut []);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts_mut(p, n))
}

unsafe fn text<'a>(p: *const c_char, what: &str) -> Result<&'a str, (TpStatus, String)> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| (TpStatus::InvalidArgument, format!("{what} is not UTF-8")))
}

unsafe fn put<T>(out: *mut T, value: T, what: &str) -> Result<(), (TpStatus, String)> {
    if out.is_null() {
        return Err(null(what));
    }
    out.write(value);
    Ok(())
}

/// Copies the last error message of this thread into `buf` (NUL-terminated,
/// truncated to `len`). Returns the full message length without the NUL.
///
/// # Safety
/// `buf` must be null or valid for `len` bytes.
#[no_mangle]
pub unsafe extern "C" fn tp_last_error(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| {
        let msg = e.borrow();
        if !buf.is_null() && len > 0 {
            let n = msg.len().min(len - 1);
            ptr::copy_nonoverlapping(msg.as_ptr().cast::<c_char>(), buf, n);
            *buf.add(n) = 0;
        }
        msg.len()
    })
}

/// # Safety
/// The three arrays must hold `n` values; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn tp_mixture_new(
    weights: *const f64,
    means: *const f64,
    stds: *const f64,
    n: usize,
    out: *mut *mut TpMixture,
) -> TpStatus {
    guard(|| {
        let w = slice(weights, n, "weights")?;
        let m = slice(means, n, "means")?;
        let s = slice(stds, n, "stds")?;
        let triples: Vec<(f64, f64, f64)> = (0..n).map(|i| (w[i], m[i], s[i])).collect();
        let inner = GaussianMixture::from_triples(&triples).map_err(lib)?;
        put(out, Box::into_raw(Box::new(TpMixture { inner })), "out")
    })
}

/// # Safety
/// `m` must be null or a handle from [`tp_mixture_new`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn tp_mixture_free(m: *mut TpMixture) {
    if !m.is_null() {
        drop(Box::from_raw(m));
    }
}

/// # Safety
/// `m` must be a live handle; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn tp_mixture_pdf(m: *const TpMixture, x: f64, out: *mut f64) -> TpStatus {
    guard(|| put(out, deref(m, "mixture")?.inner.pdf(x), "out"))
}

/// # Safety
/// `m` must be a live handle; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn tp_mixture_cdf(m: *const TpMixture, x: f64, out: *mut f64) -> TpStatus {
    guard(|| put(out, deref(m, "mixture")?.inner.cdf(x), "out"))
}

/// # Safety
/// `m` must be a live handle; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn tp_mixture_quantile(m: *const TpMixture, p: f64, out: *mut f64) -> TpStatus {
    guard(|| put(out, deref(m, "mixture")?.inner.quantile(p).map_err(lib)?, "out"))
}

/// Fills `out[0..n]` with draws seeded by `seed`.
///
/// # Safety
/// `m` must be a live handle; `out` valid for `n` values.
#[no_mangle]
pub unsafe extern "C" fn tp_mixture_sample(m: *const TpMixture, n: usize, seed: u64, out: *mut f64) -> TpStatus {
    guard(|| {
        let m = deref(m, "mixture")?;
        slice_mut(out, n, "out")?.copy_from_slice(&m.inner.sample(n, seed));
        Ok(())
    })
}

/// Monotone map pushing `eta` to `pi`.
///
/// # Safety
/// Both handles live; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn tp_mccann_map(
    eta: *const TpMixture,
    pi: *const TpMixture,
    x: f64,
    out: *mut f64,
) -> TpStatus {
    guard(|| {
        let (e, p) = (deref(eta, "eta")?, deref(pi, "pi")?);
        put(out, mccann_map(&e.inner, &p.inner, x).map_err(lib)?, "out")
    })
}

/// Parses and validates a JSON experiment configuration. Missing keys take
/// the default two-mode experiment values.
///
/// # Safety
/// `json` must be a NUL-terminated string; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn tp_experiment_from_json(json: *const c_char, out: *mut *mut TpExperiment) -> TpStatus {
    guard(|| {
        let cfg = ExperimentConfig::from_json(text(json, "json")?).map_err(lib)?;
        let inner = Experiment::new(cfg).map_err(lib)?;
        put(out, Box::into_raw(Box::new(TpExperiment { inner })), "out")
    })
}

/// # Safety
/// `e` must be null or a live experiment handle.
#[no_mangle]
pub unsafe extern "C" fn tp_experiment_free(e: *mut TpExperiment) {
    if !e.is_null() {
        drop(Box::from_raw(e));
    }
}

/// Number of initial particles drawn from the reference.
///
/// # Safety
/// `e` live; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn tp_experiment_n_particles(e: *const TpExperiment, out: *mut usize) -> TpStatus {
    guard(|| put(out, deref(e, "experiment")?.inner.samples().initial.len(), "out"))
}

/// # Safety
/// `e` live; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn tp_reference_solve(e: *const TpExperiment, out: *mut *mut TpReference) -> TpStatus {
    guard(|| {
        let inner = deref(e, "experiment")?.inner.solve_reference().map_err(lib)?;
        put(out, Box::into_raw(Box::new(TpReference { inner })), "out")
    })
}

/// # Safety
/// `r` must be null or a live reference handle.
#[no_mangle]
pub unsafe extern "C" fn tp_reference_free(r: *mut TpReference) {
    if !r.is_null() {
        drop(Box::from_raw(r));
    }
}

/// `u(x, t)` and the velocity `du/dx(x, t)`.
///
/// # Safety
/// `r` live; outputs writable.
#[no_mangle]
pub unsafe extern "C" fn tp_reference_eval(
    r: *const TpReference,
    x: f64,
    t: f64,
    u: *mut f64,
    du: *mut f64,
) -> TpStatus {
    guard(|| {
        let (uv, dv) = deref(r, "reference")?.inner.eval((x, t));
        put(u, uv, "u")?;
        put(du, dv, "du")
    })
}

/// Space-time RKHS norm of the potential.
///
/// # Safety
/// `r` live; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn tp_reference_norm(r: *const TpReference, out: *mut f64) -> TpStatus {
    guard(|| put(out, deref(r, "reference")?.inner.norm(), "out"))
}

/// # Safety
/// `e` live; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn tp_control_solve(e: *const TpExperiment, out: *mut *mut TpControl) -> TpStatus {
    guard(|| {
        let inner = deref(e, "experiment")?.inner.solve_control().map_err(lib)?;
        put(out, Box::into_raw(Box::new(TpControl { inner })), "out")
    })
}

/// # Safety
/// `c` must be null or a live control handle.
#[no_mangle]
pub unsafe extern "C" fn tp_control_free(c: *mut TpControl) {
    if !c.is_null() {
        drop(Box::from_raw(c));
    }
}

/// `u(x, t)`, `du/dx(x, t)` and the tilt `g(x, t)`.
///
/// # Safety
/// `c` live; outputs writable.
#[no_mangle]
pub unsafe extern "C" fn tp_control_eval(
    c: *const TpControl,
    x: f64,
    t: f64,
    u: *mut f64,
    du: *mut f64,
    g: *mut f64,
) -> TpStatus {
    guard(|| {
        let (uv, dv, gv) = deref(c, "control")?.inner.eval((x, t));
        put(u, uv, "u")?;
        put(du, dv, "du")?;
        put(g, gv, "g")
    })
}

/// Space-time RKHS norms of `u` and `g`, LM iterations, and whether the
/// solver stopped before the iteration cap.
///
/// # Safety
/// `c` live; outputs writable.
#[no_mangle]
pub unsafe extern "C" fn tp_control_summary(
    c: *const TpControl,
    norm_u: *mut f64,
    norm_g: *mut f64,
    iterations: *mut usize,
    converged: *mut bool,
) -> TpStatus {
    guard(|| {
        let s = &deref(c, "control")?.inner;
        let (nu, ng) = s.norms();
        put(norm_u, nu, "norm_u")?;
        put(norm_g, ng, "norm_g")?;
        put(iterations, s.report.iterations, "iterations")?;
        put(converged, s.report.converged, "converged")
    })
}

fn transport(v: &dyn VelocityField, init: &[f64], dt: f64, out: &mut [f64]) -> Result<(), (TpStatus, String)> {
    let tr = euler_transport(v, init, dt).map_err(lib)?;
    out.copy_from_slice(&tr.terminal());
    Ok(())
}

/// Forward-Euler transport of `n` particles under the reference velocity;
/// terminal positions go to `out`.
///
/// # Safety
/// `r` live; `init` and `out` valid for `n` values.
#[no_mangle]
pub unsafe extern "C" fn tp_reference_transport(
    r: *const TpReference,
    init: *const f64,
    n: usize,
    dt: f64,
    out: *mut f64,
) -> TpStatus {
    guard(|| {
        let r = deref(r, "reference")?;
        transport(&r.inner.velocity_field(), slice(init, n, "init")?, dt, slice_mut(out, n, "out")?)
    })
}

/// As [`tp_reference_transport`] with the learned velocity.
///
/// # Safety
/// `c` live; `init` and `out` valid for `n` values.
#[no_mangle]
pub unsafe extern "C" fn tp_control_transport(
    c: *const TpControl,
    init: *const f64,
    n: usize,
    dt: f64,
    out: *mut f64,
) -> TpStatus {
    guard(|| {
        let c = deref(c, "control")?;
        transport(&c.inner.velocity_field(), slice(init, n, "init")?, dt, slice_mut(out, n, "out")?)
    })
}

/// Runs a CLI command (`reference`, `learn`, `mccann` or `all`) with the
/// configuration file at `config_path`, writing into `out_dir`.
///
/// # Safety
/// All strings NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn tp_run(command: *const c_char, config_path: *const c_char, out_dir: *const c_char) -> TpStatus {
    guard(|| {
        let cmd = match text(command, "command")? {
            "reference" => Command::Reference,
            "learn" => Command::Learn,
            "mccann" => Command::Mccann,
            "all" => Command::All,
            other => return Err((TpStatus::InvalidArgument, format!("unknown command {other:?}"))),
        };
        let cfg = ExperimentConfig::load(Path::new(text(config_path, "config_path")?)).map_err(lib)?;
        run_command(cmd, cfg, Path::new(text(out_dir, "out_dir")?)).map_err(lib)?;
        Ok(())
    })
}
