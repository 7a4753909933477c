//! C interface to the `edsl` library.
//!
//! Datasets and run traces are opaque handles released with their `_free`
//! functions. Every fallible call returns an `EdslStatus`; on failure
//! `edsl_last_error` describes what went wrong on the calling thread.

use std::cell::RefCell;
use std::ffi::{c_char, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;
use std::slice;

use edsl::baselines::noise_scale;
use edsl::datagen::{generate, Conditioning, SynthConfig};
use edsl::protocol::{run_edsl, EdslSettings, LambdaSchedule, RunTrace};
use edsl::prox_solver::SolverConfig;
use edsl::{Dataset, Error, GroundTruth, LossSpec, Matrix, Shard, Task};

/// Outcome of a call. Nonzero values match the command-line exit codes.
#[repr(C)]
#[allow(non_camel_case_types)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EdslStatus {
    EDSL_OK = 0,
    EDSL_NULL_POINTER = 1,
    EDSL_CONFIG_ERROR = 2,
    EDSL_DATA_ERROR = 3,
    EDSL_NUMERIC_ERROR = 4,
    EDSL_TRANSPORT_ERROR = 5,
    EDSL_PANIC = 6,
}

/// Schedule selector for `EdslRunSettings::schedule`.
pub const EDSL_SCHEDULE_PRACTICAL: u32 = 0;
pub const EDSL_SCHEDULE_FIXED: u32 = 1;

/// Shards plus, for generated data, the true parameter.
pub struct EdslDataset {
    dataset: Dataset,
    truth: Option<GroundTruth>,
}

/// Per-round iterates and costs of a run.
pub struct EdslTrace {
    trace: RunTrace,
}

#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct EdslRunSettings {
    /// `EDSL_SCHEDULE_PRACTICAL` or `EDSL_SCHEDULE_FIXED`.
    pub schedule: u32,
    /// Practical scale; a value <= 0 selects twice the estimated noise level.
    pub c: f64,
    /// Practical decay in (0, 1].
    pub decay: f64,
    /// Level for the fixed schedule.
    pub lambda: f64,
    pub tol: f64,
    pub max_iter: usize,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("interior nul removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> EdslStatus {
    match e.exit_code() {
        2 => EdslStatus::EDSL_CONFIG_ERROR,
        4 => EdslStatus::EDSL_NUMERIC_ERROR,
        5 => EdslStatus::EDSL_TRANSPORT_ERROR,
        _ => EdslStatus::EDSL_DATA_ERROR,
    }
}

fn guard<F: FnOnce() -> Result<(), Error>>(f: F) -> EdslStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => EdslStatus::EDSL_OK,
        Ok(Err(e)) => {
            set_error(e.to_string());
            status_of(&e)
        }
        Err(_) => {
            set_error("internal panic".into());
            EdslStatus::EDSL_PANIC
        }
    }
}

fn null_error(what: &str) -> EdslStatus {
    set_error(format!("{what} is null"));
    EdslStatus::EDSL_NULL_POINTER
}

fn task_of(classification: i32) -> Task {
    if classification != 0 {
        Task::Classification
    } else {
        Task::Regression
    }
}

/// Message of the last failed call on this thread, or null. The pointer
/// stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn edsl_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Synthetic data with a Toeplitz design (`ill` != 0 selects the slowly
/// decaying covariance).
#[no_mangle]
pub extern "C" fn edsl_dataset_generate(
    n_per_machine: usize,
    p: usize,
    m: usize,
    s: usize,
    ill: i32,
    classification: i32,
    noise_sigma: f64,
    seed: u64,
    out: *mut *mut EdslDataset,
) -> EdslStatus {
    if out.is_null() {
        return null_error("out");
    }
    guard(|| {
        let cfg = SynthConfig {
            n_per_machine,
            p,
            m,
            s,
            conditioning: if ill != 0 { Conditioning::Ill } else { Conditioning::Well },
            task: task_of(classification),
            noise_sigma,
            seed,
        };
        let (dataset, truth) = generate(&cfg)?;
        let handle = Box::new(EdslDataset { dataset, truth: Some(truth) });
        // SAFETY: `out` was checked non-null; the caller provides writable storage.
        unsafe { *out = Box::into_raw(handle) };
        Ok(())
    })
}

/// Builds a dataset from caller memory: `xs` holds `m * n * p` values,
/// machine by machine, each machine's rows in row-major order; `ys` holds
/// `m * n` responses in the same order.
///
/// # Safety
/// `xs` and `ys` must point to at least `m * n * p` and `m * n` readable doubles.
#[no_mangle]
pub unsafe extern "C" fn edsl_dataset_from_arrays(
    xs: *const f64,
    ys: *const f64,
    m: usize,
    n: usize,
    p: usize,
    classification: i32,
    out: *mut *mut EdslDataset,
) -> EdslStatus {
    if xs.is_null() || ys.is_null() || out.is_null() {
        return null_error("xs, ys or out");
    }
    guard(|| {
        let rows = m.checked_mul(n).ok_or_else(|| Error::Config("m * n overflows".into()))?;
        let cells = rows.checked_mul(p).ok_or_else(|| Error::Config("m * n * p overflows".into()))?;
        if rows == 0 || p == 0 {
            return Err(Error::Config("m, n and p must be positive".into()));
        }
        // SAFETY: lengths are the caller's contract.
        let (xs, ys) = unsafe { (slice::from_raw_parts(xs, cells), slice::from_raw_parts(ys, rows)) };
        let task = task_of(classification);
        let shards = (0..m)
            .map(|j| {
                let x = Matrix::new(n, p, xs[j * n * p..(j + 1) * n * p].to_vec())?;
                Shard::new(j, x, ys[j * n..(j + 1) * n].to_vec(), task)
            })
            .collect::<Result<Vec<_>, Error>>()?;
        let handle = Box::new(EdslDataset { dataset: Dataset::new(shards, task)?, truth: None });
        // SAFETY: checked non-null above.
        unsafe { *out = Box::into_raw(handle) };
        Ok(())
    })
}

/// # Safety
/// `dataset` must be null or a handle from this library not yet freed.
#[no_mangle]
pub unsafe extern "C" fn edsl_dataset_free(dataset: *mut EdslDataset) {
    if !dataset.is_null() {
        // SAFETY: ownership returns from the caller.
        drop(unsafe { Box::from_raw(dataset) });
    }
}

/// Number of machines, or 0 for a null handle.
///
/// # Safety
/// `dataset` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn edsl_dataset_machines(dataset: *const EdslDataset) -> usize {
    unsafe { dataset.as_ref() }.map_or(0, |d| d.dataset.m())
}

/// Dimension p, or 0 for a null handle.
///
/// # Safety
/// `dataset` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn edsl_dataset_dim(dataset: *const EdslDataset) -> usize {
    unsafe { dataset.as_ref() }.map_or(0, |d| d.dataset.p())
}

/// Copies the true parameter into `out` (`len` must equal p). Fails for
/// datasets built from arrays.
///
/// # Safety
/// `dataset` must be a live handle and `out` must hold `len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn edsl_dataset_truth(dataset: *const EdslDataset, out: *mut f64, len: usize) -> EdslStatus {
    let Some(d) = (unsafe { dataset.as_ref() }) else {
        return null_error("dataset");
    };
    if out.is_null() {
        return null_error("out");
    }
    guard(|| {
        let truth = d.truth.as_ref().ok_or_else(|| Error::Data("dataset has no known truth".into()))?;
        copy_out(truth.beta_star(), out, len)
    })
}

fn copy_out(values: &[f64], out: *mut f64, len: usize) -> Result<(), Error> {
    if len != values.len() {
        return Err(Error::dim(values.len(), len));
    }
    // SAFETY: caller guarantees `len` writable doubles at `out`.
    unsafe { slice::from_raw_parts_mut(out, len) }.copy_from_slice(values);
    Ok(())
}

/// Practical schedule with automatic scale, default solver tolerances.
#[no_mangle]
pub extern "C" fn edsl_settings_default() -> EdslRunSettings {
    let solver = SolverConfig::default();
    EdslRunSettings {
        schedule: EDSL_SCHEDULE_PRACTICAL,
        c: 0.0,
        decay: edsl::protocol::schedule::DEFAULT_DECAY,
        lambda: 0.0,
        tol: solver.tol,
        max_iter: solver.max_iter,
    }
}

/// Runs `rounds` rounds of the protocol with workers on local threads.
///
/// # Safety
/// `dataset` must be a live handle, `settings` readable, `out` writable.
#[no_mangle]
pub unsafe extern "C" fn edsl_run(
    dataset: *const EdslDataset,
    settings: *const EdslRunSettings,
    rounds: u32,
    out: *mut *mut EdslTrace,
) -> EdslStatus {
    let Some(d) = (unsafe { dataset.as_ref() }) else {
        return null_error("dataset");
    };
    let Some(s) = (unsafe { settings.as_ref() }).copied() else {
        return null_error("settings");
    };
    if out.is_null() {
        return null_error("out");
    }
    guard(|| {
        let solver = SolverConfig { tol: s.tol, max_iter: s.max_iter, ..SolverConfig::default() };
        solver.validate()?;
        let spec = LossSpec::for_task(d.dataset.task());
        let schedule = match s.schedule {
            EDSL_SCHEDULE_PRACTICAL => {
                let c = if s.c > 0.0 { s.c } else { 2.0 * noise_scale(d.dataset.master(), &spec, &solver)? };
                LambdaSchedule::Practical { c, gamma: s.decay }
            }
            EDSL_SCHEDULE_FIXED => LambdaSchedule::Fixed { lambda: s.lambda },
            other => return Err(Error::Config(format!("unknown schedule {other}"))),
        };
        let trace = run_edsl(&d.dataset, spec, EdslSettings { schedule, solver }, rounds, d.truth.as_ref(), None)?;
        // SAFETY: checked non-null above.
        unsafe { *out = Box::into_raw(Box::new(EdslTrace { trace })) };
        Ok(())
    })
}

/// # Safety
/// `trace` must be null or a handle from this library not yet freed.
#[no_mangle]
pub unsafe extern "C" fn edsl_trace_free(trace: *mut EdslTrace) {
    if !trace.is_null() {
        // SAFETY: ownership returns from the caller.
        drop(unsafe { Box::from_raw(trace) });
    }
}

/// Number of recorded rounds (round 0 included), or 0 for a null handle.
///
/// # Safety
/// `trace` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn edsl_trace_len(trace: *const EdslTrace) -> usize {
    unsafe { trace.as_ref() }.map_or(0, |t| t.trace.records.len())
}

/// Copies the iterate of `round` into `out` (`len` must equal p).
///
/// # Safety
/// `trace` must be a live handle and `out` must hold `len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn edsl_trace_beta(trace: *const EdslTrace, round: usize, out: *mut f64, len: usize) -> EdslStatus {
    let Some(t) = (unsafe { trace.as_ref() }) else {
        return null_error("trace");
    };
    if out.is_null() {
        return null_error("out");
    }
    guard(|| {
        let rec = t
            .trace
            .records
            .get(round)
            .ok_or_else(|| Error::Config(format!("round {round} not recorded")))?;
        copy_out(&rec.beta, out, len)
    })
}

unsafe fn record<'a>(trace: *const EdslTrace, round: usize) -> Option<&'a edsl::protocol::RoundRecord> {
    // SAFETY: the caller keeps the handle alive while reading.
    unsafe { trace.as_ref() }?.trace.records.get(round)
}

/// Regularization level used in `round`; NaN if unavailable.
///
/// # Safety
/// `trace` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn edsl_trace_lambda(trace: *const EdslTrace, round: usize) -> f64 {
    unsafe { record(trace, round) }.map_or(f64::NAN, |r| r.lambda)
}

/// l2 distance to the truth after `round`; NaN when unknown.
///
/// # Safety
/// `trace` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn edsl_trace_l2_error(trace: *const EdslTrace, round: usize) -> f64 {
    unsafe { record(trace, round) }.and_then(|r| r.l2_error).unwrap_or(f64::NAN)
}

/// l1 distance to the truth after `round`; NaN when unknown.
///
/// # Safety
/// `trace` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn edsl_trace_l1_error(trace: *const EdslTrace, round: usize) -> f64 {
    unsafe { record(trace, round) }.and_then(|r| r.l1_error).unwrap_or(f64::NAN)
}

/// Payload bytes exchanged in `round`; 0 if unavailable.
///
/// # Safety
/// `trace` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn edsl_trace_payload_bytes(trace: *const EdslTrace, round: usize) -> u64 {
    unsafe { record(trace, round) }.map_or(0, |r| r.payload_bytes)
}
