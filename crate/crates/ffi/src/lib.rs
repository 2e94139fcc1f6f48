//! C ABI over `hamlearn`.
//!
//! Models are opaque `HlModel` handles created by `hl_model_load*` and released
//! with `hl_model_free`. Every fallible call returns an `HlStatus`; on failure
//! `hl_last_error_message` describes the most recent error on the calling
//! thread. Output buffers are caller-allocated with explicit lengths.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use hamlearn::generator::{GenerateMode, Sampler};
use hamlearn::learner::{self, TrainedModel};
use hamlearn::rng::SeededRng;
use hamlearn::Error;

/// Status codes. Zero is success.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HlStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    BufferTooSmall = 3,
    Io = 4,
    Corrupt = 5,
    SchemaVersion = 6,
    Numerical = 7,
    Panic = 8,
}

/// Opaque trained model.
pub struct HlModel {
    model: TrainedModel,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let msg = CString::new(msg.into().replace('\0', " ")).expect("NULs replaced");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(msg));
}

fn status_of(err: &Error) -> HlStatus {
    match err {
        Error::Io(_) => HlStatus::Io,
        Error::Corrupt(_) | Error::Csv(_) => HlStatus::Corrupt,
        Error::SchemaVersion { .. } => HlStatus::SchemaVersion,
        Error::Numerical(_) => HlStatus::Numerical,
        _ => HlStatus::InvalidArgument,
    }
}

fn fail(status: HlStatus, msg: impl Into<String>) -> HlStatus {
    set_error(msg);
    status
}

/// Run `f`, converting library errors and panics into status codes.
fn guard(f: impl FnOnce() -> Result<(), HlStatus>) -> HlStatus {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => HlStatus::Ok,
        Ok(Err(s)) => s,
        Err(_) => fail(HlStatus::Panic, "internal panic"),
    }
}

fn lib_err(e: Error) -> HlStatus {
    fail(status_of(&e), e.to_string())
}

unsafe fn model_ref<'a>(m: *const HlModel) -> Result<&'a TrainedModel, HlStatus> {
    // SAFETY: caller passes a live handle from hl_model_load* or NULL.
    unsafe { m.as_ref() }
        .map(|h| &h.model)
        .ok_or_else(|| fail(HlStatus::NullPointer, "null model handle"))
}

unsafe fn c_str<'a>(s: *const c_char) -> Result<&'a str, HlStatus> {
    if s.is_null() {
        return Err(fail(HlStatus::NullPointer, "null string"));
    }
    // SAFETY: non-null, NUL-terminated by contract.
    unsafe { CStr::from_ptr(s) }
        .to_str()
        .map_err(|_| fail(HlStatus::InvalidArgument, "string is not UTF-8"))
}

fn store(out: *mut *mut HlModel, model: TrainedModel) -> Result<(), HlStatus> {
    let handle = Box::into_raw(Box::new(HlModel { model }));
    // SAFETY: `out` checked non-null by the caller of this helper.
    unsafe { *out = handle };
    Ok(())
}

/// Load a model file. On success `*out` receives a handle to free with
/// `hl_model_free`.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a writable pointer.
#[no_mangle]
pub unsafe extern "C" fn hl_model_load(path: *const c_char, out: *mut *mut HlModel) -> HlStatus {
    guard(|| {
        if out.is_null() {
            return Err(fail(HlStatus::NullPointer, "null output pointer"));
        }
        let path = unsafe { c_str(path) }?;
        store(out, learner::load_model(path).map_err(lib_err)?)
    })
}

/// Parse a model from JSON text.
///
/// # Safety
/// `json` must be a NUL-terminated string and `out` a writable pointer.
#[no_mangle]
pub unsafe extern "C" fn hl_model_load_json(json: *const c_char, out: *mut *mut HlModel) -> HlStatus {
    guard(|| {
        if out.is_null() {
            return Err(fail(HlStatus::NullPointer, "null output pointer"));
        }
        let text = unsafe { c_str(json) }?;
        store(out, learner::model_from_json(text).map_err(lib_err)?)
    })
}

/// Release a handle. NULL is ignored.
///
/// # Safety
/// `model` must be NULL or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn hl_model_free(model: *mut HlModel) {
    if !model.is_null() {
        // SAFETY: created by Box::into_raw in `store`.
        drop(unsafe { Box::from_raw(model) });
    }
}

/// Number of series dimensions of the model (0 for a NULL handle).
///
/// # Safety
/// `model` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn hl_model_num_dims(model: *const HlModel) -> usize {
    unsafe { model.as_ref() }.map_or(0, |h| h.model.layout.num_dims())
}

/// Number of symbols of dimension `d` (0 when out of range).
///
/// # Safety
/// `model` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn hl_model_num_symbols(model: *const HlModel, d: usize) -> usize {
    unsafe { model.as_ref() }
        .filter(|h| d < h.model.layout.num_dims())
        .map_or(0, |h| h.model.layout.symbols(d))
}

/// Distribution over symbols of dimension `d` after evolving symbol `i` for
/// time `t`. `out` must hold at least `hl_model_num_symbols(model, d)` values.
///
/// # Safety
/// `model` must be a live handle; `out` must point to `out_len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn hl_forward_prob(
    model: *const HlModel,
    d: usize,
    i: usize,
    t: f64,
    out: *mut f64,
    out_len: usize,
) -> HlStatus {
    guard(|| {
        let m = unsafe { model_ref(model) }?;
        if out.is_null() {
            return Err(fail(HlStatus::NullPointer, "null output buffer"));
        }
        let probs = learner::forward_prob(&m.params, &m.layout, d, i, t).map_err(lib_err)?;
        if out_len < probs.len() {
            return Err(fail(
                HlStatus::BufferTooSmall,
                format!("need {} values, buffer holds {out_len}", probs.len()),
            ));
        }
        // SAFETY: `out` holds at least `probs.len()` doubles.
        unsafe { ptr::copy_nonoverlapping(probs.as_ptr(), out, probs.len()) };
        Ok(())
    })
}

/// Sample one trajectory of `horizon` steps. Symbols are written time-major:
/// `out[(t − 1)·dims + d]` for `t = 1..=horizon`. `mode` is 0 for from-origin
/// sampling and 1 for chained sampling. The draw is determined by
/// `(seed, stream)`.
///
/// # Safety
/// `model` must be a live handle; `out` must point to `out_len` writable values.
#[no_mangle]
pub unsafe extern "C" fn hl_generate(
    model: *const HlModel,
    horizon: usize,
    mode: u32,
    seed: u64,
    stream: u64,
    out: *mut u32,
    out_len: usize,
) -> HlStatus {
    guard(|| {
        let m = unsafe { model_ref(model) }?;
        if out.is_null() {
            return Err(fail(HlStatus::NullPointer, "null output buffer"));
        }
        let mode = match mode {
            0 => GenerateMode::FromOrigin,
            1 => GenerateMode::Chained,
            other => return Err(fail(HlStatus::InvalidArgument, format!("unknown mode {other}"))),
        };
        let dims = m.layout.num_dims();
        let need = horizon.checked_mul(dims).ok_or_else(|| fail(HlStatus::InvalidArgument, "horizon too large"))?;
        if out_len < need {
            return Err(fail(HlStatus::BufferTooSmall, format!("need {need} values, buffer holds {out_len}")));
        }
        let sampler = Sampler::new(m).and_then(|s| s.with_horizon(horizon)).map_err(lib_err)?;
        let traj = sampler
            .generate(horizon, mode, &vec![0.0; dims], &mut SeededRng::with_stream(seed, stream))
            .map_err(lib_err)?;
        // SAFETY: `out` holds at least `need` values.
        let buf = unsafe { std::slice::from_raw_parts_mut(out, need) };
        for t in 0..horizon {
            for d in 0..dims {
                buf[t * dims + d] = traj.symbols[d][t] as u32;
            }
        }
        Ok(())
    })
}

/// Result of a Choi-matrix test.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct HlCptpReport {
    pub is_cptp: bool,
    pub min_choi_eig: f64,
    pub trace_dev: f64,
}

/// CPTP test of the map the model induces on dimension `keep` at lag `k`.
///
/// # Safety
/// `model` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn hl_check_cptp(
    model: *const HlModel,
    keep: usize,
    k: usize,
    out: *mut HlCptpReport,
) -> HlStatus {
    guard(|| {
        let m = unsafe { model_ref(model) }?;
        if out.is_null() {
            return Err(fail(HlStatus::NullPointer, "null output pointer"));
        }
        let r = hamlearn::verify::check_cptp(m, keep, k).map_err(lib_err)?;
        // SAFETY: checked non-null.
        unsafe {
            *out = HlCptpReport {
                is_cptp: r.is_cptp,
                min_choi_eig: r.min_choi_eig,
                trace_dev: r.trace_dev,
            }
        };
        Ok(())
    })
}

/// Message for the last failed call on this thread, or NULL. Valid until the
/// next call into this library from the same thread.
#[no_mangle]
pub extern "C" fn hl_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Library version, static storage.
#[no_mangle]
pub extern "C" fn hl_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}
