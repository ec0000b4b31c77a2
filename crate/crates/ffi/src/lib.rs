//! C ABI for the beamscope estimators.
//!
//! Objects are opaque handles created by `bs_*_new` / `bs_*_load` and released
//! with the matching `bs_*_free`. Complex vectors cross the boundary as
//! interleaved `(re, im)` `double` arrays, so a length-`N` vector occupies
//! `2N` doubles. Every fallible call returns a [`BsStatus`]; on failure
//! [`bs_last_error`] describes the problem.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};

use beamscope::estimators::{
    amp_estimate, count_multiplies, omp_estimate, unfolded_forward, AmpConfig, EstimatorKind,
    UnfoldedNetwork,
};
use beamscope::eval::nmse_db;
use beamscope::measurement::{gen_sensing, measure, SensingSystem};
use beamscope::rng::Seed;
use beamscope::{io, Error, C64};

/// Result codes.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BsStatus {
    Ok = 0,
    InvalidArgument = 1,
    NullPointer = 2,
    Io = 3,
    Parse = 4,
    Internal = 5,
}

/// Estimator selector for [`bs_count_multiplies`].
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BsEstimator {
    Omp = 0,
    Amp = 1,
    Lamp = 2,
    GmLamp = 3,
}

/// Sensing system: the `M x N` selection matrix.
pub struct BsSensing(SensingSystem);

/// Trained LAMP or GM-LAMP network.
pub struct BsNetwork(UnfoldedNetwork);

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).unwrap_or_default());
}

struct Failure(BsStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let status = match e {
            Error::InvalidArgument(_) | Error::Boundary { .. } | Error::Config(_) => BsStatus::InvalidArgument,
            Error::Io { .. } | Error::MissingCheckpoint { .. } => BsStatus::Io,
            Error::Parse { .. } => BsStatus::Parse,
            _ => BsStatus::Internal,
        };
        Failure(status, e.to_string())
    }
}

fn null(what: &str) -> Failure {
    Failure(BsStatus::NullPointer, format!("{what} is null"))
}

/// Runs `f`, records any failure and converts panics to `Internal`.
fn guard(f: impl FnOnce() -> Result<(), Failure>) -> BsStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error("");
            BsStatus::Ok
        }
        Ok(Err(Failure(status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic");
            BsStatus::Internal
        }
    }
}

unsafe fn handle<'a, T>(p: *const T, what: &str) -> Result<&'a T, Failure> {
    p.as_ref().ok_or_else(|| null(what))
}

unsafe fn complex_in(p: *const f64, len: usize, what: &str) -> Result<Vec<C64>, Failure> {
    if p.is_null() {
        return Err(null(what));
    }
    let raw = std::slice::from_raw_parts(p, 2 * len);
    Ok(raw.chunks_exact(2).map(|c| C64::new(c[0], c[1])).collect())
}

unsafe fn complex_out(p: *mut f64, xs: &[C64], what: &str) -> Result<(), Failure> {
    if p.is_null() {
        return Err(null(what));
    }
    let out = std::slice::from_raw_parts_mut(p, 2 * xs.len());
    for (o, x) in out.chunks_exact_mut(2).zip(xs) {
        o[0] = x.re;
        o[1] = x.im;
    }
    Ok(())
}

unsafe fn path_arg(p: *const c_char) -> Result<String, Failure> {
    if p.is_null() {
        return Err(null("path"));
    }
    CStr::from_ptr(p)
        .to_str()
        .map(str::to_owned)
        .map_err(|_| Failure(BsStatus::InvalidArgument, "path is not valid UTF-8".into()))
}

unsafe fn store<T>(out: *mut *mut T, value: T) -> Result<(), Failure> {
    if out.is_null() {
        return Err(null("out"));
    }
    *out = Box::into_raw(Box::new(value));
    Ok(())
}

/// Message for the most recent failed call on this thread ("" after a success).
/// The pointer stays valid until the next `bs_*` call on the same thread.
#[no_mangle]
pub extern "C" fn bs_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Draws an `m x n` ±1/√m selection matrix from `seed`.
///
/// # Safety
/// `out` must be a valid pointer to writable storage for one handle.
#[no_mangle]
pub unsafe extern "C" fn bs_sensing_new(n: usize, m: usize, seed: u64, out: *mut *mut BsSensing) -> BsStatus {
    guard(|| {
        let sys = gen_sensing(n, m, &mut Seed(seed).rng())?;
        store(out, BsSensing(sys))
    })
}

/// Loads a sensing matrix written by `beamscope generate`.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a valid handle slot.
#[no_mangle]
pub unsafe extern "C" fn bs_sensing_load(path: *const c_char, out: *mut *mut BsSensing) -> BsStatus {
    guard(|| {
        let sys = io::load_sensing(path_arg(path)?)?;
        store(out, BsSensing(sys))
    })
}

/// # Safety
/// `sys` must be null or a handle from `bs_sensing_new` / `bs_sensing_load`
/// that has not been freed.
#[no_mangle]
pub unsafe extern "C" fn bs_sensing_free(sys: *mut BsSensing) {
    if !sys.is_null() {
        drop(Box::from_raw(sys));
    }
}

/// Writes `n` and `m` of the sensing system.
///
/// # Safety
/// `sys` must be a live handle; `n` and `m` must be writable.
#[no_mangle]
pub unsafe extern "C" fn bs_sensing_dims(sys: *const BsSensing, n: *mut usize, m: *mut usize) -> BsStatus {
    guard(|| {
        let s = &handle(sys, "sys")?.0;
        if n.is_null() || m.is_null() {
            return Err(null("n/m"));
        }
        *n = s.n;
        *m = s.m;
        Ok(())
    })
}

/// Simulates `y = A h + A noise` at `snr_db` (`INFINITY` for noiseless).
/// `h` holds `2N` doubles, `y_out` receives `2M`.
///
/// # Safety
/// `sys` must be a live handle and the arrays must have the stated lengths.
#[no_mangle]
pub unsafe extern "C" fn bs_measure(
    sys: *const BsSensing,
    h: *const f64,
    snr_db: f64,
    seed: u64,
    y_out: *mut f64,
) -> BsStatus {
    guard(|| {
        let s = &handle(sys, "sys")?.0;
        let h = complex_in(h, s.n, "h")?;
        let y = measure(s, &h, snr_db, &mut Seed(seed).rng())?;
        complex_out(y_out, &y, "y_out")
    })
}

/// AMP estimate. `y` holds `2M` doubles, `h_out` receives `2N`.
///
/// # Safety
/// `sys` must be a live handle and the arrays must have the stated lengths.
#[no_mangle]
pub unsafe extern "C" fn bs_amp_estimate(
    sys: *const BsSensing,
    y: *const f64,
    iterations: usize,
    lambda: f64,
    h_out: *mut f64,
) -> BsStatus {
    guard(|| {
        let s = &handle(sys, "sys")?.0;
        let y = complex_in(y, s.m, "y")?;
        let (h, _) = amp_estimate(s, &y, &AmpConfig { iterations, lambda })?;
        complex_out(h_out, &h, "h_out")
    })
}

/// OMP estimate with `sparsity` atoms. `y` holds `2M` doubles, `h_out` receives `2N`.
///
/// # Safety
/// `sys` must be a live handle and the arrays must have the stated lengths.
#[no_mangle]
pub unsafe extern "C" fn bs_omp_estimate(
    sys: *const BsSensing,
    y: *const f64,
    sparsity: usize,
    h_out: *mut f64,
) -> BsStatus {
    guard(|| {
        let s = &handle(sys, "sys")?.0;
        let y = complex_in(y, s.m, "y")?;
        let h = omp_estimate(s, &y, sparsity)?;
        complex_out(h_out, &h, "h_out")
    })
}

/// Loads a network checkpoint written by `beamscope train`.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a valid handle slot.
#[no_mangle]
pub unsafe extern "C" fn bs_network_load(path: *const c_char, out: *mut *mut BsNetwork) -> BsStatus {
    guard(|| {
        let net = io::load_checkpoint(path_arg(path)?)?;
        store(out, BsNetwork(net))
    })
}

/// Untrained LAMP network with `B_t = Aᵀ` and a shared `lambda` (equivalent to AMP).
///
/// # Safety
/// `sys` must be a live handle and `out` a valid handle slot.
#[no_mangle]
pub unsafe extern "C" fn bs_network_lamp_from_amp(
    sys: *const BsSensing,
    layers: usize,
    lambda: f64,
    out: *mut *mut BsNetwork,
) -> BsStatus {
    guard(|| {
        let s = &handle(sys, "sys")?.0;
        if layers == 0 || !(lambda >= 0.0) {
            return Err(Failure(BsStatus::InvalidArgument, "need layers >= 1 and lambda >= 0".into()));
        }
        store(out, BsNetwork(UnfoldedNetwork::lamp_from_amp(s, layers, lambda)))
    })
}

/// Writes a network checkpoint.
///
/// # Safety
/// `net` must be a live handle and `path` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn bs_network_save(net: *const BsNetwork, path: *const c_char) -> BsStatus {
    guard(|| {
        let net = &handle(net, "net")?.0;
        io::save_checkpoint(path_arg(path)?, net)?;
        Ok(())
    })
}

/// # Safety
/// `net` must be null or a live network handle.
#[no_mangle]
pub unsafe extern "C" fn bs_network_free(net: *mut BsNetwork) {
    if !net.is_null() {
        drop(Box::from_raw(net));
    }
}

/// Layer count, or 0 for a null handle.
///
/// # Safety
/// `net` must be null or a live network handle.
#[no_mangle]
pub unsafe extern "C" fn bs_network_depth(net: *const BsNetwork) -> usize {
    net.as_ref().map_or(0, |n| n.0.depth())
}

/// Forward pass of a LAMP / GM-LAMP network. `y` holds `2M` doubles, `h_out` receives `2N`.
///
/// # Safety
/// Handles must be live and the arrays must have the stated lengths.
#[no_mangle]
pub unsafe extern "C" fn bs_network_estimate(
    net: *const BsNetwork,
    sys: *const BsSensing,
    y: *const f64,
    h_out: *mut f64,
) -> BsStatus {
    guard(|| {
        let net = &handle(net, "net")?.0;
        let s = &handle(sys, "sys")?.0;
        let y = complex_in(y, s.m, "y")?;
        let (h, _) = unfolded_forward(s, &y, net)?;
        complex_out(h_out, &h, "h_out")
    })
}

/// NMSE in dB of `count` estimates of length `n` (each array holds `2·n·count` doubles).
///
/// # Safety
/// The arrays must have the stated lengths and `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn bs_nmse_db(
    estimates: *const f64,
    truths: *const f64,
    n: usize,
    count: usize,
    out: *mut f64,
) -> BsStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let total = n
            .checked_mul(count)
            .ok_or_else(|| Failure(BsStatus::InvalidArgument, "n * count overflows".into()))?;
        if n == 0 {
            return Err(Failure(BsStatus::InvalidArgument, "n must be at least 1".into()));
        }
        let est = complex_in(estimates, total, "estimates")?;
        let tru = complex_in(truths, total, "truths")?;
        let split = |v: Vec<C64>| v.chunks(n).map(<[C64]>::to_vec).collect::<Vec<_>>();
        *out = nmse_db(&split(est), &split(tru))?;
        Ok(())
    })
}

/// Complex multiplies per estimate; `depth` is `S` for OMP and `T` otherwise,
/// `nc` is only used for GM-LAMP.
#[no_mangle]
pub extern "C" fn bs_count_multiplies(kind: BsEstimator, n: usize, m: usize, depth: usize, nc: usize) -> u64 {
    let kind = match kind {
        BsEstimator::Omp => EstimatorKind::Omp,
        BsEstimator::Amp => EstimatorKind::Amp,
        BsEstimator::Lamp => EstimatorKind::Lamp,
        BsEstimator::GmLamp => EstimatorKind::GmLamp { nc },
    };
    count_multiplies(kind, n, m, depth)
}
