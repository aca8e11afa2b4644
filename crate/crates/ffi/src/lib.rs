//! C ABI for warpsim.
//!
//! Objects are opaque handles created by `warpsim_*_new`/`warpsim_simulate_*`
//! and released with the matching `*_free`. Every fallible call returns a
//! [`WarpsimStatus`]; on failure the message is available from
//! [`warpsim_last_error_message`] on the same thread until the next failing
//! call. Panics never cross the boundary.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use warpsim::moments::{bk_moments_exact, cdf_moments_exact};
use warpsim::rng::RngStream;
use warpsim::samplers::{
    simulate_bk, simulate_cdf, simulate_cdh, simulate_mzw, uniform_partition, BkConfig, CdfConfig,
    MzwConfig,
};
use warpsim::warp::{TargetWarp, WarpPath};
use warpsim::Error;

/// Result codes.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum WarpsimStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Domain = 3,
    Unsupported = 4,
    Sampling = 5,
    Numerical = 6,
    Io = 7,
    BufferTooSmall = 8,
    Panic = 9,
}

/// Seeded random stream.
pub struct WarpsimRng(RngStream);

/// Target warping function.
pub struct WarpsimTarget(TargetWarp);

/// Piecewise-linear warp path.
pub struct WarpsimPath(WarpPath);

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

fn status_of(err: &Error) -> WarpsimStatus {
    match err.root() {
        Error::InvalidParameter(_) | Error::InvalidElement(_) => WarpsimStatus::InvalidArgument,
        Error::Domain(_) => WarpsimStatus::Domain,
        Error::Unsupported(_) => WarpsimStatus::Unsupported,
        Error::Sampling(_) => WarpsimStatus::Sampling,
        Error::Io(_) | Error::Csv(_) | Error::Json(_) | Error::Ingestion(_) => WarpsimStatus::Io,
        _ => WarpsimStatus::Numerical,
    }
}

/// Runs `f`, converting errors and panics into status codes.
fn guard<F>(f: F) -> WarpsimStatus
where
    F: FnOnce() -> Result<(), (WarpsimStatus, String)>,
{
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => WarpsimStatus::Ok,
        Ok(Err((status, msg))) => {
            set_error(&msg);
            status
        }
        Err(_) => {
            set_error("internal panic");
            WarpsimStatus::Panic
        }
    }
}

fn lib<T>(r: warpsim::Result<T>) -> Result<T, (WarpsimStatus, String)> {
    r.map_err(|e| (status_of(&e), e.to_string()))
}

fn null(what: &str) -> (WarpsimStatus, String) {
    (WarpsimStatus::NullPointer, format!("{what} is null"))
}

unsafe fn deref<'a, T>(p: *const T, what: &str) -> Result<&'a T, (WarpsimStatus, String)> {
    p.as_ref().ok_or_else(|| null(what))
}

unsafe fn deref_mut<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, (WarpsimStatus, String)> {
    p.as_mut().ok_or_else(|| null(what))
}

unsafe fn put<T>(out: *mut *mut T, value: T) -> Result<(), (WarpsimStatus, String)> {
    if out.is_null() {
        return Err(null("output pointer"));
    }
    *out = Box::into_raw(Box::new(value));
    Ok(())
}

/// Message of the last failure on this thread; empty if none. Owned by the
/// library and valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn warpsim_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Library version, a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn warpsim_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr() as *const c_char
}

/// # Safety
/// `out` must be a valid pointer to writable storage for a handle.
#[no_mangle]
pub unsafe extern "C" fn warpsim_rng_new(seed: u64, stream_id: u64, out: *mut *mut WarpsimRng) -> WarpsimStatus {
    guard(|| put(out, WarpsimRng(RngStream::new(seed, stream_id))))
}

/// # Safety
/// `rng` must be null or a handle from [`warpsim_rng_new`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn warpsim_rng_free(rng: *mut WarpsimRng) {
    if !rng.is_null() {
        drop(Box::from_raw(rng));
    }
}

/// Uniform draw on [0,1).
///
/// # Safety
/// `rng` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn warpsim_rng_uniform(rng: *mut WarpsimRng, out: *mut f64) -> WarpsimStatus {
    guard(|| {
        let r = deref_mut(rng, "rng")?;
        *deref_mut(out, "out")? = r.0.uniform();
        Ok(())
    })
}

/// Built-in target by name: "phi1", "phi2" or "phi3".
///
/// # Safety
/// `name` must be a NUL-terminated string and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn warpsim_target_builtin(name: *const c_char, out: *mut *mut WarpsimTarget) -> WarpsimStatus {
    guard(|| {
        if name.is_null() {
            return Err(null("name"));
        }
        let s = CStr::from_ptr(name)
            .to_str()
            .map_err(|_| (WarpsimStatus::InvalidArgument, "name is not UTF-8".to_string()))?;
        put(out, WarpsimTarget(lib(TargetWarp::builtin(s))?))
    })
}

/// # Safety
/// `target` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn warpsim_target_free(target: *mut WarpsimTarget) {
    if !target.is_null() {
        drop(Box::from_raw(target));
    }
}

/// # Safety
/// `target` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn warpsim_target_eval(target: *const WarpsimTarget, t: f64, out: *mut f64) -> WarpsimStatus {
    guard(|| {
        let tg = deref(target, "target")?;
        if !(0.0..=1.0).contains(&t) {
            return Err((WarpsimStatus::Domain, format!("t = {t} is outside [0,1]")));
        }
        *deref_mut(out, "out")? = tg.0.eval(t);
        Ok(())
    })
}

/// Path with n equispaced knots and Dirichlet(theta) increments.
///
/// # Safety
/// `rng` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn warpsim_simulate_cdh(
    n: usize,
    theta: f64,
    rng: *mut WarpsimRng,
    out: *mut *mut WarpsimPath,
) -> WarpsimStatus {
    guard(|| {
        let r = deref_mut(rng, "rng")?;
        let path = lib(simulate_cdh(n, &uniform_partition(n), theta, &mut r.0))?;
        put(out, WarpsimPath(path))
    })
}

/// # Safety
/// `target` and `rng` must be live handles and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn warpsim_simulate_bk(
    target: *const WarpsimTarget,
    n: usize,
    theta: f64,
    rng: *mut WarpsimRng,
    out: *mut *mut WarpsimPath,
) -> WarpsimStatus {
    guard(|| {
        let tg = deref(target, "target")?;
        let r = deref_mut(rng, "rng")?;
        let cfg = lib(BkConfig::new(n, theta, tg.0.clone()))?;
        put(out, WarpsimPath(lib(simulate_bk(&cfg, &mut r.0))?))
    })
}

/// # Safety
/// `target` and `rng` must be live handles and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn warpsim_simulate_cdf(
    target: *const WarpsimTarget,
    n: usize,
    theta: f64,
    p: f64,
    rng: *mut WarpsimRng,
    out: *mut *mut WarpsimPath,
) -> WarpsimStatus {
    guard(|| {
        let tg = deref(target, "target")?;
        let r = deref_mut(rng, "rng")?;
        let cfg = lib(CdfConfig::new(n, theta, p, tg.0.clone()))?;
        put(out, WarpsimPath(lib(simulate_cdf(&cfg, &mut r.0))?))
    })
}

/// Expansion sampler with m modes, variances 1/i^2 and Gaussian scores.
///
/// # Safety
/// `target` and `rng` must be live handles and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn warpsim_simulate_mzw(
    target: *const WarpsimTarget,
    m: usize,
    theta: f64,
    rng: *mut WarpsimRng,
    out: *mut *mut WarpsimPath,
) -> WarpsimStatus {
    guard(|| {
        let tg = deref(target, "target")?;
        let r = deref_mut(rng, "rng")?;
        let cfg = lib(MzwConfig::standard(m, theta, &tg.0))?;
        put(out, WarpsimPath(lib(simulate_mzw(&cfg, &mut r.0))?))
    })
}

/// # Safety
/// `path` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn warpsim_path_free(path: *mut WarpsimPath) {
    if !path.is_null() {
        drop(Box::from_raw(path));
    }
}

/// Number of knots, 0 for a null handle.
///
/// # Safety
/// `path` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn warpsim_path_len(path: *const WarpsimPath) -> usize {
    path.as_ref().map_or(0, |p| p.0.len())
}

/// Copies the knots into `xs` and `ys`, each of capacity `cap`.
///
/// # Safety
/// `path` must be a live handle; `xs` and `ys` must point to `cap` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn warpsim_path_knots(
    path: *const WarpsimPath,
    xs: *mut f64,
    ys: *mut f64,
    cap: usize,
) -> WarpsimStatus {
    guard(|| {
        let p = deref(path, "path")?;
        if xs.is_null() || ys.is_null() {
            return Err(null("knot buffer"));
        }
        let k = p.0.len();
        if cap < k {
            return Err((WarpsimStatus::BufferTooSmall, format!("need {k} slots, got {cap}")));
        }
        ptr::copy_nonoverlapping(p.0.xs().as_ptr(), xs, k);
        ptr::copy_nonoverlapping(p.0.ys().as_ptr(), ys, k);
        Ok(())
    })
}

/// # Safety
/// `path` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn warpsim_path_eval(path: *const WarpsimPath, t: f64, out: *mut f64) -> WarpsimStatus {
    guard(|| {
        let p = deref(path, "path")?;
        *deref_mut(out, "out")? = lib(p.0.eval(t))?;
        Ok(())
    })
}

/// Exact mean and variance at t of the BK path (1 <= n <= 128).
///
/// # Safety
/// `target` must be a live handle; `mean` and `variance` writable.
#[no_mangle]
pub unsafe extern "C" fn warpsim_bk_moments_exact(
    target: *const WarpsimTarget,
    t: f64,
    n: usize,
    theta: f64,
    mean: *mut f64,
    variance: *mut f64,
) -> WarpsimStatus {
    guard(|| {
        let tg = deref(target, "target")?;
        let m = lib(bk_moments_exact(t, n, theta, &tg.0))?;
        *deref_mut(mean, "mean")? = m.mean;
        *deref_mut(variance, "variance")? = m.variance;
        Ok(())
    })
}

/// Exact mean and variance at t of the polygonal CDF path (1 <= n <= 128).
///
/// # Safety
/// `target` must be a live handle; `mean` and `variance` writable.
#[no_mangle]
pub unsafe extern "C" fn warpsim_cdf_moments_exact(
    target: *const WarpsimTarget,
    t: f64,
    n: usize,
    theta: f64,
    p: f64,
    mean: *mut f64,
    variance: *mut f64,
) -> WarpsimStatus {
    guard(|| {
        let tg = deref(target, "target")?;
        let m = lib(cdf_moments_exact(t, n, theta, p, &tg.0))?;
        *deref_mut(mean, "mean")? = m.mean;
        *deref_mut(variance, "variance")? = m.variance;
        Ok(())
    })
}
