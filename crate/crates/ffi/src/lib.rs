//! C ABI over the kernmem library.
//!
//! Every entry point returns a [`KmStatus`]; on failure a message is
//! available from [`km_last_error`] on the same thread. Results are written
//! through caller-provided pointers. Handles are created by `*_new` or
//! `*_load` and released with `*_free`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use kernmem::experiments::drm::{delta_convexity, lure_bound_check};
use kernmem::geometry::cap::cap_fraction_analytic;
use kernmem::geometry::dims::{levina_bickel, participation_ratio};
use kernmem::io::embeddings::load_embeddings;
use kernmem::vector::Embeddings;
use kernmem::Error;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KmStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Domain = 3,
    NonConvergence = 4,
    Data = 5,
    Io = 6,
    Panic = 7,
    Other = 8,
}

/// Row-major matrix of embeddings.
pub struct KmEmbeddings {
    inner: Embeddings,
}

/// Hull distance of a lure to its studied set, and what it implies at
/// threshold `tau`.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct KmConvexity {
    pub delta_star: f64,
    pub margin: f64,
    pub tau: f64,
    pub lure_score: f64,
    /// `tau + margin - delta_star`.
    pub bound: f64,
    pub accepted: bool,
    pub bound_holds: bool,
    /// `delta_star < margin`.
    pub premise_holds: bool,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("nul bytes removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> KmStatus {
    match e {
        Error::Domain(_) | Error::Precondition(_) => KmStatus::Domain,
        Error::NonConvergence { .. } => KmStatus::NonConvergence,
        Error::Io(_) => KmStatus::Io,
        Error::BadMagic { .. }
        | Error::UnsupportedEncoding { .. }
        | Error::TruncatedPayload { .. }
        | Error::NonFiniteValue { .. }
        | Error::Data(_) => KmStatus::Data,
        Error::DimensionMismatch { .. } | Error::ZeroVector { .. } | Error::InsufficientData(_) => KmStatus::InvalidArgument,
        _ => KmStatus::Other,
    }
}

fn guard<F: FnOnce() -> Result<(), (KmStatus, String)>>(f: F) -> KmStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => KmStatus::Ok,
        Ok(Err((status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("panic inside kernmem".into());
            KmStatus::Panic
        }
    }
}

fn lib_err(e: Error) -> (KmStatus, String) {
    (status_of(&e), e.to_string())
}

fn null(what: &str) -> (KmStatus, String) {
    (KmStatus::NullPointer, format!("{what} is null"))
}

/// Message of the last failed call on this thread, or null. The pointer is
/// valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn km_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn km_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Fraction of the unit sphere in `R^d` within angle `theta` (radians) of a
/// fixed direction.
///
/// # Safety
/// `out` must be valid for one `double` write.
#[no_mangle]
pub unsafe extern "C" fn km_cap_fraction(d: usize, theta: f64, out: *mut f64) -> KmStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let v = cap_fraction_analytic(d, theta).map_err(lib_err)?;
        // SAFETY: checked non-null; caller guarantees validity
        unsafe { *out = v };
        Ok(())
    })
}

/// Copy `n × d` row-major doubles into a new handle.
///
/// # Safety
/// `data` must point to `n * d` readable doubles (or be null when either is
/// zero); `out` must be valid for one pointer write.
#[no_mangle]
pub unsafe extern "C" fn km_embeddings_new(data: *const f64, n: usize, d: usize, out: *mut *mut KmEmbeddings) -> KmStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let len = n.checked_mul(d).ok_or((KmStatus::InvalidArgument, "n * d overflows".into()))?;
        let values = if len == 0 {
            Vec::new()
        } else {
            if data.is_null() {
                return Err(null("data"));
            }
            // SAFETY: caller guarantees `len` readable doubles
            unsafe { std::slice::from_raw_parts(data, len) }.to_vec()
        };
        let inner = Embeddings::new(n, d, values).map_err(lib_err)?;
        // SAFETY: checked non-null
        unsafe { *out = Box::into_raw(Box::new(KmEmbeddings { inner })) };
        Ok(())
    })
}

/// Read an embedding dump from `path`.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be valid for one
/// pointer write.
#[no_mangle]
pub unsafe extern "C" fn km_embeddings_load(path: *const c_char, renormalize: bool, out: *mut *mut KmEmbeddings) -> KmStatus {
    guard(|| {
        if path.is_null() {
            return Err(null("path"));
        }
        if out.is_null() {
            return Err(null("out"));
        }
        // SAFETY: caller guarantees a NUL-terminated string
        let p = unsafe { CStr::from_ptr(path) }
            .to_str()
            .map_err(|_| (KmStatus::InvalidArgument, "path is not UTF-8".to_string()))?;
        let loaded = load_embeddings(Path::new(p), renormalize).map_err(lib_err)?;
        // SAFETY: checked non-null
        unsafe { *out = Box::into_raw(Box::new(KmEmbeddings { inner: loaded.embeddings })) };
        Ok(())
    })
}

/// Release a handle; null is ignored.
///
/// # Safety
/// `h` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn km_embeddings_free(h: *mut KmEmbeddings) {
    if !h.is_null() {
        // SAFETY: produced by Box::into_raw and not freed before
        drop(unsafe { Box::from_raw(h) });
    }
}

/// Row count and dimension of a handle.
///
/// # Safety
/// `h` must be a live handle; `n` and `d` must each be null or writable.
#[no_mangle]
pub unsafe extern "C" fn km_embeddings_shape(h: *const KmEmbeddings, n: *mut usize, d: *mut usize) -> KmStatus {
    guard(|| {
        // SAFETY: caller guarantees a live handle
        let e = unsafe { h.as_ref() }.ok_or_else(|| null("handle"))?;
        // SAFETY: each pointer checked before writing
        unsafe {
            if !n.is_null() {
                *n = e.inner.n_rows();
            }
            if !d.is_null() {
                *d = e.inner.dim();
            }
        }
        Ok(())
    })
}

/// Participation ratio of the covariance spectrum.
///
/// # Safety
/// `h` must be a live handle; `out` valid for one `double` write.
#[no_mangle]
pub unsafe extern "C" fn km_participation_ratio(h: *const KmEmbeddings, out: *mut f64) -> KmStatus {
    guard(|| {
        // SAFETY: caller guarantees a live handle
        let e = unsafe { h.as_ref() }.ok_or_else(|| null("handle"))?;
        if out.is_null() {
            return Err(null("out"));
        }
        let v = participation_ratio(&e.inner).map_err(lib_err)?;
        // SAFETY: checked non-null
        unsafe { *out = v };
        Ok(())
    })
}

/// Maximum-likelihood intrinsic dimension with `k` neighbours.
///
/// # Safety
/// `h` must be a live handle; `out` valid for one `double` write.
#[no_mangle]
pub unsafe extern "C" fn km_levina_bickel(h: *const KmEmbeddings, k: usize, out: *mut f64) -> KmStatus {
    guard(|| {
        // SAFETY: caller guarantees a live handle
        let e = unsafe { h.as_ref() }.ok_or_else(|| null("handle"))?;
        if out.is_null() {
            return Err(null("out"));
        }
        let v = levina_bickel(&e.inner, k).map_err(lib_err)?;
        // SAFETY: checked non-null
        unsafe { *out = v };
        Ok(())
    })
}

/// Distance from `lure` (length `d`) to the convex hull of the `k` studied
/// rows (`k × d`, row-major), with the acceptance bound at threshold `tau`.
/// When `weights` is non-null the `k` optimal hull weights are written
/// there.
///
/// # Safety
/// `lure` must hold `d` doubles, `studied` `k * d` doubles; `out` must be
/// writable; `weights` must be null or hold `k` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn km_delta_convexity(
    lure: *const f64,
    studied: *const f64,
    k: usize,
    d: usize,
    tau: f64,
    out: *mut KmConvexity,
    weights: *mut f64,
) -> KmStatus {
    guard(|| {
        if lure.is_null() {
            return Err(null("lure"));
        }
        if studied.is_null() {
            return Err(null("studied"));
        }
        if out.is_null() {
            return Err(null("out"));
        }
        if k == 0 || d == 0 {
            return Err((KmStatus::InvalidArgument, "k and d must be positive".into()));
        }
        let len = k.checked_mul(d).ok_or((KmStatus::InvalidArgument, "k * d overflows".into()))?;
        // SAFETY: caller guarantees the stated lengths
        let (l, s) = unsafe { (std::slice::from_raw_parts(lure, d), std::slice::from_raw_parts(studied, len)) };
        let rows: Vec<Vec<f64>> = s.chunks_exact(d).map(<[f64]>::to_vec).collect();
        let r = delta_convexity(l, &rows, tau).map_err(lib_err)?;
        let check = lure_bound_check(&r);
        // SAFETY: checked non-null; `weights` holds `k` doubles when given
        unsafe {
            *out = KmConvexity {
                delta_star: r.delta_star,
                margin: r.margin,
                tau: r.tau,
                lure_score: r.lure_score,
                bound: r.lure_bound,
                accepted: r.accepted,
                bound_holds: check.bound_holds,
                premise_holds: check.premise_holds,
            };
            if !weights.is_null() {
                std::slice::from_raw_parts_mut(weights, k).copy_from_slice(&r.weights);
            }
        }
        Ok(())
    })
}
