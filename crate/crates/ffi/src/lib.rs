//! C ABI over the modelmap core.
//!
//! Matrices and centered maps cross the boundary as opaque handles that the
//! caller releases with the matching `*_free` function. Every fallible call
//! returns an [`MmStatus`]; on failure [`mm_last_error`] describes the error
//! for the calling thread. Output pointers are left untouched on failure,
//! except handle outputs, which are set to null.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;

use modelmap::divergence::{entropy_upper_bound, kl_matrix, kl_pair};
use modelmap::io::{load_matrix, IngestOptions, MatrixFormat};
use modelmap::scaling::{fit_exponent, fractal_dimension, holder_from_exponents};
use modelmap::synth::{fbm_generate, sawtooth, FbmSpec};
use modelmap::{CenteredMap, Error, ErrorKind, LogLikelihoodMatrix, ModelMeta, TextSetMeta};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MmStatus {
    Ok = 0,
    NullPointer = 1,
    Io = 2,
    Data = 3,
    InvalidArgument = 4,
    Analysis = 5,
    Config = 6,
    Panic = 7,
}

/// Values accepted by the `format` argument of [`mm_matrix_load`].
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MmFormat {
    /// Inferred from the file extension.
    Auto = 0,
    Binary = 1,
    Csv = 2,
}

/// Result of a power-law fit of squared displacement against lag.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct MmScalingFit {
    pub c: f64,
    pub log_intercept: f64,
    pub r_squared: f64,
    pub n_points: usize,
    pub dropped: usize,
}

/// Log-likelihood matrix, `K` models by `N` texts.
pub struct MmMatrix {
    inner: LogLikelihoodMatrix,
}

/// Double-centered coordinates, raw nats or bits/byte.
pub struct MmCenteredMap {
    inner: CenteredMap,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_last_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).expect("interior NULs removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

enum Fail {
    Null(&'static str),
    Arg(String),
    Core(Error),
}

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail::Core(e)
    }
}

fn status_of(e: &Error) -> MmStatus {
    match e {
        Error::Io { .. } => MmStatus::Io,
        Error::InvalidArgument(_) | Error::IndexOutOfRange { .. } => MmStatus::InvalidArgument,
        _ => match e.kind() {
            ErrorKind::Config => MmStatus::Config,
            ErrorKind::Data => MmStatus::Data,
            ErrorKind::Analysis => MmStatus::Analysis,
        },
    }
}

fn guard(f: impl FnOnce() -> Result<(), Fail>) -> MmStatus {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => MmStatus::Ok,
        Ok(Err(Fail::Null(what))) => {
            set_last_error(&format!("null pointer passed for `{what}`"));
            MmStatus::NullPointer
        }
        Ok(Err(Fail::Arg(msg))) => {
            set_last_error(&msg);
            MmStatus::InvalidArgument
        }
        Ok(Err(Fail::Core(e))) => {
            set_last_error(&e.to_string());
            status_of(&e)
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_last_error(&format!("panic: {msg}"));
            MmStatus::Panic
        }
    }
}

unsafe fn get<'a, T>(p: *const T, what: &'static str) -> Result<&'a T, Fail> {
    p.as_ref().ok_or(Fail::Null(what))
}

unsafe fn out<'a, T>(p: *mut T, what: &'static str) -> Result<&'a mut T, Fail> {
    p.as_mut().ok_or(Fail::Null(what))
}

unsafe fn slice<'a, T>(p: *const T, len: usize, what: &'static str) -> Result<&'a [T], Fail> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(Fail::Null(what));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn slice_mut<'a, T>(p: *mut T, len: usize, what: &'static str) -> Result<&'a mut [T], Fail> {
    if len == 0 {
        return Ok(&mut []);
    }
    if p.is_null() {
        return Err(Fail::Null(what));
    }
    Ok(std::slice::from_raw_parts_mut(p, len))
}

fn check_len(got: usize, want: usize, what: &str) -> Result<(), Fail> {
    if got != want {
        return Err(Fail::Arg(format!("`{what}` holds {got} values, expected {want}")));
    }
    Ok(())
}

unsafe fn put_handle<T>(slot: *mut *mut T, value: T) {
    *slot = Box::into_raw(Box::new(value));
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn mm_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Message for the last failed call on this thread, or null if the last call
/// succeeded. The pointer stays valid until the next call on this thread.
#[no_mangle]
pub extern "C" fn mm_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(std::ptr::null(), |c| c.as_ptr()))
}

/// Loads a matrix (binary or CSV, plus optional `.meta.json` sidecar).
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn mm_matrix_load(path: *const c_char, format: u32, out: *mut *mut MmMatrix) -> MmStatus {
    guard(|| {
        if out.is_null() {
            return Err(Fail::Null("out"));
        }
        *out = std::ptr::null_mut();
        let path = CStr::from_ptr(get(path, "path")?)
            .to_str()
            .map_err(|_| Fail::Arg("path is not valid UTF-8".into()))?;
        let path = Path::new(path);
        let format = match format {
            0 => MatrixFormat::from_path(path),
            1 => MatrixFormat::Binary,
            2 => MatrixFormat::Csv,
            other => return Err(Fail::Arg(format!("unknown format code {other}"))),
        };
        let loaded = load_matrix(path, format, &IngestOptions::default())?;
        put_handle(out, MmMatrix { inner: loaded.matrix });
        Ok(())
    })
}

/// Builds a matrix from `k * n` row-major values in nats. `byte_lengths`
/// (length `n`) may be null, in which case every text counts as one byte.
///
/// # Safety
/// `values` must point to `k * n` doubles, `byte_lengths` to `n` integers or
/// be null, and `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn mm_matrix_from_values(
    values: *const f64,
    k: usize,
    n: usize,
    byte_lengths: *const u64,
    out: *mut *mut MmMatrix,
) -> MmStatus {
    guard(|| {
        if out.is_null() {
            return Err(Fail::Null("out"));
        }
        *out = std::ptr::null_mut();
        let len = k
            .checked_mul(n)
            .ok_or_else(|| Fail::Arg(format!("{k} x {n} overflows")))?;
        let vals = slice(values, len, "values")?.to_vec();
        let texts = if byte_lengths.is_null() {
            TextSetMeta::synthetic(n)
        } else {
            let b = slice(byte_lengths, n, "byte_lengths")?.to_vec();
            TextSetMeta::new((0..n).map(|i| format!("t{i}")).collect(), b)?
        };
        let m = LogLikelihoodMatrix::new(vals, ModelMeta::synthetic(k), texts)?;
        put_handle(out, MmMatrix { inner: m });
        Ok(())
    })
}

/// # Safety
/// `m` must come from this library and not be used afterwards. Null is a no-op.
#[no_mangle]
pub unsafe extern "C" fn mm_matrix_free(m: *mut MmMatrix) {
    if !m.is_null() {
        drop(Box::from_raw(m));
    }
}

/// # Safety
/// `m` must be a live handle; `k` and `n` valid pointers.
#[no_mangle]
pub unsafe extern "C" fn mm_matrix_dims(m: *const MmMatrix, k: *mut usize, n: *mut usize) -> MmStatus {
    guard(|| {
        let m = &get(m, "m")?.inner;
        let (k, n) = (out(k, "k")?, out(n, "n")?);
        *k = m.n_models();
        *n = m.n_texts();
        Ok(())
    })
}

/// Copies the `k * n` row-major values into `buf`.
///
/// # Safety
/// `m` must be a live handle and `buf` must have room for `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn mm_matrix_values(m: *const MmMatrix, buf: *mut f64, len: usize) -> MmStatus {
    guard(|| {
        let m = &get(m, "m")?.inner;
        check_len(len, m.values().len(), "buf")?;
        slice_mut(buf, len, "buf")?.copy_from_slice(m.values());
        Ok(())
    })
}

/// New matrix with every value below the `q` quantile raised to it.
///
/// # Safety
/// `m` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn mm_matrix_clip(m: *const MmMatrix, q: f64, out: *mut *mut MmMatrix) -> MmStatus {
    guard(|| {
        if out.is_null() {
            return Err(Fail::Null("out"));
        }
        *out = std::ptr::null_mut();
        let clipped = get(m, "m")?.inner.clip_bottom_quantile(q)?;
        put_handle(out, MmMatrix { inner: clipped });
        Ok(())
    })
}

/// Double-centers the matrix; coordinates are in raw nats.
///
/// # Safety
/// `m` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn mm_matrix_double_center(m: *const MmMatrix, out: *mut *mut MmCenteredMap) -> MmStatus {
    guard(|| {
        if out.is_null() {
            return Err(Fail::Null("out"));
        }
        *out = std::ptr::null_mut();
        let c = get(m, "m")?.inner.double_center()?;
        put_handle(out, MmCenteredMap { inner: c });
        Ok(())
    })
}

/// New map rescaled so squared distances read in bits/byte.
///
/// # Safety
/// `c` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn mm_centered_rescale_bits_per_byte(
    c: *const MmCenteredMap,
    out: *mut *mut MmCenteredMap,
) -> MmStatus {
    guard(|| {
        if out.is_null() {
            return Err(Fail::Null("out"));
        }
        *out = std::ptr::null_mut();
        let r = get(c, "c")?.inner.rescale_bits_per_byte()?;
        put_handle(out, MmCenteredMap { inner: r });
        Ok(())
    })
}

/// # Safety
/// `c` must come from this library and not be used afterwards. Null is a no-op.
#[no_mangle]
pub unsafe extern "C" fn mm_centered_free(c: *mut MmCenteredMap) {
    if !c.is_null() {
        drop(Box::from_raw(c));
    }
}

/// # Safety
/// `c` must be a live handle; `k` and `n` valid pointers.
#[no_mangle]
pub unsafe extern "C" fn mm_centered_dims(c: *const MmCenteredMap, k: *mut usize, n: *mut usize) -> MmStatus {
    guard(|| {
        let c = &get(c, "c")?.inner;
        let (k, n) = (out(k, "k")?, out(n, "n")?);
        *k = c.n_models();
        *n = c.n_texts();
        Ok(())
    })
}

/// Copies the `k * n` row-major coordinates into `buf`.
///
/// # Safety
/// `c` must be a live handle and `buf` must have room for `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn mm_centered_coords(c: *const MmCenteredMap, buf: *mut f64, len: usize) -> MmStatus {
    guard(|| {
        let c = &get(c, "c")?.inner;
        check_len(len, c.coords().len(), "buf")?;
        slice_mut(buf, len, "buf")?.copy_from_slice(c.coords());
        Ok(())
    })
}

/// KL estimate between rows `i` and `j` and its standard error, in the map's
/// units. `std_error` may be null.
///
/// # Safety
/// `c` must be a live handle, `value` a valid pointer, `std_error` valid or null.
#[no_mangle]
pub unsafe extern "C" fn mm_kl_pair(
    c: *const MmCenteredMap,
    i: usize,
    j: usize,
    value: *mut f64,
    std_error: *mut f64,
) -> MmStatus {
    guard(|| {
        let c = &get(c, "c")?.inner;
        let value = out(value, "value")?;
        let e = kl_pair(c, i, j)?;
        *value = e.value;
        if let Some(se) = std_error.as_mut() {
            *se = e.std_error;
        }
        Ok(())
    })
}

/// Full `k x k` KL matrix, row-major. `std_errors` may be null; otherwise it
/// also holds `len` values.
///
/// # Safety
/// `c` must be a live handle; `values` (and `std_errors` if non-null) must
/// have room for `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn mm_kl_matrix(
    c: *const MmCenteredMap,
    values: *mut f64,
    std_errors: *mut f64,
    len: usize,
) -> MmStatus {
    guard(|| {
        let c = &get(c, "c")?.inner;
        let k = c.n_models();
        check_len(len, k * k, "values")?;
        let dst = slice_mut(values, len, "values")?;
        let res = kl_matrix(c, None)?;
        dst.copy_from_slice(&res.values());
        if !std_errors.is_null() {
            slice_mut(std_errors, len, "std_errors")?.copy_from_slice(&res.std_errors());
        }
        Ok(())
    })
}

/// Minimum over models of the negative mean log-likelihood in bits/byte.
/// `model_index` may be null.
///
/// # Safety
/// `m` must be a live handle, `bits_per_byte` valid, `model_index` valid or null.
#[no_mangle]
pub unsafe extern "C" fn mm_entropy_upper_bound(
    m: *const MmMatrix,
    bits_per_byte: *mut f64,
    model_index: *mut usize,
) -> MmStatus {
    guard(|| {
        let m = &get(m, "m")?.inner;
        let bits = out(bits_per_byte, "bits_per_byte")?;
        let b = entropy_upper_bound(m)?;
        *bits = b.bits_per_byte;
        if let Some(idx) = model_index.as_mut() {
            *idx = b.model_index;
        }
        Ok(())
    })
}

/// Least-squares fit of `ln disp` on `ln lag`.
///
/// # Safety
/// `lags` and `disps` must each hold `len` doubles; `fit` must be valid.
#[no_mangle]
pub unsafe extern "C" fn mm_fit_exponent(
    lags: *const f64,
    disps: *const f64,
    len: usize,
    fit: *mut MmScalingFit,
) -> MmStatus {
    guard(|| {
        let (l, d) = (slice(lags, len, "lags")?, slice(disps, len, "disps")?);
        let fit = out(fit, "fit")?;
        let pairs: Vec<(f64, f64)> = l.iter().copied().zip(d.iter().copied()).collect();
        let f = fit_exponent(&pairs)?;
        *fit = MmScalingFit {
            c: f.c,
            log_intercept: f.log_intercept,
            r_squared: f.r_squared,
            n_points: f.n_points,
            dropped: f.dropped,
        };
        Ok(())
    })
}

/// `D = 2 / c`.
///
/// # Safety
/// `dimension` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn mm_fractal_dimension(c: f64, dimension: *mut f64) -> MmStatus {
    guard(|| {
        let d = out(dimension, "dimension")?;
        *d = fractal_dimension(c)?.dimension;
        Ok(())
    })
}

/// `alpha = c_q / c_w`.
///
/// # Safety
/// `alpha` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn mm_holder_exponent(c_w: f64, c_q: f64, alpha: *mut f64) -> MmStatus {
    guard(|| {
        let a = out(alpha, "alpha")?;
        *a = holder_from_exponents(c_w, c_q)?;
        Ok(())
    })
}

/// Exact-covariance fBm path at steps `1..=n_steps`, written row-major as
/// `n_steps x dim` into `buf`.
///
/// # Safety
/// `buf` must have room for `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn mm_fbm_generate(
    hurst: f64,
    n_steps: usize,
    dim: usize,
    seed: u64,
    buf: *mut f64,
    len: usize,
) -> MmStatus {
    guard(|| {
        let want = n_steps
            .checked_mul(dim)
            .ok_or_else(|| Fail::Arg(format!("{n_steps} x {dim} overflows")))?;
        check_len(len, want, "buf")?;
        let dst = slice_mut(buf, len, "buf")?;
        let path = fbm_generate(&FbmSpec {
            hurst,
            n_steps,
            dim,
            seed,
        })?;
        for t in 0..n_steps {
            dst[t * dim..(t + 1) * dim].copy_from_slice(path.trajectory.point(t));
        }
        Ok(())
    })
}

/// Distance from `x` to the nearest integer.
#[no_mangle]
pub extern "C" fn mm_sawtooth(x: f64) -> f64 {
    sawtooth(x)
}
