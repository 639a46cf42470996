//! C interface to `marginalpriv`.
//!
//! Objects cross the boundary as opaque handles (`MpDatabase`,
//! `MpFingerprintingCode`) created by `*_new`/`*_generate`/`*_load` and
//! released with the matching `*_free`. Every fallible call returns an
//! [`MpStatus`]; on failure `mp_last_error` yields a message for the calling
//! thread. Output buffers are caller-allocated with an explicit length.
//! Panics never unwind into C: they surface as `MP_STATUS_PANIC`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;

use marginalpriv::bounds::sample_complexity_bounds;
use marginalpriv::database::DatabaseFormat;
use marginalpriv::fingerprinting::{fpc_generate, fpc_min_length, FingerprintingCode};
use marginalpriv::gauss_sv::GaussSvConfig;
use marginalpriv::mechanisms::{linf_sample, GaussianCalibration, Mechanism};
use marginalpriv::rng::rng_from_seed;
use marginalpriv::{group_privacy, Database, Error, PrivacyParams};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MpStatus {
    Ok = 0,
    InvalidArgument = 1,
    Dimension = 2,
    Domain = 3,
    Sequence = 4,
    Format = 5,
    Io = 6,
    NullPointer = 7,
    BufferTooSmall = 8,
    Panic = 9,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MpMechanism {
    Laplace = 0,
    Gaussian = 1,
    Linf = 2,
    GaussSv = 3,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MpCalibration {
    Baseline = 0,
    Analytic = 1,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MpDatabaseFormat {
    Binary = 0,
    Text = 1,
}

/// Sample-complexity bounds at one parameter point. Entries that need δ are
/// NaN when δ was not positive.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MpBounds {
    pub laplace_approx_upper: f64,
    pub laplace_pure_upper: f64,
    pub fingerprinting_lower: f64,
    pub gauss_sv_upper: f64,
    pub packing_lower: f64,
}

/// Opaque ±1 database.
pub struct MpDatabase(Database);

/// Opaque fingerprinting code.
pub struct MpFingerprintingCode(FingerprintingCode);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_last_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("interior NULs removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

enum Failure {
    Lib(Error),
    Status(MpStatus, String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Lib(e)
    }
}

fn status_of(e: &Error) -> MpStatus {
    match e {
        Error::Parameter(_) => MpStatus::InvalidArgument,
        Error::Dimension { .. } => MpStatus::Dimension,
        Error::Domain(_) => MpStatus::Domain,
        Error::Sequence(_) => MpStatus::Sequence,
        Error::Format(_) => MpStatus::Format,
        Error::Io(_) => MpStatus::Io,
    }
}

fn null(what: &str) -> Failure {
    Failure::Status(MpStatus::NullPointer, format!("{what} is null"))
}

/// Runs `f`, converting errors and panics into a status plus message.
fn guard(f: impl FnOnce() -> Result<(), Failure>) -> MpStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => MpStatus::Ok,
        Ok(Err(Failure::Lib(e))) => {
            set_last_error(e.to_string());
            status_of(&e)
        }
        Ok(Err(Failure::Status(s, msg))) => {
            set_last_error(msg);
            s
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_last_error(format!("panic: {msg}"));
            MpStatus::Panic
        }
    }
}

unsafe fn deref<'a, T>(p: *const T, what: &str) -> Result<&'a T, Failure> {
    p.as_ref().ok_or_else(|| null(what))
}

unsafe fn out_slice<'a>(p: *mut f64, len: usize, needed: usize, what: &str) -> Result<&'a mut [f64], Failure> {
    if p.is_null() {
        return Err(null(what));
    }
    if len < needed {
        return Err(Failure::Status(MpStatus::BufferTooSmall, format!("{what} holds {len}, need {needed}")));
    }
    Ok(std::slice::from_raw_parts_mut(p, needed))
}

unsafe fn path_arg(p: *const c_char) -> Result<PathBuf, Failure> {
    if p.is_null() {
        return Err(null("path"));
    }
    let s = CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Failure::Status(MpStatus::InvalidArgument, "path is not UTF-8".into()))?;
    Ok(PathBuf::from(s))
}

unsafe fn write_handle<T>(out: *mut *mut T, value: T) -> Result<(), Failure> {
    if out.is_null() {
        return Err(null("out"));
    }
    *out = Box::into_raw(Box::new(value));
    Ok(())
}

/// Message for the last failed call on this thread, or NULL. The pointer
/// stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn mp_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Builds a database from `rows * dims` row-major entries, each +1 or -1.
///
/// # Safety
/// `signs` must point to `rows * dims` readable bytes and `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn mp_database_new(rows: usize, dims: usize, signs: *const i8, out: *mut *mut MpDatabase) -> MpStatus {
    guard(|| {
        if signs.is_null() {
            return Err(null("signs"));
        }
        let len = rows
            .checked_mul(dims)
            .ok_or_else(|| Failure::Status(MpStatus::InvalidArgument, "rows * dims overflows".into()))?;
        let db = Database::from_signs(rows, dims, std::slice::from_raw_parts(signs, len))?;
        write_handle(out, MpDatabase(db))
    })
}

/// Uniformly random database from `seed`.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn mp_database_uniform(rows: usize, dims: usize, seed: u64, out: *mut *mut MpDatabase) -> MpStatus {
    guard(|| {
        let db = Database::uniform(rows, dims, &mut rng_from_seed(seed))?;
        write_handle(out, MpDatabase(db))
    })
}

/// Reads a binary or text database file; the format is detected.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn mp_database_load(path: *const c_char, out: *mut *mut MpDatabase) -> MpStatus {
    guard(|| {
        let db = Database::load(path_arg(path)?)?;
        write_handle(out, MpDatabase(db))
    })
}

/// # Safety
/// `db` must be a live handle and `path` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn mp_database_save(db: *const MpDatabase, path: *const c_char, format: MpDatabaseFormat) -> MpStatus {
    guard(|| {
        let db = deref(db, "db")?;
        let format = match format {
            MpDatabaseFormat::Binary => DatabaseFormat::Binary,
            MpDatabaseFormat::Text => DatabaseFormat::Text,
        };
        db.0.save(path_arg(path)?, format)?;
        Ok(())
    })
}

/// # Safety
/// `db` must be NULL or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn mp_database_free(db: *mut MpDatabase) {
    if !db.is_null() {
        drop(Box::from_raw(db));
    }
}

/// Row count, or 0 for NULL.
///
/// # Safety
/// `db` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn mp_database_rows(db: *const MpDatabase) -> usize {
    db.as_ref().map_or(0, |d| d.0.rows())
}

/// Column count, or 0 for NULL.
///
/// # Safety
/// `db` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn mp_database_dims(db: *const MpDatabase) -> usize {
    db.as_ref().map_or(0, |d| d.0.dims())
}

/// Writes the `dims` exact marginals into `out`.
///
/// # Safety
/// `db` must be a live handle and `out` must hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn mp_database_marginals(db: *const MpDatabase, out: *mut f64, len: usize) -> MpStatus {
    guard(|| {
        let db = deref(db, "db")?;
        let values = db.0.marginals().values();
        out_slice(out, len, values.len(), "out")?.copy_from_slice(values);
        Ok(())
    })
}

/// One private release of the marginals of `db` into `out`. `delta` is
/// ignored by the pure mechanisms; `calibration` only affects the Gaussian ones.
///
/// # Safety
/// `db` must be a live handle and `out` must hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn mp_release(
    db: *const MpDatabase,
    mechanism: MpMechanism,
    epsilon: f64,
    delta: f64,
    calibration: MpCalibration,
    seed: u64,
    out: *mut f64,
    len: usize,
) -> MpStatus {
    guard(|| {
        let db = deref(db, "db")?;
        let calibration = match calibration {
            MpCalibration::Baseline => GaussianCalibration::Baseline,
            MpCalibration::Analytic => GaussianCalibration::Analytic,
        };
        let mech = match mechanism {
            MpMechanism::Laplace => Mechanism::Laplace { epsilon },
            MpMechanism::Gaussian => Mechanism::Gaussian { epsilon, delta, calibration },
            MpMechanism::Linf => Mechanism::Linf { epsilon },
            MpMechanism::GaussSv => Mechanism::GaussSv {
                config: GaussSvConfig::new(epsilon, delta).with_calibration(calibration),
            },
        };
        let dst = out_slice(out, len, db.0.dims(), "out")?;
        let released = mech.release(&db.0, &mut rng_from_seed(seed))?;
        dst.copy_from_slice(released.values());
        Ok(())
    })
}

/// One draw of the L-infinity noise: `d` offsets into `offsets` and the
/// radius into `radius`.
///
/// # Safety
/// `offsets` must hold `len` doubles and `radius` must be writable.
#[no_mangle]
pub unsafe extern "C" fn mp_linf_sample(
    d: usize,
    epsilon: f64,
    sensitivity: f64,
    seed: u64,
    offsets: *mut f64,
    len: usize,
    radius: *mut f64,
) -> MpStatus {
    guard(|| {
        if radius.is_null() {
            return Err(null("radius"));
        }
        let dst = out_slice(offsets, len, d, "offsets")?;
        let sample = linf_sample(d, epsilon, sensitivity, &mut rng_from_seed(seed))?;
        dst.copy_from_slice(&sample.offsets);
        *radius = sample.radius;
        Ok(())
    })
}

/// Privacy guarantee for groups of `k` rows.
///
/// # Safety
/// `epsilon_k` and `delta_k` must be writable.
#[no_mangle]
pub unsafe extern "C" fn mp_group_privacy(
    epsilon: f64,
    delta: f64,
    k: u32,
    epsilon_k: *mut f64,
    delta_k: *mut f64,
) -> MpStatus {
    guard(|| {
        if epsilon_k.is_null() || delta_k.is_null() {
            return Err(null("output"));
        }
        let g = group_privacy(PrivacyParams::new(epsilon, delta)?, k)?;
        *epsilon_k = g.epsilon_k;
        *delta_k = g.delta_k;
        Ok(())
    })
}

/// Sample-complexity bounds; pass `delta <= 0` for pure privacy only.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn mp_bounds(d: u64, alpha: f64, epsilon: f64, delta: f64, out: *mut MpBounds) -> MpStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let b = sample_complexity_bounds(d, alpha, epsilon, (delta > 0.0).then_some(delta))?;
        *out = MpBounds {
            laplace_approx_upper: b.laplace_approx_upper.unwrap_or(f64::NAN),
            laplace_pure_upper: b.laplace_pure_upper,
            fingerprinting_lower: b.approx_lower.unwrap_or(f64::NAN),
            gauss_sv_upper: b.gauss_sv_upper.unwrap_or(f64::NAN),
            packing_lower: b.pure_lower,
        };
        Ok(())
    })
}

/// Minimum code length for `n` users at soundness `delta`, or 0 on error.
#[no_mangle]
pub extern "C" fn mp_fpc_min_length(n: usize, delta: f64) -> usize {
    let mut d = 0;
    let status = guard(|| {
        d = fpc_min_length(n, delta)?;
        Ok(())
    });
    if status == MpStatus::Ok {
        d
    } else {
        0
    }
}

/// Generates a code for `n` users; `length = 0` selects the minimum length.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn mp_fpc_generate(
    n: usize,
    delta: f64,
    length: usize,
    seed: u64,
    out: *mut *mut MpFingerprintingCode,
) -> MpStatus {
    guard(|| {
        let d = if length == 0 { fpc_min_length(n, delta)? } else { length };
        let code = fpc_generate(n, delta, d, &mut rng_from_seed(seed))?;
        write_handle(out, MpFingerprintingCode(code))
    })
}

/// # Safety
/// `code` must be NULL or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn mp_fpc_free(code: *mut MpFingerprintingCode) {
    if !code.is_null() {
        drop(Box::from_raw(code));
    }
}

/// # Safety
/// `code` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn mp_fpc_users(code: *const MpFingerprintingCode) -> usize {
    code.as_ref().map_or(0, |c| c.0.users())
}

/// # Safety
/// `code` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn mp_fpc_length(code: *const MpFingerprintingCode) -> usize {
    code.as_ref().map_or(0, |c| c.0.length())
}

/// A new database handle holding a copy of the codebook.
///
/// # Safety
/// `code` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn mp_fpc_codebook(code: *const MpFingerprintingCode, out: *mut *mut MpDatabase) -> MpStatus {
    guard(|| {
        let code = deref(code, "code")?;
        write_handle(out, MpDatabase(code.0.codebook().clone()))
    })
}

/// Traces `answers` (length = code length). Sets `accused[u]` to 1 for each
/// accused user and 0 otherwise, and the number accused in `n_accused`.
///
/// # Safety
/// `answers` must hold `answers_len` doubles, `accused` must hold `users`
/// bytes, and `n_accused` must be writable.
#[no_mangle]
pub unsafe extern "C" fn mp_fpc_trace(
    code: *const MpFingerprintingCode,
    answers: *const f64,
    answers_len: usize,
    accused: *mut u8,
    users: usize,
    n_accused: *mut usize,
) -> MpStatus {
    guard(|| {
        let code = deref(code, "code")?;
        if answers.is_null() || accused.is_null() || n_accused.is_null() {
            return Err(null("argument"));
        }
        let n = code.0.users();
        if users < n {
            return Err(Failure::Status(MpStatus::BufferTooSmall, format!("accused holds {users}, need {n}")));
        }
        let result = code.0.trace(std::slice::from_raw_parts(answers, answers_len))?;
        let flags = std::slice::from_raw_parts_mut(accused, n);
        flags.fill(0);
        for &u in &result.accused {
            flags[u] = 1;
        }
        *n_accused = result.accused.len();
        Ok(())
    })
}
