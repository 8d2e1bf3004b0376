//! C ABI for `collnmf`.
//!
//! Conventions:
//!
//! * Every fallible function returns a [`CollnmfStatus`]; `COLLNMF_STATUS_OK`
//!   is zero. On failure a human-readable message is available from
//!   [`collnmf_last_error_message`] on the same thread until the next call.
//! * Objects are opaque handles created by `*_parse`, `*_build`, `*_new` or
//!   `collnmf_factorize` and released by the matching `*_free`. Passing NULL
//!   to a `*_free` function is a no-op.
//! * Dense matrices cross the boundary as row-major `double` buffers. Copy
//!   functions take the buffer capacity in elements and fail with
//!   `COLLNMF_STATUS_BUFFER_TOO_SMALL` (writing nothing) if it is too small.
//! * Panics never unwind into the caller; they surface as
//!   `COLLNMF_STATUS_PANIC`.

use std::cell::RefCell;
use std::collections::BTreeSet;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};

use collnmf::analysis::{assign_clusters, classify_secondary, ReadingVector};
use collnmf::collation::{
    apply_exclusions, parse_collation, CellState, Collation, ExclusionPolicy,
};
use collnmf::factorize::{factorize, hoyer_sparseness, FactorConfig, Factorization, Init};
use collnmf::matrix::{build_matrix, weighted, CollationMatrix, Weighting};
use collnmf::Error;
use nalgebra::DMatrix;

/// Result code of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CollnmfStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    Parse = 3,
    Config = 4,
    Empty = 5,
    Dimension = 6,
    Sparseness = 7,
    Numerical = 8,
    Query = 9,
    Artifact = 10,
    Io = 11,
    Format = 12,
    BufferTooSmall = 13,
    Panic = 14,
}

impl CollnmfStatus {
    fn from_error(e: &Error) -> Self {
        match e.kind() {
            "parse" => CollnmfStatus::Parse,
            "config" => CollnmfStatus::Config,
            "empty" => CollnmfStatus::Empty,
            "dimension" => CollnmfStatus::Dimension,
            "sparseness" => CollnmfStatus::Sparseness,
            "numerical" => CollnmfStatus::Numerical,
            "query" => CollnmfStatus::Query,
            "artifact" => CollnmfStatus::Artifact,
            "io" => CollnmfStatus::Io,
            _ => CollnmfStatus::Format,
        }
    }
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CollnmfWeighting {
    Uniform = 0,
    Idf = 1,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CollnmfInit {
    Nndsvd = 0,
    Random = 1,
}

/// Exclusion policy. Each `drop_*` flag removes cells in that state.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CollnmfPolicy {
    pub drop_lacunose: bool,
    pub drop_uncertain: bool,
    pub drop_corrector: bool,
    pub drop_overlapped: bool,
    pub drop_singular_readings: bool,
    pub min_extant_readings: usize,
}

impl From<&CollnmfPolicy> for ExclusionPolicy {
    fn from(p: &CollnmfPolicy) -> Self {
        let drop_states: BTreeSet<CellState> = [
            (p.drop_lacunose, CellState::Lacunose),
            (p.drop_uncertain, CellState::Uncertain),
            (p.drop_corrector, CellState::Corrector),
            (p.drop_overlapped, CellState::Overlapped),
        ]
        .into_iter()
        .filter_map(|(on, state)| on.then_some(state))
        .collect();
        ExclusionPolicy {
            drop_states,
            drop_singular_readings: p.drop_singular_readings,
            min_extant_readings: p.min_extant_readings,
        }
    }
}

/// Factorization settings. `entry_bound <= 0` or non-finite means unbounded.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CollnmfConfig {
    pub k: usize,
    pub max_iter: usize,
    pub tol: f64,
    pub init: CollnmfInit,
    pub runs: usize,
    pub seed: u64,
    pub entry_bound: f64,
    pub max_inner: usize,
}

impl From<&CollnmfConfig> for FactorConfig {
    fn from(c: &CollnmfConfig) -> Self {
        FactorConfig {
            k: c.k,
            max_iter: c.max_iter,
            tol: c.tol,
            init: match c.init {
                CollnmfInit::Nndsvd => Init::Nndsvd,
                CollnmfInit::Random => Init::Random,
            },
            runs: c.runs,
            seed: c.seed,
            entry_bound: (c.entry_bound > 0.0 && c.entry_bound.is_finite())
                .then_some(c.entry_bound),
            max_inner: c.max_inner,
        }
    }
}

/// Summary of a finished factorization.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct CollnmfStats {
    pub rows: usize,
    pub cols: usize,
    pub k: usize,
    pub n_iter: usize,
    pub dist: f64,
    pub evar: f64,
    pub w_sparseness: f64,
    pub h_sparseness: f64,
    pub converged: bool,
    pub trace_len: usize,
}

/// Parsed collation (opaque).
pub struct CollnmfCollation(Collation);

/// Filtered, weighted readings-by-witnesses matrix (opaque).
pub struct CollnmfMatrix(CollationMatrix);

/// Basis, mixture and statistics of one factorization (opaque).
pub struct CollnmfFactorization {
    fit: Factorization,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_last_error(message: impl Into<String>) {
    let text = message.into().replace('\0', " ");
    let c = CString::new(text).unwrap_or_default();
    LAST_ERROR.with(|slot| *slot.borrow_mut() = Some(c));
}

fn clear_last_error() {
    LAST_ERROR.with(|slot| *slot.borrow_mut() = None);
}

struct Failure(CollnmfStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure(CollnmfStatus::from_error(&e), e.to_string())
    }
}

fn null(what: &str) -> Failure {
    Failure(CollnmfStatus::NullPointer, format!("`{what}` is NULL"))
}

/// Runs `body`, converting errors and panics into a status code.
fn guard(body: impl FnOnce() -> Result<(), Failure>) -> CollnmfStatus {
    clear_last_error();
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(Ok(())) => CollnmfStatus::Ok,
        Ok(Err(Failure(status, message))) => {
            set_last_error(message);
            status
        }
        Err(payload) => {
            let message = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_last_error(format!("panic: {message}"));
            CollnmfStatus::Panic
        }
    }
}

unsafe fn borrow<'a, T>(ptr: *const T, what: &str) -> Result<&'a T, Failure> {
    // SAFETY: the caller guarantees `ptr` is NULL or points to a live `T`.
    unsafe { ptr.as_ref() }.ok_or_else(|| null(what))
}

unsafe fn out_slot<'a, T>(ptr: *mut T, what: &str) -> Result<&'a mut T, Failure> {
    // SAFETY: the caller guarantees `ptr` is NULL or writable.
    unsafe { ptr.as_mut() }.ok_or_else(|| null(what))
}

unsafe fn input_slice<'a>(ptr: *const f64, len: usize, what: &str) -> Result<&'a [f64], Failure> {
    if len == 0 {
        return Ok(&[]);
    }
    if ptr.is_null() {
        return Err(null(what));
    }
    // SAFETY: the caller guarantees `ptr` points to `len` readable doubles.
    Ok(unsafe { std::slice::from_raw_parts(ptr, len) })
}

unsafe fn copy_out(values: &[f64], buf: *mut f64, capacity: usize) -> Result<(), Failure> {
    if capacity < values.len() {
        return Err(Failure(
            CollnmfStatus::BufferTooSmall,
            format!("buffer holds {capacity} values, {} required", values.len()),
        ));
    }
    if values.is_empty() {
        return Ok(());
    }
    if buf.is_null() {
        return Err(null("buffer"));
    }
    // SAFETY: `buf` has room for `capacity >= values.len()` doubles.
    unsafe { std::ptr::copy_nonoverlapping(values.as_ptr(), buf, values.len()) };
    Ok(())
}

fn row_major(m: &DMatrix<f64>) -> Vec<f64> {
    m.transpose().as_slice().to_vec()
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn collnmf_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Message for the most recent failure on this thread, or NULL. The pointer
/// stays valid until the next library call on the same thread.
#[no_mangle]
pub extern "C" fn collnmf_last_error_message() -> *const c_char {
    LAST_ERROR.with(|slot| {
        slot.borrow()
            .as_ref()
            .map_or(std::ptr::null(), |c| c.as_ptr())
    })
}

/// The default exclusion policy: drop lacunose, uncertain, corrector and
/// overlapped cells and singular readings; secondary below 300 readings.
#[no_mangle]
pub extern "C" fn collnmf_policy_default() -> CollnmfPolicy {
    let p = ExclusionPolicy::default();
    CollnmfPolicy {
        drop_lacunose: p.drop_states.contains(&CellState::Lacunose),
        drop_uncertain: p.drop_states.contains(&CellState::Uncertain),
        drop_corrector: p.drop_states.contains(&CellState::Corrector),
        drop_overlapped: p.drop_states.contains(&CellState::Overlapped),
        drop_singular_readings: p.drop_singular_readings,
        min_extant_readings: p.min_extant_readings,
    }
}

/// Default factorization settings for `k` clusters.
#[no_mangle]
pub extern "C" fn collnmf_config_default(k: usize) -> CollnmfConfig {
    let c = FactorConfig::new(k);
    CollnmfConfig {
        k,
        max_iter: c.max_iter,
        tol: c.tol,
        init: CollnmfInit::Nndsvd,
        runs: c.runs,
        seed: c.seed,
        entry_bound: 0.0,
        max_inner: c.max_inner,
    }
}

/// Parses a TSV or JSON collation from a NUL-terminated UTF-8 string.
///
/// # Safety
/// `text` must be NULL or a valid NUL-terminated string; `out` must be NULL
/// or writable.
#[no_mangle]
pub unsafe extern "C" fn collnmf_collation_parse(
    text: *const c_char,
    out: *mut *mut CollnmfCollation,
) -> CollnmfStatus {
    guard(|| {
        let out = unsafe { out_slot(out, "out") }?;
        *out = std::ptr::null_mut();
        if text.is_null() {
            return Err(null("text"));
        }
        // SAFETY: checked non-NULL; caller guarantees NUL termination.
        let source = unsafe { CStr::from_ptr(text) }
            .to_str()
            .map_err(|e| Failure(CollnmfStatus::InvalidUtf8, e.to_string()))?;
        let collation = parse_collation(source)?;
        *out = Box::into_raw(Box::new(CollnmfCollation(collation)));
        Ok(())
    })
}

/// # Safety
/// `collation` must be NULL or a handle from `collnmf_collation_parse` that
/// has not been freed.
#[no_mangle]
pub unsafe extern "C" fn collnmf_collation_free(collation: *mut CollnmfCollation) {
    if !collation.is_null() {
        // SAFETY: ownership returns from the caller.
        drop(unsafe { Box::from_raw(collation) });
    }
}

/// Number of witnesses, units and cells.
///
/// # Safety
/// `collation` must be a live handle; each out pointer must be NULL (skipped)
/// or writable.
#[no_mangle]
pub unsafe extern "C" fn collnmf_collation_counts(
    collation: *const CollnmfCollation,
    witnesses: *mut usize,
    units: *mut usize,
    cells: *mut usize,
) -> CollnmfStatus {
    guard(|| {
        let c = &unsafe { borrow(collation, "collation") }?.0;
        for (ptr, value) in [
            (witnesses, c.witnesses().len()),
            (units, c.units().len()),
            (cells, c.cells().len()),
        ] {
            // SAFETY: caller guarantees NULL or writable.
            if let Some(slot) = unsafe { ptr.as_mut() } {
                *slot = value;
            }
        }
        Ok(())
    })
}

/// Applies the exclusion policy and weighting to build the primary matrix.
///
/// # Safety
/// `collation` and `policy` must be live; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn collnmf_matrix_build(
    collation: *const CollnmfCollation,
    policy: *const CollnmfPolicy,
    weighting: CollnmfWeighting,
    out: *mut *mut CollnmfMatrix,
) -> CollnmfStatus {
    guard(|| {
        let out = unsafe { out_slot(out, "out") }?;
        *out = std::ptr::null_mut();
        let c = &unsafe { borrow(collation, "collation") }?.0;
        let policy = ExclusionPolicy::from(unsafe { borrow(policy, "policy") }?);
        policy.validate()?;
        let filtered = apply_exclusions(c, &policy)?;
        let scheme = match weighting {
            CollnmfWeighting::Uniform => Weighting::Uniform,
            CollnmfWeighting::Idf => Weighting::Idf,
        };
        let x = weighted(&build_matrix(&filtered)?, scheme)?;
        *out = Box::into_raw(Box::new(CollnmfMatrix(x)));
        Ok(())
    })
}

/// Wraps a row-major `rows x cols` non-negative matrix.
///
/// # Safety
/// `data` must point to `rows * cols` doubles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn collnmf_matrix_from_dense(
    rows: usize,
    cols: usize,
    data: *const f64,
    out: *mut *mut CollnmfMatrix,
) -> CollnmfStatus {
    guard(|| {
        let out = unsafe { out_slot(out, "out") }?;
        *out = std::ptr::null_mut();
        let len = rows
            .checked_mul(cols)
            .ok_or_else(|| Failure(CollnmfStatus::Dimension, "rows * cols overflows".into()))?;
        let values = unsafe { input_slice(data, len, "data") }?;
        let dense = DMatrix::from_row_slice(rows, cols, values);
        let x = CollationMatrix::from_dense(&dense)?;
        *out = Box::into_raw(Box::new(CollnmfMatrix(x)));
        Ok(())
    })
}

/// # Safety
/// `matrix` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn collnmf_matrix_free(matrix: *mut CollnmfMatrix) {
    if !matrix.is_null() {
        // SAFETY: ownership returns from the caller.
        drop(unsafe { Box::from_raw(matrix) });
    }
}

/// Rows (readings), columns (primary witnesses) and stored entries.
///
/// # Safety
/// `matrix` must be live; each out pointer must be NULL (skipped) or writable.
#[no_mangle]
pub unsafe extern "C" fn collnmf_matrix_dims(
    matrix: *const CollnmfMatrix,
    rows: *mut usize,
    cols: *mut usize,
    nnz: *mut usize,
) -> CollnmfStatus {
    guard(|| {
        let x = &unsafe { borrow(matrix, "matrix") }?.0;
        for (ptr, value) in [(rows, x.m()), (cols, x.n()), (nnz, x.nnz())] {
            // SAFETY: caller guarantees NULL or writable.
            if let Some(slot) = unsafe { ptr.as_mut() } {
                *slot = value;
            }
        }
        Ok(())
    })
}

/// Factorizes `matrix` into basis `W` (rows x k) and mixture `H` (k x cols).
///
/// # Safety
/// `matrix` and `config` must be live; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn collnmf_factorize(
    matrix: *const CollnmfMatrix,
    config: *const CollnmfConfig,
    out: *mut *mut CollnmfFactorization,
) -> CollnmfStatus {
    guard(|| {
        let out = unsafe { out_slot(out, "out") }?;
        *out = std::ptr::null_mut();
        let x = &unsafe { borrow(matrix, "matrix") }?.0;
        let cfg = FactorConfig::from(unsafe { borrow(config, "config") }?);
        let fit = factorize(x, &cfg)?;
        *out = Box::into_raw(Box::new(CollnmfFactorization { fit }));
        Ok(())
    })
}

/// # Safety
/// `fit` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn collnmf_factorization_free(fit: *mut CollnmfFactorization) {
    if !fit.is_null() {
        // SAFETY: ownership returns from the caller.
        drop(unsafe { Box::from_raw(fit) });
    }
}

/// # Safety
/// `fit` must be live; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn collnmf_factorization_stats(
    fit: *const CollnmfFactorization,
    out: *mut CollnmfStats,
) -> CollnmfStatus {
    guard(|| {
        let f = &unsafe { borrow(fit, "fit") }?.fit;
        let out = unsafe { out_slot(out, "out") }?;
        let s = &f.stats;
        *out = CollnmfStats {
            rows: f.w.nrows(),
            cols: f.h.ncols(),
            k: s.k,
            n_iter: s.n_iter,
            dist: s.dist,
            evar: s.evar,
            w_sparseness: s.w_sparseness,
            h_sparseness: s.h_sparseness,
            converged: s.converged,
            trace_len: s.objective_trace.len(),
        };
        Ok(())
    })
}

/// Copies `W` row-major into `buf` (capacity `rows * k`).
///
/// # Safety
/// `fit` must be live; `buf` must have room for `capacity` doubles.
#[no_mangle]
pub unsafe extern "C" fn collnmf_factorization_copy_w(
    fit: *const CollnmfFactorization,
    buf: *mut f64,
    capacity: usize,
) -> CollnmfStatus {
    guard(|| {
        let f = &unsafe { borrow(fit, "fit") }?.fit;
        unsafe { copy_out(&row_major(&f.w), buf, capacity) }
    })
}

/// Copies `H` row-major into `buf` (capacity `k * cols`).
///
/// # Safety
/// `fit` must be live; `buf` must have room for `capacity` doubles.
#[no_mangle]
pub unsafe extern "C" fn collnmf_factorization_copy_h(
    fit: *const CollnmfFactorization,
    buf: *mut f64,
    capacity: usize,
) -> CollnmfStatus {
    guard(|| {
        let f = &unsafe { borrow(fit, "fit") }?.fit;
        unsafe { copy_out(&row_major(&f.h), buf, capacity) }
    })
}

/// Copies the objective trace (capacity `trace_len`).
///
/// # Safety
/// `fit` must be live; `buf` must have room for `capacity` doubles.
#[no_mangle]
pub unsafe extern "C" fn collnmf_factorization_copy_trace(
    fit: *const CollnmfFactorization,
    buf: *mut f64,
    capacity: usize,
) -> CollnmfStatus {
    guard(|| {
        let f = &unsafe { borrow(fit, "fit") }?.fit;
        unsafe { copy_out(&f.stats.objective_trace, buf, capacity) }
    })
}

/// Argmax cluster of every witness (0-based), or -1 when its mixture column
/// is all zero. `labels` must hold `cols` entries.
///
/// # Safety
/// `fit` must be live; `labels` must have room for `capacity` values.
#[no_mangle]
pub unsafe extern "C" fn collnmf_factorization_assign(
    fit: *const CollnmfFactorization,
    labels: *mut i64,
    capacity: usize,
) -> CollnmfStatus {
    guard(|| {
        let f = &unsafe { borrow(fit, "fit") }?.fit;
        let assignment = assign_clusters(&f.h);
        let n = assignment.labels.len();
        if capacity < n {
            return Err(Failure(
                CollnmfStatus::BufferTooSmall,
                format!("buffer holds {capacity} labels, {n} required"),
            ));
        }
        if n > 0 && labels.is_null() {
            return Err(null("labels"));
        }
        for (j, label) in assignment.labels.iter().enumerate() {
            // SAFETY: `labels` has room for `capacity >= n` values.
            unsafe { *labels.add(j) = label.map_or(-1, |c| c as i64) };
        }
        Ok(())
    })
}

/// Non-negative least-squares mixture of a reading vector against the basis.
///
/// `readings` holds one value per matrix row. `extant` is NULL (every row is
/// extant) or a per-row mask; only rows with a non-zero mask take part in the
/// fit. `coefficients` receives `k` values.
///
/// # Safety
/// `fit` must be live; `readings` and (if non-NULL) `extant` must hold `rows`
/// values; `coefficients` must have room for `capacity` doubles.
#[no_mangle]
pub unsafe extern "C" fn collnmf_classify(
    fit: *const CollnmfFactorization,
    readings: *const f64,
    extant: *const u8,
    rows: usize,
    coefficients: *mut f64,
    capacity: usize,
) -> CollnmfStatus {
    guard(|| {
        let f = &unsafe { borrow(fit, "fit") }?.fit;
        if rows != f.w.nrows() {
            return Err(Failure(
                CollnmfStatus::Dimension,
                format!("{rows} reading values for a {}-row basis", f.w.nrows()),
            ));
        }
        let values = unsafe { input_slice(readings, rows, "readings") }?;
        let mask: Vec<bool> = if extant.is_null() {
            vec![true; rows]
        } else {
            // SAFETY: caller guarantees `rows` readable bytes.
            unsafe { std::slice::from_raw_parts(extant, rows) }
                .iter()
                .map(|&b| b != 0)
                .collect()
        };
        if let Some(bad) = values.iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
            return Err(Failure(
                CollnmfStatus::Dimension,
                format!("reading value {bad} must be finite and non-negative"),
            ));
        }
        let rv = ReadingVector {
            witness: String::new(),
            entries: values
                .iter()
                .enumerate()
                .filter(|(r, v)| mask[*r] && **v != 0.0)
                .map(|(r, v)| (r, *v))
                .collect(),
            extant_rows: (0..rows).filter(|&r| mask[r]).collect(),
        };
        let mv = classify_secondary(&f.w, &rv)?;
        unsafe { copy_out(&mv.coefficients, coefficients, capacity) }
    })
}

/// Hoyer sparseness of a vector of length at least 2 with a non-zero entry.
///
/// # Safety
/// `values` must hold `len` doubles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn collnmf_hoyer_sparseness(
    values: *const f64,
    len: usize,
    out: *mut f64,
) -> CollnmfStatus {
    guard(|| {
        let out = unsafe { out_slot(out, "out") }?;
        let v = unsafe { input_slice(values, len, "values") }?;
        *out = hoyer_sparseness(v)?;
        Ok(())
    })
}
