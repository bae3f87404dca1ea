//! C interface to the `cata` model.
//!
//! Objects cross the boundary as opaque handles created by `*_load` or
//! `cata_train` and released with the matching `*_free`. Every fallible
//! function returns a [`CataStatus`]; on failure a description is available
//! from [`cata_last_error_message`] on the same thread.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;
use std::slice;

use cata::eval::evaluate;
use cata::{load_dataset, CataError, CataModel, Dataset, SparseVec, TrainConfig, Variant};

/// Result code of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CataStatus {
    Ok = 0,
    /// File could not be read or written.
    Io = 1,
    /// Malformed dataset, model or JSON input.
    Parse = 2,
    /// Argument or record outside its declared range.
    Invalid = 3,
    /// Training produced a non-finite objective.
    Diverged = 4,
    /// A required pointer was null.
    NullPointer = 5,
    /// Internal panic; the handle arguments should be considered unusable.
    Panic = 6,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CataVariant {
    /// Squared Frobenius penalty on the linear weights.
    Cata = 0,
    /// Group l1 penalty on per-category, per-view blocks of the linear weights.
    CataG = 1,
}

/// Training options. Fill with [`cata_train_config_default`] and override
/// fields as needed. With `ranks` null every mode gets rank 5; otherwise it
/// points at `num_ranks` values, category mode first.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct CataTrainConfig {
    pub ranks: *const usize,
    pub num_ranks: usize,
    pub alpha: f64,
    pub beta: f64,
    pub eta: f64,
    pub max_iters: usize,
    pub tol: f64,
    pub seed: u64,
    pub init_sigma: f64,
    pub variant: CataVariant,
    pub line_search: bool,
}

/// Opaque trained model.
pub struct CataModelHandle {
    inner: CataModel,
}

/// Opaque dataset.
pub struct CataDatasetHandle {
    inner: Dataset,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("nul bytes removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn clear_error() {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
}

fn status_of(err: &CataError) -> CataStatus {
    match err {
        CataError::Io(_) => CataStatus::Io,
        CataError::Parse { .. } | CataError::Json(_) | CataError::FormatVersion(_) => CataStatus::Parse,
        CataError::InvalidArgument(_) | CataError::InvalidRecord { .. } | CataError::OracleTooLarge { .. } => {
            CataStatus::Invalid
        }
        CataError::Diverged { .. } => CataStatus::Diverged,
    }
}

enum Failure {
    Null(&'static str),
    Invalid(String),
    Lib(CataError),
}

impl From<CataError> for Failure {
    fn from(e: CataError) -> Self {
        Failure::Lib(e)
    }
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> CataStatus {
    clear_error();
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => CataStatus::Ok,
        Ok(Err(Failure::Null(what))) => {
            set_error(format!("{what} is null"));
            CataStatus::NullPointer
        }
        Ok(Err(Failure::Invalid(msg))) => {
            set_error(msg);
            CataStatus::Invalid
        }
        Ok(Err(Failure::Lib(e))) => {
            set_error(e.to_string());
            status_of(&e)
        }
        Err(_) => {
            set_error("internal panic".to_string());
            CataStatus::Panic
        }
    }
}

unsafe fn non_null<'a, T>(p: *const T, what: &'static str) -> Result<&'a T, Failure> {
    p.as_ref().ok_or(Failure::Null(what))
}

unsafe fn out_ptr<'a, T>(p: *mut T, what: &'static str) -> Result<&'a mut T, Failure> {
    p.as_mut().ok_or(Failure::Null(what))
}

unsafe fn path_arg(p: *const c_char) -> Result<PathBuf, Failure> {
    if p.is_null() {
        return Err(Failure::Null("path"));
    }
    CStr::from_ptr(p)
        .to_str()
        .map(PathBuf::from)
        .map_err(|_| Failure::Invalid("path is not valid UTF-8".to_string()))
}

unsafe fn slice_arg<'a, T>(p: *const T, len: usize, what: &'static str) -> Result<&'a [T], Failure> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(Failure::Null(what));
    }
    Ok(slice::from_raw_parts(p, len))
}

/// Message for the last failed call on this thread, or null. The pointer is
/// valid until the next call into this library on the same thread.
#[no_mangle]
pub extern "C" fn cata_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn cata_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// # Safety
/// `path` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn cata_model_load(path: *const c_char, out: *mut *mut CataModelHandle) -> CataStatus {
    guard(|| {
        let out = out_ptr(out, "out")?;
        *out = ptr::null_mut();
        let model = CataModel::load(path_arg(path)?)?;
        *out = Box::into_raw(Box::new(CataModelHandle { inner: model }));
        Ok(())
    })
}

/// # Safety
/// `model` must come from this library and `path` be NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn cata_model_save(model: *const CataModelHandle, path: *const c_char) -> CataStatus {
    guard(|| {
        let model = non_null(model, "model")?;
        model.inner.save(path_arg(path)?)?;
        Ok(())
    })
}

/// # Safety
/// `model` must be null or a handle from this library that has not been freed.
#[no_mangle]
pub unsafe extern "C" fn cata_model_free(model: *mut CataModelHandle) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Number of views and categories of a model.
///
/// # Safety
/// All pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn cata_model_dims(
    model: *const CataModelHandle,
    num_views: *mut usize,
    num_categories: *mut usize,
) -> CataStatus {
    guard(|| {
        let dims = non_null(model, "model")?.inner.dims();
        *out_ptr(num_views, "num_views")? = dims.num_views();
        *out_ptr(num_categories, "num_categories")? = dims.categories();
        Ok(())
    })
}

/// Feature count of one view.
///
/// # Safety
/// All pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn cata_model_view_dim(
    model: *const CataModelHandle,
    view: usize,
    dim: *mut usize,
) -> CataStatus {
    guard(|| {
        let dims = non_null(model, "model")?.inner.dims();
        let d = dims
            .view_dims()
            .get(view)
            .ok_or_else(|| Failure::Invalid(format!("view {view} out of range")))?;
        *out_ptr(dim, "dim")? = *d;
        Ok(())
    })
}

/// Predicts one rating. Sparse features are passed per view: view `v` owns
/// the next `nnz_per_view[v]` entries of `indices` and `values`, with
/// strictly increasing indices.
///
/// # Safety
/// `nnz_per_view` must hold one count per view and `indices` / `values` the
/// sum of those counts.
#[no_mangle]
pub unsafe extern "C" fn cata_model_predict(
    model: *const CataModelHandle,
    category: usize,
    nnz_per_view: *const usize,
    indices: *const usize,
    values: *const f64,
    out: *mut f64,
) -> CataStatus {
    guard(|| {
        let model = &non_null(model, "model")?.inner;
        let view_dims = model.dims().view_dims();
        let counts = slice_arg(nnz_per_view, view_dims.len(), "nnz_per_view")?;
        let total = counts
            .iter()
            .try_fold(0usize, |a, &n| a.checked_add(n))
            .ok_or_else(|| Failure::Invalid("nnz counts overflow".to_string()))?;
        let idx = slice_arg(indices, total, "indices")?;
        let val = slice_arg(values, total, "values")?;
        let mut views = Vec::with_capacity(view_dims.len());
        let mut start = 0;
        for (&dim, &n) in view_dims.iter().zip(counts) {
            let end = start + n;
            views.push(SparseVec::new(dim, idx[start..end].to_vec(), val[start..end].to_vec())?);
            start = end;
        }
        *out_ptr(out, "out")? = model.predict(&views, category)?;
        Ok(())
    })
}

/// Predicts every record of a dataset into `out`, which must hold
/// `out_len == cata_dataset_len(dataset)` values.
///
/// # Safety
/// Handles must be valid and `out` must point at `out_len` doubles.
#[no_mangle]
pub unsafe extern "C" fn cata_predict_dataset(
    model: *const CataModelHandle,
    dataset: *const CataDatasetHandle,
    out: *mut f64,
    out_len: usize,
) -> CataStatus {
    guard(|| {
        let model = &non_null(model, "model")?.inner;
        let ds = &non_null(dataset, "dataset")?.inner;
        if out_len != ds.len() {
            return Err(Failure::Invalid(format!(
                "output holds {out_len} values for {} records",
                ds.len()
            )));
        }
        let preds = model.predict_batch(ds.records())?;
        if out_len > 0 {
            if out.is_null() {
                return Err(Failure::Null("out"));
            }
            slice::from_raw_parts_mut(out, out_len).copy_from_slice(&preds);
        }
        Ok(())
    })
}

/// # Safety
/// `path` must be NUL-terminated and `out` valid.
#[no_mangle]
pub unsafe extern "C" fn cata_dataset_load(path: *const c_char, out: *mut *mut CataDatasetHandle) -> CataStatus {
    guard(|| {
        let out = out_ptr(out, "out")?;
        *out = ptr::null_mut();
        let ds = load_dataset(path_arg(path)?)?;
        *out = Box::into_raw(Box::new(CataDatasetHandle { inner: ds }));
        Ok(())
    })
}

/// Number of records, or 0 for a null handle.
///
/// # Safety
/// `dataset` must be null or a valid handle.
#[no_mangle]
pub unsafe extern "C" fn cata_dataset_len(dataset: *const CataDatasetHandle) -> usize {
    dataset.as_ref().map_or(0, |d| d.inner.len())
}

/// # Safety
/// `dataset` must be null or a handle from this library that has not been freed.
#[no_mangle]
pub unsafe extern "C" fn cata_dataset_free(dataset: *mut CataDatasetHandle) {
    if !dataset.is_null() {
        drop(Box::from_raw(dataset));
    }
}

/// Library defaults: rank 5 on every mode, alpha = beta = 1e-4, eta 0.1,
/// 400 iterations, tol 1e-5, seed 0, init sigma 0.01, CATA, line search on.
///
/// # Safety
/// `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn cata_train_config_default(out: *mut CataTrainConfig) -> CataStatus {
    guard(|| {
        let d = TrainConfig::new(0);
        *out_ptr(out, "out")? = CataTrainConfig {
            ranks: ptr::null(),
            num_ranks: 0,
            alpha: d.alpha,
            beta: d.beta,
            eta: d.eta,
            max_iters: d.max_iters,
            tol: d.tol,
            seed: d.seed,
            init_sigma: d.init_sigma,
            variant: CataVariant::Cata,
            line_search: d.line_search,
        };
        Ok(())
    })
}

unsafe fn to_config(c: &CataTrainConfig, num_views: usize) -> Result<TrainConfig, Failure> {
    let ranks = if c.ranks.is_null() {
        vec![5; num_views + 1]
    } else {
        slice_arg(c.ranks, c.num_ranks, "ranks")?.to_vec()
    };
    Ok(TrainConfig {
        ranks,
        alpha: c.alpha,
        beta: c.beta,
        eta: c.eta,
        max_iters: c.max_iters,
        tol: c.tol,
        seed: c.seed,
        init_sigma: c.init_sigma,
        variant: match c.variant {
            CataVariant::Cata => Variant::Cata,
            CataVariant::CataG => Variant::CataG,
        },
        line_search: c.line_search,
    })
}

/// Trains a model on a dataset. On success `*out` owns a new model handle
/// and `final_objective` (if not null) receives the last objective value.
///
/// # Safety
/// Handles and pointers must be valid; `final_objective` may be null.
#[no_mangle]
pub unsafe extern "C" fn cata_train(
    dataset: *const CataDatasetHandle,
    config: *const CataTrainConfig,
    out: *mut *mut CataModelHandle,
    final_objective: *mut f64,
) -> CataStatus {
    guard(|| {
        let out = out_ptr(out, "out")?;
        *out = ptr::null_mut();
        let ds = &non_null(dataset, "dataset")?.inner;
        let cfg = to_config(non_null(config, "config")?, ds.dims().num_views())?;
        let (model, report) = cata::train(ds, &cfg)?;
        if let Some(obj) = final_objective.as_mut() {
            *obj = report.final_objective;
        }
        *out = Box::into_raw(Box::new(CataModelHandle { inner: model }));
        Ok(())
    })
}

/// Overall MAE and RMSE of a model on a dataset.
///
/// # Safety
/// All pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn cata_evaluate(
    model: *const CataModelHandle,
    dataset: *const CataDatasetHandle,
    mae: *mut f64,
    rmse: *mut f64,
) -> CataStatus {
    guard(|| {
        let m = evaluate(&non_null(model, "model")?.inner, &non_null(dataset, "dataset")?.inner)?;
        *out_ptr(mae, "mae")? = m.mae;
        *out_ptr(rmse, "rmse")? = m.rmse;
        Ok(())
    })
}
