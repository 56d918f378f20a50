//! C ABI for `cve-gnn`.
//!
//! Objects are opaque handles created by `cve_*_new`/`cve_*_load`/`cve_train`
//! and released with the matching `cve_*_free`. Every fallible call returns a
//! [`CveStatus`]; on failure `cve_last_error()` describes the problem until
//! the next call on the same thread.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;

use cve_gnn::config::{ExperimentSpec, Settings};
use cve_gnn::metrics::RunMetrics;
use cve_gnn::model::ModelParams;
use cve_gnn::sbm::{gen_sbm, SbmParams};
use cve_gnn::trainer::{evaluate_splits, train};
use cve_gnn::{build_normalized_propagation, checkpoint, load_dataset, write_dataset, Dataset, Error};

/// Result codes.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CveStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    Io = 3,
    Parse = 4,
    Dataset = 5,
    Config = 6,
    Numeric = 7,
    Checkpoint = 8,
    Panic = 9,
}

/// A loaded or generated dataset.
pub struct CveDataset {
    inner: Dataset,
}

/// Experiment settings, as key-value pairs.
pub struct CveConfig {
    inner: Settings,
}

/// Trained weights together with the metrics of the run that produced them.
pub struct CveModel {
    params: ModelParams,
    metrics: RunMetrics,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> CveStatus {
    match e {
        Error::Io { .. } => CveStatus::Io,
        Error::Parse { .. } | Error::IndexOutOfRange { .. } | Error::RowCount { .. } => CveStatus::Parse,
        Error::Dataset(_)
        | Error::LabelOutOfRange { .. }
        | Error::EmptyTrainSet
        | Error::EmptyNodeSet
        | Error::Dimension(_)
        | Error::CacheInvalid(_) => CveStatus::Dataset,
        Error::NonFiniteGradient { .. } | Error::NonFiniteLoss { .. } => CveStatus::Numeric,
        Error::Config(_) | Error::Usage(_) => CveStatus::Config,
        Error::Checkpoint(_) => CveStatus::Checkpoint,
    }
}

enum Failure {
    Status(CveStatus, String),
    Core(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Core(e)
    }
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> CveStatus {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => CveStatus::Ok,
        Ok(Err(Failure::Status(s, msg))) => {
            set_error(msg);
            s
        }
        Ok(Err(Failure::Core(e))) => {
            set_error(e.to_string());
            status_of(&e)
        }
        Err(_) => {
            set_error("internal panic".into());
            CveStatus::Panic
        }
    }
}

unsafe fn str_arg<'a>(p: *const c_char, name: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(Failure::Status(CveStatus::NullPointer, format!("{name} is null")));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Failure::Status(CveStatus::InvalidUtf8, format!("{name} is not valid UTF-8")))
}

unsafe fn obj<'a, T>(p: *const T, name: &str) -> Result<&'a T, Failure> {
    p.as_ref().ok_or_else(|| Failure::Status(CveStatus::NullPointer, format!("{name} is null")))
}

unsafe fn out<'a, T>(p: *mut T, name: &str) -> Result<&'a mut T, Failure> {
    p.as_mut().ok_or_else(|| Failure::Status(CveStatus::NullPointer, format!("{name} is null")))
}

/// Message for the most recent failure on this thread, or null. Valid until
/// the next `cve_*` call on the same thread.
#[no_mangle]
pub extern "C" fn cve_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static string.
#[no_mangle]
pub extern "C" fn cve_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Loads a dataset directory.
///
/// # Safety
/// `dir` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn cve_dataset_load(dir: *const c_char, out_ds: *mut *mut CveDataset) -> CveStatus {
    guard(|| {
        let dir = str_arg(dir, "dir")?;
        let slot = out(out_ds, "out")?;
        let inner = load_dataset(&PathBuf::from(dir))?;
        *slot = Box::into_raw(Box::new(CveDataset { inner }));
        Ok(())
    })
}

/// Generates a stochastic block model dataset.
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn cve_dataset_gen_sbm(
    nodes: usize,
    blocks: usize,
    p_in: f64,
    p_out: f64,
    dim: usize,
    seed: u64,
    out_ds: *mut *mut CveDataset,
) -> CveStatus {
    guard(|| {
        let slot = out(out_ds, "out")?;
        let inner = gen_sbm(&SbmParams { nodes, blocks, p_in, p_out, dim, seed })?;
        *slot = Box::into_raw(Box::new(CveDataset { inner }));
        Ok(())
    })
}

/// Writes a dataset directory.
///
/// # Safety
/// `ds` must come from this library; `dir` must be NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn cve_dataset_save(ds: *const CveDataset, dir: *const c_char) -> CveStatus {
    guard(|| {
        let ds = obj(ds, "dataset")?;
        let dir = str_arg(dir, "dir")?;
        write_dataset(&PathBuf::from(dir), &ds.inner)?;
        Ok(())
    })
}

/// Node count, or 0 for a null handle.
///
/// # Safety
/// `ds` must be null or come from this library.
#[no_mangle]
pub unsafe extern "C" fn cve_dataset_num_nodes(ds: *const CveDataset) -> usize {
    ds.as_ref().map_or(0, |d| d.inner.num_nodes())
}

/// # Safety
/// `ds` must be null or come from this library.
#[no_mangle]
pub unsafe extern "C" fn cve_dataset_num_features(ds: *const CveDataset) -> usize {
    ds.as_ref().map_or(0, |d| d.inner.num_features())
}

/// # Safety
/// `ds` must be null or come from this library.
#[no_mangle]
pub unsafe extern "C" fn cve_dataset_num_classes(ds: *const CveDataset) -> usize {
    ds.as_ref().map_or(0, |d| d.inner.num_classes())
}

/// # Safety
/// `ds` must be null or come from this library, and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn cve_dataset_free(ds: *mut CveDataset) {
    if !ds.is_null() {
        drop(Box::from_raw(ds));
    }
}

/// Empty settings; every key takes its default.
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn cve_config_new(out_cfg: *mut *mut CveConfig) -> CveStatus {
    guard(|| {
        *out(out_cfg, "out")? = Box::into_raw(Box::new(CveConfig { inner: Settings::new() }));
        Ok(())
    })
}

/// Reads a `key = value` configuration file.
///
/// # Safety
/// `path` must be NUL-terminated and `out` valid.
#[no_mangle]
pub unsafe extern "C" fn cve_config_load(path: *const c_char, out_cfg: *mut *mut CveConfig) -> CveStatus {
    guard(|| {
        let path = str_arg(path, "path")?;
        let slot = out(out_cfg, "out")?;
        let inner = Settings::load(&PathBuf::from(path))?;
        *slot = Box::into_raw(Box::new(CveConfig { inner }));
        Ok(())
    })
}

/// Sets one key, as the matching command-line flag would.
///
/// # Safety
/// `cfg` must come from this library; `key` and `value` must be
/// NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn cve_config_set(cfg: *mut CveConfig, key: *const c_char, value: *const c_char) -> CveStatus {
    guard(|| {
        let cfg = out(cfg, "config")?;
        let key = str_arg(key, "key")?;
        let value = str_arg(value, "value")?;
        cfg.inner.set_flag(key, value)?;
        Ok(())
    })
}

/// Checks that the settings form a consistent experiment.
///
/// # Safety
/// `cfg` must come from this library.
#[no_mangle]
pub unsafe extern "C" fn cve_config_validate(cfg: *const CveConfig) -> CveStatus {
    guard(|| {
        ExperimentSpec::from_settings(&obj(cfg, "config")?.inner)?;
        Ok(())
    })
}

/// # Safety
/// `cfg` must be null or come from this library, and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn cve_config_free(cfg: *mut CveConfig) {
    if !cfg.is_null() {
        drop(Box::from_raw(cfg));
    }
}

/// Trains one run on `ds` with `cfg`.
///
/// # Safety
/// Handles must come from this library; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn cve_train(
    ds: *const CveDataset,
    cfg: *const CveConfig,
    out_model: *mut *mut CveModel,
) -> CveStatus {
    guard(|| {
        let ds = obj(ds, "dataset")?;
        let cfg = obj(cfg, "config")?;
        let slot = out(out_model, "out")?;
        let spec = ExperimentSpec::from_settings(&cfg.inner)?;
        let (params, metrics) = train(&ds.inner, &spec.train)?;
        *slot = Box::into_raw(Box::new(CveModel { params, metrics }));
        Ok(())
    })
}

/// Writes the training metrics CSV.
///
/// # Safety
/// `model` must come from this library; `path` must be NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn cve_model_write_metrics(model: *const CveModel, path: *const c_char) -> CveStatus {
    guard(|| {
        let model = obj(model, "model")?;
        model.metrics.save_csv(&PathBuf::from(str_arg(path, "path")?))?;
        Ok(())
    })
}

/// Number of metric rows recorded during training; 0 for loaded models.
///
/// # Safety
/// `model` must be null or come from this library.
#[no_mangle]
pub unsafe extern "C" fn cve_model_num_records(model: *const CveModel) -> usize {
    model.as_ref().map_or(0, |m| m.metrics.records.len())
}

/// Best test accuracy seen during training.
///
/// # Safety
/// `model` must come from this library; `acc` must be valid.
#[no_mangle]
pub unsafe extern "C" fn cve_model_max_test_acc(model: *const CveModel, acc: *mut f64) -> CveStatus {
    guard(|| {
        *out(acc, "acc")? = obj(model, "model")?.metrics.max_test_acc();
        Ok(())
    })
}

/// Train, validation and test accuracy of `model` on `ds`, written to
/// `acc[0..3]`. An empty split reports 0.
///
/// # Safety
/// Handles must come from this library; `acc` must hold 3 doubles.
#[no_mangle]
pub unsafe extern "C" fn cve_model_evaluate(model: *const CveModel, ds: *const CveDataset, acc: *mut f64) -> CveStatus {
    guard(|| {
        let model = obj(model, "model")?;
        let ds = obj(ds, "dataset")?;
        if acc.is_null() {
            return Err(Failure::Status(CveStatus::NullPointer, "acc is null".into()));
        }
        let p = build_normalized_propagation(&ds.inner.graph);
        let r = evaluate_splits(&p, &ds.inner, &model.params)?;
        std::slice::from_raw_parts_mut(acc, 3).copy_from_slice(&r);
        Ok(())
    })
}

/// # Safety
/// `model` must come from this library; `path` must be NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn cve_model_save(model: *const CveModel, path: *const c_char) -> CveStatus {
    guard(|| {
        let model = obj(model, "model")?;
        checkpoint::save(&PathBuf::from(str_arg(path, "path")?), &model.params)?;
        Ok(())
    })
}

/// Loads a checkpoint. The resulting model has no metrics.
///
/// # Safety
/// `path` must be NUL-terminated and `out` valid.
#[no_mangle]
pub unsafe extern "C" fn cve_model_load(path: *const c_char, out_model: *mut *mut CveModel) -> CveStatus {
    guard(|| {
        let path = str_arg(path, "path")?;
        let slot = out(out_model, "out")?;
        let params = checkpoint::load(&PathBuf::from(path))?;
        *slot = Box::into_raw(Box::new(CveModel { params, metrics: RunMetrics::default() }));
        Ok(())
    })
}

/// # Safety
/// `model` must be null or come from this library, and not be used
/// afterwards.
#[no_mangle]
pub unsafe extern "C" fn cve_model_free(model: *mut CveModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}
