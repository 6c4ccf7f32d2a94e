//! C ABI over `siamese-nas`.
//!
//! Objects cross the boundary as opaque handles that the caller frees with
//! the matching `*_free` function. Every fallible call returns an
//! [`SnStatus`]; on failure [`sn_last_error`] describes the problem for the
//! calling thread. Strings returned through `char **` outputs are owned by the
//! caller and released with [`sn_string_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use siamese_nas::analysis;
use siamese_nas::bench::{self, BenchStore};
use siamese_nas::config::RunConfig;
use siamese_nas::estimation::BudgetLedger;
use siamese_nas::search::{self, BranchScorer, SearchSpace, TrainedPredictor};
use siamese_nas::Error;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SnStatus {
    Ok = 0,
    NullArgument = 1,
    InvalidUtf8 = 2,
    Io = 3,
    Parse = 4,
    Validation = 5,
    Contract = 6,
    MissingData = 7,
    Training = 8,
    Config = 9,
    Correlation = 10,
    OutOfRange = 11,
    Panic = 12,
}

/// A loaded benchmark.
pub struct SnStore {
    inner: BenchStore,
}

/// One dataset of a store, encoded for prediction.
pub struct SnSpace {
    inner: SearchSpace,
}

/// A trained predictor with its code normalizer.
pub struct SnPredictor {
    inner: TrainedPredictor,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(err: &Error) -> SnStatus {
    match err {
        Error::Io { .. } => SnStatus::Io,
        Error::Json(_) | Error::Csv(_) | Error::Load { .. } => SnStatus::Parse,
        Error::Validation { .. }
        | Error::Cycle { .. }
        | Error::Vocabulary { .. }
        | Error::InvalidCell(_)
        | Error::EmptySpace
        | Error::EmptySubset { .. } => SnStatus::Validation,
        Error::Dimension { .. } | Error::Contract(_) | Error::State(_) => SnStatus::Contract,
        Error::MissingData { .. } | Error::MissingProxy { .. } => SnStatus::MissingData,
        Error::Training { .. } => SnStatus::Training,
        Error::Config(_) => SnStatus::Config,
        Error::Correlation(_) => SnStatus::Correlation,
    }
}

enum Failure {
    Status(SnStatus, String),
    Core(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Core(e)
    }
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> SnStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|e| *e.borrow_mut() = None);
            SnStatus::Ok
        }
        Ok(Err(Failure::Core(e))) => {
            set_error(format!("{}: {}", e.kind(), e));
            status_of(&e)
        }
        Ok(Err(Failure::Status(s, msg))) => {
            set_error(msg);
            s
        }
        Err(_) => {
            set_error("panic inside siamese-nas".into());
            SnStatus::Panic
        }
    }
}

fn null(what: &str) -> Failure {
    Failure::Status(SnStatus::NullArgument, format!("`{what}` is null"))
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Failure::Status(SnStatus::InvalidUtf8, format!("`{what}` is not UTF-8")))
}

unsafe fn ref_arg<'a, T>(p: *const T, what: &str) -> Result<&'a T, Failure> {
    p.as_ref().ok_or_else(|| null(what))
}

unsafe fn put<T>(out: *mut *mut T, value: T) {
    *out = Box::into_raw(Box::new(value));
}

unsafe fn put_string(out: *mut *mut c_char, s: String) -> Result<(), Failure> {
    let c = CString::new(s).map_err(|_| Failure::Status(SnStatus::Contract, "interior NUL in output".into()))?;
    *out = c.into_raw();
    Ok(())
}

fn check_out<T>(out: *mut T, what: &str) -> Result<(), Failure> {
    if out.is_null() {
        Err(null(what))
    } else {
        Ok(())
    }
}

/// Message for the last failed call on this thread, or NULL after a success.
/// Valid until the next call into this library from the same thread.
#[no_mangle]
pub extern "C" fn sn_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Frees a string returned by this library. NULL is ignored.
///
/// # Safety
/// `s` must come from this library and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn sn_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Loads a JSONL benchmark.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn sn_store_load(path: *const c_char, out: *mut *mut SnStore) -> SnStatus {
    guard(|| {
        check_out(out, "out")?;
        let inner = bench::load_jsonl(str_arg(path, "path")?)?;
        put(out, SnStore { inner });
        Ok(())
    })
}

/// Generates a synthetic benchmark.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn sn_store_gen_synthetic(
    seed: u64,
    size: usize,
    nodes: usize,
    vocab: usize,
    out: *mut *mut SnStore,
) -> SnStatus {
    guard(|| {
        check_out(out, "out")?;
        let inner = bench::gen_synthetic(seed, size, nodes, vocab)?;
        put(out, SnStore { inner });
        Ok(())
    })
}

/// # Safety
/// `store` must be a live handle; `path` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn sn_store_save(store: *const SnStore, path: *const c_char) -> SnStatus {
    guard(|| {
        let store = ref_arg(store, "store")?;
        store.inner.save_jsonl(str_arg(path, "path")?)?;
        Ok(())
    })
}

/// Records with FLOPs strictly below `max_flops_m`, as a new store.
///
/// # Safety
/// `store` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn sn_store_subset(store: *const SnStore, max_flops_m: f64, out: *mut *mut SnStore) -> SnStatus {
    guard(|| {
        let store = ref_arg(store, "store")?;
        check_out(out, "out")?;
        let inner = store.inner.subset_by_flops(max_flops_m)?;
        put(out, SnStore { inner });
        Ok(())
    })
}

/// Record count; 0 for NULL.
///
/// # Safety
/// `store` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn sn_store_len(store: *const SnStore) -> usize {
    store.as_ref().map_or(0, |s| s.inner.len())
}

/// # Safety
/// `store` must be NULL or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn sn_store_free(store: *mut SnStore) {
    if !store.is_null() {
        drop(Box::from_raw(store));
    }
}

/// Encodes one dataset of `store`. The space does not borrow the store.
///
/// # Safety
/// `store` must be a live handle, `dataset` a NUL-terminated string and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn sn_space_new(store: *const SnStore, dataset: *const c_char, out: *mut *mut SnSpace) -> SnStatus {
    guard(|| {
        let store = ref_arg(store, "store")?;
        check_out(out, "out")?;
        let inner = SearchSpace::new(&store.inner, str_arg(dataset, "dataset")?)?;
        put(out, SnSpace { inner });
        Ok(())
    })
}

/// # Safety
/// `space` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn sn_space_len(space: *const SnSpace) -> usize {
    space.as_ref().map_or(0, |s| s.inner.len())
}

/// Ground-truth accuracy of record `index`.
///
/// # Safety
/// `space` must be a live handle; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn sn_space_accuracy(space: *const SnSpace, index: usize, out: *mut f64) -> SnStatus {
    guard(|| {
        let space = ref_arg(space, "space")?;
        check_out(out, "out")?;
        if index >= space.inner.len() {
            return Err(Failure::Status(
                SnStatus::OutOfRange,
                format!("index {index} out of range for {} records", space.inner.len()),
            ));
        }
        *out = space.inner.accuracy(index);
        Ok(())
    })
}

/// # Safety
/// `space` must be NULL or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn sn_space_free(space: *mut SnSpace) {
    if !space.is_null() {
        drop(Box::from_raw(space));
    }
}

unsafe fn config_arg(config_json: *const c_char) -> Result<RunConfig, Failure> {
    if config_json.is_null() {
        return Ok(RunConfig::from_json("{}")?);
    }
    Ok(RunConfig::from_json(str_arg(config_json, "config_json")?)?)
}

/// Runs the full search protocol. `config_json` uses the CLI's run-config keys
/// (`bench`, `dataset` and `out_dir` are ignored) and may be NULL for defaults.
/// The report is written to `*report_json`.
///
/// # Safety
/// `space` must be a live handle, `config_json` NULL or NUL-terminated, `report_json` writable.
#[no_mangle]
pub unsafe extern "C" fn sn_search_run(
    space: *const SnSpace,
    config_json: *const c_char,
    workers: usize,
    report_json: *mut *mut c_char,
) -> SnStatus {
    guard(|| {
        let space = ref_arg(space, "space")?;
        check_out(report_json, "report_json")?;
        let cfg = config_arg(config_json)?;
        let report = search::run_search(&space.inner, &cfg.predictor(&space.inner)?, &cfg.search(), workers)?;
        put_string(report_json, serde_json::to_string(&report).map_err(Error::from)?)
    })
}

/// Trains one predictor with Batch Top Sampling and returns it.
///
/// # Safety
/// `space` must be a live handle, `config_json` NULL or NUL-terminated, `out` writable.
#[no_mangle]
pub unsafe extern "C" fn sn_predictor_train(
    space: *const SnSpace,
    config_json: *const c_char,
    seed: u64,
    out: *mut *mut SnPredictor,
) -> SnStatus {
    guard(|| {
        let space = ref_arg(space, "space")?;
        check_out(out, "out")?;
        let cfg = config_arg(config_json)?;
        let mut ledger = BudgetLedger::new();
        let outcome = search::bts_train(&space.inner, &cfg.predictor(&space.inner)?, &cfg.search(), seed, &mut ledger)?;
        put(out, SnPredictor { inner: outcome.model });
        Ok(())
    })
}

/// Predicted accuracy of record `index`: basic branch when `use_code` is 0,
/// estimation branch (using the record's Estimation Code) otherwise.
///
/// # Safety
/// `predictor` and `space` must be live handles; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn sn_predictor_predict(
    predictor: *const SnPredictor,
    space: *const SnSpace,
    index: usize,
    use_code: i32,
    out: *mut f64,
) -> SnStatus {
    guard(|| {
        let predictor = ref_arg(predictor, "predictor")?;
        let space = ref_arg(space, "space")?;
        check_out(out, "out")?;
        if index >= space.inner.len() {
            return Err(Failure::Status(
                SnStatus::OutOfRange,
                format!("index {index} out of range for {} records", space.inner.len()),
            ));
        }
        let scores = if use_code == 0 {
            predictor.inner.score_basic(&space.inner, &[index])?
        } else {
            let code = space.inner.code(index)?;
            predictor.inner.score_estimation(&space.inner, &[index], &[code])?
        };
        *out = scores[0];
        Ok(())
    })
}

/// # Safety
/// `predictor` must be NULL or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn sn_predictor_free(predictor: *mut SnPredictor) {
    if !predictor.is_null() {
        drop(Box::from_raw(predictor));
    }
}

unsafe fn pair<'a>(x: *const f64, y: *const f64, n: usize) -> Result<(&'a [f64], &'a [f64]), Failure> {
    if n == 0 {
        return Ok((&[], &[]));
    }
    if x.is_null() {
        return Err(null("x"));
    }
    if y.is_null() {
        return Err(null("y"));
    }
    Ok((std::slice::from_raw_parts(x, n), std::slice::from_raw_parts(y, n)))
}

/// Tie-corrected Kendall τ-b of two length-`n` arrays.
///
/// # Safety
/// `x` and `y` must point to `n` doubles; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn sn_kendall_tau(x: *const f64, y: *const f64, n: usize, out: *mut f64) -> SnStatus {
    guard(|| {
        check_out(out, "out")?;
        let (x, y) = pair(x, y, n)?;
        *out = analysis::kendall_tau(x, y)?;
        Ok(())
    })
}

/// Spearman ρ with average ranks for ties.
///
/// # Safety
/// `x` and `y` must point to `n` doubles; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn sn_spearman_rho(x: *const f64, y: *const f64, n: usize, out: *mut f64) -> SnStatus {
    guard(|| {
        check_out(out, "out")?;
        let (x, y) = pair(x, y, n)?;
        *out = analysis::spearman_rho(x, y)?;
        Ok(())
    })
}
