use std::ffi::{CStr, CString};
use std::process::Command;
use std::ptr;

use siamese_nas_ffi::*;

fn last_error() -> Option<String> {
    let p = sn_last_error();
    (!p.is_null()).then(|| unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned())
}

fn synthetic(seed: u64, size: usize) -> *mut SnStore {
    let mut store = ptr::null_mut();
    assert_eq!(unsafe { sn_store_gen_synthetic(seed, size, 4, 5, &mut store) }, SnStatus::Ok);
    store
}

fn space_of(store: *const SnStore) -> *mut SnSpace {
    let dataset = CString::new("synthetic").unwrap();
    let mut space = ptr::null_mut();
    assert_eq!(unsafe { sn_space_new(store, dataset.as_ptr(), &mut space) }, SnStatus::Ok);
    space
}

const SMALL: &str = r#"{"n_pool": 20, "top_k": 5, "runs": 2, "max_iters": 40, "batch_size": 8,
    "hidden_dim": 8, "trunk_layers": 1, "seed": 3}"#;

#[test]
fn store_round_trips_through_disk() {
    let dir = tempfile::tempdir().unwrap();
    let path = CString::new(dir.path().join("s.jsonl").to_str().unwrap()).unwrap();
    let store = synthetic(1, 120);
    unsafe {
        assert_eq!(sn_store_len(store), 120);
        assert_eq!(sn_store_save(store, path.as_ptr()), SnStatus::Ok);
        let mut back = ptr::null_mut();
        assert_eq!(sn_store_load(path.as_ptr(), &mut back), SnStatus::Ok);
        assert_eq!(sn_store_len(back), 120);
        assert!(last_error().is_none());

        let mut tiny = ptr::null_mut();
        assert_eq!(sn_store_subset(back, 35.0, &mut tiny), SnStatus::Ok);
        assert!(sn_store_len(tiny) < 120);

        sn_store_free(tiny);
        sn_store_free(back);
        sn_store_free(store);
    }
}

#[test]
fn failures_set_status_and_message() {
    unsafe {
        let missing = CString::new("/nonexistent/x.jsonl").unwrap();
        let mut store = ptr::null_mut();
        assert_eq!(sn_store_load(missing.as_ptr(), &mut store), SnStatus::Io);
        assert!(store.is_null());
        assert!(last_error().unwrap().contains("/nonexistent/x.jsonl"));

        assert_eq!(sn_store_load(ptr::null(), &mut store), SnStatus::NullArgument);
        assert!(last_error().unwrap().contains("path"));
        assert_eq!(sn_store_gen_synthetic(0, 10, 4, 5, ptr::null_mut()), SnStatus::NullArgument);

        let bad = [0xffu8, 0xfe, 0];
        assert_eq!(sn_store_load(bad.as_ptr().cast(), &mut store), SnStatus::InvalidUtf8);

        let store = synthetic(2, 30);
        let unknown = CString::new("cifar10").unwrap();
        let mut space = ptr::null_mut();
        assert_eq!(sn_space_new(store, unknown.as_ptr(), &mut space), SnStatus::Config);
        let space = space_of(store);
        assert!(last_error().is_none());

        let mut acc = 0.0;
        assert_eq!(sn_space_accuracy(space, 29, &mut acc), SnStatus::Ok);
        assert!(acc > 0.0 && acc <= 1.0);
        assert_eq!(sn_space_accuracy(space, 30, &mut acc), SnStatus::OutOfRange);

        let config = CString::new(r#"{"n_poool": 3}"#).unwrap();
        let mut report = ptr::null_mut();
        assert_eq!(sn_search_run(space, config.as_ptr(), 1, &mut report), SnStatus::Config);
        assert!(report.is_null());

        assert_eq!(sn_store_len(ptr::null()), 0);
        sn_store_free(ptr::null_mut());
        sn_space_free(space);
        sn_store_free(store);
    }
}

#[test]
fn correlations_match_the_core() {
    let x = [1.0, 2.0, 2.0, 4.0, 5.0];
    let y = [2.0, 1.0, 3.0, 3.0, 6.0];
    let (mut tau, mut rho) = (0.0, 0.0);
    unsafe {
        assert_eq!(sn_kendall_tau(x.as_ptr(), y.as_ptr(), 5, &mut tau), SnStatus::Ok);
        assert_eq!(sn_spearman_rho(x.as_ptr(), y.as_ptr(), 5, &mut rho), SnStatus::Ok);
        assert_eq!(tau, siamese_nas::analysis::kendall_tau(&x, &y).unwrap());
        assert_eq!(rho, siamese_nas::analysis::spearman_rho(&x, &y).unwrap());

        let flat = [1.0; 5];
        assert_eq!(sn_kendall_tau(flat.as_ptr(), y.as_ptr(), 5, &mut tau), SnStatus::Correlation);
        assert_eq!(sn_spearman_rho(ptr::null(), y.as_ptr(), 5, &mut rho), SnStatus::NullArgument);
    }
}

#[test]
fn search_report_is_json() {
    let store = synthetic(3, 150);
    let space = space_of(store);
    let config = CString::new(SMALL).unwrap();
    unsafe {
        let mut report = ptr::null_mut();
        assert_eq!(sn_search_run(space, config.as_ptr(), 2, &mut report), SnStatus::Ok);
        let text = CStr::from_ptr(report).to_str().unwrap().to_owned();
        sn_string_free(report);
        let value: serde_json::Value = serde_json::from_str(&text).unwrap();
        assert_eq!(value["runs"].as_array().unwrap().len(), 2);
        assert_eq!(value["n_pool"], 20);
        assert!(value["mean_best_acc"].as_f64().unwrap() > 0.0);

        let mut again = ptr::null_mut();
        assert_eq!(sn_search_run(space, config.as_ptr(), 1, &mut again), SnStatus::Ok);
        assert_eq!(CStr::from_ptr(again).to_str().unwrap(), text);
        sn_string_free(again);
        sn_space_free(space);
        sn_store_free(store);
    }
}

#[test]
fn trained_predictor_scores_records() {
    let store = synthetic(4, 100);
    let space = space_of(store);
    let config = CString::new(SMALL).unwrap();
    unsafe {
        let mut predictor = ptr::null_mut();
        assert_eq!(sn_predictor_train(space, config.as_ptr(), 7, &mut predictor), SnStatus::Ok);
        let (mut basic, mut est) = (f64::NAN, f64::NAN);
        assert_eq!(sn_predictor_predict(predictor, space, 10, 0, &mut basic), SnStatus::Ok);
        assert_eq!(sn_predictor_predict(predictor, space, 10, 1, &mut est), SnStatus::Ok);
        assert!(basic.is_finite() && est.is_finite());
        assert_eq!(sn_predictor_predict(predictor, space, 100, 0, &mut basic), SnStatus::OutOfRange);
        assert_eq!(sn_predictor_predict(ptr::null(), space, 0, 0, &mut basic), SnStatus::NullArgument);
        sn_predictor_free(predictor);
        sn_space_free(space);
        sn_store_free(store);
    }
}

#[test]
fn header_declares_every_export() {
    let header = std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/include/siamese_nas.h")).unwrap();
    for name in [
        "sn_last_error",
        "sn_string_free",
        "sn_store_load",
        "sn_store_gen_synthetic",
        "sn_store_save",
        "sn_store_subset",
        "sn_store_len",
        "sn_store_free",
        "sn_space_new",
        "sn_space_len",
        "sn_space_accuracy",
        "sn_space_free",
        "sn_search_run",
        "sn_predictor_train",
        "sn_predictor_predict",
        "sn_predictor_free",
        "sn_kendall_tau",
        "sn_spearman_rho",
        "SN_STATUS_PANIC = 12",
    ] {
        assert!(header.contains(name), "{name} missing from header");
    }

    // Syntax-check with the system C compiler when one is installed.
    let status = Command::new("cc")
        .args(["-fsyntax-only", "-Wall", "-Werror", "-x", "c"])
        .arg(concat!(env!("CARGO_MANIFEST_DIR"), "/include/siamese_nas.h"))
        .status();
    if let Ok(status) = status {
        assert!(status.success());
    }
}
