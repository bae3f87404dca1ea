use std::ffi::{CStr, CString};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::ptr;

use cata_ffi::*;

fn fixture() -> CString {
    let p = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../core/tests/fixtures/synthetic200.jsonl");
    CString::new(p.to_str().unwrap()).unwrap()
}

fn cpath(p: &Path) -> CString {
    CString::new(p.to_str().unwrap()).unwrap()
}

fn last_error() -> String {
    let p = cata_last_error_message();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

fn load_fixture() -> *mut CataDatasetHandle {
    let mut ds = ptr::null_mut();
    assert_eq!(unsafe { cata_dataset_load(fixture().as_ptr(), &mut ds) }, CataStatus::Ok);
    ds
}

fn small_config(ranks: &[usize]) -> CataTrainConfig {
    let mut cfg = unsafe {
        let mut c = std::mem::zeroed();
        assert_eq!(cata_train_config_default(&mut c), CataStatus::Ok);
        c
    };
    cfg.ranks = ranks.as_ptr();
    cfg.num_ranks = ranks.len();
    cfg.max_iters = 20;
    cfg.eta = 0.5;
    cfg
}

#[test]
fn train_save_load_predict_round_trip() {
    let ds = load_fixture();
    assert_eq!(unsafe { cata_dataset_len(ds) }, 200);
    let ranks = [2usize, 3, 2];
    let cfg = small_config(&ranks);
    let mut model = ptr::null_mut();
    let mut obj = f64::NAN;
    assert_eq!(unsafe { cata_train(ds, &cfg, &mut model, &mut obj) }, CataStatus::Ok);
    assert!(obj.is_finite() && obj >= 0.0);

    let (mut v, mut c) = (0, 0);
    assert_eq!(unsafe { cata_model_dims(model, &mut v, &mut c) }, CataStatus::Ok);
    assert_eq!((v, c), (2, 4));
    let mut d0 = 0;
    assert_eq!(unsafe { cata_model_view_dim(model, 0, &mut d0) }, CataStatus::Ok);
    assert_eq!(d0, 10);

    let dir = tempfile::tempdir().unwrap();
    let path = cpath(&dir.path().join("m.json"));
    assert_eq!(unsafe { cata_model_save(model, path.as_ptr()) }, CataStatus::Ok);
    let mut loaded = ptr::null_mut();
    assert_eq!(unsafe { cata_model_load(path.as_ptr(), &mut loaded) }, CataStatus::Ok);

    let mut a = vec![0.0; 200];
    let mut b = vec![0.0; 200];
    assert_eq!(unsafe { cata_predict_dataset(model, ds, a.as_mut_ptr(), 200) }, CataStatus::Ok);
    assert_eq!(unsafe { cata_predict_dataset(loaded, ds, b.as_mut_ptr(), 200) }, CataStatus::Ok);
    let bits = |v: &[f64]| v.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
    assert_eq!(bits(&a), bits(&b));

    let records = cata::load_dataset(fixture().to_str().unwrap()).unwrap();
    for (i, rec) in records.records().iter().enumerate().take(25) {
        let counts: Vec<usize> = rec.views.iter().map(|x| x.nnz()).collect();
        let idx: Vec<usize> = rec.views.iter().flat_map(|x| x.indices().to_vec()).collect();
        let val: Vec<f64> = rec.views.iter().flat_map(|x| x.values().to_vec()).collect();
        let mut p = f64::NAN;
        let st = unsafe {
            cata_model_predict(model, rec.category, counts.as_ptr(), idx.as_ptr(), val.as_ptr(), &mut p)
        };
        assert_eq!(st, CataStatus::Ok);
        assert_eq!(p.to_bits(), a[i].to_bits());
    }

    let (mut mae, mut rmse) = (f64::NAN, f64::NAN);
    assert_eq!(unsafe { cata_evaluate(model, ds, &mut mae, &mut rmse) }, CataStatus::Ok);
    assert!(mae >= 0.0 && mae <= rmse);

    unsafe {
        cata_model_free(model);
        cata_model_free(loaded);
        cata_dataset_free(ds);
        cata_model_free(ptr::null_mut());
        cata_dataset_free(ptr::null_mut());
    }
}

#[test]
fn default_config_matches_library_defaults() {
    let cfg = small_config(&[]);
    let d = cata::TrainConfig::new(2);
    assert_eq!((cfg.alpha, cfg.beta, cfg.tol, cfg.init_sigma), (d.alpha, d.beta, d.tol, d.init_sigma));
    assert_eq!(cfg.variant, CataVariant::Cata);
    assert!(cfg.line_search);

    let ds = load_fixture();
    let mut cfg = cfg;
    cfg.ranks = ptr::null();
    cfg.max_iters = 1;
    let mut model = ptr::null_mut();
    assert_eq!(unsafe { cata_train(ds, &cfg, &mut model, ptr::null_mut()) }, CataStatus::Ok);
    unsafe {
        cata_model_free(model);
        cata_dataset_free(ds);
    }
}

#[test]
fn failures_report_status_and_message() {
    let mut model = ptr::null_mut();
    assert_eq!(unsafe { cata_model_load(ptr::null(), &mut model) }, CataStatus::NullPointer);
    assert!(last_error().contains("null"));
    assert!(model.is_null());

    let missing = CString::new("/definitely/not/here.json").unwrap();
    assert_eq!(unsafe { cata_model_load(missing.as_ptr(), &mut model) }, CataStatus::Io);

    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.jsonl");
    std::fs::write(&bad, "{\"V\":1,\"C\":2,\"I\":[3]}\nnot json\n").unwrap();
    let mut ds = ptr::null_mut();
    assert_eq!(unsafe { cata_dataset_load(cpath(&bad).as_ptr(), &mut ds) }, CataStatus::Parse);
    assert!(last_error().contains(":2:"));

    let ds = load_fixture();
    let ranks = [2usize, 2, 2];
    let mut cfg = small_config(&ranks);
    cfg.max_iters = 0;
    assert_eq!(unsafe { cata_train(ds, &cfg, &mut model, ptr::null_mut()) }, CataStatus::Invalid);
    assert!(last_error().contains("max_iters"));

    cfg.max_iters = 20;
    cfg.eta = 1e8;
    cfg.line_search = false;
    assert_eq!(unsafe { cata_train(ds, &cfg, &mut model, ptr::null_mut()) }, CataStatus::Diverged);
    assert!(model.is_null());

    cfg = small_config(&ranks);
    assert_eq!(unsafe { cata_train(ds, &cfg, &mut model, ptr::null_mut()) }, CataStatus::Ok);
    let counts = [0usize, 0];
    let mut p = 0.0;
    let st = unsafe { cata_model_predict(model, 4, counts.as_ptr(), ptr::null(), ptr::null(), &mut p) };
    assert_eq!(st, CataStatus::Invalid);
    let counts = [2usize, 0];
    let idx = [3usize, 1];
    let val = [1.0, 1.0];
    let st = unsafe { cata_model_predict(model, 0, counts.as_ptr(), idx.as_ptr(), val.as_ptr(), &mut p) };
    assert_eq!(st, CataStatus::Invalid);
    let mut short = [0.0; 3];
    assert_eq!(unsafe { cata_predict_dataset(model, ds, short.as_mut_ptr(), 3) }, CataStatus::Invalid);

    let counts = [0usize, 0];
    let st = unsafe { cata_model_predict(model, 0, counts.as_ptr(), ptr::null(), ptr::null(), &mut p) };
    assert_eq!(st, CataStatus::Ok);
    assert!(cata_last_error_message().is_null());
    unsafe {
        cata_model_free(model);
        cata_dataset_free(ds);
    }
}

#[test]
fn version_is_crate_version() {
    let v = unsafe { CStr::from_ptr(cata_version()) };
    assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
}

#[test]
fn header_compiles_as_c_and_cpp() {
    let header = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("include/cata.h");
    assert!(header.is_file());
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("use.c");
    std::fs::write(
        &src,
        "#include \"cata.h\"\n\
         int check(const CataDatasetHandle *ds) {\n\
           CataTrainConfig cfg;\n\
           CataModelHandle *m = NULL;\n\
           if (cata_train_config_default(&cfg) != CATA_STATUS_OK) return 1;\n\
           cfg.variant = CATA_VARIANT_CATA_G;\n\
           CataStatus st = cata_train(ds, &cfg, &m, NULL);\n\
           cata_model_free(m);\n\
           return st == CATA_STATUS_OK ? 0 : (int)st;\n\
         }\n",
    )
    .unwrap();
    let include = header.parent().unwrap();
    for (compiler, lang) in [("cc", "c"), ("c++", "c++")] {
        let out = Command::new(compiler)
            .args(["-fsyntax-only", "-Wall", "-Werror", "-x", lang, "-I"])
            .arg(include)
            .arg(&src)
            .output();
        match out {
            Ok(o) => assert!(o.status.success(), "{compiler}: {}", String::from_utf8_lossy(&o.stderr)),
            Err(_) => eprintln!("{compiler} not available; skipping header check"),
        }
    }
}
