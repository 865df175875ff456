use std::ffi::{CStr, CString};
use std::path::Path;
use std::process::Command;
use std::ptr;

use irtvi_ffi::*;

fn last_error() -> Option<String> {
    let p = irtvi_last_error_message();
    if p.is_null() {
        return None;
    }
    let s = unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned();
    unsafe { irtvi_string_free(p) };
    Some(s)
}

fn cstr(p: &Path) -> CString {
    CString::new(p.to_str().unwrap()).unwrap()
}

fn write_binary_csv(dir: &Path) -> CString {
    let mut text = String::from("student_id,question_id,class_id,y\n");
    for s in 0..30 {
        for q in 0..5 {
            let y = u8::from((s * 7 + q * 3) % 5 < 3);
            text.push_str(&format!("s{s},q{q},c{},{y}\n", s % 3));
        }
    }
    let path = dir.join("d.csv");
    std::fs::write(&path, text).unwrap();
    cstr(&path)
}

#[test]
fn z_test_matches_worked_example() {
    let mut r = IrtviZTest::default();
    let st = unsafe { irtvi_z_test(94_440, 120_000, 95_280, 120_000, 0.01, &mut r) };
    assert_eq!(st, IrtviStatus::Ok);
    assert!((r.p_hat - 0.7905).abs() < 1e-4);
    assert!((r.se - 0.00166).abs() < 1e-5);
    assert!((r.z - 4.21).abs() < 0.01);
    assert_eq!(r.significant, 1);
    assert!(last_error().is_none());
}

#[test]
fn kl_and_error_reporting() {
    let mut kl = f64::NAN;
    assert_eq!(unsafe { irtvi_kl_gaussian(1.0, 1.0, 0.0, 1.0, &mut kl) }, IrtviStatus::Ok);
    assert!((kl - 0.5).abs() < 1e-15);
    let st = unsafe { irtvi_kl_gaussian(0.0, -1.0, 0.0, 1.0, &mut kl) };
    assert_eq!(st, IrtviStatus::InvalidArgument);
    assert!(last_error().unwrap().contains("standard deviations must be positive"));
    let st = unsafe { irtvi_kl_gaussian(0.0, 1.0, 0.0, 1.0, ptr::null_mut()) };
    assert_eq!(st, IrtviStatus::NullPointer);
}

#[test]
fn missing_file_is_an_io_error() {
    let mut d = ptr::null_mut();
    let path = CString::new("/nonexistent/irtvi.csv").unwrap();
    let st = unsafe { irtvi_dataset_load(path.as_ptr(), IrtviFormat::Binary, &mut d) };
    assert_eq!(st, IrtviStatus::Io);
    assert!(d.is_null());
    assert!(last_error().unwrap().contains("/nonexistent/irtvi.csv"));
}

#[test]
fn train_predict_save_load() {
    let dir = tempfile::tempdir().unwrap();
    let path = write_binary_csv(dir.path());
    unsafe {
        let mut d = ptr::null_mut();
        assert_eq!(irtvi_dataset_load(path.as_ptr(), IrtviFormat::Binary, &mut d), IrtviStatus::Ok);
        let (mut s, mut q, mut c, mut n) = (0, 0, 0, 0);
        assert_eq!(irtvi_dataset_counts(d, &mut s, &mut q, &mut c, &mut n), IrtviStatus::Ok);
        assert_eq!((s, q, c, n), (30, 5, 3, 150));

        let (mut train, mut test) = (ptr::null_mut(), ptr::null_mut());
        assert_eq!(irtvi_dataset_split(d, 0.2, 1, &mut train, &mut test), IrtviStatus::Ok);
        let (mut ntr, mut nte) = (0, 0);
        irtvi_dataset_counts(train, ptr::null_mut(), ptr::null_mut(), ptr::null_mut(), &mut ntr);
        irtvi_dataset_counts(test, ptr::null_mut(), ptr::null_mut(), ptr::null_mut(), &mut nte);
        assert_eq!(ntr + nte, 150);

        let mut cfg = irtvi_train_config_default();
        cfg.epochs = 20;
        let mut model = ptr::null_mut();
        let st = irtvi_model_train(train, IrtviModelKind::ClassInteraction, 2, &cfg, ptr::null(), &mut model);
        assert_eq!(st, IrtviStatus::Ok, "{:?}", last_error());
        let mut p = f64::NAN;
        assert_eq!(irtvi_model_predict(model, 3, 2, &mut p), IrtviStatus::Ok);
        assert!(p > 0.0 && p < 1.0);
        assert_eq!(irtvi_model_predict(model, 99, 0, &mut p), IrtviStatus::IndexOutOfRange);

        let mut acc = f64::NAN;
        assert_eq!(irtvi_model_evaluate(model, test, 0.5, &mut acc), IrtviStatus::Ok);
        assert!((0.0..=1.0).contains(&acc));

        let ck = cstr(&dir.path().join("ck.json"));
        assert_eq!(irtvi_model_save(model, ck.as_ptr()), IrtviStatus::Ok);
        let mut loaded = ptr::null_mut();
        assert_eq!(irtvi_model_load(ck.as_ptr(), &mut loaded), IrtviStatus::Ok);
        let mut p2 = f64::NAN;
        irtvi_model_predict(model, 3, 2, &mut p);
        irtvi_model_predict(loaded, 3, 2, &mut p2);
        assert_eq!(p.to_bits(), p2.to_bits());

        let mut vcfg = irtvi_vi_config_default();
        vcfg.epochs = 5;
        let mut vi = ptr::null_mut();
        let st = irtvi_model_train_vi(train, IrtviModelKind::ClassInteractionVi, 2, &vcfg, model, &mut vi);
        assert_eq!(st, IrtviStatus::Ok, "{:?}", last_error());
        assert_eq!(irtvi_model_predict(vi, 0, 0, &mut p), IrtviStatus::Ok);

        // kind mismatch between the two entry points
        let mut bad = ptr::null_mut();
        let st = irtvi_model_train(train, IrtviModelKind::RaschVi, 0, ptr::null(), ptr::null(), &mut bad);
        assert_eq!(st, IrtviStatus::InvalidArgument);
        let st = irtvi_model_train_vi(train, IrtviModelKind::InteractionVi, 2, ptr::null(), model, &mut bad);
        assert_eq!(st, IrtviStatus::Shape);
        assert!(bad.is_null());

        for m in [model, loaded, vi] {
            irtvi_model_free(m);
        }
        for x in [d, train, test] {
            irtvi_dataset_free(x);
        }
        irtvi_dataset_free(ptr::null_mut());
    }
}

#[test]
fn version_is_static() {
    let v = unsafe { CStr::from_ptr(irtvi_version()) };
    assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
}

#[test]
fn header_declares_every_entry_point() {
    let header_path = Path::new(env!("CARGO_MANIFEST_DIR")).join("include/irtvi.h");
    let header = std::fs::read_to_string(&header_path).unwrap();
    for f in [
        "irtvi_version",
        "irtvi_last_error_message",
        "irtvi_string_free",
        "irtvi_dataset_load",
        "irtvi_dataset_free",
        "irtvi_dataset_counts",
        "irtvi_dataset_split",
        "irtvi_train_config_default",
        "irtvi_vi_config_default",
        "irtvi_model_train",
        "irtvi_model_train_vi",
        "irtvi_model_free",
        "irtvi_model_predict",
        "irtvi_model_evaluate",
        "irtvi_model_save",
        "irtvi_model_load",
        "irtvi_z_test",
        "irtvi_kl_gaussian",
        "IRTVI_STATUS_OK = 0",
        "typedef struct IrtviModel IrtviModel",
    ] {
        assert!(header.contains(f), "header lacks {f}");
    }
    // Compile the header as C when a compiler is around.
    if Command::new("cc").arg("--version").output().is_ok() {
        let dir = tempfile::tempdir().unwrap();
        let src = dir.path().join("use.c");
        std::fs::write(
            &src,
            "#include \"irtvi.h\"\nint main(void) { IrtviZTest r; return irtvi_z_test(1, 2, 1, 2, 0.01, &r) == IRTVI_STATUS_OK ? 0 : 1; }\n",
        )
        .unwrap();
        let out = Command::new("cc")
            .args(["-std=c99", "-Wall", "-Werror", "-fsyntax-only", "-I"])
            .arg(header_path.parent().unwrap())
            .arg(&src)
            .output()
            .unwrap();
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    }
}
