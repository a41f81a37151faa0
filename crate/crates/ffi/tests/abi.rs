use std::ffi::{c_char, CStr, CString};
use std::ptr;

use tvreg_ffi::*;

fn last_error() -> String {
    let mut buf = vec![0 as c_char; 256];
    let len = unsafe { tvreg_last_error(buf.as_mut_ptr(), buf.len()) };
    assert!(len > 0);
    unsafe { CStr::from_ptr(buf.as_ptr()) }.to_string_lossy().into_owned()
}

/// `y = (1 + t) x₁ + 0.5 x₂` on a deterministic, non-degenerate design.
fn design(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = Vec::with_capacity(2 * n);
    let mut y = Vec::with_capacity(n);
    for i in 0..n {
        let t = (i + 1) as f64 / n as f64;
        let x1 = 1.0 + 0.5 * (1.7 * i as f64).sin();
        let x2 = (0.37 * (i * i) as f64).cos();
        x.extend([x1, x2]);
        y.push((1.0 + t) * x1 + 0.5 * x2);
    }
    (y, x)
}

fn new_data(n: usize) -> *mut TvregData {
    let (y, x) = design(n);
    let mut data = ptr::null_mut();
    let status = unsafe { tvreg_data_new(y.as_ptr(), x.as_ptr(), n, 2, &mut data) };
    assert_eq!(status, TvregStatus::Ok);
    data
}

#[test]
fn fit_reproduces_an_affine_coefficient() {
    let data = new_data(200);
    let (mut n, mut p) = (0, 0);
    assert_eq!(unsafe { tvreg_data_shape(data, &mut n, &mut p) }, TvregStatus::Ok);
    assert_eq!((n, p), (200, 2));

    let mut fit = ptr::null_mut();
    let status = unsafe { tvreg_fit_new(data, TvregKernel::Epanechnikov, 0.2, 50, &mut fit) };
    assert_eq!(status, TvregStatus::Ok);
    let (mut g, mut q) = (0, 0);
    assert_eq!(unsafe { tvreg_fit_shape(fit, &mut g, &mut q) }, TvregStatus::Ok);
    assert_eq!((g, q), (50, 2));
    let mut grid = vec![0.0; g];
    let mut beta = vec![0.0; g * q];
    assert_eq!(unsafe { tvreg_fit_grid(fit, grid.as_mut_ptr(), g) }, TvregStatus::Ok);
    assert_eq!(unsafe { tvreg_fit_beta(fit, beta.as_mut_ptr(), g * q) }, TvregStatus::Ok);
    for (k, &t) in grid.iter().enumerate() {
        if (0.2..=0.8).contains(&t) {
            assert!((beta[2 * k] - (1.0 + t)).abs() < 1e-8, "t = {t}");
            assert!((beta[2 * k + 1] - 0.5).abs() < 1e-8);
        }
    }
    let mut rss = -1.0;
    assert_eq!(unsafe { tvreg_fit_rss(fit, &mut rss) }, TvregStatus::Ok);
    assert!(rss >= 0.0);

    assert_eq!(unsafe { tvreg_fit_beta(fit, beta.as_mut_ptr(), 3) }, TvregStatus::InvalidInput);
    unsafe {
        tvreg_fit_free(fit);
        tvreg_data_free(data);
    }
}

#[test]
fn test_and_select_return_json() {
    let data = new_data(150);
    let a = [0.0, 1.0];
    let mut json = ptr::null_mut();
    let status = unsafe {
        tvreg_test(data, a.as_ptr(), 1, ptr::null(), TvregKernel::Epanechnikov, 0.3, 40, 0.05, &mut json)
    };
    assert_eq!(status, TvregStatus::Ok, "{}", last_error());
    let v: serde_json::Value = serde_json::from_str(unsafe { CStr::from_ptr(json) }.to_str().unwrap()).unwrap();
    unsafe { tvreg_string_free(json) };
    assert_eq!(v["schemes"].as_array().unwrap().len(), 3);
    assert!(v["schemes"][0]["components"]["delta"].is_number());
    assert!(v["schemes"][0]["decision"]["reject"].is_boolean());

    let mut json = ptr::null_mut();
    let status = unsafe { tvreg_select(data, TvregKernel::Bartlett, 0.3, -1.0, &mut json) };
    assert_eq!(status, TvregStatus::Ok, "{}", last_error());
    let v: serde_json::Value = serde_json::from_str(unsafe { CStr::from_ptr(json) }.to_str().unwrap()).unwrap();
    unsafe { tvreg_string_free(json) };
    assert!(v["chosen"].is_array());
    assert_eq!(v["candidates"].as_array().unwrap().len(), 3);
    unsafe { tvreg_data_free(data) };
}

#[test]
fn failures_set_codes_and_messages() {
    let mut data = ptr::null_mut();
    assert_eq!(unsafe { tvreg_data_new(ptr::null(), ptr::null(), 10, 2, &mut data) }, TvregStatus::NullPointer);
    assert!(last_error().contains("null pointer"));

    let data = new_data(100);
    let mut fit = ptr::null_mut();
    let status = unsafe { tvreg_fit_new(data, TvregKernel::Epanechnikov, 1.5, 20, &mut fit) };
    assert_ne!(status, TvregStatus::Ok);
    assert!(fit.is_null());
    assert!(!last_error().is_empty());

    let a = [0.0, 1.0];
    let mut json = ptr::null_mut();
    let status = unsafe {
        tvreg_test(data, a.as_ptr(), 1, ptr::null(), TvregKernel::Epanechnikov, 0.3, 40, 1.5, &mut json)
    };
    assert_eq!(status, TvregStatus::InvalidInput);
    assert!(last_error().contains("alpha"));

    let path = CString::new("/nonexistent/file.csv").unwrap();
    let response = CString::new("y").unwrap();
    let mut from_csv = ptr::null_mut();
    let status = unsafe { tvreg_data_from_csv(path.as_ptr(), response.as_ptr(), false, false, &mut from_csv) };
    assert!(matches!(status, TvregStatus::Io | TvregStatus::Parse));
    unsafe {
        tvreg_data_free(data);
        tvreg_data_free(ptr::null_mut());
        tvreg_fit_free(ptr::null_mut());
        tvreg_string_free(ptr::null_mut());
    }
}

#[test]
fn csv_ingestion_through_the_boundary() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("d.csv");
    let (y, x) = design(60);
    let mut body = String::from("y,a,b\n");
    for i in 0..60 {
        body.push_str(&format!("{},{},{}\n", y[i], x[2 * i], x[2 * i + 1]));
    }
    std::fs::write(&path, body).unwrap();
    let c_path = CString::new(path.to_str().unwrap()).unwrap();
    let response = CString::new("y").unwrap();
    let mut data = ptr::null_mut();
    let status = unsafe { tvreg_data_from_csv(c_path.as_ptr(), response.as_ptr(), true, true, &mut data) };
    assert_eq!(status, TvregStatus::Ok, "{}", last_error());
    let (mut n, mut p) = (0, 0);
    unsafe { tvreg_data_shape(data, &mut n, &mut p) };
    assert_eq!((n, p), (60, 3));
    unsafe { tvreg_data_free(data) };
}

#[test]
fn generated_header_declares_the_interface() {
    let header = std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/include/tvreg.h")).unwrap();
    for symbol in [
        "tvreg_status", "tvreg_data_new", "tvreg_data_from_csv", "tvreg_data_free", "tvreg_fit_new",
        "tvreg_fit_beta", "tvreg_fit_free", "tvreg_test", "tvreg_select", "tvreg_string_free",
        "tvreg_last_error", "TVREG_STATUS_NULL_POINTER",
    ] {
        assert!(header.contains(symbol), "{symbol} missing from header");
    }
}

#[test]
fn header_compiles_as_c() {
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("use.c");
    std::fs::write(
        &src,
        "#include \"tvreg.h\"\nint main(void) {\n  tvreg_data *d = 0;\n  double y[1] = {0}, x[1] = {0};\n  \
         tvreg_status s = tvreg_data_new(y, x, 1, 1, &d);\n  tvreg_data_free(d);\n  return s == TVREG_STATUS_OK ? 0 : 1;\n}\n",
    )
    .unwrap();
    let status = match std::process::Command::new("cc")
        .args(["-std=c99", "-Wall", "-Werror", "-fsyntax-only", "-I", concat!(env!("CARGO_MANIFEST_DIR"), "/include")])
        .arg(&src)
        .status()
    {
        Ok(s) => s,
        Err(_) => {
            eprintln!("no C compiler on PATH; skipping");
            return;
        }
    };
    assert!(status.success());
}
