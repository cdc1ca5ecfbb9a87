use std::ffi::{CStr, CString};
use std::path::PathBuf;
use std::process::Command;
use std::ptr;

use qems_ffi::*;

fn c(s: &str) -> CString {
    CString::new(s).unwrap()
}

fn last_error() -> String {
    let p = qems_last_error();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_str().unwrap().to_string()
}

#[test]
fn params_round_trip_in_hz() {
    unsafe {
        let p = qems_params_nominal();
        let mut v = 0.0;
        assert_eq!(qems_params_get(p, c("g_mc_hz").as_ptr(), &mut v), QemsStatus::Ok);
        assert!((v - 7e3).abs() < 1e-9);
        assert_eq!(qems_params_set(p, c("gamma_c_hz").as_ptr(), 5e4), QemsStatus::Ok);
        assert_eq!(qems_params_get(p, c("gamma_c_hz").as_ptr(), &mut v), QemsStatus::Ok);
        assert!((v - 5e4).abs() < 1e-9);
        assert!(qems_last_error().is_null());
        qems_params_free(p);
    }
}

#[test]
fn bare_coupling_updates_sideband_coupling() {
    unsafe {
        let p = qems_params_nominal();
        let (mut before, mut after) = (0.0, 0.0);
        qems_params_get(p, c("gbar_cq_hz").as_ptr(), &mut before);
        assert_eq!(qems_params_set(p, c("g_cq_hz").as_ptr(), 40e6), QemsStatus::Ok);
        qems_params_get(p, c("gbar_cq_hz").as_ptr(), &mut after);
        assert!((after / before - 2.0).abs() < 1e-12);
        qems_params_free(p);
    }
}

#[test]
fn invalid_input_reports_status_and_message() {
    unsafe {
        let p = qems_params_nominal();
        assert_eq!(qems_params_set(p, c("gamma_down_hz").as_ptr(), -1.0), QemsStatus::Config);
        assert!(last_error().contains("gamma_down"));
        let mut v = 0.0;
        qems_params_get(p, c("gamma_down_hz").as_ptr(), &mut v);
        assert!((v - 10e6).abs() < 1e-6, "failed set must leave the handle unchanged");

        assert_eq!(qems_params_get(p, c("warp").as_ptr(), &mut v), QemsStatus::Config);
        assert_eq!(qems_params_get(ptr::null(), c("g_mc_hz").as_ptr(), &mut v), QemsStatus::NullPointer);
        assert_eq!(qems_params_get(p, ptr::null(), &mut v), QemsStatus::NullPointer);

        let owned = qems_last_error_message();
        assert!(!owned.is_null());
        qems_string_free(owned);

        let mut q = ptr::null_mut();
        assert_eq!(qems_params_from_config(c("n_c = 4\nfoo = 1\n").as_ptr(), &mut q), QemsStatus::Config);
        assert!(last_error().contains("line 2"));
        assert!(q.is_null());
        qems_params_free(p);
    }
}

#[test]
fn truncation_errors_map_to_regime_status() {
    unsafe {
        let mut out = ptr::null_mut();
        let cfg = c("temperature_k = 1\nn_c = 4\nn_m = 4\ntruncation_cap = 6\ntail_tol = 1e-12\n");
        let st = qems_run(cfg.as_ptr(), QemsCommand::Steady, QemsMethod::Default, &mut out);
        assert_eq!(st, QemsStatus::Regime);
        assert!(out.is_null());
        assert!(last_error().starts_with("truncation"));
    }
}

#[test]
fn steady_state_matches_adiabatic_estimate() {
    unsafe {
        let p = qems_params_nominal();
        let mut ad = QemsAdiabatic::default();
        assert_eq!(qems_adiabatic(p, &mut ad), QemsStatus::Ok);
        assert!((ad.gamma_minus_c_hz - 397.41e3).abs() < 0.1e3);

        let mut s = ptr::null_mut();
        assert_eq!(qems_steady_solve(p, 6, 6, QemsFrame::Sideband, &mut s), QemsStatus::Ok);
        let (mut n_c, mut n_m, mut res) = (0.0, 0.0, 1.0);
        assert_eq!(qems_steady_occupations(s, &mut n_c, &mut n_m), QemsStatus::Ok);
        assert_eq!(qems_steady_residual(s, &mut res), QemsStatus::Ok);
        assert!(res < 1e-9);
        assert!((n_m - ad.n_m).abs() < 0.1 * ad.n_m, "{n_m} vs {}", ad.n_m);
        qems_steady_free(s);
        qems_params_free(p);
    }
}

#[test]
fn spectrum_columns_copy_out() {
    unsafe {
        let p = qems_params_nominal();
        let mut s = ptr::null_mut();
        assert_eq!(qems_spectrum_analytic(p, 250e6, 4e6, 101, &mut s), QemsStatus::Ok);
        assert_eq!(qems_spectrum_len(s), 101);
        let mut w = vec![0.0; 101];
        let mut total = vec![0.0; 101];
        let mut upper = vec![0.0; 101];
        assert_eq!(qems_spectrum_copy(s, c("omega_hz").as_ptr(), w.as_mut_ptr(), 101), QemsStatus::Ok);
        assert_eq!(qems_spectrum_copy(s, c("total").as_ptr(), total.as_mut_ptr(), 101), QemsStatus::Ok);
        assert_eq!(qems_spectrum_copy(s, c("s_c_upper").as_ptr(), upper.as_mut_ptr(), 101), QemsStatus::Ok);
        assert!((w[50] - 250e6).abs() < 1e-3);
        assert!(upper.iter().zip(&total).all(|(u, t)| u <= t));
        assert_eq!(qems_spectrum_copy(s, c("nope").as_ptr(), w.as_mut_ptr(), 101), QemsStatus::Config);
        assert_eq!(qems_spectrum_copy(s, c("total").as_ptr(), w.as_mut_ptr(), 100), QemsStatus::BufferTooSmall);
        qems_spectrum_free(s);
        assert_eq!(qems_spectrum_len(ptr::null()), 0);

        assert_eq!(
            qems_spectrum_numeric(p, 3, 3, QemsFrame::Sideband, 250e6, 1e6, 5, &mut s),
            QemsStatus::Ok
        );
        let mut num = vec![0.0; 5];
        assert_eq!(qems_spectrum_copy(s, c("numeric").as_ptr(), num.as_mut_ptr(), 5), QemsStatus::Ok);
        assert!(num.iter().all(|x| x.is_finite() && *x > 0.0));
        qems_spectrum_free(s);
        qems_params_free(p);
    }
}

#[test]
fn run_returns_owned_csv() {
    unsafe {
        let mut out = ptr::null_mut();
        let cfg = c("spectrum_points = 5\n");
        assert_eq!(qems_run(cfg.as_ptr(), QemsCommand::Spectrum, QemsMethod::Analytic, &mut out), QemsStatus::Ok);
        let text = CStr::from_ptr(out).to_str().unwrap().to_string();
        qems_string_free(out);
        let rows: Vec<&str> = text.lines().filter(|l| !l.starts_with('#')).collect();
        assert_eq!(rows.len(), 6);
        assert!(rows[0].starts_with("omega_hz_rel_drive,total"));
    }
}

fn target_dir() -> PathBuf {
    let exe = std::env::current_exe().unwrap();
    exe.parent().unwrap().parent().unwrap().to_path_buf()
}

#[test]
fn header_compiles_and_links_from_c() {
    let root = PathBuf::from(env!("CARGO_MANIFEST_DIR"));
    let lib = target_dir().join("libqems_ffi.a");
    assert!(lib.exists(), "static library missing at {}", lib.display());
    let dir = tempfile::tempdir().unwrap();
    let exe = dir.path().join("smoke");
    let status = Command::new("cc")
        .arg("-std=c99")
        .arg("-Wall")
        .arg("-Werror")
        .arg("-I")
        .arg(root.join("include"))
        .arg(root.join("tests/c/smoke.c"))
        .arg(&lib)
        .args(["-lm", "-lpthread", "-ldl", "-o"])
        .arg(&exe)
        .status()
        .expect("C compiler available");
    assert!(status.success());
    let out = Command::new(&exe).output().unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(String::from_utf8_lossy(&out.stdout).trim(), "ok");
}
